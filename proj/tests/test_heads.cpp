#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "emotint/heads.hpp"
#include "emotint/model.hpp"
#include "oracles.hpp"

using namespace emotint;

TEST_CASE("softmax basic values") {
  Eigen::RowVectorXd z(2);
  z << 0, 0;
  CHECK((softmax<double>(z).array() - 0.5).abs().maxCoeff() < 1e-15);
  const Eigen::RowVectorXd c = Eigen::RowVectorXd::Constant(4, -3.7);
  CHECK((softmax<double>(c).array() - 0.25).abs().maxCoeff() < 1e-15);
  z << 1000, 0;
  const auto p = softmax<double>(z);
  CHECK(p.allFinite());
  CHECK(p(0) == doctest::Approx(1.0));
  CHECK(p(1) < 1e-300);
  z << 1, std::nan("");
  CHECK_THROWS_AS(softmax<double>(z), std::invalid_argument);
}

TEST_CASE("softmax is shift invariant and normalized") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> shift(-50, 50);
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::RowVectorXd z = oracle::random_matrix(1, 9, rng, 3.0);
    const auto p = softmax<double>(z);
    const auto q = softmax<double>((z.array() + shift(rng)).matrix());
    CHECK((p - q).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    CHECK(p.minCoeff() > 0.0);
  }
}

TEST_CASE("classify affine heads") {
  std::mt19937_64 rng(8);
  auto p = ClassifierParams<double>::init("c", 3, 3, 4, rng);
  const Eigen::RowVectorXd fe = oracle::random_matrix(1, 3, rng), fi = oracle::random_matrix(1, 3, rng);

  SUBCASE("zero weights return the bias") {
    p.emotion_weight.value.setZero();
    p.intent_weight.value.setZero();
    p.emotion_bias.value << 1, 2, 3;
    p.intent_bias.value << -1, 0, 1, 2;
    const auto l = classify<double>(fe, fi, p);
    CHECK(l.emotion == p.emotion_bias.value);
    CHECK(l.intent == p.intent_bias.value);
  }
  SUBCASE("identity weights return the feature") {
    p.emotion_weight.value = Eigen::MatrixXd::Identity(3, 3);
    p.emotion_bias.value.setZero();
    CHECK(classify<double>(fe, fi, p).emotion == fe);
  }
  SUBCASE("random case matches dot products") {
    oracle::randomize(p, rng);
    const auto l = classify<double>(fe, fi, p);
    std::vector<double> fev(fe.data(), fe.data() + 3), fiv(fi.data(), fi.data() + 3);
    CHECK(oracle::max_abs_diff(oracle::affine_row(fev, p.emotion_weight.value, p.emotion_bias.value), l.emotion) < 1e-12);
    CHECK(oracle::max_abs_diff(oracle::affine_row(fiv, p.intent_weight.value, p.intent_bias.value), l.intent) < 1e-12);
  }
  CHECK_THROWS_AS(classify<double>(Eigen::RowVectorXd::Ones(2), fi, p), std::invalid_argument);
}

TEST_CASE("joint_loss values") {
  const LossWeights equal{1.0, 1.0};
  SUBCASE("uniform logits") {
    const LogitsPair<double> l{Eigen::RowVectorXd::Zero(7), Eigen::RowVectorXd::Zero(9)};
    CHECK(std::abs(joint_loss(l, 3, 5, equal) - (std::log(7.0) + std::log(9.0))) < 1e-9);
    CHECK(std::abs(joint_loss(l, 3, 5, equal) - 4.1431) < 1e-4);
  }
  SUBCASE("confident and correct") {
    LogitsPair<double> l{Eigen::RowVectorXd::Zero(7), Eigen::RowVectorXd::Zero(9)};
    l.emotion(2) = 40;
    l.intent(8) = 40;
    CHECK(joint_loss(l, 2, 8, equal) < 1e-6);
  }
  SUBCASE("weights mask and add") {
    std::mt19937_64 rng(3);
    const LogitsPair<double> l{oracle::random_matrix(1, 7, rng), oracle::random_matrix(1, 9, rng)};
    const double e = joint_loss(l, 1, 4, LossWeights{1, 0});
    const double i = joint_loss(l, 1, 4, LossWeights{0, 1});
    const auto pe = softmax<double>(l.emotion);
    CHECK(std::abs(e + std::log(pe(1))) < 1e-12);
    CHECK(std::abs(joint_loss(l, 1, 4, LossWeights{0.3, 2.5}) - (0.3 * e + 2.5 * i)) < 1e-12);
    CHECK(joint_loss(l, 1, 4, equal) >= 0.0);
  }
  SUBCASE("errors") {
    const LogitsPair<double> l{Eigen::RowVectorXd::Zero(7), Eigen::RowVectorXd::Zero(9)};
    CHECK_THROWS_AS(joint_loss(l, 7, 0, equal), std::invalid_argument);
    CHECK_THROWS_AS(joint_loss(l, 0, -1, equal), std::invalid_argument);
    CHECK_THROWS_AS(joint_loss(l, 0, 0, LossWeights{0, 0}), std::invalid_argument);
  }
}

TEST_CASE("grad_check on a quadratic") {
  Eigen::VectorXd x(1), g(1);
  x << 3.0;
  g << 6.0;
  const double err = grad_check([](const Eigen::VectorXd& v) { return v.squaredNorm(); }, x, g, 1e-5);
  CHECK(err < 1e-9);
  g << 5.0;
  CHECK(grad_check([](const Eigen::VectorXd& v) { return v.squaredNorm(); }, x, g, 1e-5) > 0.1);
  CHECK_THROWS_AS(grad_check([](const Eigen::VectorXd&) { return std::nan(""); }, x, g, 1e-5),
                  std::domain_error);
}

TEST_CASE("gradient_relative_error uses an absolute floor") {
  CHECK(gradient_relative_error(1e-10, 2e-10) == doctest::Approx(1e-10));
  CHECK(gradient_relative_error(1.0, 1.1) == doctest::Approx(0.1 / 1.1));
}

namespace {

struct CoordinateCheck {
  double analytic = 0.0;
  double numeric = 0.0;
};

// Central differences on every model parameter, kept per coordinate.
std::vector<CoordinateCheck> finite_difference_all(JointModel<double>& model, const JointModel<double>::Inputs& x,
                                                   double step, double& loss_value) {
  auto loss = [&] {
    Tape<double> t;
    return joint_loss(model.forward(t, x).logits, 2, 1, LossWeights{1.0, 0.7}).value()(0, 0);
  };
  {
    Tape<double> t;
    const auto root = joint_loss(model.forward(t, x).logits, 2, 1, LossWeights{1.0, 0.7});
    t.backward(root);
    model.zero_grad();
    model.visit([&](Parameter<double>& p) { t.accumulate_into(p); });
    loss_value = root.value()(0, 0);
  }
  std::vector<CoordinateCheck> out;
  model.visit([&](Parameter<double>& p) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) {
      const double keep = p.value.data()[i];
      p.value.data()[i] = keep + step;
      const double up = loss();
      p.value.data()[i] = keep - step;
      const double down = loss();
      p.value.data()[i] = keep;
      out.push_back({p.grad.data()[i], (up - down) / (2 * step)});
    }
  });
  return out;
}

JointModel<double> small_model(JointModel<double>::Inputs& x) {
  ModelDims dims;
  dims.visual_dim = 3; dims.audio_dim = 2; dims.text_dim = 3;
  dims.hidden = 4; dims.ff_dim = 8; dims.fusion_heads = 2;
  dims.emotion_interaction_heads = 1; dims.intent_interaction_heads = 2;
  dims.text_kernel = 2; dims.n_emotion = 3; dims.n_intent = 4;
  auto model = JointModel<double>::init(dims, 9);
  std::mt19937_64 rng(31);
  oracle::randomize(model, rng, 0.4);
  x = {oracle::random_matrix(3, 3, rng), oracle::random_matrix(2, 2, rng), oracle::random_matrix(4, 3, rng)};
  return model;
}

}  // namespace

// Coordinates whose true gradient is near 1e-8 sit below the resolution of a
// central difference at h = 1e-5 (about eps * |f| / h), so the tolerance adds
// that floor to the relative bound.
TEST_CASE("full model joint_loss backward agrees with finite differences up to roundoff") {
  JointModel<double>::Inputs x;
  auto model = small_model(x);
  double f = 0.0;
  const double h = 1e-5;
  const auto coords = finite_difference_all(model, x, h, f);
  const double floor = 10.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(f)) / h;
  double worst = 0.0;
  for (const auto& c : coords) {
    const double excess = std::abs(c.analytic - c.numeric) - 1e-4 * std::max(std::abs(c.analytic), std::abs(c.numeric));
    worst = std::max(worst, excess / floor);
  }
  MESSAGE("worst excess over the relative bound, in units of the roundoff floor: " << worst);
  CHECK(worst <= 1.0);
}

TEST_CASE("full model joint_loss backward matches coarse-step differences") {
  JointModel<double>::Inputs x;
  auto model = small_model(x);
  double f = 0.0;
  const auto coords = finite_difference_all(model, x, 1e-3, f);
  double worst = 0.0;
  for (const auto& c : coords) worst = std::max(worst, gradient_relative_error(c.analytic, c.numeric));
  MESSAGE("max relative error at h = 1e-3: " << worst);
  CHECK(worst < 1e-4);
}
