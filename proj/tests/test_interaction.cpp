#include <doctest.h>

#include <random>

#include "emotint/interaction.hpp"
#include "emotint/heads.hpp"
#include "oracles.hpp"

using namespace emotint;

namespace {

AttentionParams<double> random_attention(int width, int heads, std::mt19937_64& rng) {
  auto p = AttentionParams<double>::init("a", width, heads, rng);
  oracle::randomize(p, rng);
  return p;
}

}  // namespace

TEST_CASE("multi_head_attention matches the explicit-loop oracle") {
  std::mt19937_64 rng(100);
  const auto p = random_attention(4, 2, rng);
  const Eigen::MatrixXd q = oracle::random_matrix(3, 4, rng), k = oracle::random_matrix(3, 4, rng),
                        v = oracle::random_matrix(3, 4, rng);
  const auto expected = oracle::attention(oracle::to_mat(q), oracle::to_mat(k), oracle::to_mat(v), p);
  CHECK(oracle::max_abs_diff(expected.output, multi_head_attention<double>(q, k, v, p)) < 1e-10);
  const auto w = attention_weights<double>(q, k, v, p);
  REQUIRE(w.size() == 2);
  for (std::size_t h = 0; h < 2; ++h) CHECK(oracle::max_abs_diff(expected.weights[h], w[h]) < 1e-12);
}

TEST_CASE("attention weights are row-stochastic") {
  std::mt19937_64 rng(101);
  const auto p = random_attention(8, 4, rng);
  const Eigen::MatrixXd q = oracle::random_matrix(2, 8, rng), kv = oracle::random_matrix(5, 8, rng);
  for (const auto& w : attention_weights<double>(q, kv, kv, p)) {
    CHECK(w.minCoeff() >= 0.0);
    CHECK((w.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("single key attention ignores query content") {
  std::mt19937_64 rng(102);
  const auto p = random_attention(4, 2, rng);
  const Eigen::MatrixXd kv = oracle::random_matrix(1, 4, rng);
  const Eigen::MatrixXd out1 = multi_head_attention<double>(oracle::random_matrix(3, 4, rng), kv, kv, p);
  const Eigen::MatrixXd out2 = multi_head_attention<double>(oracle::random_matrix(3, 4, rng), kv, kv, p);
  const Eigen::RowVectorXd expected = (kv * p.wv.value + p.bv.value) * p.wo.value + p.bo.value;
  for (Eigen::Index i = 0; i < 3; ++i) {
    CHECK((out1.row(i) - expected).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((out2.row(i) - expected).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("zero key projections give uniform attention") {
  std::mt19937_64 rng(103);
  auto p = random_attention(4, 2, rng);
  p.wk.value.setZero();
  p.bk.value.setZero();
  const Eigen::MatrixXd q = oracle::random_matrix(3, 4, rng), kv = oracle::random_matrix(4, 4, rng);
  for (const auto& w : attention_weights<double>(q, kv, kv, p)) {
    CHECK((w.array() - 0.25).abs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("attention is invariant to permuting key/value rows together") {
  std::mt19937_64 rng(104);
  const auto p = random_attention(4, 2, rng);
  const Eigen::MatrixXd q = oracle::random_matrix(3, 4, rng), k = oracle::random_matrix(3, 4, rng),
                        v = oracle::random_matrix(3, 4, rng);
  Eigen::MatrixXd kp(3, 4), vp(3, 4);
  kp << k.row(2), k.row(0), k.row(1);
  vp << v.row(2), v.row(0), v.row(1);
  const Eigen::MatrixXd a = multi_head_attention<double>(q, k, v, p);
  const Eigen::MatrixXd b = multi_head_attention<double>(q, kp, vp, p);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention rejects heads that do not divide the width") {
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(AttentionParams<double>::init("a", 6, 4, rng), std::invalid_argument);
  auto p = AttentionParams<double>::init("a", 4, 2, rng);
  p.heads = 3;
  const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(2, 4);
  CHECK_THROWS_AS(multi_head_attention<double>(x, x, x, p), std::invalid_argument);
}

TEST_CASE("gate_combine and pool_tokens") {
  Eigen::MatrixXd q(1, 1), b(1, 1);
  q << 2;
  b << 4;
  CHECK(gate_combine<double>(q, b, Eigen::MatrixXd::Constant(1, 1, 0.5))(0, 0) == 4.0);
  CHECK(gate_combine<double>(q, b, Eigen::MatrixXd::Zero(1, 1)) == q);
  CHECK(gate_combine<double>(q, b, Eigen::MatrixXd::Ones(1, 1)) == q + b);
  CHECK_THROWS_AS(gate_combine<double>(q, Eigen::MatrixXd::Ones(2, 1), Eigen::MatrixXd::Ones(1, 1)),
                  std::invalid_argument);

  Eigen::MatrixXd rows(3, 1);
  rows << 1, 2, 3;
  CHECK(pool_tokens<double>(rows)(0) == 2.0);
  const Eigen::MatrixXd same = Eigen::RowVectorXd::LinSpaced(4, -1, 1).replicate(3, 1);
  CHECK((pool_tokens<double>(same) - same.row(0)).cwiseAbs().maxCoeff() < 1e-15);
  std::mt19937_64 rng(5);
  const Eigen::MatrixXd r = oracle::random_matrix(3, 5, rng);
  for (Eigen::Index j = 0; j < 5; ++j) {
    const double mean = (r(0, j) + r(1, j) + r(2, j)) / 3.0;
    CHECK(std::abs(pool_tokens<double>(r)(j) - mean) < 1e-12);
  }
  CHECK_THROWS_AS(pool_tokens<double>(Eigen::MatrixXd::Ones(2, 3)), std::invalid_argument);
}

TEST_CASE("cross_task_interact matches the composed oracle") {
  std::mt19937_64 rng(110);
  const auto first = random_attention(4, 2, rng);
  const auto second = random_attention(4, 2, rng);
  auto gate = GateParams<double>::init("g", 4, rng);
  oracle::randomize(gate, rng);
  const TaskTokens<double> q{Task::emotion, oracle::random_matrix(3, 4, rng)};
  const TaskTokens<double> o{Task::intent, oracle::random_matrix(3, 4, rng)};

  const auto a = oracle::attention(oracle::to_mat(q.tokens), oracle::to_mat(o.tokens), oracle::to_mat(o.tokens), first).output;
  const auto b = oracle::attention(oracle::to_mat(q.tokens), a, a, second).output;
  oracle::Mat g, f;
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<double> cat;
    for (int j = 0; j < 4; ++j) cat.push_back(q.tokens(static_cast<Eigen::Index>(i), j));
    cat.insert(cat.end(), b[i].begin(), b[i].end());
    auto pre = oracle::affine_row(cat, gate.weight.value, gate.bias.value);
    std::vector<double> gi, fi;
    for (int j = 0; j < 4; ++j) {
      gi.push_back(oracle::sigmoid(pre[static_cast<std::size_t>(j)]));
      fi.push_back(q.tokens(static_cast<Eigen::Index>(i), j) + gi.back() * b[i][static_cast<std::size_t>(j)]);
    }
    g.push_back(gi);
    f.push_back(fi);
  }
  const auto s = cross_task_interact(q, o, first, second, gate);
  CHECK(oracle::max_abs_diff(a, s.a) < 1e-10);
  CHECK(oracle::max_abs_diff(b, s.b) < 1e-10);
  CHECK(oracle::max_abs_diff(g, s.gate) < 1e-10);
  CHECK(oracle::max_abs_diff(f, s.feature) < 1e-10);
  CHECK(s.gate.minCoeff() > 0.0);
  CHECK(s.gate.maxCoeff() < 1.0);
  CHECK((s.feature - gate_combine(q.tokens, s.b, s.gate)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("closed gate and silent second step leave the query unchanged") {
  std::mt19937_64 rng(111);
  auto first = random_attention(4, 1, rng);
  auto second = random_attention(4, 1, rng);
  auto gate = GateParams<double>::init("g", 4, rng);
  const TaskTokens<double> q{Task::intent, oracle::random_matrix(3, 4, rng)};
  const TaskTokens<double> o{Task::emotion, oracle::random_matrix(3, 4, rng)};

  SUBCASE("closed gate") {
    gate.weight.value.setZero();
    gate.bias.value.setConstant(-20.0);
    const auto s = cross_task_interact(q, o, first, second, gate);
    CHECK(s.gate.maxCoeff() < 1e-8);
    CHECK((s.feature - q.tokens).cwiseAbs().maxCoeff() <= 1e-7);
  }
  SUBCASE("zero second interaction") {
    second.wv.value.setZero(); second.bv.value.setZero();
    second.wo.value.setZero(); second.bo.value.setZero();
    const auto s = cross_task_interact(q, o, first, second, gate);
    CHECK(s.b.cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.feature == q.tokens);
  }
}

TEST_CASE("one and two interaction heads give different features") {
  std::mt19937_64 rng_a(120), rng_b(120);
  const auto one1 = random_attention(4, 1, rng_a);
  const auto one2 = random_attention(4, 1, rng_a);
  auto two1 = random_attention(4, 2, rng_b);
  auto two2 = random_attention(4, 2, rng_b);
  CHECK(one1.wq.value == two1.wq.value);  // identical weights, only head count differs
  std::mt19937_64 rng(121);
  auto gate = GateParams<double>::init("g", 4, rng);
  const TaskTokens<double> q{Task::intent, oracle::random_matrix(3, 4, rng)};
  const TaskTokens<double> o{Task::emotion, oracle::random_matrix(3, 4, rng)};
  const auto f1 = cross_task_interact(q, o, one1, one2, gate).feature;
  const auto f2 = cross_task_interact(q, o, two1, two2, gate).feature;
  CHECK_FALSE(f1 == f2);
}

TEST_CASE("cross_task_interact shape errors") {
  std::mt19937_64 rng(1);
  const auto a = AttentionParams<double>::init("a", 4, 1, rng);
  const auto g = GateParams<double>::init("g", 4, rng);
  const TaskTokens<double> q{Task::emotion, Eigen::MatrixXd::Ones(2, 4)};
  const TaskTokens<double> o{Task::intent, Eigen::MatrixXd::Ones(3, 4)};
  CHECK_THROWS_AS(cross_task_interact(q, o, a, a, g), std::invalid_argument);
}

TEST_CASE("cross_task_interact backward matches finite differences") {
  std::mt19937_64 rng(130);
  auto first = random_attention(4, 2, rng);
  auto second = random_attention(4, 2, rng);
  auto gate = GateParams<double>::init("g", 4, rng);
  oracle::randomize(gate, rng);
  const Eigen::MatrixXd q = oracle::random_matrix(3, 4, rng), o = oracle::random_matrix(3, 4, rng);
  std::vector<Parameter<double>*> ps;
  first.visit([&](Parameter<double>& p) { ps.push_back(&p); });
  second.visit([&](Parameter<double>& p) { ps.push_back(&p); });
  gate.visit([&](Parameter<double>& p) { ps.push_back(&p); });
  const double err = check_parameter_gradients<double>(ps, [&](Tape<double>& t) {
    return sum(interact(t.constant(q), t.constant(o), first, second, gate).feature);
  });
  CHECK(err < 1e-4);
}
