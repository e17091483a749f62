// The full joint emotion/intent network: per-task encoders and fusion,
// cross-task interaction, pooled classifier heads.
#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include "emotint/autodiff.hpp"
#include "emotint/dataio.hpp"
#include "emotint/encoding.hpp"
#include "emotint/errors.hpp"
#include "emotint/heads.hpp"
#include "emotint/interaction.hpp"

namespace emotint {

struct ModelDims {
  int visual_dim = 0;
  int audio_dim = 0;
  int text_dim = 0;
  int hidden = 128;
  int ff_dim = 512;
  int fusion_heads = 4;
  int emotion_interaction_heads = 1;
  int intent_interaction_heads = 1;
  int text_kernel = 1;
  int n_emotion = 0;
  int n_intent = 0;

  void validate() const {
    auto need = [](bool ok, const std::string& what) {
      if (!ok) throw DimensionError("model dims: " + what);
    };
    need(visual_dim >= 1 && audio_dim >= 1 && text_dim >= 1, "input dims must be >= 1");
    need(hidden >= 1 && ff_dim >= 1, "hidden and ff_dim must be >= 1");
    need(fusion_heads >= 1 && hidden % fusion_heads == 0, "fusion_heads must divide hidden");
    need(emotion_interaction_heads >= 1 && hidden % emotion_interaction_heads == 0,
         "emotion interaction heads must divide hidden");
    need(intent_interaction_heads >= 1 && hidden % intent_interaction_heads == 0,
         "intent interaction heads must divide hidden");
    need(text_kernel >= 1, "text_kernel must be >= 1");
    need(n_emotion >= 2 && n_intent >= 2, "class counts must be >= 2");
  }

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

template <typename Scalar>
struct TaskBranch {
  EncoderParams<Scalar> encoder;
  FusionParams<Scalar> fusion;
  InteractionParams<Scalar> interaction;

  template <typename Self, typename F>
  static void each(Self& self, F&& f) {
    self.encoder.visit(f);
    self.fusion.visit(f);
    self.interaction.visit(f);
  }
  template <typename F> void visit(F&& f) { each(*this, f); }
  template <typename F> void visit(F&& f) const { each(*this, f); }
};

struct ForwardOptions {
  bool training = false;
  double noise_sigma = 0.0;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;  // required when training with noise or dropout
};

template <typename Scalar>
struct ForwardResult {
  Var<Scalar> emotion_tokens;
  Var<Scalar> intent_tokens;
  InteractionVars<Scalar> emotion_state;
  InteractionVars<Scalar> intent_state;
  Var<Scalar> emotion_pooled;
  Var<Scalar> intent_pooled;
  LogitVars<Scalar> logits;
};

template <typename Scalar>
struct ClassProbabilities {
  RowVectorX<Scalar> emotion;
  RowVectorX<Scalar> intent;
};

template <typename Scalar>
class JointModel {
 public:
  using Inputs = std::array<MatrixX<Scalar>, 3>;

  ModelDims dims;
  TaskBranch<Scalar> emotion;
  TaskBranch<Scalar> intent;
  ClassifierParams<Scalar> classifier;

  static JointModel init(const ModelDims& dims, std::uint64_t seed) {
    dims.validate();
    std::mt19937_64 rng(seed);
    JointModel m;
    m.dims = dims;
    auto branch = [&](const std::string& name, int interaction_heads) {
      TaskBranch<Scalar> b;
      b.encoder = EncoderParams<Scalar>::init(name + ".encoder", dims.visual_dim, dims.audio_dim,
                                              dims.text_dim, dims.hidden, dims.text_kernel, rng);
      b.fusion = FusionParams<Scalar>::init(name + ".fusion", dims.hidden, dims.ff_dim,
                                            dims.fusion_heads, rng);
      b.interaction = InteractionParams<Scalar>::init(name + ".interaction", dims.hidden,
                                                      interaction_heads, rng);
      return b;
    };
    m.emotion = branch("emotion", dims.emotion_interaction_heads);
    m.intent = branch("intent", dims.intent_interaction_heads);
    m.classifier = ClassifierParams<Scalar>::init("classifier", dims.hidden, dims.n_emotion,
                                                  dims.n_intent, rng);
    return m;
  }

  template <typename F> void visit(F&& f) { each(*this, f); }
  template <typename F> void visit(F&& f) const { each(*this, f); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    visit([&](const Parameter<Scalar>& p) { n += static_cast<std::size_t>(p.value.size()); });
    return n;
  }

  void zero_grad() {
    visit([](Parameter<Scalar>& p) { p.zero_grad(); });
  }

  ForwardResult<Scalar> forward(Tape<Scalar>& t, const Inputs& inputs, const ForwardOptions& opt = {}) const {
    const std::array<int, 3> expected{dims.visual_dim, dims.audio_dim, dims.text_dim};
    for (std::size_t k = 0; k < 3; ++k) {
      if (inputs[k].cols() != expected[k] || inputs[k].rows() < 1) {
        throw DimensionError(std::string(to_string(kModalities[k])) + " input has width " +
                             std::to_string(inputs[k].cols()) + ", model expects " +
                             std::to_string(expected[k]));
      }
    }
    const bool noisy = opt.training && opt.noise_sigma > 0.0;
    const bool drop = opt.training && opt.dropout > 0.0;
    if ((noisy || drop) && opt.rng == nullptr) {
      throw std::invalid_argument("forward: training with noise or dropout needs an rng");
    }

    std::array<Var<Scalar>, 3> x;
    for (std::size_t k = 0; k < 3; ++k) {
      x[k] = noisy ? t.constant(add_gaussian_noise(inputs[k], static_cast<Scalar>(opt.noise_sigma), true, *opt.rng))
                   : t.constant(inputs[k]);
    }

    auto tokens_for = [&](const TaskBranch<Scalar>& b) {
      const auto v = recurrent_encode(x[0], b.encoder.visual);
      const auto a = recurrent_encode(x[1], b.encoder.audio);
      const auto s = text_conv_encode(x[2], b.encoder.text);
      return fuse(concat_rows<Scalar>({v, a, s}), b.fusion);
    };

    ForwardResult<Scalar> r;
    r.emotion_tokens = tokens_for(emotion);
    r.intent_tokens = tokens_for(intent);
    r.emotion_state = interact(r.emotion_tokens, r.intent_tokens, emotion.interaction);
    r.intent_state = interact(r.intent_tokens, r.emotion_tokens, intent.interaction);
    r.emotion_pooled = mean_rows(r.emotion_state.feature);
    r.intent_pooled = mean_rows(r.intent_state.feature);
    if (drop) {
      r.emotion_pooled = dropout(r.emotion_pooled, opt.dropout, *opt.rng);
      r.intent_pooled = dropout(r.intent_pooled, opt.dropout, *opt.rng);
    }
    r.logits = classify(r.emotion_pooled, r.intent_pooled, classifier);
    return r;
  }

  /// Evaluation-mode class probabilities.
  ClassProbabilities<Scalar> predict(const Inputs& inputs) const {
    Tape<Scalar> t;
    const auto r = forward(t, inputs);
    return {softmax<Scalar>(r.logits.emotion.value()), softmax<Scalar>(r.logits.intent.value())};
  }

  static Inputs inputs_of(const SampleRecord& s) {
    return {s.sequences[0].template cast<Scalar>(), s.sequences[1].template cast<Scalar>(),
            s.sequences[2].template cast<Scalar>()};
  }

 private:
  template <typename Self, typename F>
  static void each(Self& self, F&& f) {
    self.emotion.visit(f);
    self.intent.visit(f);
    self.classifier.visit(f);
  }

  // Inverted dropout with a constant keep mask.
  static Var<Scalar> dropout(Var<Scalar> x, double rate, std::mt19937_64& rng) {
    std::bernoulli_distribution keep(1.0 - rate);
    MatrixX<Scalar> mask(x.rows(), x.cols());
    const Scalar s = static_cast<Scalar>(1.0 / (1.0 - rate));
    for (Eigen::Index j = 0; j < mask.cols(); ++j) {
      for (Eigen::Index i = 0; i < mask.rows(); ++i) mask(i, j) = keep(rng) ? s : Scalar(0);
    }
    return hadamard(x, x.tape->constant(std::move(mask)));
  }
};

}  // namespace emotint
