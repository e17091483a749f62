// Run configuration: strict JSON with one field per setting, plus `--key value`
// overrides from the command line.
#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "emotint/dataio.hpp"
#include "emotint/evalens.hpp"
#include "emotint/heads.hpp"
#include "emotint/model.hpp"
#include "emotint/optim.hpp"
#include "emotint/pseudo.hpp"

namespace emotint {

// Fields documented as "0 = auto" are resolved by the accessors below.
struct RunConfig {
  std::string manifest;
  std::string out_dir;
  std::uint64_t seed = 1;

  int hidden = 128;
  int ff_dim = 0;  // 0 = 4 * hidden
  int fusion_heads = 4;
  int interaction_heads = 1;
  int emotion_interaction_heads = 0;  // 0 = interaction_heads
  int intent_interaction_heads = 0;   // 0 = interaction_heads
  int text_kernel = 0;                // 0 = 1 with average_inputs, else 3
  bool average_inputs = true;

  double noise_sigma = 0.01;
  double dropout = 0.1;
  double w_emotion = 1.0;
  double w_intent = 1.0;

  double learning_rate = 1e-3;
  double finetune_learning_rate = 0.0;  // 0 = learning_rate / 10
  int epochs = 50;
  int finetune_epochs = 20;
  int batch_size = 32;
  double clip_norm = 5.0;

  double threshold = 0.99;
  std::string balance_mode = "joint_cell_cap";
  int cap = 0;  // 0 = derived from the clean train set

  std::vector<EnsembleMember> ensemble;
  std::string eval_split;  // "" = dev when it has labels, else test

  /// Throws ConfigError on any out-of-range setting.
  void validate() const;

  ModelDims model_dims(int visual_dim, int audio_dim, int text_dim, int n_emotion, int n_intent) const;
  LossWeights loss_weights() const { return {w_emotion, w_intent}; }
  double resolved_finetune_learning_rate() const;
  SelectionPolicy selection_policy(const DatasetManifest& manifest) const;
};

nlohmann::json to_json(const RunConfig& c);
/// Unknown keys and wrongly typed values are ConfigErrors.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_config(const std::filesystem::path& path);
void save_config(const RunConfig& c, const std::filesystem::path& path);

/// Applies `--key value` style overrides; the value is parsed according to the
/// field's type (JSON text for the ensemble list).
void apply_override(RunConfig& c, const std::string& key, const std::string& value);

bool is_config_key(const std::string& key);

}  // namespace emotint
