// Training loop and the pipeline commands behind the CLI. Every command
// writes its outputs under config.out_dir, including a config snapshot.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "emotint/checkpoint.hpp"
#include "emotint/config.hpp"
#include "emotint/dataio.hpp"
#include "emotint/evalens.hpp"
#include "emotint/model.hpp"
#include "emotint/pseudo.hpp"

namespace emotint {

struct TrainSettings {
  int epochs = 50;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  double noise_sigma = 0.01;
  double dropout = 0.1;
  LossWeights weights;
  std::uint64_t seed = 1;
  std::uint64_t stream = 1;  // separates the random streams of the two stages
};

struct EpochLog {
  int epoch = 0;
  double loss = 0.0;  // mean training loss over the epoch
  std::optional<TaskScore> eval;
};

/// Loaded manifest plus embeddings, in manifest order.
struct Dataset {
  DatasetManifest manifest;
  std::vector<SampleRecord> samples;
  int visual_dim = 0;
  int audio_dim = 0;
  int text_dim = 0;

  std::vector<const SampleRecord*> select(Split split, bool labeled_only) const;
};

/// Every record must share one width per modality (FormatError otherwise).
Dataset load_dataset(const std::filesystem::path& manifest, bool average_inputs);

/// Mini-batch Adam on `train`, in a shuffled order fixed by the seed. Gradients
/// are averaged over the batch and clipped to the global norm before each step.
std::vector<EpochLog> train_model(JointModel<double>& model, const std::vector<const SampleRecord*>& train,
                                  const TrainSettings& settings,
                                  const std::function<std::optional<TaskScore>()>& evaluate = {},
                                  const std::function<void(const EpochLog&)>& on_epoch = {});

std::vector<PredictionRecord> predict_samples(const JointModel<double>& model,
                                              const std::vector<const SampleRecord*>& samples);

/// cfg.eval_split when set, otherwise dev if it has labeled records, else test.
Split resolve_eval_split(const RunConfig& cfg, const DatasetManifest& manifest);
Split split_from_name(const std::string& name);

struct TrainResult {
  JointModel<double> model;
  std::vector<EpochLog> log;
  Split eval_split = Split::dev;
  std::optional<ScoreReport> report;
};

struct PseudoResult {
  std::vector<PseudoLabel> predictions;
  std::vector<PseudoLabel> selected;
  SelectionPolicy policy;
  std::filesystem::path manifest_path;
};

struct EnsembleResult {
  std::vector<PredictionRecord> predictions;
  ScoreReport report;
  std::vector<ScoreReport> member_reports;  // same order as cfg.ensemble
};

/// Stage 1: trains on clean labeled train records and writes out/checkpoint,
/// out/train_log.jsonl and out/score_<split>.json.
TrainResult cmd_train(const RunConfig& cfg);

/// Predicts every unlabeled record with a stage-1 checkpoint, selects and
/// balances, then writes out/pseudo_report.jsonl and an augmented out/manifest.jsonl.
PseudoResult cmd_pseudo_label(const RunConfig& cfg, const std::filesystem::path& checkpoint);

/// Stage 2: continues from a stage-1 checkpoint on clean plus pseudo train records.
TrainResult cmd_finetune(const RunConfig& cfg, const std::filesystem::path& checkpoint);

/// Writes out/predictions_<split>.jsonl.
std::vector<PredictionRecord> cmd_predict(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                                          const std::string& split);

/// Per-task ensemble of cfg.ensemble members; writes out/ensemble_<split>.json
/// and out/predictions_ensemble_<split>.jsonl.
EnsembleResult cmd_ensemble(const RunConfig& cfg, const std::string& split);

/// Scores an existing prediction file; writes out/score_<split>.json.
ScoreReport cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& predictions, const std::string& split);

SyntheticDataset cmd_gen_synthetic(const SyntheticSpec& spec, const std::filesystem::path& out_dir);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace emotint
