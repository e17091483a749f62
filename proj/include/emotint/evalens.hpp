// Scoring (support-weighted F1 per task, overall score) and per-task
// probability ensembling.
#pragma once

#include <Eigen/Dense>
#include <json.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "emotint/dataio.hpp"

namespace emotint {

struct ConfusionStats {
  int classes = 0;
  Eigen::MatrixXi matrix;  // rows = true class, cols = predicted class
  std::vector<long> true_positives;
  std::vector<long> false_positives;
  std::vector<long> false_negatives;
  std::vector<long> support;
  long total = 0;

  /// Throws std::invalid_argument on empty input, length mismatch, or out-of-range labels.
  static ConfusionStats from_labels(std::span<const int> truth, std::span<const int> pred, int classes);

  /// F1 per class; 0 for a class with no predictions and no support.
  std::vector<double> per_class_f1() const;
  double weighted_f1() const;
  double accuracy() const;
};

double weighted_f1(std::span<const int> truth, std::span<const int> pred, int classes);

struct TaskScore {
  double emotion = 0.0;
  double intent = 0.0;
  double overall = 0.0;
};

/// Mean of the two task scores; both must lie in [0, 1].
double overall_score(double emotion_score, double intent_score);

/// Weight-normalized average of probability vectors. Members are accumulated
/// in a canonical order, so any joint permutation of (probs, weights) gives a
/// bit-identical result.
Eigen::RowVectorXd ensemble_probs(const std::vector<Eigen::RowVectorXd>& probs,
                                  const std::vector<double>& weights);

/// Index of the largest entry (first on ties).
int argmax(const Eigen::RowVectorXd& p);

enum class TaskMask { emotion, intent, both };
std::string_view to_string(TaskMask m);
TaskMask parse_task_mask(std::string_view s);

struct EnsembleMember {
  std::string checkpoint;
  double weight = 1.0;
  TaskMask mask = TaskMask::both;

  bool covers_emotion() const { return mask != TaskMask::intent; }
  bool covers_intent() const { return mask != TaskMask::emotion; }
};

struct EnsembleSpec {
  std::vector<EnsembleMember> members;
  /// Each task needs a contributing member with positive weight; weights must be >= 0.
  void validate() const;
};

struct PredictionRecord {
  std::string id;
  Eigen::RowVectorXd emotion_probs;
  Eigen::RowVectorXd intent_probs;
  int emotion_pred = 0;
  int intent_pred = 0;
};

PredictionRecord make_prediction(std::string id, Eigen::RowVectorXd emotion_probs,
                                 Eigen::RowVectorXd intent_probs);

void write_predictions(const std::filesystem::path& path, const std::vector<PredictionRecord>& preds);
std::vector<PredictionRecord> read_predictions(const std::filesystem::path& path);

/// Per-task ensemble of member prediction lists (all over the same ids in the
/// same order), honouring each member's task mask.
std::vector<PredictionRecord> combine_predictions(const std::vector<std::vector<PredictionRecord>>& members,
                                                  const EnsembleSpec& spec);

struct ScoreReport {
  TaskScore score;
  ConfusionStats emotion;
  ConfusionStats intent;
};

/// Scores every labeled record of `split` in `manifest`. A labeled record
/// without a prediction is an std::invalid_argument naming its id.
ScoreReport evaluate_run(const std::vector<PredictionRecord>& preds, const DatasetManifest& manifest, Split split);

nlohmann::json to_json(const ScoreReport& report);
nlohmann::json to_json(const ConfusionStats& stats);

}  // namespace emotint
