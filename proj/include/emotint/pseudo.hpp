// Confidence-thresholded pseudo-labeling of unlabeled records.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "emotint/dataio.hpp"
#include "emotint/model.hpp"

namespace emotint {

struct PseudoLabel {
  std::string sample_id;
  int emotion_pred = 0;
  int intent_pred = 0;
  double emotion_conf = 0.0;  // max softmax probability of the emotion head
  double intent_conf = 0.0;

  double min_conf() const { return std::min(emotion_conf, intent_conf); }
};

enum class BalanceMode { none, per_task_cap, joint_cell_cap };
std::string_view to_string(BalanceMode m);
BalanceMode parse_balance_mode(std::string_view s);

struct SelectionPolicy {
  double threshold = 0.99;
  BalanceMode balance = BalanceMode::joint_cell_cap;
  std::optional<int> cap;

  /// threshold in (0, 1]; a positive cap whenever balancing is on.
  void validate() const;
};

PseudoLabel pseudo_label_from(std::string id, const Eigen::RowVectorXd& emotion_probs,
                              const Eigen::RowVectorXd& intent_probs);

/// One label per split=unlabeled sample, in input order, evaluation mode.
std::vector<PseudoLabel> predict_unlabeled(const JointModel<double>& model,
                                           const std::vector<SampleRecord>& samples);

/// Keeps predictions with both confidences >= threshold (input order kept),
/// then balances per the policy.
std::vector<PseudoLabel> select_confident(const std::vector<PseudoLabel>& preds, const SelectionPolicy& policy);

/// Greedy capped selection in order of descending min confidence, ties by
/// ascending id. Output keeps input order.
std::vector<PseudoLabel> balance_classes(const std::vector<PseudoLabel>& preds, BalanceMode mode,
                                         std::optional<int> cap);

/// Returns a copy of `manifest` where each selected record becomes a pseudo-labeled train record.
DatasetManifest augment_dataset(const DatasetManifest& manifest, const std::vector<PseudoLabel>& selected);

/// ceil(median count per (emotion, intent) cell over all C_e * C_i cells of the
/// clean train records), at least 1.
int default_cell_cap(const DatasetManifest& manifest);

/// One JSON object per prediction, flagged with whether it was selected.
void write_pseudo_report(const std::filesystem::path& path, const std::vector<PseudoLabel>& preds,
                         const std::vector<PseudoLabel>& selected);

struct PseudoReportRow {
  PseudoLabel label;
  bool selected = false;
};
std::vector<PseudoReportRow> read_pseudo_report(const std::filesystem::path& path);

}  // namespace emotint
