#include "emotint/pseudo.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>

#include "emotint/errors.hpp"
#include "emotint/evalens.hpp"

namespace emotint {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(BalanceMode m) {
  switch (m) {
    case BalanceMode::none: return "none";
    case BalanceMode::per_task_cap: return "per_task_cap";
    case BalanceMode::joint_cell_cap: return "joint_cell_cap";
  }
  return "?";
}

BalanceMode parse_balance_mode(std::string_view s) {
  if (s == "none") return BalanceMode::none;
  if (s == "per_task_cap") return BalanceMode::per_task_cap;
  if (s == "joint_cell_cap") return BalanceMode::joint_cell_cap;
  throw ConfigError("unknown balance mode: " + std::string(s));
}

void SelectionPolicy::validate() const {
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw std::invalid_argument("selection threshold must lie in (0, 1]");
  }
  if (balance != BalanceMode::none && (!cap || *cap < 1)) {
    throw std::invalid_argument("balance mode " + std::string(to_string(balance)) + " needs a positive cap");
  }
}

PseudoLabel pseudo_label_from(std::string id, const Eigen::RowVectorXd& emotion_probs,
                              const Eigen::RowVectorXd& intent_probs) {
  PseudoLabel p;
  p.sample_id = std::move(id);
  p.emotion_pred = argmax(emotion_probs);
  p.intent_pred = argmax(intent_probs);
  p.emotion_conf = emotion_probs(p.emotion_pred);
  p.intent_conf = intent_probs(p.intent_pred);
  return p;
}

std::vector<PseudoLabel> predict_unlabeled(const JointModel<double>& model, const std::vector<SampleRecord>& samples) {
  std::vector<PseudoLabel> out;
  for (const auto& s : samples) {
    if (s.split != Split::unlabeled) continue;
    const auto probs = model.predict(JointModel<double>::inputs_of(s));
    out.push_back(pseudo_label_from(s.id, probs.emotion, probs.intent));
  }
  return out;
}

std::vector<PseudoLabel> select_confident(const std::vector<PseudoLabel>& preds, const SelectionPolicy& policy) {
  policy.validate();
  std::vector<PseudoLabel> kept;
  for (const auto& p : preds) {
    if (p.emotion_conf >= policy.threshold && p.intent_conf >= policy.threshold) kept.push_back(p);
  }
  return balance_classes(kept, policy.balance, policy.cap);
}

std::vector<PseudoLabel> balance_classes(const std::vector<PseudoLabel>& preds, BalanceMode mode, std::optional<int> cap) {
  if (mode == BalanceMode::none) return preds;
  if (!cap || *cap < 1) {
    throw std::invalid_argument("balance_classes: mode " + std::string(to_string(mode)) + " needs a positive cap");
  }
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double ma = preds[a].min_conf(), mb = preds[b].min_conf();
    if (ma != mb) return ma > mb;
    return preds[a].sample_id < preds[b].sample_id;
  });

  std::map<int, int> emotion_count, intent_count;
  std::map<std::pair<int, int>, int> cell_count;
  std::vector<bool> keep(preds.size(), false);
  for (std::size_t i : order) {
    const auto& p = preds[i];
    if (mode == BalanceMode::per_task_cap) {
      if (emotion_count[p.emotion_pred] >= *cap || intent_count[p.intent_pred] >= *cap) continue;
      ++emotion_count[p.emotion_pred];
      ++intent_count[p.intent_pred];
    } else {
      auto& c = cell_count[{p.emotion_pred, p.intent_pred}];
      if (c >= *cap) continue;
      ++c;
    }
    keep[i] = true;
  }
  std::vector<PseudoLabel> out;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (keep[i]) out.push_back(preds[i]);
  }
  return out;
}

DatasetManifest augment_dataset(const DatasetManifest& manifest, const std::vector<PseudoLabel>& selected) {
  DatasetManifest out = manifest;
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < out.records.size(); ++i) index.emplace(out.records[i].id, i);
  std::set<std::string> used;
  for (const auto& p : selected) {
    auto it = index.find(p.sample_id);
    if (it == index.end()) throw std::invalid_argument("augment_dataset: unknown id " + p.sample_id);
    auto& r = out.records[it->second];
    if (r.split != Split::unlabeled || r.labeled() || !used.insert(p.sample_id).second) {
      throw std::invalid_argument("augment_dataset: record " + p.sample_id + " is not an unlabeled record");
    }
    if (p.emotion_pred < 0 || p.emotion_pred >= out.n_emotion || p.intent_pred < 0 || p.intent_pred >= out.n_intent) {
      throw std::invalid_argument("augment_dataset: predicted label out of range for " + p.sample_id);
    }
    r.split = Split::train;
    r.emotion_label = p.emotion_pred;
    r.intent_label = p.intent_pred;
    r.is_pseudo = true;
  }
  return out;
}

int default_cell_cap(const DatasetManifest& manifest) {
  std::vector<int> counts(static_cast<std::size_t>(manifest.n_emotion * manifest.n_intent), 0);
  for (const auto& r : manifest.records) {
    if (r.split != Split::train || r.is_pseudo || !r.labeled()) continue;
    ++counts[static_cast<std::size_t>(*r.emotion_label * manifest.n_intent + *r.intent_label)];
  }
  if (counts.empty()) return 1;
  std::sort(counts.begin(), counts.end());
  const std::size_t n = counts.size();
  const double median = n % 2 == 1 ? counts[n / 2] : 0.5 * (counts[n / 2 - 1] + counts[n / 2]);
  return std::max(1, static_cast<int>(std::ceil(median)));
}

void write_pseudo_report(const fs::path& path, const std::vector<PseudoLabel>& preds,
                         const std::vector<PseudoLabel>& selected) {
  std::set<std::string> chosen;
  for (const auto& s : selected) chosen.insert(s.sample_id);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write pseudo-label report: " + path.string());
  for (const auto& p : preds) {
    out << json{{"sample_id", p.sample_id},       {"emotion_pred", p.emotion_pred},
                {"intent_pred", p.intent_pred},   {"emotion_conf", p.emotion_conf},
                {"intent_conf", p.intent_conf},   {"selected", chosen.count(p.sample_id) > 0}}
               .dump()
        << '\n';
  }
}

std::vector<PseudoReportRow> read_pseudo_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open pseudo-label report: " + path.string());
  std::vector<PseudoReportRow> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      PseudoReportRow r;
      r.label.sample_id = j.at("sample_id").get<std::string>();
      r.label.emotion_pred = j.at("emotion_pred").get<int>();
      r.label.intent_pred = j.at("intent_pred").get<int>();
      r.label.emotion_conf = j.at("emotion_conf").get<double>();
      r.label.intent_conf = j.at("intent_conf").get<double>();
      r.selected = j.at("selected").get<bool>();
      rows.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw FormatError("pseudo-label report: " + std::string(e.what()));
    }
  }
  return rows;
}

}  // namespace emotint
