#include "emotint/evalens.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include "emotint/errors.hpp"

namespace emotint {

namespace fs = std::filesystem;
using nlohmann::json;

ConfusionStats ConfusionStats::from_labels(std::span<const int> truth, std::span<const int> pred, int classes) {
  if (truth.empty()) throw std::invalid_argument("weighted_f1: empty label list");
  if (truth.size() != pred.size()) throw std::invalid_argument("weighted_f1: label lists differ in length");
  if (classes < 1) throw std::invalid_argument("weighted_f1: class count must be >= 1");
  ConfusionStats s;
  s.classes = classes;
  s.matrix = Eigen::MatrixXi::Zero(classes, classes);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= classes || pred[i] < 0 || pred[i] >= classes) {
      throw std::invalid_argument("weighted_f1: label out of range at position " + std::to_string(i));
    }
    s.matrix(truth[i], pred[i]) += 1;
  }
  const auto c = static_cast<std::size_t>(classes);
  s.true_positives.assign(c, 0);
  s.false_positives.assign(c, 0);
  s.false_negatives.assign(c, 0);
  s.support.assign(c, 0);
  for (int k = 0; k < classes; ++k) {
    const auto kk = static_cast<std::size_t>(k);
    s.true_positives[kk] = s.matrix(k, k);
    s.support[kk] = s.matrix.row(k).sum();
    s.false_negatives[kk] = s.support[kk] - s.matrix(k, k);
    s.false_positives[kk] = s.matrix.col(k).sum() - s.matrix(k, k);
  }
  s.total = static_cast<long>(truth.size());
  return s;
}

std::vector<double> ConfusionStats::per_class_f1() const {
  std::vector<double> f1(static_cast<std::size_t>(classes), 0.0);
  for (std::size_t k = 0; k < f1.size(); ++k) {
    const long tp = true_positives[k];
    const long predicted = tp + false_positives[k];
    if (predicted == 0 || support[k] == 0 || tp == 0) continue;
    const double precision = static_cast<double>(tp) / static_cast<double>(predicted);
    const double recall = static_cast<double>(tp) / static_cast<double>(support[k]);
    f1[k] = 2.0 * precision * recall / (precision + recall);
  }
  return f1;
}

double ConfusionStats::weighted_f1() const {
  const auto f1 = per_class_f1();
  double acc = 0.0;
  for (std::size_t k = 0; k < f1.size(); ++k) acc += f1[k] * static_cast<double>(support[k]);
  return acc / static_cast<double>(total);
}

double ConfusionStats::accuracy() const {
  return static_cast<double>(matrix.trace()) / static_cast<double>(total);
}

double weighted_f1(std::span<const int> truth, std::span<const int> pred, int classes) {
  return ConfusionStats::from_labels(truth, pred, classes).weighted_f1();
}

double overall_score(double emotion_score, double intent_score) {
  auto in_unit = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (!in_unit(emotion_score) || !in_unit(intent_score)) {
    throw std::invalid_argument("overall_score: task scores must lie in [0, 1]");
  }
  return (emotion_score + intent_score) / 2.0;
}

Eigen::RowVectorXd ensemble_probs(const std::vector<Eigen::RowVectorXd>& probs, const std::vector<double>& weights) {
  if (probs.empty() || probs.size() != weights.size()) {
    throw std::invalid_argument("ensemble_probs: need one weight per member and at least one member");
  }
  const auto dim = probs.front().size();
  for (std::size_t k = 0; k < probs.size(); ++k) {
    if (probs[k].size() != dim) throw std::invalid_argument("ensemble_probs: probability vectors differ in length");
    if (!(weights[k] >= 0.0)) throw std::invalid_argument("ensemble_probs: weights must be non-negative");
  }
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (weights[a] != weights[b]) return weights[a] < weights[b];
    return std::lexicographical_compare(probs[a].data(), probs[a].data() + dim, probs[b].data(),
                                        probs[b].data() + dim);
  });
  double total = 0.0;
  Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(dim);
  for (std::size_t k : order) {
    total += weights[k];
    acc += weights[k] * probs[k];
  }
  if (!(total > 0.0)) throw std::invalid_argument("ensemble_probs: weights sum to zero");
  return acc / total;
}

int argmax(const Eigen::RowVectorXd& p) {
  Eigen::Index best = 0;
  for (Eigen::Index i = 1; i < p.size(); ++i) {
    if (p(i) > p(best)) best = i;
  }
  return static_cast<int>(best);
}

std::string_view to_string(TaskMask m) {
  switch (m) {
    case TaskMask::emotion: return "emotion";
    case TaskMask::intent: return "intent";
    case TaskMask::both: return "both";
  }
  return "?";
}

TaskMask parse_task_mask(std::string_view s) {
  if (s == "emotion") return TaskMask::emotion;
  if (s == "intent") return TaskMask::intent;
  if (s == "both") return TaskMask::both;
  throw ConfigError("unknown ensemble task mask: " + std::string(s));
}

void EnsembleSpec::validate() const {
  double emotion = 0.0, intent = 0.0;
  for (const auto& m : members) {
    if (!(m.weight >= 0.0)) throw ConfigError("ensemble member weight must be >= 0: " + m.checkpoint);
    if (m.covers_emotion()) emotion += m.weight;
    if (m.covers_intent()) intent += m.weight;
  }
  if (!(emotion > 0.0)) throw ConfigError("ensemble has no contributing member for the emotion task");
  if (!(intent > 0.0)) throw ConfigError("ensemble has no contributing member for the intent task");
}

PredictionRecord make_prediction(std::string id, Eigen::RowVectorXd emotion_probs, Eigen::RowVectorXd intent_probs) {
  PredictionRecord r;
  r.id = std::move(id);
  r.emotion_pred = argmax(emotion_probs);
  r.intent_pred = argmax(intent_probs);
  r.emotion_probs = std::move(emotion_probs);
  r.intent_probs = std::move(intent_probs);
  return r;
}

namespace {

json row_to_json(const Eigen::RowVectorXd& v) {
  return json(std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::RowVectorXd row_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

void write_predictions(const fs::path& path, const std::vector<PredictionRecord>& preds) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write predictions: " + path.string());
  for (const auto& p : preds) {
    json j;
    j["id"] = p.id;
    j["emotion_probs"] = row_to_json(p.emotion_probs);
    j["intent_probs"] = row_to_json(p.intent_probs);
    j["emotion_pred"] = p.emotion_pred;
    j["intent_pred"] = p.intent_pred;
    out << j.dump() << '\n';
  }
}

std::vector<PredictionRecord> read_predictions(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open predictions: " + path.string());
  std::vector<PredictionRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      PredictionRecord r;
      r.id = j.at("id").get<std::string>();
      r.emotion_probs = row_from_json(j.at("emotion_probs"));
      r.intent_probs = row_from_json(j.at("intent_probs"));
      r.emotion_pred = j.at("emotion_pred").get<int>();
      r.intent_pred = j.at("intent_pred").get<int>();
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw FormatError("predictions " + path.string() + ": " + e.what());
    }
  }
  return out;
}

std::vector<PredictionRecord> combine_predictions(const std::vector<std::vector<PredictionRecord>>& members,
                                                  const EnsembleSpec& spec) {
  spec.validate();
  if (members.size() != spec.members.size()) {
    throw std::invalid_argument("combine_predictions: one prediction list per ensemble member required");
  }
  const std::size_t n = members.front().size();
  for (const auto& m : members) {
    if (m.size() != n) throw std::invalid_argument("combine_predictions: members predicted different sample counts");
  }
  std::vector<PredictionRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<Eigen::RowVectorXd> emo, intent;
    std::vector<double> we, wi;
    for (std::size_t k = 0; k < members.size(); ++k) {
      const auto& p = members[k][i];
      if (p.id != members.front()[i].id) {
        throw std::invalid_argument("combine_predictions: member order differs at id " + p.id);
      }
      if (spec.members[k].covers_emotion()) {
        emo.push_back(p.emotion_probs);
        we.push_back(spec.members[k].weight);
      }
      if (spec.members[k].covers_intent()) {
        intent.push_back(p.intent_probs);
        wi.push_back(spec.members[k].weight);
      }
    }
    out.push_back(make_prediction(members.front()[i].id, ensemble_probs(emo, we), ensemble_probs(intent, wi)));
  }
  return out;
}

ScoreReport evaluate_run(const std::vector<PredictionRecord>& preds, const DatasetManifest& manifest, Split split) {
  std::unordered_map<std::string, const PredictionRecord*> by_id;
  for (const auto& p : preds) by_id.emplace(p.id, &p);
  std::vector<int> te, pe, ti, pi;
  for (const auto& r : manifest.records) {
    if (r.split != split || !r.labeled()) continue;
    auto it = by_id.find(r.id);
    if (it == by_id.end()) throw std::invalid_argument("evaluate_run: missing prediction for id " + r.id);
    te.push_back(*r.emotion_label);
    ti.push_back(*r.intent_label);
    pe.push_back(it->second->emotion_pred);
    pi.push_back(it->second->intent_pred);
  }
  if (te.empty()) {
    throw std::invalid_argument("evaluate_run: split '" + std::string(to_string(split)) + "' has no labeled records");
  }
  ScoreReport rep;
  rep.emotion = ConfusionStats::from_labels(te, pe, manifest.n_emotion);
  rep.intent = ConfusionStats::from_labels(ti, pi, manifest.n_intent);
  rep.score.emotion = rep.emotion.weighted_f1();
  rep.score.intent = rep.intent.weighted_f1();
  rep.score.overall = overall_score(rep.score.emotion, rep.score.intent);
  return rep;
}

json to_json(const ConfusionStats& s) {
  json m = json::array();
  for (int i = 0; i < s.classes; ++i) {
    std::vector<int> row(static_cast<std::size_t>(s.classes));
    for (int j = 0; j < s.classes; ++j) row[static_cast<std::size_t>(j)] = s.matrix(i, j);
    m.push_back(row);
  }
  return json{{"classes", s.classes}, {"total", s.total},          {"support", s.support},
              {"f1", s.per_class_f1()}, {"accuracy", s.accuracy()}, {"confusion", m}};
}

json to_json(const ScoreReport& r) {
  return json{{"emotion_score", r.score.emotion},
              {"intent_score", r.score.intent},
              {"overall_score", r.score.overall},
              {"emotion", to_json(r.emotion)},
              {"intent", to_json(r.intent)}};
}

}  // namespace emotint
