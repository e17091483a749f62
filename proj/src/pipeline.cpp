#include "emotint/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <tuple>

#include "emotint/errors.hpp"
#include "emotint/optim.hpp"

namespace emotint {

namespace fs = std::filesystem;
using nlohmann::json;

std::vector<const SampleRecord*> Dataset::select(Split split, bool labeled_only) const {
  std::vector<const SampleRecord*> out;
  for (const auto& s : samples) {
    if (s.split == split && (!labeled_only || s.labeled())) out.push_back(&s);
  }
  return out;
}

Dataset load_dataset(const fs::path& manifest, bool average_inputs) {
  Dataset d;
  d.manifest = load_manifest(manifest);
  d.samples = load_samples(d.manifest, average_inputs);
  if (d.manifest.records.empty()) throw ConfigError("manifest has no records: " + manifest.string());
  const auto& first = d.manifest.records.front().shapes;
  d.visual_dim = static_cast<int>(first[0].cols);
  d.audio_dim = static_cast<int>(first[1].cols);
  d.text_dim = static_cast<int>(first[2].cols);
  for (const auto& r : d.manifest.records) {
    for (std::size_t k = 0; k < 3; ++k) {
      if (r.shapes[k].cols != first[k].cols) {
        throw FormatError("record '" + r.id + "': " + std::string(to_string(kModalities[k])) + " width " +
                          std::to_string(r.shapes[k].cols) + " differs from " + std::to_string(first[k].cols));
      }
    }
  }
  return d;
}

std::vector<EpochLog> train_model(JointModel<double>& model, const std::vector<const SampleRecord*>& train,
                                  const TrainSettings& s, const std::function<std::optional<TaskScore>()>& evaluate,
                                  const std::function<void(const EpochLog&)>& on_epoch) {
  if (s.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  std::vector<JointModel<double>::Inputs> inputs;
  inputs.reserve(train.size());
  for (const auto* r : train) {
    if (!r->labeled()) throw ConfigError("training record without labels: " + r->id);
    inputs.push_back(JointModel<double>::inputs_of(*r));
  }

  std::seed_seq order_seed{s.seed, s.stream, std::uint64_t{1}};
  std::seed_seq noise_seed{s.seed, s.stream, std::uint64_t{2}};
  std::mt19937_64 order_rng(order_seed);
  std::mt19937_64 noise_rng(noise_seed);
  Adam<double> adam(AdamConfig{s.learning_rate});
  const ForwardOptions opt{true, s.noise_sigma, s.dropout, &noise_rng};

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<EpochLog> log;
  for (int epoch = 1; epoch <= s.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(s.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(s.batch_size));
      model.zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const std::size_t i = order[k];
        Tape<double> t;
        const auto r = model.forward(t, inputs[i], opt);
        const auto loss = joint_loss(r.logits, *train[i]->emotion_label, *train[i]->intent_label, s.weights);
        t.backward(loss);
        model.visit([&](Parameter<double>& p) { t.accumulate_into(p); });
        epoch_loss += loss.value()(0, 0);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      model.visit([&](Parameter<double>& p) { p.grad *= inv; });
      clip_grad_norm<double>(model, s.clip_norm);
      adam.step(model);
    }
    EpochLog e;
    e.epoch = epoch;
    e.loss = train.empty() ? 0.0 : epoch_loss / static_cast<double>(train.size());
    if (evaluate) e.eval = evaluate();
    if (on_epoch) on_epoch(e);
    log.push_back(e);
  }
  model.zero_grad();
  return log;
}

std::vector<PredictionRecord> predict_samples(const JointModel<double>& model,
                                              const std::vector<const SampleRecord*>& samples) {
  std::vector<PredictionRecord> out;
  out.reserve(samples.size());
  for (const auto* s : samples) {
    auto p = model.predict(JointModel<double>::inputs_of(*s));
    out.push_back(make_prediction(s->id, std::move(p.emotion), std::move(p.intent)));
  }
  return out;
}

Split split_from_name(const std::string& name) {
  try {
    return parse_split(name);
  } catch (const std::invalid_argument&) {
    throw ConfigError("unknown split '" + name + "' (expected train, unlabeled, dev or test)");
  }
}

Split resolve_eval_split(const RunConfig& cfg, const DatasetManifest& manifest) {
  if (!cfg.eval_split.empty()) return split_from_name(cfg.eval_split);
  for (const auto& r : manifest.records) {
    if (r.split == Split::dev && r.labeled()) return Split::dev;
  }
  return Split::test;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

namespace {

void require_paths(const RunConfig& cfg) {
  if (cfg.manifest.empty()) throw ConfigError("no manifest configured (--manifest)");
  if (cfg.out_dir.empty()) throw ConfigError("no output directory configured (--out)");
  if (!fs::exists(cfg.manifest)) throw ConfigError("manifest does not exist: " + cfg.manifest);
}

json score_json(const TaskScore& s) {
  return json{{"emotion_score", s.emotion}, {"intent_score", s.intent}, {"overall_score", s.overall}};
}

bool has_labeled(const Dataset& d, Split split) { return !d.select(split, true).empty(); }

// Shared by both training stages.
TrainResult run_training(const RunConfig& cfg, const Dataset& data, JointModel<double> model,
                         const std::vector<const SampleRecord*>& train, const TrainSettings& settings, Stage stage) {
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  save_config(cfg, out / "config.json");

  TrainResult result{std::move(model), {}, resolve_eval_split(cfg, data.manifest), std::nullopt};
  const auto eval_samples = data.select(result.eval_split, false);
  const bool can_eval = has_labeled(data, result.eval_split);
  auto evaluate = [&]() -> std::optional<TaskScore> {
    if (!can_eval) return std::nullopt;
    return evaluate_run(predict_samples(result.model, eval_samples), data.manifest, result.eval_split).score;
  };

  std::ofstream log(out / "train_log.jsonl", std::ios::trunc);
  if (!log) throw FormatError("cannot write " + (out / "train_log.jsonl").string());
  auto on_epoch = [&](const EpochLog& e) {
    json j{{"stage", to_string(stage)}, {"epoch", e.epoch}, {"loss", e.loss}};
    if (e.eval) {
      j["eval_split"] = to_string(result.eval_split);
      j["eval"] = score_json(*e.eval);
    }
    log << j.dump() << '\n' << std::flush;
  };
  result.log = train_model(result.model, train, settings, evaluate, on_epoch);

  save_checkpoint(out / "checkpoint", result.model, stage, to_json(cfg));
  if (can_eval) {
    const auto preds = predict_samples(result.model, eval_samples);
    result.report = evaluate_run(preds, data.manifest, result.eval_split);
    write_json(out / ("score_" + std::string(to_string(result.eval_split)) + ".json"), to_json(*result.report));
  }
  return result;
}

TrainSettings settings_of(const RunConfig& cfg) {
  TrainSettings s;
  s.epochs = cfg.epochs;
  s.batch_size = cfg.batch_size;
  s.learning_rate = cfg.learning_rate;
  s.clip_norm = cfg.clip_norm;
  s.noise_sigma = cfg.noise_sigma;
  s.dropout = cfg.dropout;
  s.weights = cfg.loss_weights();
  s.seed = cfg.seed;
  return s;
}

Checkpoint load_matching_checkpoint(const fs::path& dir, const Dataset& data) {
  Checkpoint c = load_checkpoint(dir);
  ModelDims want = c.model.dims;
  want.visual_dim = data.visual_dim;
  want.audio_dim = data.audio_dim;
  want.text_dim = data.text_dim;
  want.n_emotion = data.manifest.n_emotion;
  want.n_intent = data.manifest.n_intent;
  require_dims(c.model.dims, want);
  return c;
}

}  // namespace

TrainResult cmd_train(const RunConfig& cfg) {
  cfg.validate();
  require_paths(cfg);
  const Dataset data = load_dataset(cfg.manifest, cfg.average_inputs);
  std::vector<const SampleRecord*> train;
  for (const auto* s : data.select(Split::train, true)) {
    if (!s->is_pseudo) train.push_back(s);
  }
  if (train.empty()) throw ConfigError("manifest has no clean labeled train records");
  const ModelDims dims =
      cfg.model_dims(data.visual_dim, data.audio_dim, data.text_dim, data.manifest.n_emotion, data.manifest.n_intent);
  auto model = JointModel<double>::init(dims, cfg.seed);
  return run_training(cfg, data, std::move(model), train, settings_of(cfg), Stage::stage1);
}

PseudoResult cmd_pseudo_label(const RunConfig& cfg, const fs::path& checkpoint) {
  cfg.validate();
  require_paths(cfg);
  const Dataset data = load_dataset(cfg.manifest, cfg.average_inputs);
  Checkpoint ckpt = load_matching_checkpoint(checkpoint, data);
  if (ckpt.stage != Stage::stage1) throw CheckpointError("pseudo-labeling needs a stage1 checkpoint");

  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  save_config(cfg, out / "config.json");

  PseudoResult r;
  r.policy = cfg.selection_policy(data.manifest);
  r.predictions = predict_unlabeled(ckpt.model, data.samples);
  r.selected = select_confident(r.predictions, r.policy);
  write_pseudo_report(out / "pseudo_report.jsonl", r.predictions, r.selected);
  r.manifest_path = out / "manifest.jsonl";
  if (fs::exists(r.manifest_path) && fs::equivalent(r.manifest_path, cfg.manifest)) {
    throw ConfigError("pseudo-label output would overwrite the input manifest: " + cfg.manifest);
  }
  save_manifest(augment_dataset(data.manifest, r.selected), r.manifest_path);
  json summary{{"threshold", r.policy.threshold},
               {"balance_mode", to_string(r.policy.balance)},
               {"cap", r.policy.cap ? json(*r.policy.cap) : json(nullptr)},
               {"unlabeled", r.predictions.size()},
               {"selected", r.selected.size()}};
  write_json(out / "pseudo_summary.json", summary);
  return r;
}

TrainResult cmd_finetune(const RunConfig& cfg, const fs::path& checkpoint) {
  cfg.validate();
  require_paths(cfg);
  const Dataset data = load_dataset(cfg.manifest, cfg.average_inputs);
  Checkpoint ckpt = load_matching_checkpoint(checkpoint, data);
  if (ckpt.stage != Stage::stage1) throw CheckpointError("fine-tuning needs a stage1 checkpoint");
  const auto train = data.select(Split::train, true);
  if (train.empty()) throw ConfigError("manifest has no labeled train records");
  TrainSettings s = settings_of(cfg);
  s.epochs = cfg.finetune_epochs;
  s.learning_rate = cfg.resolved_finetune_learning_rate();
  s.stream = 2;
  return run_training(cfg, data, std::move(ckpt.model), train, s, Stage::stage2);
}

std::vector<PredictionRecord> cmd_predict(const RunConfig& cfg, const fs::path& checkpoint, const std::string& split) {
  cfg.validate();
  const Split which = split_from_name(split);
  require_paths(cfg);
  const Dataset data = load_dataset(cfg.manifest, cfg.average_inputs);
  const Checkpoint ckpt = load_matching_checkpoint(checkpoint, data);
  auto preds = predict_samples(ckpt.model, data.select(which, false));
  write_predictions(fs::path(cfg.out_dir) / ("predictions_" + split + ".jsonl"), preds);
  return preds;
}

EnsembleResult cmd_ensemble(const RunConfig& cfg, const std::string& split) {
  cfg.validate();
  const Split which = split_from_name(split);
  EnsembleSpec spec{cfg.ensemble};
  if (spec.members.empty()) throw ConfigError("ensemble has no members");
  spec.validate();
  require_paths(cfg);
  const Dataset data = load_dataset(cfg.manifest, cfg.average_inputs);
  const auto samples = data.select(which, false);

  std::vector<std::vector<PredictionRecord>> member_preds;
  for (const auto& m : spec.members) {
    const Checkpoint ckpt = load_matching_checkpoint(m.checkpoint, data);
    member_preds.push_back(predict_samples(ckpt.model, samples));
  }

  EnsembleResult r;
  r.predictions = combine_predictions(member_preds, spec);
  r.report = evaluate_run(r.predictions, data.manifest, which);
  for (const auto& p : member_preds) r.member_reports.push_back(evaluate_run(p, data.manifest, which));

  // Members are listed in a canonical order so the report does not depend on
  // how the ensemble was written down.
  std::vector<std::size_t> order(spec.members.size());
  std::iota(order.begin(), order.end(), 0);
  auto key = [&](std::size_t k) {
    const auto& m = spec.members[k];
    return std::make_tuple(m.checkpoint, std::string(to_string(m.mask)), m.weight);
  };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key(a) < key(b); });
  json members = json::array();
  for (std::size_t k : order) {
    const auto& m = spec.members[k];
    json e = score_json(r.member_reports[k].score);
    e["checkpoint"] = m.checkpoint;
    e["weight"] = m.weight;
    e["task"] = to_string(m.mask);
    members.push_back(e);
  }
  json report = to_json(r.report);
  report["split"] = split;
  report["members"] = members;
  const fs::path out(cfg.out_dir);
  write_json(out / ("ensemble_" + split + ".json"), report);
  write_predictions(out / ("predictions_ensemble_" + split + ".jsonl"), r.predictions);
  save_config(cfg, out / "config.json");
  return r;
}

ScoreReport cmd_evaluate(const RunConfig& cfg, const fs::path& predictions, const std::string& split) {
  cfg.validate();
  const Split which = split_from_name(split);
  require_paths(cfg);
  const DatasetManifest manifest = load_manifest(cfg.manifest);
  const auto report = evaluate_run(read_predictions(predictions), manifest, which);
  write_json(fs::path(cfg.out_dir) / ("score_" + split + ".json"), to_json(report));
  return report;
}

SyntheticDataset cmd_gen_synthetic(const SyntheticSpec& spec, const fs::path& out_dir) {
  return generate_synthetic_dataset(spec, out_dir);
}

}  // namespace emotint
