// emotint: command-line front end for the two-stage training pipeline.
//
// Exit codes: 0 success, 2 configuration or validation error, 3 data format
// error, 4 dimension or checkpoint mismatch, 1 anything else.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "emotint/config.hpp"
#include "emotint/errors.hpp"
#include "emotint/pipeline.hpp"

using namespace emotint;
using nlohmann::json;

namespace {

// Turns leftover "--key value" / "--key=value" arguments into config overrides.
void apply_extras(RunConfig& cfg, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0) throw ConfigError("unexpected argument '" + arg + "'");
    std::string key = arg.substr(2), value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= extras.size()) throw ConfigError("option --" + key + " needs a value");
      value = extras[++i];
    }
    apply_override(cfg, key, value);
  }
}

json scores(const TaskScore& s) {
  return json{{"emotion_score", s.emotion}, {"intent_score", s.intent}, {"overall_score", s.overall}};
}

void print_training(const TrainResult& r) {
  json j{{"epochs", r.log.size()}};
  if (!r.log.empty()) j["final_loss"] = r.log.back().loss;
  if (r.report) {
    j["eval_split"] = to_string(r.eval_split);
    j["eval"] = scores(r.report->score);
  }
  std::cout << j.dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint multimodal emotion and intent recognition: training, pseudo-labeling, ensembling"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "random seed (overrides the config)");
  app.add_option("--out", out_dir, "output directory (overrides the config)");

  SyntheticSpec synth;
  synth.n_train = 600;
  synth.n_unlabeled = 400;
  synth.n_test = 200;
  auto* gen = app.add_subcommand("gen-synthetic", "write a Gaussian-cluster dataset with a manifest");
  gen->add_option("--n_train", synth.n_train)->check(CLI::NonNegativeNumber);
  gen->add_option("--n_unlabeled", synth.n_unlabeled)->check(CLI::NonNegativeNumber);
  gen->add_option("--n_test", synth.n_test)->check(CLI::NonNegativeNumber);
  gen->add_option("--n_emotion", synth.n_emotion)->check(CLI::Range(2, 1000));
  gen->add_option("--n_intent", synth.n_intent)->check(CLI::Range(2, 1000));
  gen->add_option("--dim", synth.dim)->check(CLI::Range(2, 100000));
  gen->add_option("--separation", synth.separation)->check(CLI::NonNegativeNumber);
  gen->add_option("--max_length", synth.max_length)->check(CLI::Range(1, 100000));

  std::string checkpoint, split = "test", predictions;
  auto* train = app.add_subcommand("train", "stage 1: train on clean labeled data");
  auto* pseudo = app.add_subcommand("pseudo-label", "label confident unlabeled records with a stage-1 model");
  pseudo->add_option("--checkpoint", checkpoint, "stage-1 checkpoint directory")->required();
  auto* finetune = app.add_subcommand("finetune", "stage 2: continue training on clean plus pseudo-labeled data");
  finetune->add_option("--checkpoint", checkpoint, "stage-1 checkpoint directory")->required();
  auto* predict = app.add_subcommand("predict", "write class probabilities for one split");
  predict->add_option("--checkpoint", checkpoint, "checkpoint directory")->required();
  predict->add_option("--split", split, "train, unlabeled, dev or test");
  auto* ensemble = app.add_subcommand("ensemble", "per-task ensemble of the configured members, then score");
  ensemble->add_option("--split", split, "split to predict and score");
  auto* evaluate = app.add_subcommand("evaluate", "score a prediction file against manifest labels");
  evaluate->add_option("--predictions", predictions, "prediction file")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--split", split, "split to score");

  // Unrecognised "--key value" pairs fall through to here and become config overrides.
  app.allow_extras();
  for (auto* sub : {gen, train, pseudo, finetune, predict, ensemble, evaluate}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    const auto extras = app.remaining();
    if (gen->parsed()) {
      if (!extras.empty()) throw ConfigError("gen-synthetic: unexpected argument '" + extras.front() + "'");
      if (out_dir.empty()) throw ConfigError("gen-synthetic needs --out");
      if (seed) synth.seed = *seed;
      const auto ds = cmd_gen_synthetic(synth, out_dir);
      std::cout << json{{"manifest", (std::filesystem::path(out_dir) / "manifest.jsonl").string()},
                        {"records", ds.manifest.records.size()}}
                       .dump()
                << '\n';
      return 0;
    }

    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    apply_extras(cfg, extras);
    if (seed) cfg.seed = *seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    cfg.validate();

    if (train->parsed()) {
      print_training(cmd_train(cfg));
    } else if (pseudo->parsed()) {
      const auto r = cmd_pseudo_label(cfg, checkpoint);
      std::cout << json{{"unlabeled", r.predictions.size()},
                        {"selected", r.selected.size()},
                        {"manifest", r.manifest_path.string()}}
                       .dump()
                << '\n';
    } else if (finetune->parsed()) {
      print_training(cmd_finetune(cfg, checkpoint));
    } else if (predict->parsed()) {
      const auto preds = cmd_predict(cfg, checkpoint, split);
      std::cout << json{{"split", split}, {"predictions", preds.size()}}.dump() << '\n';
    } else if (ensemble->parsed()) {
      std::cout << scores(cmd_ensemble(cfg, split).report.score).dump() << '\n';
    } else if (evaluate->parsed()) {
      std::cout << scores(cmd_evaluate(cfg, predictions, split).score).dump() << '\n';
    }
    return 0;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
