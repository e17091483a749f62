#include "emotint/config.hpp"

#include <charconv>
#include <fstream>
#include <set>

#include "emotint/errors.hpp"

namespace emotint {

namespace fs = std::filesystem;
using nlohmann::json;

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  need(hidden >= 1, "hidden must be >= 1");
  need(ff_dim >= 0, "ff_dim must be >= 0");
  need(fusion_heads >= 1, "fusion_heads must be >= 1");
  need(interaction_heads >= 1, "interaction_heads must be >= 1");
  need(emotion_interaction_heads >= 0 && intent_interaction_heads >= 0, "per-task head counts must be >= 0");
  need(text_kernel >= 0, "text_kernel must be >= 0");
  need(noise_sigma >= 0.0, "noise_sigma must be >= 0");
  need(dropout >= 0.0 && dropout < 1.0, "dropout must lie in [0, 1)");
  need(w_emotion >= 0.0 && w_intent >= 0.0 && w_emotion + w_intent > 0.0,
       "loss weights must be >= 0 and not both zero");
  need(learning_rate > 0.0, "learning_rate must be > 0");
  need(finetune_learning_rate >= 0.0, "finetune_learning_rate must be >= 0");
  need(epochs >= 0 && finetune_epochs >= 0, "epoch counts must be >= 0");
  need(batch_size >= 1, "batch_size must be >= 1");
  need(clip_norm >= 0.0, "clip_norm must be >= 0 (0 disables clipping)");
  need(threshold > 0.0 && threshold <= 1.0, "threshold must lie in (0, 1]");
  need(cap >= 0, "cap must be >= 0");
  parse_balance_mode(balance_mode);
  if (!eval_split.empty()) {
    try {
      parse_split(eval_split);
    } catch (const std::invalid_argument&) {
      throw ConfigError("config: unknown eval_split '" + eval_split + "'");
    }
  }
  for (const auto& m : ensemble) {
    need(!m.checkpoint.empty(), "ensemble member without checkpoint");
    need(m.weight >= 0.0, "ensemble weights must be >= 0");
  }
}

ModelDims RunConfig::model_dims(int visual_dim, int audio_dim, int text_dim, int n_emotion, int n_intent) const {
  ModelDims d;
  d.visual_dim = visual_dim;
  d.audio_dim = audio_dim;
  d.text_dim = text_dim;
  d.hidden = hidden;
  d.ff_dim = ff_dim > 0 ? ff_dim : 4 * hidden;
  d.fusion_heads = fusion_heads;
  d.emotion_interaction_heads = emotion_interaction_heads > 0 ? emotion_interaction_heads : interaction_heads;
  d.intent_interaction_heads = intent_interaction_heads > 0 ? intent_interaction_heads : interaction_heads;
  d.text_kernel = text_kernel > 0 ? text_kernel : (average_inputs ? 1 : 3);
  d.n_emotion = n_emotion;
  d.n_intent = n_intent;
  try {
    d.validate();
  } catch (const DimensionError& e) {
    throw ConfigError(e.what());
  }
  return d;
}

double RunConfig::resolved_finetune_learning_rate() const {
  return finetune_learning_rate > 0.0 ? finetune_learning_rate : 0.1 * learning_rate;
}

SelectionPolicy RunConfig::selection_policy(const DatasetManifest& manifest) const {
  SelectionPolicy p;
  p.threshold = threshold;
  p.balance = parse_balance_mode(balance_mode);
  if (p.balance != BalanceMode::none) p.cap = cap > 0 ? cap : default_cell_cap(manifest);
  return p;
}

json to_json(const RunConfig& c) {
  json members = json::array();
  for (const auto& m : c.ensemble) {
    members.push_back({{"checkpoint", m.checkpoint}, {"weight", m.weight}, {"task", to_string(m.mask)}});
  }
  return json{{"manifest", c.manifest},
              {"out_dir", c.out_dir},
              {"seed", c.seed},
              {"hidden", c.hidden},
              {"ff_dim", c.ff_dim},
              {"fusion_heads", c.fusion_heads},
              {"interaction_heads", c.interaction_heads},
              {"emotion_interaction_heads", c.emotion_interaction_heads},
              {"intent_interaction_heads", c.intent_interaction_heads},
              {"text_kernel", c.text_kernel},
              {"average_inputs", c.average_inputs},
              {"noise_sigma", c.noise_sigma},
              {"dropout", c.dropout},
              {"w_emotion", c.w_emotion},
              {"w_intent", c.w_intent},
              {"learning_rate", c.learning_rate},
              {"finetune_learning_rate", c.finetune_learning_rate},
              {"epochs", c.epochs},
              {"finetune_epochs", c.finetune_epochs},
              {"batch_size", c.batch_size},
              {"clip_norm", c.clip_norm},
              {"threshold", c.threshold},
              {"balance_mode", c.balance_mode},
              {"cap", c.cap},
              {"ensemble", members},
              {"eval_split", c.eval_split}};
}

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  if constexpr (std::is_arithmetic_v<T> && !std::is_same_v<T, bool>) {
    if (it->is_null()) {  // null selects the automatic value
      out = T{0};
      return;
    }
    if (!it->is_number()) throw ConfigError(std::string("config: field '") + key + "' must be a number");
    if constexpr (std::is_integral_v<T>) {
      if (!it->is_number_integer()) throw ConfigError(std::string("config: field '") + key + "' must be an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (it->get<long long>() < 0) throw ConfigError(std::string("config: field '") + key + "' must be >= 0");
      }
    }
  } else if constexpr (std::is_same_v<T, bool>) {
    if (!it->is_boolean()) throw ConfigError(std::string("config: field '") + key + "' must be a boolean");
  } else {
    if (!it->is_string()) throw ConfigError(std::string("config: field '") + key + "' must be a string");
  }
  out = it->get<T>();
}

}  // namespace

RunConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  static const std::set<std::string> known = [] {
    std::set<std::string> s;
    const json defaults = to_json(RunConfig{});
    for (const auto& [k, v] : defaults.items()) s.insert(k);
    return s;
  }();
  for (const auto& [k, v] : j.items()) {
    if (!known.count(k)) throw ConfigError("config: unknown field '" + k + "'");
  }
  RunConfig c;
  read_field(j, "manifest", c.manifest);
  read_field(j, "out_dir", c.out_dir);
  read_field(j, "seed", c.seed);
  read_field(j, "hidden", c.hidden);
  read_field(j, "ff_dim", c.ff_dim);
  read_field(j, "fusion_heads", c.fusion_heads);
  read_field(j, "interaction_heads", c.interaction_heads);
  read_field(j, "emotion_interaction_heads", c.emotion_interaction_heads);
  read_field(j, "intent_interaction_heads", c.intent_interaction_heads);
  read_field(j, "text_kernel", c.text_kernel);
  read_field(j, "average_inputs", c.average_inputs);
  read_field(j, "noise_sigma", c.noise_sigma);
  read_field(j, "dropout", c.dropout);
  read_field(j, "w_emotion", c.w_emotion);
  read_field(j, "w_intent", c.w_intent);
  read_field(j, "learning_rate", c.learning_rate);
  read_field(j, "finetune_learning_rate", c.finetune_learning_rate);
  read_field(j, "epochs", c.epochs);
  read_field(j, "finetune_epochs", c.finetune_epochs);
  read_field(j, "batch_size", c.batch_size);
  read_field(j, "clip_norm", c.clip_norm);
  read_field(j, "threshold", c.threshold);
  read_field(j, "balance_mode", c.balance_mode);
  read_field(j, "cap", c.cap);
  read_field(j, "eval_split", c.eval_split);
  if (auto it = j.find("ensemble"); it != j.end()) {
    if (!it->is_array()) throw ConfigError("config: field 'ensemble' must be an array");
    for (const auto& m : *it) {
      if (!m.is_object()) throw ConfigError("config: ensemble members must be objects");
      for (const auto& [k, v] : m.items()) {
        if (k != "checkpoint" && k != "weight" && k != "task") {
          throw ConfigError("config: unknown ensemble member field '" + k + "'");
        }
      }
      EnsembleMember e;
      read_field(m, "checkpoint", e.checkpoint);
      read_field(m, "weight", e.weight);
      std::string task = "both";
      read_field(m, "task", task);
      e.mask = parse_task_mask(task);
      c.ensemble.push_back(std::move(e));
    }
  }
  c.validate();
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config: " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const RunConfig& c, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write config: " + path.string());
  out << to_json(c).dump(2) << '\n';
}

bool is_config_key(const std::string& key) {
  return to_json(RunConfig{}).contains(key);
}

void apply_override(RunConfig& c, const std::string& key, const std::string& value) {
  json j = to_json(c);
  auto it = j.find(key);
  if (it == j.end()) throw ConfigError("unknown option --" + key);
  auto bad = [&] { return ConfigError("option --" + key + ": cannot parse '" + value + "'"); };
  const char* first = value.data();
  const char* last = value.data() + value.size();
  if (value == "null") {
    *it = nullptr;
  } else if (it->is_number_integer() || it->is_number_unsigned()) {
    long long v = 0;
    const auto r = std::from_chars(first, last, v);
    if (r.ec != std::errc{} || r.ptr != last) throw bad();
    *it = v;
  } else if (it->is_number_float()) {
    double v = 0;
    const auto r = std::from_chars(first, last, v);
    if (r.ec != std::errc{} || r.ptr != last) throw bad();
    *it = v;
  } else if (it->is_boolean()) {
    if (value != "true" && value != "false") throw bad();
    *it = value == "true";
  } else if (it->is_array()) {
    try {
      *it = json::parse(value);
    } catch (const json::parse_error&) {
      throw bad();
    }
  } else {
    *it = value;
  }
  c = config_from_json(j);
}

}  // namespace emotint
