#include "emotint/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "emotint/errors.hpp"

namespace emotint {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::string_view to_string(Stage s) { return s == Stage::stage1 ? "stage1" : "stage2"; }

Stage parse_stage(std::string_view s) {
  if (s == "stage1") return Stage::stage1;
  if (s == "stage2") return Stage::stage2;
  throw CheckpointError("unknown checkpoint stage: " + std::string(s));
}

json to_json(const ModelDims& d) {
  return json{{"visual_dim", d.visual_dim},
              {"audio_dim", d.audio_dim},
              {"text_dim", d.text_dim},
              {"hidden", d.hidden},
              {"ff_dim", d.ff_dim},
              {"fusion_heads", d.fusion_heads},
              {"emotion_interaction_heads", d.emotion_interaction_heads},
              {"intent_interaction_heads", d.intent_interaction_heads},
              {"text_kernel", d.text_kernel},
              {"n_emotion", d.n_emotion},
              {"n_intent", d.n_intent}};
}

ModelDims dims_from_json(const json& j) {
  ModelDims d;
  try {
    d.visual_dim = j.at("visual_dim").get<int>();
    d.audio_dim = j.at("audio_dim").get<int>();
    d.text_dim = j.at("text_dim").get<int>();
    d.hidden = j.at("hidden").get<int>();
    d.ff_dim = j.at("ff_dim").get<int>();
    d.fusion_heads = j.at("fusion_heads").get<int>();
    d.emotion_interaction_heads = j.at("emotion_interaction_heads").get<int>();
    d.intent_interaction_heads = j.at("intent_interaction_heads").get<int>();
    d.text_kernel = j.at("text_kernel").get<int>();
    d.n_emotion = j.at("n_emotion").get<int>();
    d.n_intent = j.at("n_intent").get<int>();
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("checkpoint dims: ") + e.what());
  }
  d.validate();
  return d;
}

namespace {

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
bool get(std::ifstream& in, T& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof v));
}

}  // namespace

void write_param_arrays(const fs::path& path, const std::map<std::string, Eigen::MatrixXd>& arrays) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  for (const auto& [name, m] : arrays) {
    put(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put(out, std::uint32_t{2});
    put(out, static_cast<std::uint64_t>(m.rows()));
    put(out, static_cast<std::uint64_t>(m.cols()));
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    out.write(reinterpret_cast<const char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)));
  }
  if (!out) throw FormatError("write failed: " + path.string());
}

std::map<std::string, Eigen::MatrixXd> read_param_arrays(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  std::map<std::string, Eigen::MatrixXd> arrays;
  std::uint32_t name_len = 0;
  while (get(in, name_len)) {
    auto truncated = [&] { return CheckpointError(path.string() + ": truncated array record"); };
    if (name_len == 0 || name_len > 4096) throw CheckpointError(path.string() + ": bad array name length");
    std::string name(name_len, '\0');
    std::uint32_t rank = 0;
    if (!in.read(name.data(), name_len) || !get(in, rank)) throw truncated();
    if (rank > 2) throw CheckpointError(path.string() + ": array '" + name + "' has rank " + std::to_string(rank));
    std::uint64_t dims[2] = {1, 1};
    for (std::uint32_t k = 0; k < rank; ++k) {
      if (!get(in, dims[k])) throw truncated();
    }
    if (rank == 1) std::swap(dims[0], dims[1]);  // vectors load as rows
    if (dims[0] > (1u << 24) || dims[1] > (1u << 24)) throw CheckpointError(path.string() + ": implausible dims");
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(static_cast<Eigen::Index>(dims[0]),
                                                                             static_cast<Eigen::Index>(dims[1]));
    if (!in.read(reinterpret_cast<char*>(rm.data()), static_cast<std::streamsize>(rm.size() * sizeof(double)))) {
      throw truncated();
    }
    if (!arrays.emplace(name, Eigen::MatrixXd(rm)).second) {
      throw CheckpointError(path.string() + ": duplicate array '" + name + "'");
    }
  }
  return arrays;
}

void save_checkpoint(const fs::path& dir, const JointModel<double>& model, Stage stage, const json& config) {
  fs::create_directories(dir);
  std::map<std::string, Eigen::MatrixXd> arrays;
  model.visit([&](const Parameter<double>& p) { arrays.emplace(p.name, p.value); });
  write_param_arrays(dir / "params.bin", arrays);
  const json meta{{"format", "emotint-checkpoint"},
                  {"version", 1},
                  {"stage", to_string(stage)},
                  {"dims", to_json(model.dims)},
                  {"config", config}};
  std::ofstream out(dir / "meta.json", std::ios::trunc);
  if (!out) throw FormatError("cannot write " + (dir / "meta.json").string());
  out << meta.dump(2) << '\n';
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw CheckpointError("not a checkpoint directory: " + dir.string());
  json meta;
  try {
    meta = json::parse(in);
    if (meta.at("format") != "emotint-checkpoint" || meta.at("version") != 1) {
      throw CheckpointError("unsupported checkpoint format in " + dir.string());
    }
  } catch (const json::exception& e) {
    throw CheckpointError(dir.string() + "/meta.json: " + e.what());
  }
  Checkpoint c;
  try {
    c.stage = parse_stage(meta.at("stage").get<std::string>());
    c.config = meta.value("config", json::object());
    c.model = JointModel<double>::init(dims_from_json(meta.at("dims")), 0);
  } catch (const json::exception& e) {
    throw CheckpointError(dir.string() + "/meta.json: " + e.what());
  }

  auto arrays = read_param_arrays(dir / "params.bin");
  c.model.visit([&](Parameter<double>& p) {
    auto it = arrays.find(p.name);
    if (it == arrays.end()) throw CheckpointError("checkpoint is missing array '" + p.name + "'");
    if (it->second.rows() != p.value.rows() || it->second.cols() != p.value.cols()) {
      throw CheckpointError("checkpoint array '" + p.name + "' is " + std::to_string(it->second.rows()) + "x" +
                            std::to_string(it->second.cols()) + ", model expects " +
                            std::to_string(p.value.rows()) + "x" + std::to_string(p.value.cols()));
    }
    p.value = it->second;
    arrays.erase(it);
  });
  if (!arrays.empty()) throw CheckpointError("checkpoint has unexpected array '" + arrays.begin()->first + "'");
  return c;
}

void require_dims(const ModelDims& have, const ModelDims& want) {
  auto check = [](const char* field, int a, int b) {
    if (a != b) {
      throw DimensionError(std::string("checkpoint ") + field + " = " + std::to_string(a) + ", data needs " +
                           std::to_string(b));
    }
  };
  check("visual_dim", have.visual_dim, want.visual_dim);
  check("audio_dim", have.audio_dim, want.audio_dim);
  check("text_dim", have.text_dim, want.text_dim);
  check("n_emotion", have.n_emotion, want.n_emotion);
  check("n_intent", have.n_intent, want.n_intent);
}

}  // namespace emotint
