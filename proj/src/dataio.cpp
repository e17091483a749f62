#include "emotint/dataio.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "emotint/errors.hpp"

namespace emotint {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'E', 'M', 'B', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 16;
constexpr const char* kManifestFormat = "emotint-manifest";

const std::array<const char*, 3> kPathKeys{"visual_path", "audio_path", "text_path"};
const std::array<const char*, 3> kShapeKeys{"visual_shape", "audio_shape", "text_shape"};

void put_u32(std::string& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Shape parse_header(const std::string& bytes, const fs::path& path) {
  if (bytes.size() < kHeaderBytes) throw FormatError("truncated embedding header: " + path.string());
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw FormatError("bad embedding magic: " + path.string());
  }
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (get_u32(p + 4) != kVersion) throw FormatError("unsupported embedding version: " + path.string());
  return Shape{get_u32(p + 8), get_u32(p + 12)};
}

std::string shape_string(Shape s) {
  return std::to_string(s.rows) + "x" + std::to_string(s.cols);
}

}  // namespace

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::visual: return "visual";
    case Modality::audio: return "audio";
    case Modality::text: return "text";
  }
  return "?";
}

std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::unlabeled: return "unlabeled";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::train;
  if (name == "unlabeled") return Split::unlabeled;
  if (name == "dev") return Split::dev;
  if (name == "test") return Split::test;
  throw std::invalid_argument("unknown split: " + std::string(name));
}

void EmbeddingSequence::validate() const {
  if (data.rows() < 1 || data.cols() < 1) {
    throw std::invalid_argument("embedding sequence must be at least 1x1");
  }
  if (!data.allFinite()) throw std::invalid_argument("embedding sequence contains non-finite values");
}

std::size_t DatasetManifest::count(Split s) const {
  return static_cast<std::size_t>(
      std::count_if(records.begin(), records.end(), [s](const auto& r) { return r.split == s; }));
}

const RecordDescriptor* DatasetManifest::find(std::string_view id) const {
  for (const auto& r : records) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

std::vector<std::int64_t> sample_frame_indices(std::int64_t n_frames, std::int64_t stride) {
  if (stride < 1) throw std::invalid_argument("sample_frame_indices: stride must be >= 1");
  std::vector<std::int64_t> out;
  for (std::int64_t i = 0; i < n_frames; i += stride) out.push_back(i);
  return out;
}

void write_embedding(const fs::path& path, const Eigen::MatrixXf& data) {
  std::string buf;
  buf.reserve(kHeaderBytes + static_cast<std::size_t>(data.size()) * 4);
  buf.append(kMagic, 4);
  put_u32(buf, kVersion);
  put_u32(buf, static_cast<std::uint32_t>(data.rows()));
  put_u32(buf, static_cast<std::uint32_t>(data.cols()));
  for (Eigen::Index i = 0; i < data.rows(); ++i) {
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
      put_u32(buf, std::bit_cast<std::uint32_t>(data(i, j)));
    }
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write embedding: " + path.string());
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

Shape read_embedding_shape(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open file: " + path.string());
  std::string header(kHeaderBytes, '\0');
  in.read(header.data(), static_cast<std::streamsize>(kHeaderBytes));
  header.resize(static_cast<std::size_t>(in.gcount()));
  return parse_header(header, path);
}

Eigen::MatrixXf read_embedding(const fs::path& path, std::optional<Shape> expected) {
  const std::string bytes = read_file(path);
  const Shape shape = parse_header(bytes, path);
  if (expected && !(*expected == shape)) {
    throw FormatError("shape mismatch in " + path.string() + ": declared " +
                      shape_string(*expected) + ", file has " + shape_string(shape));
  }
  const std::size_t n = static_cast<std::size_t>(shape.rows) * shape.cols;
  if (bytes.size() - kHeaderBytes != n * 4) {
    throw FormatError("truncated embedding payload in " + path.string() + ": expected " +
                      std::to_string(n) + " floats, found " +
                      std::to_string((bytes.size() - kHeaderBytes) / 4));
  }
  Eigen::MatrixXf out(shape.rows, shape.cols);
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + kHeaderBytes;
  for (std::uint32_t i = 0; i < shape.rows; ++i) {
    for (std::uint32_t j = 0; j < shape.cols; ++j, p += 4) {
      const float v = std::bit_cast<float>(get_u32(p));
      if (!std::isfinite(v)) throw FormatError("non-finite value in " + path.string());
      out(i, j) = v;
    }
  }
  return out;
}

EmbeddingSequence read_embedding(const fs::path& path, Shape expected, Modality modality) {
  EmbeddingSequence seq{modality, read_embedding(path, expected).cast<double>()};
  if (seq.data.rows() < 1 || seq.data.cols() < 1) {
    throw FormatError("empty embedding in " + path.string());
  }
  return seq;
}

void validate_manifest(const DatasetManifest& m) {
  if (m.n_emotion < 2 || m.n_intent < 2) {
    throw FormatError("manifest class counts must be >= 2");
  }
  std::set<std::string> seen;
  for (const auto& r : m.records) {
    auto fail = [&](const std::string& what) {
      throw FormatError("record '" + r.id + "': " + what);
    };
    if (r.id.empty()) throw FormatError("record with empty id");
    if (!seen.insert(r.id).second) fail("duplicate id");
    if (r.emotion_label && (*r.emotion_label < 0 || *r.emotion_label >= m.n_emotion)) {
      fail("label out of range (emotion_label " + std::to_string(*r.emotion_label) + ")");
    }
    if (r.intent_label && (*r.intent_label < 0 || *r.intent_label >= m.n_intent)) {
      fail("label out of range (intent_label " + std::to_string(*r.intent_label) + ")");
    }
    if (r.emotion_label.has_value() != r.intent_label.has_value()) {
      fail("emotion_label and intent_label must be both present or both absent");
    }
    if (r.split == Split::train && !r.labeled()) fail("train record without labels");
    if (r.split == Split::unlabeled && r.labeled() && !r.is_pseudo) {
      fail("unlabeled record carries labels");
    }
    if (r.is_pseudo && !r.labeled()) fail("pseudo record without labels");
    for (std::size_t k = 0; k < 3; ++k) {
      if (r.shapes[k].rows < 1 || r.shapes[k].cols < 1) fail("empty declared shape");
    }
  }
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open manifest: " + path.string());
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");

  DatasetManifest m;
  bool have_header = false;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!have_header) {
      if (!j.is_object() || j.value("format", "") != kManifestFormat) {
        throw FormatError("manifest must start with a header line (format \"emotint-manifest\")");
      }
      try {
        m.n_emotion = j.at("emotion_classes").get<int>();
        m.n_intent = j.at("intent_classes").get<int>();
        m.frame_stride = j.value("frame_stride", 30);
        m.audio_sample_rate = j.value("audio_sample_rate", 16000);
        m.audio_container = j.value("audio_container", std::string("wav"));
      } catch (const json::exception& e) {
        throw FormatError(std::string("manifest header: ") + e.what());
      }
      have_header = true;
      continue;
    }
    RecordDescriptor r;
    try {
      r.id = j.at("id").get<std::string>();
    } catch (const json::exception& e) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      r.split = parse_split(j.at("split").get<std::string>());
      if (!j.at("emotion_label").is_null()) r.emotion_label = j.at("emotion_label").get<int>();
      if (!j.at("intent_label").is_null()) r.intent_label = j.at("intent_label").get<int>();
      r.is_pseudo = j.at("is_pseudo").get<bool>();
      for (std::size_t k = 0; k < 3; ++k) {
        r.paths[k] = base / j.at(kPathKeys[k]).get<std::string>();
        const auto& s = j.at(kShapeKeys[k]);
        if (!s.is_array() || s.size() != 2) throw FormatError("shape must be [T, D]");
        r.shapes[k] = Shape{s[0].get<std::uint32_t>(), s[1].get<std::uint32_t>()};
      }
    } catch (const FormatError& e) {
      throw FormatError("record '" + r.id + "': " + e.what());
    } catch (const std::exception& e) {
      throw FormatError("record '" + r.id + "': " + e.what());
    }
    m.records.push_back(std::move(r));
  }
  if (!have_header) throw FormatError("empty manifest: " + path.string());

  validate_manifest(m);
  for (const auto& r : m.records) {
    for (std::size_t k = 0; k < 3; ++k) {
      if (!fs::exists(r.paths[k])) {
        throw FormatError("record '" + r.id + "': missing embedding file " + r.paths[k].string());
      }
      Shape actual;
      try {
        actual = read_embedding_shape(r.paths[k]);
      } catch (const FormatError& e) {
        throw FormatError("record '" + r.id + "': " + e.what());
      }
      if (!(actual == r.shapes[k])) {
        throw FormatError("record '" + r.id + "': shape mismatch in " + r.paths[k].string() +
                          ": declared " + shape_string(r.shapes[k]) + ", file has " +
                          shape_string(actual));
      }
    }
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  const fs::path base = fs::absolute(path.has_parent_path() ? path.parent_path() : fs::path("."));
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw FormatError("cannot write manifest: " + path.string());

  json header = {{"format", kManifestFormat},
                 {"version", 1},
                 {"emotion_classes", m.n_emotion},
                 {"intent_classes", m.n_intent},
                 {"frame_stride", m.frame_stride},
                 {"audio_sample_rate", m.audio_sample_rate},
                 {"audio_container", m.audio_container}};
  out << header.dump() << '\n';
  for (const auto& r : m.records) {
    json j;
    j["id"] = r.id;
    j["split"] = std::string(to_string(r.split));
    j["emotion_label"] = r.emotion_label ? json(*r.emotion_label) : json(nullptr);
    j["intent_label"] = r.intent_label ? json(*r.intent_label) : json(nullptr);
    for (std::size_t k = 0; k < 3; ++k) {
      const fs::path rel = fs::absolute(r.paths[k]).lexically_normal().lexically_relative(base.lexically_normal());
      j[kPathKeys[k]] = rel.generic_string();
      j[kShapeKeys[k]] = {r.shapes[k].rows, r.shapes[k].cols};
    }
    j["is_pseudo"] = r.is_pseudo;
    out << j.dump() << '\n';
  }
}

std::vector<SampleRecord> load_samples(const DatasetManifest& m, bool average_inputs) {
  std::vector<SampleRecord> out;
  out.reserve(m.records.size());
  for (const auto& r : m.records) {
    SampleRecord s;
    s.id = r.id;
    s.split = r.split;
    s.emotion_label = r.emotion_label;
    s.intent_label = r.intent_label;
    s.is_pseudo = r.is_pseudo;
    for (std::size_t k = 0; k < 3; ++k) {
      EmbeddingSequence seq;
      try {
        seq = read_embedding(r.paths[k], r.shapes[k], kModalities[k]);
      } catch (const FormatError& e) {
        throw FormatError("record '" + r.id + "': " + e.what());
      }
      s.sequences[k] = average_inputs ? Eigen::MatrixXd(mean_pool_time(seq)) : std::move(seq.data);
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace emotint
