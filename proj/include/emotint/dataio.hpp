#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace emotint {

enum class Modality { visual = 0, audio = 1, text = 2 };
inline constexpr std::array<Modality, 3> kModalities{Modality::visual, Modality::audio,
                                                     Modality::text};

enum class Split { train, unlabeled, dev, test };

std::string_view to_string(Modality m);
std::string_view to_string(Split s);
/// Throws std::invalid_argument for an unknown name.
Split parse_split(std::string_view name);

/// T x D shape of one embedding file.
struct Shape {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  friend bool operator==(const Shape&, const Shape&) = default;
};

/// One modality's T x D embedding matrix. T, D >= 1 and every value finite.
struct EmbeddingSequence {
  Modality modality = Modality::visual;
  Eigen::MatrixXd data;

  /// Throws std::invalid_argument when the invariants above do not hold.
  void validate() const;
};

/// A clip after loading: three modality matrices plus labels.
struct SampleRecord {
  std::string id;
  Split split = Split::train;
  std::optional<int> emotion_label;
  std::optional<int> intent_label;
  bool is_pseudo = false;
  std::array<Eigen::MatrixXd, 3> sequences;

  const Eigen::MatrixXd& sequence(Modality m) const {
    return sequences[static_cast<std::size_t>(m)];
  }
  bool labeled() const { return emotion_label.has_value() && intent_label.has_value(); }
};

/// One manifest line. Paths are held resolved against the manifest directory.
struct RecordDescriptor {
  std::string id;
  Split split = Split::train;
  std::optional<int> emotion_label;
  std::optional<int> intent_label;
  std::array<std::filesystem::path, 3> paths;
  std::array<Shape, 3> shapes;
  bool is_pseudo = false;

  bool labeled() const { return emotion_label.has_value() && intent_label.has_value(); }
};

struct DatasetManifest {
  std::vector<RecordDescriptor> records;
  int n_emotion = 0;
  int n_intent = 0;
  // Provenance only; nothing in the pipeline decodes video or audio.
  int frame_stride = 30;
  int audio_sample_rate = 16000;
  std::string audio_container = "wav";

  std::size_t count(Split s) const;
  const RecordDescriptor* find(std::string_view id) const;
};

/// {0, stride, 2*stride, ...} restricted to [0, n_frames).
std::vector<std::int64_t> sample_frame_indices(std::int64_t n_frames, std::int64_t stride);

/// Column means of a T x D matrix; T = 0 is rejected.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> mean_pool_time(
    const Eigen::MatrixBase<Derived>& seq) {
  if (seq.rows() == 0) throw std::invalid_argument("mean_pool_time: sequence has no time steps");
  return seq.colwise().mean();
}

inline Eigen::RowVectorXd mean_pool_time(const EmbeddingSequence& seq) {
  return mean_pool_time(seq.data);
}

// Embedding files: "EMB1", u32 version = 1, u32 T, u32 D, then T*D little-endian
// float32 values in row-major order.
void write_embedding(const std::filesystem::path& path, const Eigen::MatrixXf& data);
Shape read_embedding_shape(const std::filesystem::path& path);
/// Throws FormatError on bad magic, shape mismatch, truncation, or non-finite values.
Eigen::MatrixXf read_embedding(const std::filesystem::path& path,
                               std::optional<Shape> expected = std::nullopt);
EmbeddingSequence read_embedding(const std::filesystem::path& path, Shape expected,
                                 Modality modality);

/// Parses and validates eagerly; every problem is a FormatError naming the record.
DatasetManifest load_manifest(const std::filesystem::path& path);
/// Writes embedding paths relative to the directory of `path`.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
/// Record-level invariants (labels in range, split/label consistency, unique ids).
void validate_manifest(const DatasetManifest& manifest);

/// Loads every record's embeddings. With `average_inputs` each sequence is
/// mean-pooled to a single row.
std::vector<SampleRecord> load_samples(const DatasetManifest& manifest, bool average_inputs);

struct SyntheticSpec {
  int n_train = 0;
  int n_unlabeled = 0;
  int n_test = 0;
  int n_emotion = 7;
  int n_intent = 9;
  int dim = 32;
  double separation = 8.0;
  std::uint64_t seed = 1;
  int max_length = 6;
};

/// Ground-truth labels of every generated record, including unlabeled ones.
struct SyntheticTruth {
  std::string id;
  int emotion = 0;
  int intent = 0;
};

struct SyntheticDataset {
  DatasetManifest manifest;
  std::vector<SyntheticTruth> truth;
};

/// Gaussian-cluster dataset. Emotion signal lives in the first half of each
/// modality's dimensions and intent signal in the second half; cluster means
/// depend only on (class, modality, seed). Writes `manifest.jsonl`,
/// `truth.jsonl` and `emb/*.emb` under `out_dir`.
SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec,
                                            const std::filesystem::path& out_dir);

std::vector<SyntheticTruth> load_truth(const std::filesystem::path& path);

}  // namespace emotint
