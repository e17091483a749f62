#include <json.hpp>

#include <fstream>
#include <random>

#include "emotint/dataio.hpp"
#include "emotint/errors.hpp"

namespace emotint {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Task : std::uint64_t { emotion = 1, intent = 2 };

// Unit-norm direction for one (task, class, modality) triple.
Eigen::VectorXd cluster_direction(std::uint64_t seed, Task task, int cls, Modality m, int width) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(task), static_cast<std::uint32_t>(cls),
                    static_cast<std::uint32_t>(m), 0x5EEDu};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(width);
  for (int i = 0; i < width; ++i) v(i) = normal(rng);
  const double n = v.norm();
  return n > 0 ? Eigen::VectorXd(v / n) : v;
}

}  // namespace

SyntheticDataset generate_synthetic_dataset(const SyntheticSpec& spec, const fs::path& out_dir) {
  if (spec.n_train < 0 || spec.n_unlabeled < 0 || spec.n_test < 0) {
    throw std::invalid_argument("generate_synthetic_dataset: counts must be >= 0");
  }
  if (spec.n_emotion < 2 || spec.n_intent < 2) {
    throw std::invalid_argument("generate_synthetic_dataset: class counts must be >= 2");
  }
  if (spec.dim < 2) throw std::invalid_argument("generate_synthetic_dataset: dim must be >= 2");
  if (spec.max_length < 1) throw std::invalid_argument("generate_synthetic_dataset: max_length must be >= 1");

  const int emo_width = spec.dim / 2;
  const int int_width = spec.dim - emo_width;

  // means[m][class] for each task, scaled by the separation.
  std::array<std::vector<Eigen::VectorXd>, 3> emo_means;
  std::array<std::vector<Eigen::VectorXd>, 3> int_means;
  for (Modality m : kModalities) {
    auto k = static_cast<std::size_t>(m);
    for (int c = 0; c < spec.n_emotion; ++c) {
      emo_means[k].push_back(spec.separation * cluster_direction(spec.seed, Task::emotion, c, m, emo_width));
    }
    for (int c = 0; c < spec.n_intent; ++c) {
      int_means[k].push_back(spec.separation * cluster_direction(spec.seed, Task::intent, c, m, int_width));
    }
  }

  std::seed_seq sample_seq{static_cast<std::uint32_t>(spec.seed),
                           static_cast<std::uint32_t>(spec.seed >> 32), 0xDA7Au};
  std::mt19937_64 rng(sample_seq);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> length(1, spec.max_length);

  SyntheticDataset out;
  out.manifest.n_emotion = spec.n_emotion;
  out.manifest.n_intent = spec.n_intent;
  fs::create_directories(out_dir / "emb");

  const int cells = spec.n_emotion * spec.n_intent;
  auto emit = [&](Split split, int count, const char* prefix) {
    for (int n = 0; n < count; ++n) {
      const int cell = n % cells;
      const int emotion = cell % spec.n_emotion;
      const int intent = cell / spec.n_emotion;
      RecordDescriptor r;
      r.id = std::string(prefix) + std::to_string(n);
      r.split = split;
      if (split != Split::unlabeled) {
        r.emotion_label = emotion;
        r.intent_label = intent;
      }
      for (Modality m : kModalities) {
        const auto k = static_cast<std::size_t>(m);
        const int steps = length(rng);
        Eigen::MatrixXf data(steps, spec.dim);
        for (int t = 0; t < steps; ++t) {
          for (int d = 0; d < spec.dim; ++d) {
            const double mean = d < emo_width ? emo_means[k][static_cast<std::size_t>(emotion)](d)
                                              : int_means[k][static_cast<std::size_t>(intent)](d - emo_width);
            data(t, d) = static_cast<float>(mean + normal(rng));
          }
        }
        r.paths[k] = out_dir / "emb" / (r.id + "_" + std::string(to_string(m)) + ".emb");
        r.shapes[k] = Shape{static_cast<std::uint32_t>(steps), static_cast<std::uint32_t>(spec.dim)};
        write_embedding(r.paths[k], data);
      }
      out.truth.push_back({r.id, emotion, intent});
      out.manifest.records.push_back(std::move(r));
    }
  };
  emit(Split::train, spec.n_train, "tr");
  emit(Split::unlabeled, spec.n_unlabeled, "u");
  emit(Split::test, spec.n_test, "te");

  save_manifest(out.manifest, out_dir / "manifest.jsonl");
  std::ofstream truth(out_dir / "truth.jsonl", std::ios::trunc);
  for (const auto& t : out.truth) {
    truth << json{{"id", t.id}, {"emotion_label", t.emotion}, {"intent_label", t.intent}}.dump() << '\n';
  }
  return out;
}

std::vector<SyntheticTruth> load_truth(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open truth file: " + path.string());
  std::vector<SyntheticTruth> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      out.push_back({j.at("id").get<std::string>(), j.at("emotion_label").get<int>(),
                     j.at("intent_label").get<int>()});
    } catch (const json::exception& e) {
      throw FormatError(std::string("truth file: ") + e.what());
    }
  }
  return out;
}

}  // namespace emotint
