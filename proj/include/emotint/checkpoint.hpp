// Model checkpoints: a directory holding params.bin (named float64 arrays)
// and meta.json (dims, stage tag, config snapshot).
#pragma once

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>

#include "emotint/model.hpp"

namespace emotint {

enum class Stage { stage1, stage2 };
std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);

/// Stage or structure mismatch while loading a checkpoint.
class CheckpointError : public DimensionError {
 public:
  using DimensionError::DimensionError;
};

struct Checkpoint {
  JointModel<double> model;
  Stage stage = Stage::stage1;
  nlohmann::json config;  // snapshot of the run that produced the weights
};

nlohmann::json to_json(const ModelDims& d);
ModelDims dims_from_json(const nlohmann::json& j);

// params.bin record: u32 name length, UTF-8 name, u32 rank, rank x u64 dims,
// then prod(dims) little-endian float64 values in row-major order.
void write_param_arrays(const std::filesystem::path& path, const std::map<std::string, Eigen::MatrixXd>& arrays);
std::map<std::string, Eigen::MatrixXd> read_param_arrays(const std::filesystem::path& path);

void save_checkpoint(const std::filesystem::path& dir, const JointModel<double>& model, Stage stage,
                     const nlohmann::json& config);

/// Rebuilds the model from meta.json dims and fills every parameter by name.
/// Missing, extra, or misshapen arrays throw CheckpointError.
Checkpoint load_checkpoint(const std::filesystem::path& dir);

/// Throws DimensionError naming the first differing field.
void require_dims(const ModelDims& checkpoint, const ModelDims& expected);

}  // namespace emotint
