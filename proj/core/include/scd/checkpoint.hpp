// SPDX-License-Identifier: Apache-2.0
//
// Binary layout (all integers and floats little-endian):
//   8 bytes   magic "SCDCKPT\0"
//   u32       format version
//   u64       manifest length in bytes
//   manifest  UTF-8 JSON: version, phase, step, model config, optimiser
//             hyper-parameters and step, rng state, target statistics,
//             loss EMA, and the tensor table [{name, rows, cols}]
//   f64[]     tensor payloads in table order
// Tensor names: "param/<parameter>", "adam_m/<parameter>", "adam_v/<parameter>".

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "scd/backbone.hpp"
#include "scd/objectives.hpp"
#include "scd/optim.hpp"

namespace scd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointTruncatedError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class UnknownParameterError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class ConfigMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct CheckpointData {
  std::string phase = "init";
  std::uint64_t step = 0;
  ModelConfig model_config;
  AdamWConfig adamw;  // lr is informational
  std::uint64_t optimizer_step = 0;
  std::string rng_state;
  std::optional<TargetStats> target_stats;
  LossEma loss_ema;
  std::vector<StoredTensor> tensors;
};

void save_checkpoint(const std::filesystem::path &path, const CheckpointData &ckpt);
CheckpointData load_checkpoint(const std::filesystem::path &path);

// Snapshot helpers.
std::vector<StoredTensor> capture_parameters(const ParameterStore &params);
void capture_optimizer(const ParameterStore &params, const OptimizerState &opt,
                       std::vector<StoredTensor> &out);

// Copies "param/" tensors into `model`. Unknown names and shape mismatches
// are errors; when `skip` returns true for a name it is left untouched.
void restore_parameters(Model &model, const CheckpointData &ckpt,
                        const std::function<bool(std::string_view)> &skip = {});
OptimizerState restore_optimizer(const ParameterStore &params,
                                 const CheckpointData &ckpt);

// Throws ConfigMismatchError naming the first differing field.
void require_same_model_config(const ModelConfig &expected,
                               const ModelConfig &found);

}  // namespace scd
