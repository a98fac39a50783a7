// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scd/backbone.hpp"
#include "scd/checkpoint.hpp"
#include "scd/objectives.hpp"
#include "scd/optim.hpp"
#include "scd/random.hpp"

namespace scd {

enum class Phase { kPretrain, kFinetune };
std::string phase_name(Phase p);

struct TrainConfig {
  std::uint64_t total_steps = 100000;
  std::uint64_t warmup_steps = 10000;
  double base_lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
  std::size_t batch_size = 32;
  std::size_t grad_accum = 1;  // micro-batches per optimiser step
  std::uint64_t seed = 0;
  Phase phase = Phase::kPretrain;
  ObjectiveConfig objective;
  double drop_path_init = 0.1;
  double drop_path_final = 0.1;
  std::uint64_t checkpoint_interval = 0;  // 0: final checkpoint only
  std::uint64_t log_interval = 1;
  // Periodic inputs only: probability of each successive cell repeat.
  double cell_repeat_p = 0.0;
  int cell_repeat_max = 0;

  void validate() const;  // throws std::invalid_argument
};

struct MetricsRecord {
  std::uint64_t step = 0;
  std::string phase;
  double lr = 0.0;
  double loss = 0.0;
  std::vector<std::pair<std::string, double>> components;
  double wall_ms = 0.0;

  std::string to_json() const;  // one line, no trailing newline
};

// Drop-path rate at a 0-based step, linear from init to final.
double drop_path_at(const TrainConfig &cfg, std::uint64_t step);

// Dataset indices of micro-batch `b` (0-based, counted across steps). The
// permutation of each epoch depends only on (seed, epoch).
std::vector<std::size_t> batch_indices(std::size_t dataset_size,
                                       std::size_t batch_size,
                                       std::uint64_t seed, std::uint64_t b);

class Trainer {
 public:
  // Fresh run. For the finetune objective, target statistics are fitted on
  // `data` unless `stats` is given.
  Trainer(Model model, std::vector<AtomicStructure> data, TrainConfig cfg,
          std::optional<TargetStats> stats = std::nullopt);

  // Continue a run from one of its checkpoints. The model config must match
  // `expected` and the checkpoint's phase must match cfg.phase.
  static Trainer resume(const CheckpointData &ckpt, const ModelConfig &expected,
                        std::vector<AtomicStructure> data, TrainConfig cfg);

  // Runs until `stop_at` steps have completed (default: total_steps).
  void run(std::optional<std::uint64_t> stop_at = std::nullopt);
  void step();

  CheckpointData checkpoint() const;

  // Where periodic and final checkpoints plus metrics.jsonl go; unset means
  // nothing is written.
  void set_output_dir(std::filesystem::path dir);
  void set_metrics_sink(std::function<void(const MetricsRecord &)> sink);

  const Model &model() const { return model_; }
  Model &model() { return model_; }
  const OptimizerState &optimizer() const { return opt_; }
  const ObjectiveState &objective_state() const { return obj_; }
  std::uint64_t completed_steps() const { return step_; }
  bool done() const { return step_ >= cfg_.total_steps; }
  const TrainConfig &config() const { return cfg_; }

 private:
  bool frozen(std::string_view name) const;
  void emit(const MetricsRecord &r);
  void write_checkpoint(const std::string &file) const;

  Model model_;
  std::vector<AtomicStructure> data_;
  TrainConfig cfg_;
  OptimizerState opt_;
  ObjectiveState obj_;
  Rng rng_;
  std::uint64_t step_ = 0;
  std::optional<std::filesystem::path> out_dir_;
  std::function<void(const MetricsRecord &)> sink_;
};

// Builds a model from a pretraining checkpoint for finetuning. Backbone
// tensors are copied bitwise; with reset_head the scalar head is
// re-initialised from `seed` instead of loaded.
Model model_from_checkpoint(const CheckpointData &ckpt, bool reset_head,
                            std::uint64_t seed);

}  // namespace scd
