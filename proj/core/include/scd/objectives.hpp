// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scd/backbone.hpp"
#include "scd/corruption.hpp"

namespace scd {

enum class ObjectiveKind { kCoord, kScd, kPairConditional, kForceEnergy, kFinetune };
enum class PairDirection { kEmbedADenoiseB, kEmbedBDenoiseA };
enum class ForceMode { kForward, kBackward };

struct ObjectiveConfig {
  ObjectiveKind kind = ObjectiveKind::kScd;
  double sigma_corr = 0.04;
  double sigma_reg = 0.005;
  double condition_dropout_rate = 0.2;
  RegNoise reg_noise = RegNoise::kCleanOnly;
  bool detach_condition = false;

  PairDirection direction = PairDirection::kEmbedADenoiseB;

  ForceMode force_mode = ForceMode::kForward;
  double energy_weight = 1.0;
  double force_weight = 1.0;

  std::string target_key = "energy";  // energy | property
  double denoise_weight = 0.0;
  bool subtract_reference_energy = false;
  std::map<int, double> reference_energies;  // eV per atom of species Z
  double loss_ema = 0.0;                     // 0 disables

  void validate() const;  // throws std::invalid_argument
};

struct LossResult {
  Tensor total;
  std::vector<std::pair<std::string, double>> components;
};

// Per-sample mean over atoms x 3, then mean over samples.
Tensor vector_mse(const Tensor &prediction, const Tensor &target,
                  std::span<const std::size_t> atom_structure,
                  std::span<const std::size_t> atom_count);

Tensor stack_vectors(std::span<const std::vector<Vec3>> rows);

// 1 = keep the condition, 0 = dropped. One draw per sample.
std::vector<std::uint8_t> sample_condition_mask(std::size_t n, double rate,
                                                Rng &rng);

LossResult coord_loss(const Model &model,
                      std::span<const CorruptionSample> batch,
                      const ForwardOptions &options = {});

LossResult scd_loss(const Model &model, std::span<const CorruptionSample> batch,
                    const ObjectiveConfig &cfg, Rng &rng,
                    const ForwardOptions &options = {});

// Embeds the conditioning component (clean, sigma_reg view), corrupts the
// other component and predicts its noise from that component alone.
LossResult pair_conditional_loss(const Model &model,
                                 std::span<const AtomicStructure> batch,
                                 const ObjectiveConfig &cfg, Rng &rng,
                                 const ForwardOptions &options = {});

// Forces from the vector head (forward) or -dE/dr of the scalar head
// (backward).
struct ForcePrediction {
  Tensor energy;  // B x 1
  Tensor forces;  // N x 3
};
ForcePrediction predict_energy_forces(const Model &model,
                                      std::span<const AtomicStructure> batch,
                                      ForceMode mode, bool create_graph,
                                      const ForwardOptions &options = {});

LossResult force_energy_loss(const Model &model,
                             std::span<const AtomicStructure> batch,
                             const ObjectiveConfig &cfg,
                             const ForwardOptions &options = {});

// Regression target statistics, fitted once on the training split.
struct TargetStats {
  std::string key = "energy";
  double mean = 0.0;
  double stddev = 1.0;
  bool subtract_reference = false;
  std::map<int, double> reference_energies;

  double raw_target(const AtomicStructure &s) const;  // label minus refs
  double standardize(const AtomicStructure &s) const;
  // Model output back to label units for structure s.
  double destandardize(double y, const AtomicStructure &s) const;

  static TargetStats fit(std::span<const AtomicStructure> train,
                         const ObjectiveConfig &cfg);
};

bool has_target(const AtomicStructure &s, const std::string &key);
double target_value(const AtomicStructure &s, const std::string &key);

struct LossEma {
  double coefficient = 0.0;
  std::optional<double> value;

  bool enabled() const { return coefficient > 0.0; }
  // Denominator for the current step; the first step uses its own value.
  double denominator(double current) const;
  void update(double current);
};

// Single pass on x + sigma_reg noise: squared error of y against the
// standardized target (divided by the loss EMA when enabled), plus
// denoise_weight times the MSE of v against that noise.
LossResult finetune_loss(const Model &model,
                         std::span<const AtomicStructure> batch,
                         const ObjectiveConfig &cfg, const TargetStats &stats,
                         const LossEma &ema, Rng &rng,
                         const ForwardOptions &options = {});

}  // namespace scd

namespace scd {

// Mutable state some objectives carry across steps.
struct ObjectiveState {
  TargetStats stats;
  LossEma ema;
};

// Dispatch on cfg.kind. Denoising objectives draw their corruption from
// `rng` first, then any condition dropout.
LossResult compute_objective(const Model &model,
                             std::span<const AtomicStructure> batch,
                             const ObjectiveConfig &cfg,
                             const ObjectiveState &state, Rng &rng,
                             const ForwardOptions &options = {});

}  // namespace scd
