// SPDX-License-Identifier: Apache-2.0

#include "scd/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace scd {

namespace {

Tensor column(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor::from_data({n, 1}, std::move(values));
}

std::vector<AtomicStructure> corrupted_views(std::span<const CorruptionSample> batch) {
  std::vector<AtomicStructure> out;
  out.reserve(batch.size());
  for (const auto &s : batch) out.push_back(s.corrupted);
  return out;
}

Tensor noise_tensor(std::span<const CorruptionSample> batch) {
  std::vector<std::vector<Vec3>> rows;
  rows.reserve(batch.size());
  for (const auto &s : batch) rows.push_back(s.noise);
  return stack_vectors(rows);
}

void require_nonempty(std::size_t n, const char *what) {
  if (n == 0) throw std::invalid_argument(std::string(what) + ": empty batch");
}

}  // namespace

void ObjectiveConfig::validate() const {
  if (!(sigma_corr >= 0.0) || !(sigma_reg >= 0.0)) {
    throw std::invalid_argument("noise scales must be non-negative");
  }
  if (!(condition_dropout_rate >= 0.0 && condition_dropout_rate <= 1.0)) {
    throw std::invalid_argument("condition_dropout_rate must lie in [0, 1]");
  }
  if (!(energy_weight >= 0.0) || !(force_weight >= 0.0) ||
      !(denoise_weight >= 0.0)) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
  if (!(loss_ema >= 0.0 && loss_ema <= 1.0)) {
    throw std::invalid_argument("loss_ema must lie in [0, 1]");
  }
  if (target_key != "energy" && target_key != "property") {
    throw std::invalid_argument("target_key must be 'energy' or 'property'");
  }
}

Tensor stack_vectors(std::span<const std::vector<Vec3>> rows) {
  std::vector<double> data;
  std::size_t n = 0;
  for (const auto &r : rows) {
    for (const Vec3 &v : r) data.insert(data.end(), v.begin(), v.end());
    n += r.size();
  }
  return Tensor::from_data({n, 3}, std::move(data));
}

Tensor vector_mse(const Tensor &prediction, const Tensor &target,
                  std::span<const std::size_t> atom_structure,
                  std::span<const std::size_t> atom_count) {
  const std::size_t b = atom_count.size();
  const Tensor per_atom = sum(square(sub(prediction, target)), 1);
  const Tensor per_sample = scatter_sum(per_atom, atom_structure, b);
  std::vector<double> inv(b);
  for (std::size_t s = 0; s < b; ++s) {
    inv[s] = 1.0 / (3.0 * static_cast<double>(atom_count[s]));
  }
  return mean(mul(per_sample, column(std::move(inv))));
}

std::vector<std::uint8_t> sample_condition_mask(std::size_t n, double rate,
                                                Rng &rng) {
  std::vector<std::uint8_t> keep(n);
  for (auto &k : keep) k = rng.bernoulli(rate) ? 0 : 1;
  return keep;
}

LossResult coord_loss(const Model &model,
                      std::span<const CorruptionSample> batch,
                      const ForwardOptions &options) {
  require_nonempty(batch.size(), "coord_loss");
  const auto views = corrupted_views(batch);
  const GraphBatch g = GraphBatch::build(views, model.config.cutoff);
  const ModelOutput out = forward(model, g, nullptr, options);
  LossResult r;
  r.total = vector_mse(out.v, noise_tensor(batch), g.atom_structure, g.atom_count);
  r.components = {{"denoise", r.total.item()}};
  return r;
}

LossResult scd_loss(const Model &model, std::span<const CorruptionSample> batch,
                    const ObjectiveConfig &cfg, Rng &rng,
                    const ForwardOptions &options) {
  require_nonempty(batch.size(), "scd_loss");
  if (!model.config.condition_enabled) {
    throw std::invalid_argument("scd objective needs a condition-enabled model");
  }
  std::vector<AtomicStructure> clean;
  clean.reserve(batch.size());
  for (const auto &s : batch) clean.push_back(s.clean);
  const GraphBatch g_clean = GraphBatch::build(clean, model.config.cutoff);
  const ModelOutput first = forward(model, g_clean, nullptr, options);

  Condition cond;
  cond.c = cfg.detach_condition ? first.c_out.detach() : first.c_out;
  cond.present = sample_condition_mask(batch.size(), cfg.condition_dropout_rate, rng);

  const auto views = corrupted_views(batch);
  const GraphBatch g = GraphBatch::build(views, model.config.cutoff);
  const ModelOutput second = forward(model, g, &cond, options);
  LossResult r;
  r.total = vector_mse(second.v, noise_tensor(batch), g.atom_structure, g.atom_count);
  std::size_t kept = 0;
  for (auto k : cond.present) kept += k;
  r.components = {{"denoise", r.total.item()},
                  {"condition_kept", static_cast<double>(kept) /
                                       static_cast<double>(batch.size())}};
  return r;
}

LossResult pair_conditional_loss(const Model &model,
                                 std::span<const AtomicStructure> batch,
                                 const ObjectiveConfig &cfg, Rng &rng,
                                 const ForwardOptions &options) {
  require_nonempty(batch.size(), "pair_conditional_loss");
  if (!model.config.condition_enabled) {
    throw std::invalid_argument(
      "pair_conditional objective needs a condition-enabled model");
  }
  const bool a_conditions = cfg.direction == PairDirection::kEmbedADenoiseB;
  const ComponentTag cond_tag = a_conditions ? ComponentTag::kA : ComponentTag::kB;
  const ComponentTag denoise_tag = a_conditions ? ComponentTag::kB : ComponentTag::kA;

  std::vector<AtomicStructure> cond_views, noisy_views;
  std::vector<std::vector<Vec3>> noise;
  for (const AtomicStructure &s : batch) {
    if (!s.components) {
      throw std::invalid_argument("pair_conditional: structure has no A/B tags");
    }
    const auto cond_part = extract_component(s, cond_tag);
    const auto denoise_part = extract_component(s, denoise_tag);
    cond_views.push_back(corrupt(cond_part.structure, 0.0, cfg.sigma_reg, rng).clean);
    auto sample = corrupt(denoise_part.structure, cfg.sigma_corr, 0.0, rng);
    noisy_views.push_back(std::move(sample.corrupted));
    noise.push_back(std::move(sample.noise));
  }
  const ModelOutput first =
    forward(model, GraphBatch::build(cond_views, model.config.cutoff), nullptr,
            options);
  Condition cond;
  cond.c = cfg.detach_condition ? first.c_out.detach() : first.c_out;
  cond.present = sample_condition_mask(batch.size(), cfg.condition_dropout_rate, rng);

  const GraphBatch g = GraphBatch::build(noisy_views, model.config.cutoff);
  const ModelOutput second = forward(model, g, &cond, options);
  LossResult r;
  r.total = vector_mse(second.v, stack_vectors(noise), g.atom_structure, g.atom_count);
  r.components = {{"denoise", r.total.item()}};
  return r;
}

ForcePrediction predict_energy_forces(const Model &model,
                                      std::span<const AtomicStructure> batch,
                                      ForceMode mode, bool create_graph,
                                      const ForwardOptions &options) {
  const bool backward_mode = mode == ForceMode::kBackward;
  const GraphBatch g =
    GraphBatch::build(batch, model.config.cutoff, backward_mode);
  const ModelOutput out = forward(model, g, nullptr, options);
  ForcePrediction p;
  p.energy = out.y;
  if (!backward_mode) {
    p.forces = out.v;
  } else {
    const std::vector<Tensor> inputs{g.positions};
    p.forces = scale(grad(sum(out.y), inputs, create_graph)[0], -1.0);
  }
  return p;
}

LossResult force_energy_loss(const Model &model,
                             std::span<const AtomicStructure> batch,
                             const ObjectiveConfig &cfg,
                             const ForwardOptions &options) {
  require_nonempty(batch.size(), "force_energy_loss");
  std::vector<double> energies;
  std::vector<std::vector<Vec3>> forces;
  std::vector<std::size_t> atom_structure, atom_count;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    const auto &st = batch[s];
    if (!st.labels.energy || !st.labels.forces) {
      throw std::invalid_argument(
        "force_energy: structure " + std::to_string(s) +
        " is missing energy or force labels");
    }
    energies.push_back(*st.labels.energy);
    forces.push_back(*st.labels.forces);
    atom_count.push_back(st.size());
    atom_structure.insert(atom_structure.end(), st.size(), s);
  }
  const ForcePrediction p =
    predict_energy_forces(model, batch, cfg.force_mode, true, options);
  const Tensor e_term = mean(square(sub(p.energy, column(std::move(energies)))));
  const Tensor f_term =
    vector_mse(p.forces, stack_vectors(forces), atom_structure, atom_count);
  LossResult r;
  r.total = add(scale(e_term, cfg.energy_weight), scale(f_term, cfg.force_weight));
  r.components = {{"energy", e_term.item()}, {"force", f_term.item()}};
  return r;
}

// ---- finetuning ---------------------------------------------------------

bool has_target(const AtomicStructure &s, const std::string &key) {
  if (key == "energy") return s.labels.energy.has_value();
  if (key == "property") return s.labels.property.has_value();
  return false;
}

double target_value(const AtomicStructure &s, const std::string &key) {
  if (!has_target(s, key)) {
    throw std::invalid_argument("target '" + key + "' absent from structure");
  }
  return key == "energy" ? *s.labels.energy : *s.labels.property;
}

double TargetStats::raw_target(const AtomicStructure &s) const {
  double t = target_value(s, key);
  if (subtract_reference) {
    for (int z : s.species) {
      const auto it = reference_energies.find(z);
      if (it == reference_energies.end()) {
        throw std::invalid_argument("no reference energy for species " +
                                    std::to_string(z));
      }
      t -= it->second;
    }
  }
  return t;
}

double TargetStats::standardize(const AtomicStructure &s) const {
  return (raw_target(s) - mean) / stddev;
}

double TargetStats::destandardize(double y, const AtomicStructure &s) const {
  double t = y * stddev + mean;
  if (subtract_reference) {
    for (int z : s.species) t += reference_energies.at(z);
  }
  return t;
}

TargetStats TargetStats::fit(std::span<const AtomicStructure> train,
                             const ObjectiveConfig &cfg) {
  if (train.empty()) throw std::invalid_argument("empty training split");
  TargetStats st;
  st.key = cfg.target_key;
  st.subtract_reference = cfg.subtract_reference_energy;
  st.reference_energies = cfg.reference_energies;
  std::vector<double> t;
  t.reserve(train.size());
  for (const auto &s : train) t.push_back(st.raw_target(s));
  double m = 0.0;
  for (double x : t) m += x;
  m /= static_cast<double>(t.size());
  double v = 0.0;
  for (double x : t) v += (x - m) * (x - m);
  v /= static_cast<double>(t.size());
  st.mean = m;
  st.stddev = v > 0.0 ? std::sqrt(v) : 1.0;
  return st;
}

double LossEma::denominator(double current) const {
  return std::max(value.value_or(current), 1e-8);
}

void LossEma::update(double current) {
  value = value ? (1.0 - coefficient) * *value + coefficient * current : current;
}

LossResult finetune_loss(const Model &model,
                         std::span<const AtomicStructure> batch,
                         const ObjectiveConfig &cfg, const TargetStats &stats,
                         const LossEma &ema, Rng &rng,
                         const ForwardOptions &options) {
  require_nonempty(batch.size(), "finetune_loss");
  std::vector<double> targets;
  std::vector<AtomicStructure> views;
  std::vector<std::vector<Vec3>> noise;
  for (const auto &s : batch) {
    targets.push_back(stats.standardize(s));
    auto sample = corrupt(s, cfg.sigma_reg, 0.0, rng);
    views.push_back(std::move(sample.corrupted));
    noise.push_back(std::move(sample.noise));
  }
  const GraphBatch g = GraphBatch::build(views, model.config.cutoff);
  const ModelOutput out = forward(model, g, nullptr, options);
  const Tensor primary = mean(square(sub(out.y, column(std::move(targets)))));
  const double primary_value = primary.item();
  Tensor total = primary;
  if (ema.enabled()) total = scale(primary, 1.0 / ema.denominator(primary_value));
  LossResult r;
  r.components = {{"primary", primary_value}};
  if (cfg.denoise_weight > 0.0) {
    const Tensor aux =
      vector_mse(out.v, stack_vectors(noise), g.atom_structure, g.atom_count);
    total = add(total, scale(aux, cfg.denoise_weight));
    r.components.emplace_back("denoise", aux.item());
  }
  r.total = total;
  return r;
}

}  // namespace scd

namespace scd {

LossResult compute_objective(const Model &model,
                             std::span<const AtomicStructure> batch,
                             const ObjectiveConfig &cfg,
                             const ObjectiveState &state, Rng &rng,
                             const ForwardOptions &options) {
  switch (cfg.kind) {
  case ObjectiveKind::kCoord:
  case ObjectiveKind::kScd: {
    std::vector<CorruptionSample> samples;
    samples.reserve(batch.size());
    for (const auto &s : batch) {
      samples.push_back(corrupt(s, cfg.sigma_corr, cfg.sigma_reg, rng, cfg.reg_noise));
    }
    return cfg.kind == ObjectiveKind::kCoord
             ? coord_loss(model, samples, options)
             : scd_loss(model, samples, cfg, rng, options);
  }
  case ObjectiveKind::kPairConditional:
    return pair_conditional_loss(model, batch, cfg, rng, options);
  case ObjectiveKind::kForceEnergy:
    return force_energy_loss(model, batch, cfg, options);
  case ObjectiveKind::kFinetune:
    return finetune_loss(model, batch, cfg, state.stats, state.ema, rng, options);
  }
  throw std::logic_error("unhandled objective kind");
}

}  // namespace scd
