// SPDX-License-Identifier: Apache-2.0

#include "scd/trainer.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "scd/corruption.hpp"

namespace scd {

namespace {

void require(bool ok, const std::string &msg) {
  if (!ok) throw std::invalid_argument(msg);
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::string phase_name(Phase p) {
  return p == Phase::kPretrain ? "pretrain" : "finetune";
}

void TrainConfig::validate() const {
  require(warmup_steps <= total_steps, "train.warmup_steps must not exceed train.total_steps");
  require(total_steps == 0 || warmup_steps < total_steps,
          "train.total_steps must exceed train.warmup_steps");
  require(base_lr > 0.0, "train.base_lr must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0, "train.beta1 must be in [0, 1)");
  require(beta2 >= 0.0 && beta2 < 1.0, "train.beta2 must be in [0, 1)");
  require(eps >= 0.0, "train.eps must be non-negative");
  require(weight_decay >= 0.0, "train.weight_decay must be non-negative");
  require(batch_size >= 1, "train.batch_size must be at least 1");
  require(grad_accum >= 1, "train.grad_accum must be at least 1");
  require(drop_path_init >= 0.0 && drop_path_init < 1.0,
          "train.drop_path_init must be in [0, 1)");
  require(drop_path_final >= 0.0 && drop_path_final < 1.0,
          "train.drop_path_final must be in [0, 1)");
  require(log_interval >= 1, "train.log_interval must be at least 1");
  require(cell_repeat_p >= 0.0 && cell_repeat_p <= 1.0,
          "train.cell_repeat_p must be in [0, 1]");
  require(cell_repeat_max >= 0, "train.cell_repeat_max must be non-negative");
  objective.validate();
}

std::string MetricsRecord::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["phase"] = phase;
  j["lr"] = lr;
  j["loss"] = loss;
  nlohmann::ordered_json parts = nlohmann::ordered_json::object();
  for (const auto &[k, v] : components) parts[k] = v;
  j["loss_components"] = parts;
  j["wall_ms"] = wall_ms;
  return j.dump();
}

double drop_path_at(const TrainConfig &cfg, std::uint64_t step) {
  if (cfg.total_steps == 0) return cfg.drop_path_init;
  const double t = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
  return cfg.drop_path_init + (cfg.drop_path_final - cfg.drop_path_init) * t;
}

std::vector<std::size_t> batch_indices(std::size_t dataset_size,
                                       std::size_t batch_size,
                                       std::uint64_t seed, std::uint64_t b) {
  require(dataset_size > 0 && batch_size > 0, "batch_indices: empty dataset or batch");
  const std::uint64_t per_epoch = (dataset_size + batch_size - 1) / batch_size;
  const std::uint64_t epoch = b / per_epoch;
  const std::size_t start = static_cast<std::size_t>(b % per_epoch) * batch_size;
  Rng rng(mix(seed ^ mix(epoch)));
  const auto perm = rng.permutation(dataset_size);
  const std::size_t end = std::min(dataset_size, start + batch_size);
  return {perm.begin() + static_cast<std::ptrdiff_t>(start),
          perm.begin() + static_cast<std::ptrdiff_t>(end)};
}

Trainer::Trainer(Model model, std::vector<AtomicStructure> data, TrainConfig cfg,
                 std::optional<TargetStats> stats)
  : model_(model.clone()), data_(std::move(data)), cfg_(std::move(cfg)),
    rng_(cfg_.seed) {
  cfg_.validate();
  require(!data_.empty(), "training dataset is empty");
  const auto kind = cfg_.objective.kind;
  require(model_.config.condition_enabled ||
            (kind != ObjectiveKind::kScd && kind != ObjectiveKind::kPairConditional),
          "objective.kind needs model.condition_enabled = true");
  if (kind == ObjectiveKind::kFinetune) {
    obj_.stats = stats ? *stats : TargetStats::fit(data_, cfg_.objective);
  }
  obj_.ema.coefficient = cfg_.objective.loss_ema;
}

Trainer Trainer::resume(const CheckpointData &ckpt, const ModelConfig &expected,
                        std::vector<AtomicStructure> data, TrainConfig cfg) {
  require_same_model_config(expected, ckpt.model_config);
  if (ckpt.phase != phase_name(cfg.phase)) {
    throw ConfigMismatchError("checkpoint phase " + ckpt.phase +
                              " does not match run phase " + phase_name(cfg.phase));
  }
  if (ckpt.step > cfg.total_steps) {
    throw ConfigMismatchError("checkpoint step exceeds train.total_steps");
  }
  Model model(ckpt.model_config);
  restore_parameters(model, ckpt);
  Trainer t(std::move(model), std::move(data), std::move(cfg), ckpt.target_stats);
  t.opt_ = restore_optimizer(t.model_.params, ckpt);
  t.rng_.set_state(ckpt.rng_state);
  t.obj_.ema = ckpt.loss_ema;
  t.step_ = ckpt.step;
  return t;
}

bool Trainer::frozen(std::string_view name) const {
  return cfg_.phase == Phase::kPretrain && is_embedding_parameter(name);
}

void Trainer::step() {
  if (done()) return;
  const auto t0 = std::chrono::steady_clock::now();
  const double lr =
    lr_schedule(step_ + 1, cfg_.warmup_steps, cfg_.total_steps, cfg_.base_lr);
  ForwardOptions fo;
  fo.training = true;
  fo.drop_path_rate = drop_path_at(cfg_, step_);
  fo.rng = &rng_;

  model_.params.zero_grad();
  double loss = 0.0;
  std::vector<std::pair<std::string, double>> parts;
  const double inv = 1.0 / static_cast<double>(cfg_.grad_accum);
  for (std::size_t micro = 0; micro < cfg_.grad_accum; ++micro) {
    const auto idx = batch_indices(data_.size(), cfg_.batch_size, cfg_.seed,
                                   step_ * cfg_.grad_accum + micro);
    std::vector<AtomicStructure> batch;
    batch.reserve(idx.size());
    for (std::size_t i : idx) {
      const auto &s = data_[i];
      if (cfg_.cell_repeat_p > 0.0 && cfg_.cell_repeat_max > 0 && s.periodic()) {
        batch.push_back(cell_repeat_augment(s, cfg_.cell_repeat_p,
                                            cfg_.cell_repeat_max, rng_));
      } else {
        batch.push_back(s);
      }
    }
    const LossResult r = compute_objective(model_, batch, cfg_.objective, obj_, rng_, fo);
    backward(cfg_.grad_accum == 1 ? r.total : scale(r.total, inv));
    loss += r.total.item() * inv;
    for (const auto &[name, value] : r.components) {
      auto it = std::find_if(parts.begin(), parts.end(),
                             [&](const auto &p) { return p.first == name; });
      if (it == parts.end()) {
        parts.emplace_back(name, value * inv);
      } else {
        it->second += value * inv;
      }
    }
  }

  AdamWConfig acfg{lr, cfg_.beta1, cfg_.beta2, cfg_.eps, cfg_.weight_decay};
  adamw_step(model_.params, opt_, acfg,
             [this](std::string_view name) { return frozen(name); });
  model_.params.zero_grad();
  if (obj_.ema.enabled()) {
    for (const auto &[name, value] : parts) {
      if (name == "primary") obj_.ema.update(value);
    }
  }
  ++step_;

  if (step_ % cfg_.log_interval == 0 || done()) {
    MetricsRecord rec;
    rec.step = step_;
    rec.phase = phase_name(cfg_.phase);
    rec.lr = lr;
    rec.loss = loss;
    rec.components = std::move(parts);
    rec.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
    emit(rec);
  }
  if (out_dir_ && cfg_.checkpoint_interval > 0 &&
      step_ % cfg_.checkpoint_interval == 0) {
    write_checkpoint("step_" + std::to_string(step_) + ".ckpt");
  }
}

void Trainer::run(std::optional<std::uint64_t> stop_at) {
  const std::uint64_t until = std::min(stop_at.value_or(cfg_.total_steps),
                                       cfg_.total_steps);
  while (step_ < until) step();
  if (done() && out_dir_) write_checkpoint("final.ckpt");
}

CheckpointData Trainer::checkpoint() const {
  CheckpointData c;
  c.phase = phase_name(cfg_.phase);
  c.step = step_;
  c.model_config = model_.config;
  c.adamw = {cfg_.base_lr, cfg_.beta1, cfg_.beta2, cfg_.eps, cfg_.weight_decay};
  c.optimizer_step = opt_.step;
  c.rng_state = rng_.state();
  if (cfg_.objective.kind == ObjectiveKind::kFinetune) c.target_stats = obj_.stats;
  c.loss_ema = obj_.ema;
  c.tensors = capture_parameters(model_.params);
  capture_optimizer(model_.params, opt_, c.tensors);
  return c;
}

void Trainer::set_output_dir(std::filesystem::path dir) {
  std::filesystem::create_directories(dir);
  out_dir_ = std::move(dir);
  if (step_ == 0) {
    std::ofstream(*out_dir_ / "metrics.jsonl", std::ios::trunc);
  }
}

void Trainer::set_metrics_sink(std::function<void(const MetricsRecord &)> sink) {
  sink_ = std::move(sink);
}

void Trainer::emit(const MetricsRecord &r) {
  if (sink_) sink_(r);
  if (out_dir_) {
    std::ofstream f(*out_dir_ / "metrics.jsonl", std::ios::app);
    f << r.to_json() << '\n';
  }
}

void Trainer::write_checkpoint(const std::string &file) const {
  save_checkpoint(*out_dir_ / file, checkpoint());
}

Model model_from_checkpoint(const CheckpointData &ckpt, bool reset_head,
                            std::uint64_t seed) {
  Model model(ckpt.model_config);
  restore_parameters(model, ckpt, [&](std::string_view name) {
    return reset_head && is_scalar_head_parameter(name);
  });
  if (reset_head) {
    Rng rng(seed);
    reset_scalar_head(model, rng);
  }
  return model;
}

}  // namespace scd
