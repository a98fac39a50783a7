// SPDX-License-Identifier: Apache-2.0

#include "scd/commands.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "scd/checkpoint.hpp"
#include "scd/xyz.hpp"

namespace scd {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kInferenceBatch = 16;

std::vector<AtomicStructure> load_data(const std::string &path, const std::string &key) {
  if (path.empty()) throw ConfigError(key, "a dataset path is required");
  auto data = read_xyz_file(path);
  if (data.empty()) throw ConfigError(key, "dataset " + path + " has no frames");
  return data;
}

void write_resolved(const RunConfig &cfg) {
  fs::create_directories(cfg.output_dir);
  std::ofstream(fs::path(cfg.output_dir) / "resolved_config.txt") << format_run_config(cfg);
}

RunSummary finish(Trainer &trainer, const RunConfig &cfg) {
  trainer.set_output_dir(cfg.output_dir);
  trainer.run();
  RunSummary s;
  s.output_dir = cfg.output_dir;
  s.final_checkpoint = fs::path(cfg.output_dir) / "final.ckpt";
  s.steps = trainer.completed_steps();
  return s;
}

Trainer resume_trainer(const fs::path &ckpt, const RunConfig &cfg,
                       std::vector<AtomicStructure> data) {
  return Trainer::resume(load_checkpoint(ckpt), cfg.model, std::move(data), cfg.train);
}

}  // namespace

void cmd_gen_data(Family family, std::size_t n, std::uint64_t seed, const fs::path &out) {
  const auto frames = generate(family, n, seed);
  write_xyz_file(out, frames);
}

RunSummary cmd_pretrain(const RunConfig &cfg, const std::optional<fs::path> &resume,
                        std::ostream &log) {
  cfg.validate();
  if (cfg.train.phase != Phase::kPretrain) {
    throw ConfigError("train.phase", "pretrain needs train.phase = pretrain");
  }
  auto data = load_data(cfg.train_data, "data.train");
  write_resolved(cfg);
  if (resume) {
    Trainer t = resume_trainer(*resume, cfg, std::move(data));
    log << "note: resuming from " << resume->string() << " at step "
        << t.completed_steps() << "\n";
    return finish(t, cfg);
  }
  Trainer t(Model(cfg.model), std::move(data), cfg.train);
  return finish(t, cfg);
}

RunSummary cmd_finetune(const RunConfig &cfg, const std::optional<fs::path> &from,
                        bool reset_head, const std::optional<fs::path> &resume,
                        std::ostream &log) {
  cfg.validate();
  if (cfg.train.phase != Phase::kFinetune) {
    throw ConfigError("train.phase", "finetune needs train.phase = finetune");
  }
  auto data = load_data(cfg.train_data, "data.train");
  std::vector<AtomicStructure> eval;
  if (!cfg.eval_data.empty()) eval = load_data(cfg.eval_data, "data.eval");
  reset_head = reset_head || cfg.reset_head;

  std::optional<Trainer> trainer;
  if (resume) {
    trainer.emplace(resume_trainer(*resume, cfg, std::move(data)));
    log << "note: resuming from " << resume->string() << " at step "
        << trainer->completed_steps() << "\n";
  } else if (from) {
    const CheckpointData pre = load_checkpoint(*from);
    require_same_model_config(cfg.model, pre.model_config);
    Model model = model_from_checkpoint(pre, reset_head, cfg.train.seed);
    if (reset_head) log << "note: scalar head reset before finetuning\n";
    trainer.emplace(std::move(model), std::move(data), cfg.train);
  } else if (cfg.from_scratch) {
    log << "note: finetuning from scratch (no pretrained checkpoint)\n";
    trainer.emplace(Model(cfg.model), std::move(data), cfg.train);
  } else {
    throw ConfigError("train.from_scratch",
                      "finetune needs --from CKPT unless train.from_scratch = true");
  }
  write_resolved(cfg);
  RunSummary s = finish(*trainer, cfg);
  if (!eval.empty()) {
    const TargetStats &stats = trainer->objective_state().stats;
    std::vector<double> labels;
    for (const auto &x : eval) labels.push_back(target_value(x, stats.key));
    s.eval = regression_metrics(predict_targets(trainer->model(), stats, eval), labels);
    std::ofstream(fs::path(cfg.output_dir) / "eval_metrics.json") << s.eval->to_json() << "\n";
  }
  return s;
}

std::vector<double> predict_targets(const Model &model, const TargetStats &stats,
                                    std::span<const AtomicStructure> data) {
  NoGradGuard guard;
  std::vector<double> out;
  out.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += kInferenceBatch) {
    const auto chunk = data.subspan(start, std::min(kInferenceBatch, data.size() - start));
    const ModelOutput o = forward(model, GraphBatch::build(chunk, model.config.cutoff));
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      out.push_back(stats.destandardize(o.y.at(i, 0), chunk[i]));
    }
  }
  return out;
}

RegressionMetrics cmd_evaluate(const fs::path &ckpt_path, const fs::path &data_path,
                               const std::string &target) {
  if (target != "energy" && target != "property") {
    throw std::invalid_argument("target must be 'energy' or 'property'");
  }
  const CheckpointData ckpt = load_checkpoint(ckpt_path);
  Model model(ckpt.model_config);
  restore_parameters(model, ckpt);
  TargetStats stats;
  stats.key = target;
  if (ckpt.target_stats) {
    if (ckpt.target_stats->key != target) {
      throw std::invalid_argument("checkpoint was finetuned on '" + ckpt.target_stats->key +
                                  "', not '" + target + "'");
    }
    stats = *ckpt.target_stats;
  }
  const auto data = read_xyz_file(data_path);
  if (data.empty()) throw std::invalid_argument("dataset has no frames");
  std::vector<double> labels;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!has_target(data[i], target)) {
      throw std::invalid_argument("target '" + target + "' absent from frame " +
                                  std::to_string(i));
    }
    labels.push_back(target_value(data[i], target));
  }
  return regression_metrics(predict_targets(model, stats, data), labels);
}

std::vector<double> embed_structures(const Model &model,
                                     std::span<const AtomicStructure> data) {
  NoGradGuard guard;
  std::vector<double> out;
  for (std::size_t start = 0; start < data.size(); start += kInferenceBatch) {
    const auto chunk = data.subspan(start, std::min(kInferenceBatch, data.size() - start));
    const ModelOutput o = forward(model, GraphBatch::build(chunk, model.config.cutoff));
    const auto c = o.c_out.data();
    out.insert(out.end(), c.begin(), c.end());
  }
  return out;
}

ExtensivityReport cmd_embed(const fs::path &ckpt_path, const fs::path &data_path,
                            const fs::path &out) {
  const CheckpointData ckpt = load_checkpoint(ckpt_path);
  Model model(ckpt.model_config);
  restore_parameters(model, ckpt);
  const auto data = read_xyz_file(data_path);
  const std::size_t d = model.config.embedding_dim;
  const auto emb = embed_structures(model, data);

  std::ofstream f(out);
  if (!f) throw std::runtime_error("cannot write " + out.string());
  f << "id,N";
  for (std::size_t k = 0; k < d; ++k) f << ",c" << k;
  f << "\n";
  std::vector<double> counts;
  char buf[32];
  for (std::size_t i = 0; i < data.size(); ++i) {
    counts.push_back(static_cast<double>(data[i].size()));
    f << i << "," << data[i].size();
    for (std::size_t k = 0; k < d; ++k) {
      std::snprintf(buf, sizeof buf, "%.17g", emb[i * d + k]);
      f << "," << buf;
    }
    f << "\n";
  }
  if (!f) throw std::runtime_error("failed writing " + out.string());
  return extensivity_report(counts, emb, d);
}

GradcheckReport cmd_gradcheck(const RunConfig &cfg) {
  cfg.validate();
  if (cfg.model.num_layers > 2 || cfg.model.embedding_dim > 16) {
    throw ConfigError("model", "gradcheck expects at most 2 layers and d <= 16");
  }
  std::vector<AtomicStructure> data;
  if (!cfg.train_data.empty()) data = read_xyz_file(cfg.train_data);
  return run_gradcheck(cfg.model, data, cfg.train.objective, cfg.gradcheck_step,
                       cfg.train.seed);
}

}  // namespace scd
