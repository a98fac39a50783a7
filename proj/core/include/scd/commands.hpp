// SPDX-License-Identifier: Apache-2.0
//
// Subcommand implementations behind the command-line tool.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "scd/analysis.hpp"
#include "scd/config.hpp"
#include "scd/gradcheck.hpp"
#include "scd/synthetic.hpp"
#include "scd/trainer.hpp"

namespace scd {

void cmd_gen_data(Family family, std::size_t n, std::uint64_t seed,
                  const std::filesystem::path &out);

struct RunSummary {
  std::filesystem::path output_dir;
  std::filesystem::path final_checkpoint;
  std::uint64_t steps = 0;
  std::optional<RegressionMetrics> eval;  // finetune with data.eval
};

// Writes resolved_config.txt, metrics.jsonl, periodic checkpoints and
// final.ckpt under cfg.output_dir. `resume` continues from one of this run's
// checkpoints. Notes go to `log`.
RunSummary cmd_pretrain(const RunConfig &cfg,
                        const std::optional<std::filesystem::path> &resume,
                        std::ostream &log);
// The pretrained checkpoint's model config must equal cfg.model.
RunSummary cmd_finetune(const RunConfig &cfg,
                        const std::optional<std::filesystem::path> &from,
                        bool reset_head,
                        const std::optional<std::filesystem::path> &resume,
                        std::ostream &log);

// Predictions in label units.
std::vector<double> predict_targets(const Model &model, const TargetStats &stats,
                                    std::span<const AtomicStructure> data);

RegressionMetrics cmd_evaluate(const std::filesystem::path &ckpt,
                               const std::filesystem::path &data,
                               const std::string &target);

// Row-major c_out, one row per structure.
std::vector<double> embed_structures(const Model &model,
                                     std::span<const AtomicStructure> data);

ExtensivityReport cmd_embed(const std::filesystem::path &ckpt,
                            const std::filesystem::path &data,
                            const std::filesystem::path &out);

GradcheckReport cmd_gradcheck(const RunConfig &cfg);

}  // namespace scd
