// SPDX-License-Identifier: Apache-2.0
//
// scd: synthetic data, pretraining, finetuning, evaluation, embedding export
// and gradient checks. Failures exit nonzero after printing one JSON line to
// stderr: {"status":"error","code":...,"message":...[,"key":...]}.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "scd/checkpoint.hpp"
#include "scd/commands.hpp"
#include "scd/xyz.hpp"

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kConfig = 3, kData = 4, kCheckpoint = 5 };

int fail(int code, const std::string &kind, const std::string &message,
         const std::string &key = {}) {
  nlohmann::ordered_json j;
  j["status"] = "error";
  j["code"] = kind;
  j["message"] = message;
  if (!key.empty()) j["key"] = key;
  std::cerr << j.dump() << std::endl;
  return code;
}

void print_summary(const scd::RunSummary &s) {
  nlohmann::ordered_json j;
  j["status"] = "ok";
  j["output_dir"] = s.output_dir.string();
  j["final_checkpoint"] = s.final_checkpoint.string();
  j["steps"] = s.steps;
  if (s.eval) j["eval"] = nlohmann::json::parse(s.eval->to_json());
  std::cout << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Self-conditioned denoising for atomic structures"};
  app.require_subcommand(1);

  std::string config, ckpt, data, target, out, family, from, resume;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  bool reset_head = false;

  auto *pretrain = app.add_subcommand("pretrain", "pretrain a backbone");
  pretrain->add_option("--config", config, "run config")->required();
  pretrain->add_option("--resume", resume, "continue from a checkpoint of this run");

  auto *finetune = app.add_subcommand("finetune", "finetune on a scalar target");
  finetune->add_option("--config", config, "run config")->required();
  finetune->add_option("--from", from, "pretrained checkpoint");
  finetune->add_flag("--reset-head", reset_head, "re-initialise the scalar head");
  finetune->add_option("--resume", resume, "continue from a checkpoint of this run");

  auto *evaluate = app.add_subcommand("evaluate", "regression metrics on a labelled set");
  evaluate->add_option("--ckpt", ckpt, "checkpoint")->required();
  evaluate->add_option("--data", data, "extended XYZ")->required();
  evaluate->add_option("--target", target, "energy | property")->required();

  auto *embed = app.add_subcommand("embed", "per-structure embeddings and extensivity");
  embed->add_option("--ckpt", ckpt, "checkpoint")->required();
  embed->add_option("--data", data, "extended XYZ")->required();
  embed->add_option("--out", out, "CSV output")->required();

  auto *gen = app.add_subcommand("gen-data", "write a synthetic dataset");
  gen->add_option("--family", family,
                  "conformer_pairs | morse_clusters | toy_crystals | pair_complexes")
    ->required();
  gen->add_option("--n", n, "frames (molecules for conformer_pairs)")->required();
  gen->add_option("--seed", seed, "seed")->required();
  gen->add_option("--out", out, "extended XYZ output")->required();

  auto *gradcheck = app.add_subcommand("gradcheck", "autodiff vs finite differences");
  gradcheck->add_option("--config", config, "run config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    return fail(kUsage, "usage", e.what());
  }

  const auto opt_path = [](const std::string &s) -> std::optional<std::filesystem::path> {
    if (s.empty()) return std::nullopt;
    return s;
  };

  try {
    if (*pretrain) {
      print_summary(scd::cmd_pretrain(scd::read_run_config(config), opt_path(resume),
                                      std::cerr));
    } else if (*finetune) {
      print_summary(scd::cmd_finetune(scd::read_run_config(config), opt_path(from),
                                      reset_head, opt_path(resume), std::cerr));
    } else if (*evaluate) {
      std::cout << scd::cmd_evaluate(ckpt, data, target).to_json() << std::endl;
    } else if (*embed) {
      std::cout << scd::cmd_embed(ckpt, data, out).to_json() << std::endl;
    } else if (*gen) {
      if (n == 0) return fail(kUsage, "usage", "--n must be at least 1");
      scd::cmd_gen_data(scd::parse_family(family), n, seed, out);
      nlohmann::ordered_json j{{"status", "ok"}, {"out", out}};
      std::cout << j.dump() << std::endl;
    } else if (*gradcheck) {
      const auto report = scd::cmd_gradcheck(scd::read_run_config(config));
      std::cout << report.to_json() << std::endl;
      if (!report.passed()) return fail(kFailure, "gradcheck_failed", "tolerance exceeded");
    }
  } catch (const scd::ConfigError &e) {
    return fail(kConfig, "config", e.what(), e.key());
  } catch (const scd::ParseError &e) {
    return fail(kData, "parse", e.what());
  } catch (const scd::StructureError &e) {
    return fail(kData, "structure", e.what());
  } catch (const scd::CheckpointVersionError &e) {
    return fail(kCheckpoint, "checkpoint_version", e.what());
  } catch (const scd::CheckpointTruncatedError &e) {
    return fail(kCheckpoint, "checkpoint_truncated", e.what());
  } catch (const scd::UnknownParameterError &e) {
    return fail(kCheckpoint, "unknown_parameter", e.what());
  } catch (const scd::ConfigMismatchError &e) {
    return fail(kCheckpoint, "config_mismatch", e.what());
  } catch (const scd::CheckpointError &e) {
    return fail(kCheckpoint, "checkpoint", e.what());
  } catch (const std::invalid_argument &e) {
    return fail(kUsage, "invalid_argument", e.what());
  } catch (const std::exception &e) {
    return fail(kFailure, "error", e.what());
  }
  return kOk;
}
