// SPDX-License-Identifier: Apache-2.0
//
// Run configuration as flat typed key paths, one `section.key = value` per
// line. '#' starts a comment. Unknown or repeated keys are errors.

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "scd/backbone.hpp"
#include "scd/trainer.hpp"

namespace scd {

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(std::string key, const std::string &msg)
    : std::invalid_argument(key.empty() ? msg : key + ": " + msg),
      key_(std::move(key)) {}
  const std::string &key() const { return key_; }

 private:
  std::string key_;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;  // train.objective holds the objective settings
  std::string train_data;
  std::string eval_data;    // optional held-out split
  std::string output_dir = "run";
  bool reset_head = false;  // finetune only
  bool from_scratch = false;  // finetune without --from
  double gradcheck_step = 1e-5;

  // Cross-field checks; errors carry the offending key path.
  void validate() const;
};

RunConfig parse_run_config(const std::string &text);
RunConfig read_run_config(const std::filesystem::path &path);

// Every key with its resolved value, in a fixed order; parses back to an
// equivalent config.
std::string format_run_config(const RunConfig &cfg);
std::vector<std::string> run_config_keys();

}  // namespace scd
