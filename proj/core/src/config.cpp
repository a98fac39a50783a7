// SPDX-License-Identifier: Apache-2.0

#include "scd/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace scd {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double to_double(const std::string &key, const std::string &v) {
  double x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError(key, "expected a number, got '" + v + "'");
  }
  return x;
}

std::uint64_t to_uint(const std::string &key, const std::string &v) {
  std::uint64_t x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
    throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  }
  return x;
}

bool to_bool(const std::string &key, const std::string &v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

template <typename E>
E to_enum(const std::string &key, const std::string &v,
          const std::vector<std::pair<std::string, E>> &names) {
  for (const auto &[n, e] : names) {
    if (n == v) return e;
  }
  std::string allowed;
  for (const auto &[n, e] : names) allowed += (allowed.empty() ? "" : "|") + n;
  throw ConfigError(key, "expected one of " + allowed + ", got '" + v + "'");
}

template <typename E>
std::string from_enum(E e, const std::vector<std::pair<std::string, E>> &names) {
  for (const auto &[n, x] : names) {
    if (x == e) return n;
  }
  return "?";
}

const std::vector<std::pair<std::string, Pooling>> kPooling{
  {"sum", Pooling::kSum}, {"mean", Pooling::kMean}};
const std::vector<std::pair<std::string, Phase>> kPhase{
  {"pretrain", Phase::kPretrain}, {"finetune", Phase::kFinetune}};
const std::vector<std::pair<std::string, ObjectiveKind>> kKind{
  {"coord", ObjectiveKind::kCoord},
  {"scd", ObjectiveKind::kScd},
  {"pair_conditional", ObjectiveKind::kPairConditional},
  {"force_energy", ObjectiveKind::kForceEnergy},
  {"finetune", ObjectiveKind::kFinetune}};
const std::vector<std::pair<std::string, RegNoise>> kRegNoise{
  {"clean_only", RegNoise::kCleanOnly}, {"both", RegNoise::kBoth}};
const std::vector<std::pair<std::string, PairDirection>> kDirection{
  {"embed_a_denoise_b", PairDirection::kEmbedADenoiseB},
  {"embed_b_denoise_a", PairDirection::kEmbedBDenoiseA}};
const std::vector<std::pair<std::string, ForceMode>> kForceMode{
  {"forward", ForceMode::kForward}, {"backward", ForceMode::kBackward}};

// "1:-13.6,6:-1029.8"
std::map<int, double> to_refs(const std::string &key, const std::string &v) {
  std::map<int, double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) {
      throw ConfigError(key, "expected Z:energy pairs, got '" + item + "'");
    }
    const auto z = to_uint(key, trim(item.substr(0, colon)));
    out[static_cast<int>(z)] = to_double(key, trim(item.substr(colon + 1)));
  }
  return out;
}

std::string from_refs(const std::map<int, double> &refs) {
  std::string out;
  for (const auto &[z, e] : refs) {
    if (!out.empty()) out += ",";
    out += std::to_string(z) + ":" + fmt_double(e);
  }
  return out;
}

struct Binding {
  std::string key;
  std::function<void(RunConfig &, const std::string &)> set;
  std::function<std::string(const RunConfig &)> get;
};

#define SCD_FIELD(KEY, EXPR, PARSE, FORMAT)                                   \
  Binding {                                                                   \
    KEY,                                                                      \
      [](RunConfig &c, const std::string &v) { c.EXPR = PARSE(KEY, v); },     \
      [](const RunConfig &c) { return FORMAT(c.EXPR); }                       \
  }

std::string fmt_uint(std::uint64_t x) { return std::to_string(x); }
std::string fmt_bool(bool b) { return b ? "true" : "false"; }
std::string fmt_str(const std::string &s) { return s; }
std::string as_str(const std::string &, const std::string &v) { return v; }
std::size_t to_size(const std::string &k, const std::string &v) {
  return static_cast<std::size_t>(to_uint(k, v));
}
int to_int(const std::string &k, const std::string &v) {
  return static_cast<int>(to_uint(k, v));
}

#define SCD_ENUM(KEY, EXPR, TABLE)                                            \
  Binding {                                                                   \
    KEY,                                                                      \
      [](RunConfig &c, const std::string &v) { c.EXPR = to_enum(KEY, v, TABLE); }, \
      [](const RunConfig &c) { return from_enum(c.EXPR, TABLE); }             \
  }

const std::vector<Binding> &bindings() {
  static const std::vector<Binding> table{
    SCD_FIELD("model.embedding_dim", model.embedding_dim, to_size, fmt_uint),
    SCD_FIELD("model.num_layers", model.num_layers, to_size, fmt_uint),
    SCD_FIELD("model.num_heads", model.num_heads, to_size, fmt_uint),
    SCD_FIELD("model.cutoff", model.cutoff, to_double, fmt_double),
    SCD_FIELD("model.num_radial_basis", model.num_radial_basis, to_size, fmt_uint),
    SCD_ENUM("model.pooling", model.pooling, kPooling),
    SCD_FIELD("model.condition_enabled", model.condition_enabled, to_bool, fmt_bool),
    SCD_FIELD("model.drop_path_rate", model.drop_path_rate, to_double, fmt_double),
    SCD_FIELD("model.linear_heads", model.linear_heads, to_bool, fmt_bool),
    SCD_FIELD("model.zero_init_condition", model.zero_init_condition, to_bool, fmt_bool),
    SCD_FIELD("model.condition_null_token", model.condition_null_token, to_bool, fmt_bool),
    SCD_FIELD("model.init_seed", model.init_seed, to_uint, fmt_uint),

    SCD_FIELD("train.total_steps", train.total_steps, to_uint, fmt_uint),
    SCD_FIELD("train.warmup_steps", train.warmup_steps, to_uint, fmt_uint),
    SCD_FIELD("train.base_lr", train.base_lr, to_double, fmt_double),
    SCD_FIELD("train.beta1", train.beta1, to_double, fmt_double),
    SCD_FIELD("train.beta2", train.beta2, to_double, fmt_double),
    SCD_FIELD("train.eps", train.eps, to_double, fmt_double),
    SCD_FIELD("train.weight_decay", train.weight_decay, to_double, fmt_double),
    SCD_FIELD("train.batch_size", train.batch_size, to_size, fmt_uint),
    SCD_FIELD("train.grad_accum", train.grad_accum, to_size, fmt_uint),
    SCD_FIELD("train.seed", train.seed, to_uint, fmt_uint),
    SCD_ENUM("train.phase", train.phase, kPhase),
    SCD_FIELD("train.drop_path_init", train.drop_path_init, to_double, fmt_double),
    SCD_FIELD("train.drop_path_final", train.drop_path_final, to_double, fmt_double),
    SCD_FIELD("train.checkpoint_interval", train.checkpoint_interval, to_uint, fmt_uint),
    SCD_FIELD("train.log_interval", train.log_interval, to_uint, fmt_uint),
    SCD_FIELD("train.cell_repeat_p", train.cell_repeat_p, to_double, fmt_double),
    SCD_FIELD("train.cell_repeat_max", train.cell_repeat_max, to_int, std::to_string),
    SCD_FIELD("train.reset_head", reset_head, to_bool, fmt_bool),
    SCD_FIELD("train.from_scratch", from_scratch, to_bool, fmt_bool),

    SCD_ENUM("objective.kind", train.objective.kind, kKind),
    SCD_FIELD("objective.sigma_corr", train.objective.sigma_corr, to_double, fmt_double),
    SCD_FIELD("objective.sigma_reg", train.objective.sigma_reg, to_double, fmt_double),
    SCD_FIELD("objective.condition_dropout_rate", train.objective.condition_dropout_rate,
              to_double, fmt_double),
    SCD_ENUM("objective.reg_noise", train.objective.reg_noise, kRegNoise),
    SCD_FIELD("objective.detach_condition", train.objective.detach_condition, to_bool,
              fmt_bool),
    SCD_ENUM("objective.direction", train.objective.direction, kDirection),
    SCD_ENUM("objective.force_mode", train.objective.force_mode, kForceMode),
    SCD_FIELD("objective.energy_weight", train.objective.energy_weight, to_double,
              fmt_double),
    SCD_FIELD("objective.force_weight", train.objective.force_weight, to_double,
              fmt_double),
    SCD_FIELD("objective.target_key", train.objective.target_key, as_str, fmt_str),
    SCD_FIELD("objective.denoise_weight", train.objective.denoise_weight, to_double,
              fmt_double),
    SCD_FIELD("objective.subtract_reference_energy",
              train.objective.subtract_reference_energy, to_bool, fmt_bool),
    SCD_FIELD("objective.reference_energies", train.objective.reference_energies,
              to_refs, from_refs),
    SCD_FIELD("objective.loss_ema", train.objective.loss_ema, to_double, fmt_double),

    SCD_FIELD("data.train", train_data, as_str, fmt_str),
    SCD_FIELD("data.eval", eval_data, as_str, fmt_str),
    SCD_FIELD("output.dir", output_dir, as_str, fmt_str),
    SCD_FIELD("gradcheck.step", gradcheck_step, to_double, fmt_double),
  };
  return table;
}

#undef SCD_FIELD
#undef SCD_ENUM

// Re-raise a validator's message under the key path it concerns.
template <typename F>
void checked(const std::string &section, F &&f) {
  try {
    f();
  } catch (const ConfigError &) {
    throw;
  } catch (const std::invalid_argument &e) {
    std::string msg = e.what();
    // Messages from the train validator already carry their key path.
    if (msg.starts_with(section + ".")) {
      const auto colon = msg.find(' ');
      throw ConfigError(msg.substr(0, colon), msg.substr(colon + 1));
    }
    throw ConfigError(section, msg);
  }
}

}  // namespace

void RunConfig::validate() const {
  checked("model", [&] { model.validate(); });
  checked("objective", [&] { train.objective.validate(); });
  checked("train", [&] { train.validate(); });
  const auto kind = train.objective.kind;
  if ((kind == ObjectiveKind::kScd || kind == ObjectiveKind::kPairConditional) &&
      !model.condition_enabled) {
    throw ConfigError("objective.kind", "'" + from_enum(kind, kKind) +
                                          "' requires model.condition_enabled = true");
  }
  if (kind == ObjectiveKind::kFinetune && train.phase != Phase::kFinetune) {
    throw ConfigError("train.phase", "objective.kind = finetune needs train.phase = finetune");
  }
  if (reset_head && train.phase != Phase::kFinetune) {
    throw ConfigError("train.reset_head", "only valid with train.phase = finetune");
  }
  if (!(gradcheck_step > 0.0)) {
    throw ConfigError("gradcheck.step", "must be positive");
  }
  if (output_dir.empty()) throw ConfigError("output.dir", "must not be empty");
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  for (const auto &b : bindings()) keys.push_back(b.key);
  return keys;
}

RunConfig parse_run_config(const std::string &text) {
  std::map<std::string, const Binding *> by_key;
  for (const auto &b : bindings()) by_key[b.key] = &b;
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("", "line " + std::to_string(line_no) +
                              ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = by_key.find(key);
    if (it == by_key.end()) {
      throw ConfigError(key, "unknown key (line " + std::to_string(line_no) + ")");
    }
    if (!seen.insert(key).second) {
      throw ConfigError(key, "repeated key (line " + std::to_string(line_no) + ")");
    }
    it->second->set(cfg, value);
  }
  cfg.validate();
  return cfg;
}

RunConfig read_run_config(const std::filesystem::path &path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("", "cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_run_config(ss.str());
}

std::string format_run_config(const RunConfig &cfg) {
  std::string out;
  std::string section;
  for (const auto &b : bindings()) {
    const std::string s = b.key.substr(0, b.key.find('.'));
    if (s != section) {
      if (!section.empty()) out += "\n";
      section = s;
    }
    out += b.key + " = " + b.get(cfg) + "\n";
  }
  return out;
}

}  // namespace scd
