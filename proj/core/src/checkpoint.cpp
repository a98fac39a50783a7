// SPDX-License-Identifier: Apache-2.0

#include "scd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include <json.hpp>

namespace scd {

namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'S', 'C', 'D', 'C', 'K', 'P', 'T', '\0'};

template <typename T>
void put_le(std::string &out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

template <typename T>
T get_le(const std::string &in, std::size_t &pos) {
  if (pos + sizeof(T) > in.size()) {
    throw CheckpointTruncatedError("checkpoint truncated in header");
  }
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += sizeof(T);
  return v;
}

void put_f64(std::string &out, double x) {
  std::uint64_t bits;
  std::memcpy(&bits, &x, sizeof bits);
  put_le(out, bits);
}

json config_to_json(const ModelConfig &c) {
  return {{"embedding_dim", c.embedding_dim},
          {"num_layers", c.num_layers},
          {"num_heads", c.num_heads},
          {"cutoff", c.cutoff},
          {"num_radial_basis", c.num_radial_basis},
          {"pooling", c.pooling == Pooling::kSum ? "sum" : "mean"},
          {"condition_enabled", c.condition_enabled},
          {"drop_path_rate", c.drop_path_rate},
          {"linear_heads", c.linear_heads},
          {"zero_init_condition", c.zero_init_condition},
          {"condition_null_token", c.condition_null_token},
          {"init_seed", c.init_seed}};
}

ModelConfig config_from_json(const json &j) {
  ModelConfig c;
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.num_layers = j.at("num_layers").get<std::size_t>();
  c.num_heads = j.at("num_heads").get<std::size_t>();
  c.cutoff = j.at("cutoff").get<double>();
  c.num_radial_basis = j.at("num_radial_basis").get<std::size_t>();
  c.pooling = j.at("pooling").get<std::string>() == "mean" ? Pooling::kMean
                                                           : Pooling::kSum;
  c.condition_enabled = j.at("condition_enabled").get<bool>();
  c.drop_path_rate = j.at("drop_path_rate").get<double>();
  c.linear_heads = j.at("linear_heads").get<bool>();
  c.zero_init_condition = j.at("zero_init_condition").get<bool>();
  c.condition_null_token = j.at("condition_null_token").get<bool>();
  c.init_seed = j.at("init_seed").get<std::uint64_t>();
  return c;
}

json stats_to_json(const TargetStats &s) {
  json refs = json::object();
  for (const auto &[z, e] : s.reference_energies) refs[std::to_string(z)] = e;
  return {{"key", s.key},
          {"mean", s.mean},
          {"stddev", s.stddev},
          {"subtract_reference", s.subtract_reference},
          {"reference_energies", refs}};
}

TargetStats stats_from_json(const json &j) {
  TargetStats s;
  s.key = j.at("key").get<std::string>();
  s.mean = j.at("mean").get<double>();
  s.stddev = j.at("stddev").get<double>();
  s.subtract_reference = j.at("subtract_reference").get<bool>();
  for (const auto &[z, e] : j.at("reference_energies").items()) {
    s.reference_energies[std::stoi(z)] = e.get<double>();
  }
  return s;
}

}  // namespace

void save_checkpoint(const std::filesystem::path &path,
                     const CheckpointData &ckpt) {
  json table = json::array();
  for (const auto &t : ckpt.tensors) {
    if (t.data.size() != t.shape.size()) {
      throw CheckpointError("tensor " + t.name + " data does not match shape");
    }
    table.push_back({{"name", t.name}, {"rows", t.shape.rows}, {"cols", t.shape.cols}});
  }
  json manifest = {
    {"format_version", kCheckpointVersion},
    {"phase", ckpt.phase},
    {"step", ckpt.step},
    {"model_config", config_to_json(ckpt.model_config)},
    {"optimizer",
     {{"step", ckpt.optimizer_step},
      {"lr", ckpt.adamw.lr},
      {"beta1", ckpt.adamw.beta1},
      {"beta2", ckpt.adamw.beta2},
      {"eps", ckpt.adamw.eps},
      {"weight_decay", ckpt.adamw.weight_decay}}},
    {"rng_state", ckpt.rng_state},
    {"target_stats", ckpt.target_stats ? stats_to_json(*ckpt.target_stats) : json()},
    {"loss_ema",
     {{"coefficient", ckpt.loss_ema.coefficient},
      {"value", ckpt.loss_ema.value ? json(*ckpt.loss_ema.value) : json()}}},
    {"tensors", table}};
  const std::string text = manifest.dump();

  std::string out(kMagic, sizeof kMagic);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint64_t>(out, text.size());
  out += text;
  for (const auto &t : ckpt.tensors) {
    for (double x : t.data) put_f64(out, x);
  }
  // Write-then-rename so an interrupted save never leaves a torn file.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw CheckpointError("cannot write " + tmp.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw CheckpointError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData load_checkpoint(const std::filesystem::path &path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string in((std::istreambuf_iterator<char>(f)),
                       std::istreambuf_iterator<char>());
  if (in.size() < sizeof kMagic) {
    throw CheckpointTruncatedError("checkpoint truncated: no header");
  }
  if (std::memcmp(in.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError(path.string() + " is not a checkpoint");
  }
  std::size_t pos = sizeof kMagic;
  const auto version = get_le<std::uint32_t>(in, pos);
  if (version != kCheckpointVersion) {
    throw CheckpointVersionError("checkpoint format version " +
                                 std::to_string(version) + ", expected " +
                                 std::to_string(kCheckpointVersion));
  }
  const auto length = get_le<std::uint64_t>(in, pos);
  if (pos + length > in.size()) {
    throw CheckpointTruncatedError("checkpoint truncated in manifest");
  }
  json m;
  try {
    m = json::parse(in.substr(pos, length));
  } catch (const json::exception &e) {
    throw CheckpointError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  pos += length;

  CheckpointData ckpt;
  try {
    ckpt.phase = m.at("phase").get<std::string>();
    ckpt.step = m.at("step").get<std::uint64_t>();
    ckpt.model_config = config_from_json(m.at("model_config"));
    const json &o = m.at("optimizer");
    ckpt.optimizer_step = o.at("step").get<std::uint64_t>();
    ckpt.adamw = {o.at("lr").get<double>(), o.at("beta1").get<double>(),
                  o.at("beta2").get<double>(), o.at("eps").get<double>(),
                  o.at("weight_decay").get<double>()};
    ckpt.rng_state = m.at("rng_state").get<std::string>();
    if (!m.at("target_stats").is_null()) {
      ckpt.target_stats = stats_from_json(m.at("target_stats"));
    }
    ckpt.loss_ema.coefficient = m.at("loss_ema").at("coefficient").get<double>();
    if (!m.at("loss_ema").at("value").is_null()) {
      ckpt.loss_ema.value = m.at("loss_ema").at("value").get<double>();
    }
    for (const json &t : m.at("tensors")) {
      StoredTensor st;
      st.name = t.at("name").get<std::string>();
      st.shape = {t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>()};
      ckpt.tensors.push_back(std::move(st));
    }
  } catch (const json::exception &e) {
    throw CheckpointError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  for (auto &t : ckpt.tensors) {
    const std::size_t n = t.shape.size();
    if (pos + 8 * n > in.size()) {
      throw CheckpointTruncatedError("checkpoint truncated in tensor " + t.name);
    }
    t.data.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto bits = get_le<std::uint64_t>(in, pos);
      std::memcpy(&t.data[i], &bits, sizeof bits);
    }
  }
  if (pos != in.size()) {
    throw CheckpointError("checkpoint has trailing bytes after tensors");
  }
  return ckpt;
}

std::vector<StoredTensor> capture_parameters(const ParameterStore &params) {
  std::vector<StoredTensor> out;
  for (const auto &e : params.entries()) {
    const auto d = e.value.data();
    out.push_back({"param/" + e.name, e.value.shape(), {d.begin(), d.end()}});
  }
  return out;
}

void capture_optimizer(const ParameterStore &params, const OptimizerState &opt,
                       std::vector<StoredTensor> &out) {
  if (opt.m.empty()) return;
  const auto &entries = params.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    out.push_back({"adam_m/" + entries[i].name, entries[i].value.shape(), opt.m[i]});
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    out.push_back({"adam_v/" + entries[i].name, entries[i].value.shape(), opt.v[i]});
  }
}

void restore_parameters(Model &model, const CheckpointData &ckpt,
                        const std::function<bool(std::string_view)> &skip) {
  std::set<std::string> seen;
  for (const auto &t : ckpt.tensors) {
    if (!t.name.starts_with("param/")) {
      if (!t.name.starts_with("adam_m/") && !t.name.starts_with("adam_v/")) {
        throw UnknownParameterError("unknown checkpoint tensor " + t.name);
      }
      continue;
    }
    const std::string name = t.name.substr(6);
    if (!model.params.contains(name)) {
      throw UnknownParameterError("unknown parameter " + name);
    }
    Tensor &p = model.params.at(name);
    if (p.shape() != t.shape) {
      throw ConfigMismatchError("parameter " + name + ": checkpoint shape " +
                                t.shape.str() + " vs model shape " +
                                p.shape().str());
    }
    seen.insert(name);
    if (skip && skip(name)) continue;
    auto dst = p.mutable_data();
    std::copy(t.data.begin(), t.data.end(), dst.begin());
  }
  for (const auto &e : model.params.entries()) {
    if (!seen.count(e.name)) {
      throw ConfigMismatchError("checkpoint lacks parameter " + e.name);
    }
  }
}

OptimizerState restore_optimizer(const ParameterStore &params,
                                 const CheckpointData &ckpt) {
  OptimizerState opt;
  opt.step = ckpt.optimizer_step;
  std::map<std::string, const StoredTensor *> byname;
  for (const auto &t : ckpt.tensors) byname[t.name] = &t;
  if (!byname.count("adam_m/" + params.entries().front().name)) return opt;
  for (const auto &e : params.entries()) {
    const auto m = byname.find("adam_m/" + e.name);
    const auto v = byname.find("adam_v/" + e.name);
    if (m == byname.end() || v == byname.end() ||
        m->second->shape != e.value.shape() || v->second->shape != e.value.shape()) {
      throw ConfigMismatchError("optimizer state missing or mismatched for " + e.name);
    }
    opt.m.push_back(m->second->data);
    opt.v.push_back(v->second->data);
  }
  return opt;
}

void require_same_model_config(const ModelConfig &expected,
                               const ModelConfig &found) {
  const json a = config_to_json(expected), b = config_to_json(found);
  for (const auto &[key, value] : a.items()) {
    if (b.at(key) != value) {
      throw ConfigMismatchError("model config mismatch at " + key + ": " +
                                value.dump() + " vs " + b.at(key).dump());
    }
  }
}

}  // namespace scd
