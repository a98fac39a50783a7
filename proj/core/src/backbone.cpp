// SPDX-License-Identifier: Apache-2.0

#include "scd/backbone.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "scd/elements.hpp"

namespace scd {

namespace {

std::string layer_name(std::size_t layer, std::string_view leaf) {
  return "layer" + std::to_string(layer) + "/" + std::string(leaf);
}

std::size_t head_hidden(const ModelConfig &cfg) {
  return std::max<std::size_t>(cfg.embedding_dim / 2, 1);
}

Tensor linear(const Tensor &x, const Tensor &w, const Tensor &b) {
  const Tensor y = matmul(x, w);
  return add(y, expand(b, y.shape()));
}

Tensor activation(const Tensor &x, bool identity) {
  return identity ? x : silu(x);
}

// Each row index repeated three times: r -> (r, r, r).
std::vector<std::size_t> repeat3(std::span<const std::size_t> idx) {
  std::vector<std::size_t> out;
  out.reserve(idx.size() * 3);
  for (std::size_t i : idx) out.insert(out.end(), {i, i, i});
  return out;
}

// Atom index -> its three L1 rows.
std::vector<std::size_t> expand3(std::span<const std::size_t> idx) {
  std::vector<std::size_t> out;
  out.reserve(idx.size() * 3);
  for (std::size_t i : idx) out.insert(out.end(), {3 * i, 3 * i + 1, 3 * i + 2});
  return out;
}

std::vector<std::size_t> iota3(std::size_t n) {
  std::vector<std::size_t> out(3 * n);
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = r / 3;
  return out;
}

// d x H indicator: channel c belongs to head c / (d / H).
Tensor head_indicator(std::size_t d, std::size_t heads) {
  std::vector<double> m(d * heads, 0.0);
  const std::size_t width = d / heads;
  for (std::size_t c = 0; c < d; ++c) m[c * heads + c / width] = 1.0;
  return Tensor::from_data({d, heads}, std::move(m));
}

Tensor per_row_column(std::span<const double> values) {
  return Tensor::from_data({values.size(), 1},
                           std::vector<double>(values.begin(), values.end()));
}

struct RadialConstants {
  double alpha;
  double beta;
  std::vector<double> means;
};

RadialConstants radial_constants(double cutoff, std::size_t k) {
  RadialConstants rc;
  rc.alpha = 5.0 / cutoff;
  const double start = std::exp(-cutoff * rc.alpha);
  rc.means.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    rc.means[i] = k == 1 ? start
                         : start + (1.0 - start) * static_cast<double>(i) /
                                     static_cast<double>(k - 1);
  }
  const double width = 2.0 / static_cast<double>(k) * (1.0 - start);
  rc.beta = 1.0 / (width * width);
  return rc;
}

}  // namespace

// ---- config / parameters ------------------------------------------------

void ModelConfig::validate() const {
  if (embedding_dim == 0) throw std::invalid_argument("embedding_dim must be >= 1");
  if (num_heads == 0 || embedding_dim % num_heads != 0) {
    throw std::invalid_argument("embedding_dim must be divisible by num_heads");
  }
  if (!(cutoff > 0.0)) throw std::invalid_argument("cutoff must be positive");
  if (num_radial_basis == 0) {
    throw std::invalid_argument("num_radial_basis must be >= 1");
  }
  if (!(drop_path_rate >= 0.0 && drop_path_rate < 1.0)) {
    throw std::invalid_argument("drop_path_rate must lie in [0, 1)");
  }
}

ModelConfig ct_reference_config() { return ModelConfig{}; }

ModelConfig ct_small_config() {
  ModelConfig cfg;
  cfg.embedding_dim = 128;
  cfg.num_layers = 6;
  return cfg;
}

Model Model::clone() const {
  Model m = *this;
  m.params = params.clone();
  return m;
}

Model::Model(const ModelConfig &cfg) : config(cfg) {
  config.validate();
  const std::size_t d = config.embedding_dim;
  const std::size_t k = config.num_radial_basis;
  Rng rng(config.init_seed);

  {
    std::vector<double> table((kMaxAtomicNumber + 1) * d);
    for (double &x : table) x = rng.normal();
    params.add("embedding/atom", {kMaxAtomicNumber + 1, d}, std::move(table));
  }
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    params.add_linear_weight(layer_name(l, "q/w"), d, d, rng);
    params.add_zeros(layer_name(l, "q/b"), {1, d});
    params.add_linear_weight(layer_name(l, "k/w"), d, d, rng);
    params.add_zeros(layer_name(l, "k/b"), {1, d});
    params.add_linear_weight(layer_name(l, "v/w"), d, 3 * d, rng);
    params.add_zeros(layer_name(l, "v/b"), {1, 3 * d});
    params.add_linear_weight(layer_name(l, "dk/w"), k, d, rng);
    params.add_zeros(layer_name(l, "dk/b"), {1, d});
    params.add_linear_weight(layer_name(l, "dv/w"), k, 3 * d, rng);
    params.add_zeros(layer_name(l, "dv/b"), {1, 3 * d});
    params.add_linear_weight(layer_name(l, "vec/w"), d, 3 * d, rng);
    params.add_linear_weight(layer_name(l, "o/w"), d, 3 * d, rng);
    params.add_zeros(layer_name(l, "o/b"), {1, 3 * d});
    if (config.condition_enabled) {
      params.add_linear_weight(layer_name(l, "cond/w1"), d, d, rng);
      params.add_zeros(layer_name(l, "cond/b1"), {1, d});
      if (config.zero_init_condition) {
        params.add_zeros(layer_name(l, "cond/w2"), {d, 3 * d});
      } else {
        params.add_linear_weight(layer_name(l, "cond/w2"), d, 3 * d, rng);
      }
      params.add_zeros(layer_name(l, "cond/b2"), {1, 3 * d});
    }
  }
  if (config.condition_enabled && config.condition_null_token) {
    params.add_zeros("condition/null", {1, d});
  }
  params.add_linear_weight("head_c/w1", d, d, rng);
  params.add_zeros("head_c/b1", {1, d});
  params.add_linear_weight("head_c/w2", d, d, rng);
  params.add_zeros("head_c/b2", {1, d});
  params.add_linear_weight("head_v/w", d, 1, rng);
  const std::size_t h = head_hidden(config);
  params.add_linear_weight("head_y/w1", d, h, rng);
  params.add_zeros("head_y/b1", {1, h});
  params.add_linear_weight("head_y/w2", h, 1, rng);
  params.add_zeros("head_y/b2", {1, 1});
}

bool is_scalar_head_parameter(std::string_view name) {
  return name.starts_with("head_y/");
}

bool is_embedding_parameter(std::string_view name) {
  return name.starts_with("embedding/");
}

bool is_condition_parameter(std::string_view name) {
  return name.find("/cond/") != std::string_view::npos ||
         name.starts_with("condition/");
}

void reset_scalar_head(Model &model, Rng &rng) {
  for (auto &entry : model.params.entries()) {
    if (!is_scalar_head_parameter(entry.name)) continue;
    auto data = entry.value.mutable_data();
    if (entry.name.ends_with("/w1") || entry.name.ends_with("/w2")) {
      const auto w = glorot_uniform(entry.value.rows(), entry.value.cols(), rng);
      std::copy(w.begin(), w.end(), data.begin());
    } else {
      std::fill(data.begin(), data.end(), 0.0);
    }
    entry.value.zero_grad();
  }
}

// ---- batching -----------------------------------------------------------

GraphBatch GraphBatch::build(std::span<const AtomicStructure> structures,
                             double cutoff, bool positions_require_grad) {
  if (structures.empty()) throw std::invalid_argument("empty batch");
  GraphBatch b;
  b.num_structures = structures.size();
  std::vector<double> pos;
  for (std::size_t s = 0; s < structures.size(); ++s) {
    const AtomicStructure &st = structures[s];
    const auto graph = build_neighbor_graph(st, cutoff);
    const std::size_t offset = b.species.size();
    b.atom_offset.push_back(offset);
    b.atom_count.push_back(st.size());
    for (std::size_t i = 0; i < st.size(); ++i) {
      b.species.push_back(st.species[i]);
      b.atom_structure.push_back(s);
      pos.insert(pos.end(), st.positions[i].begin(), st.positions[i].end());
    }
    for (std::size_t e = 0; e < graph.num_edges(); ++e) {
      b.source.push_back(offset + graph.source[e]);
      b.target.push_back(offset + graph.target[e]);
      Vec3 off{0, 0, 0};
      const auto &sh = graph.shift[e];
      if (sh != std::array<int, 3>{0, 0, 0}) {
        const Mat3 &L = st.cell->lattice;
        for (int k = 0; k < 3; ++k) {
          off[k] = sh[0] * L[0][k] + sh[1] * L[1][k] + sh[2] * L[2][k];
        }
        b.has_images = true;
      }
      b.image_offset.push_back(off);
    }
  }
  b.positions = Tensor::from_data({b.species.size(), 3}, std::move(pos));
  b.positions.set_requires_grad(positions_require_grad);
  return b;
}

Condition Condition::all_present(Tensor c) {
  Condition out;
  out.present.assign(c.rows(), 1);
  out.c = std::move(c);
  return out;
}

// ---- building blocks ----------------------------------------------------

Tensor embed_atoms(const Model &model, std::span<const int> species) {
  std::vector<std::size_t> idx;
  idx.reserve(species.size());
  for (int z : species) {
    if (z < 1 || z > kMaxAtomicNumber) {
      throw std::invalid_argument("unknown species " + std::to_string(z));
    }
    idx.push_back(static_cast<std::size_t>(z));
  }
  return gather_rows(model.params.at("embedding/atom"), idx);
}

double cosine_envelope(double r, double cutoff) {
  if (r > cutoff) return 0.0;
  return 0.5 * (std::cos(std::numbers::pi * r / cutoff) + 1.0);
}

std::vector<double> radial_basis(double r, double cutoff, std::size_t k) {
  const RadialConstants rc = radial_constants(cutoff, k);
  const double env = cosine_envelope(r, cutoff);
  const double t = std::exp(-rc.alpha * r);
  std::vector<double> out(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double u = t - rc.means[i];
    out[i] = std::exp(-rc.beta * (u * u)) * env;
  }
  return out;
}

EdgeGeometry edge_geometry(const GraphBatch &batch, double cutoff,
                           std::size_t k) {
  const std::size_t E = batch.num_edges();
  Tensor disp = sub(gather_rows(batch.positions, batch.target),
                    gather_rows(batch.positions, batch.source));
  if (batch.has_images) {
    std::vector<double> off;
    off.reserve(3 * E);
    for (const Vec3 &o : batch.image_offset) off.insert(off.end(), o.begin(), o.end());
    disp = add(disp, Tensor::from_data({E, 3}, std::move(off)));
  }
  EdgeGeometry g;
  g.distance = sqrt(sum(square(disp), 1));
  g.unit = mul(disp, expand(reciprocal(g.distance), {E, 3}));
  g.envelope =
    scale(add_scalar(cos(scale(g.distance, std::numbers::pi / cutoff)), 1.0), 0.5);

  const RadialConstants rc = radial_constants(cutoff, k);
  std::vector<double> means;
  means.reserve(E * k);
  for (std::size_t e = 0; e < E; ++e) {
    means.insert(means.end(), rc.means.begin(), rc.means.end());
  }
  const Tensor t = expand(exp(scale(g.distance, -rc.alpha)), {E, k});
  const Tensor u = sub(t, Tensor::from_data({E, k}, std::move(means)));
  g.rbf = mul(exp(scale(square(u), -rc.beta)), expand(g.envelope, {E, k}));
  return g;
}

AdaNormResult ada_norm(const Tensor &normalized, const Tensor &modulation) {
  if (!modulation.defined()) return {normalized, Tensor()};
  const std::size_t d = normalized.cols();
  if (modulation.rows() != normalized.rows() || modulation.cols() != 3 * d) {
    throw ShapeError("ada_norm: modulation " + modulation.shape().str() +
                     " for features " + normalized.shape().str());
  }
  const Tensor scale_part = slice(modulation, 1, 0, d);
  const Tensor shift_part = slice(modulation, 1, d, d);
  const Tensor gamma = slice(modulation, 1, 2 * d, d);
  return {add(mul(normalized, add_scalar(scale_part, 1.0)), shift_part),
          add_scalar(tanh(gamma), 1.0)};
}

std::vector<double> drop_path_scales(std::size_t num_structures, double rate,
                                     Rng *rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("drop path rate must lie in [0, 1)");
  }
  std::vector<double> out(num_structures, 1.0);
  if (!training || rate == 0.0) return out;
  if (!rng) throw std::invalid_argument("drop path needs an rng in training");
  const double keep = 1.0 / (1.0 - rate);
  for (double &s : out) s = rng->bernoulli(rate) ? 0.0 : keep;
  return out;
}

NodeState drop_path(const NodeState &branch,
                    std::span<const std::size_t> atom_structure,
                    std::span<const double> scales) {
  const std::size_t n = atom_structure.size();
  std::vector<double> per_atom(n), per_row(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    per_atom[i] = scales[atom_structure[i]];
    per_row[3 * i] = per_row[3 * i + 1] = per_row[3 * i + 2] = per_atom[i];
  }
  return {mul(branch.l0, expand(per_row_column(per_atom), branch.l0.shape())),
          mul(branch.l1, expand(per_row_column(per_row), branch.l1.shape()))};
}

NodeState attention_layer(const Model &model, std::size_t layer,
                          const NodeState &state, const GraphBatch &batch,
                          const EdgeGeometry &edges, const Tensor &modulation,
                          std::span<const double> drop_scales) {
  const ParameterStore &p = model.params;
  const auto P = [&](std::string_view leaf) -> const Tensor & {
    return p.at(layer_name(layer, leaf));
  };
  const std::size_t d = model.config.embedding_dim;
  const std::size_t H = model.config.num_heads;
  const std::size_t N = batch.num_atoms();
  const std::size_t E = batch.num_edges();

  const AdaNormResult normed = ada_norm(layer_norm(state.l0), modulation);
  const Tensor &x = normed.features;

  const Tensor q = linear(x, P("q/w"), P("q/b"));
  const Tensor k = linear(x, P("k/w"), P("k/b"));
  const Tensor v = linear(x, P("v/w"), P("v/b"));
  const Tensor dk = silu(linear(edges.rbf, P("dk/w"), P("dk/b")));
  const Tensor dv = silu(linear(edges.rbf, P("dv/w"), P("dv/b")));

  // Attention weights per edge and head: silu(sum_c q_t k_s dk) * envelope.
  const Tensor heads = head_indicator(d, H);
  const Tensor score = matmul(
    mul(mul(gather_rows(q, batch.target), gather_rows(k, batch.source)), dk),
    heads);
  const Tensor attn = mul(silu(score), expand(edges.envelope, {E, H}));
  const Tensor attn_c = matmul(attn, heads, Trans::kNo, Trans::kYes);

  const Tensor vs = mul(gather_rows(v, batch.source), dv);
  const Tensor msg = mul(slice(vs, 1, 0, d), attn_c);
  const Tensor s1 = slice(vs, 1, d, d);
  const Tensor s2 = slice(vs, 1, 2 * d, d);

  const Tensor x_agg = scatter_sum(msg, batch.target, N);

  // Vector messages: s1 * L1_source + s2 * unit direction.
  const auto edge_rep = repeat3(std::vector<std::size_t>(
    [&] {
      std::vector<std::size_t> ids(E);
      for (std::size_t e = 0; e < E; ++e) ids[e] = e;
      return ids;
    }()));
  const Tensor unit_rows = expand(reshape(edges.unit, {3 * E, 1}), {3 * E, d});
  const Tensor vec_msg =
    add(mul(gather_rows(state.l1, expand3(batch.source)),
            gather_rows(s1, edge_rep)),
        mul(unit_rows, gather_rows(s2, edge_rep)));
  const Tensor vec_agg = scatter_sum(vec_msg, expand3(batch.target), 3 * N);

  const Tensor o = linear(x_agg, P("o/w"), P("o/b"));
  const Tensor vp = matmul(state.l1, P("vec/w"));
  const Tensor vec1 = slice(vp, 1, 0, d);
  const Tensor vec2 = slice(vp, 1, d, d);
  const Tensor vec3 = slice(vp, 1, 2 * d, d);
  const auto row_atom = iota3(N);
  const Tensor vec_dot = scatter_sum(mul(vec1, vec2), row_atom, N);

  NodeState branch;
  branch.l0 = add(mul(vec_dot, slice(o, 1, d, d)), slice(o, 1, 2 * d, d));
  branch.l1 = add(mul(vec3, gather_rows(slice(o, 1, 0, d), row_atom)), vec_agg);
  if (normed.gate.defined()) branch.l0 = mul(branch.l0, normed.gate);

  bool all_kept = true;
  for (double s : drop_scales) all_kept = all_kept && s == 1.0;
  if (!all_kept) branch = drop_path(branch, batch.atom_structure, drop_scales);

  return {add(state.l0, branch.l0), add(state.l1, branch.l1)};
}

// ---- forward ------------------------------------------------------------

ModelOutput forward(const Model &model, const GraphBatch &batch,
                    const Condition *condition, const ForwardOptions &options) {
  const ModelConfig &cfg = model.config;
  const ParameterStore &p = model.params;
  const std::size_t d = cfg.embedding_dim;
  const std::size_t N = batch.num_atoms();
  const std::size_t B = batch.num_structures;

  if (condition && !cfg.condition_enabled) {
    throw std::invalid_argument("model was built without conditioning");
  }
  Tensor cond_input;
  std::vector<double> cond_mask;
  bool any_present = false, all_present = true;
  if (condition) {
    if (condition->c.rows() != B || condition->c.cols() != d ||
        condition->present.size() != B) {
      throw ShapeError("condition " + condition->c.shape().str() + " for " +
                       std::to_string(B) + " structures, d=" + std::to_string(d));
    }
    for (auto f : condition->present) {
      any_present = any_present || f;
      all_present = all_present && f;
      cond_mask.push_back(f ? 1.0 : 0.0);
    }
    cond_input = condition->c;
    if (cfg.condition_null_token && !all_present) {
      std::vector<double> inv(B);
      for (std::size_t s = 0; s < B; ++s) inv[s] = 1.0 - cond_mask[s];
      cond_input =
        add(mul(cond_input, expand(per_row_column(cond_mask), {B, d})),
            mul(expand(per_row_column(inv), {B, d}),
                expand(p.at("condition/null"), {B, d})));
    }
  }
  // Null tokens keep AdaNorm active for every row.
  const bool use_condition =
    condition && (any_present || cfg.condition_null_token);
  const bool mask_rows = use_condition && !all_present && !cfg.condition_null_token;

  const double rate = options.drop_path_rate.value_or(cfg.drop_path_rate);
  const EdgeGeometry edges = edge_geometry(batch, cfg.cutoff, cfg.num_radial_basis);

  NodeState state{embed_atoms(model, batch.species), Tensor::zeros({3 * N, d})};
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    Tensor modulation;
    if (use_condition) {
      const Tensor h = silu(linear(cond_input, p.at(layer_name(l, "cond/w1")),
                                   p.at(layer_name(l, "cond/b1"))));
      Tensor mod = linear(h, p.at(layer_name(l, "cond/w2")),
                          p.at(layer_name(l, "cond/b2")));
      if (mask_rows) mod = mul(mod, expand(per_row_column(cond_mask), mod.shape()));
      modulation = gather_rows(mod, batch.atom_structure);
    }
    const auto scales = drop_path_scales(B, rate, options.rng, options.training);
    state = attention_layer(model, l, state, batch, edges, modulation, scales);
  }

  ModelOutput out;
  out.state.l0 = layer_norm(state.l0);
  out.state.l1 = state.l1;
  out.pooled = segment_sum_exact(out.state.l0, batch.atom_structure, B);
  out.c_out = linear(activation(linear(out.pooled, p.at("head_c/w1"),
                                       p.at("head_c/b1")),
                                cfg.linear_heads),
                     p.at("head_c/w2"), p.at("head_c/b2"));
  out.v = reshape(matmul(out.state.l1, p.at("head_v/w")), {N, 3});
  const Tensor y_atom =
    linear(activation(linear(out.state.l0, p.at("head_y/w1"), p.at("head_y/b1")),
                      cfg.linear_heads),
           p.at("head_y/w2"), p.at("head_y/b2"));
  out.y = segment_sum_exact(y_atom, batch.atom_structure, B);
  if (cfg.pooling == Pooling::kMean) {
    std::vector<double> inv(B);
    for (std::size_t s = 0; s < B; ++s) {
      inv[s] = 1.0 / static_cast<double>(batch.atom_count[s]);
    }
    out.y = mul(out.y, per_row_column(inv));
  }
  return out;
}

}  // namespace scd
