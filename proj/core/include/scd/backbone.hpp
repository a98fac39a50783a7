// SPDX-License-Identifier: Apache-2.0
//
// Conditional equivariant transformer. Node state carries invariant L0
// features (N x d) and vector L1 features stored as a (3N x d) matrix whose
// row 3*i + k is Cartesian component k of atom i.
//
// Structures are batched as a disjoint union: one graph, per-atom structure
// ids, per-structure pooling.

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scd/neighbors.hpp"
#include "scd/parameters.hpp"
#include "scd/random.hpp"
#include "scd/structure.hpp"
#include "scd/tensor.hpp"

namespace scd {

enum class Pooling { kSum, kMean };

struct ModelConfig {
  std::size_t embedding_dim = 256;
  std::size_t num_layers = 8;
  std::size_t num_heads = 8;
  double cutoff = 5.0;
  std::size_t num_radial_basis = 32;
  Pooling pooling = Pooling::kSum;  // scalar head
  bool condition_enabled = true;
  double drop_path_rate = 0.0;
  // Identity instead of SiLU inside the embedding and scalar heads.
  bool linear_heads = false;
  // Last layer of every conditioning MLP starts at zero.
  bool zero_init_condition = true;
  // Absent conditions use a learned null embedding instead of switching
  // AdaNorm off.
  bool condition_null_token = false;
  std::uint64_t init_seed = 0;

  void validate() const;  // throws std::invalid_argument
  friend bool operator==(const ModelConfig &, const ModelConfig &) = default;
};

ModelConfig ct_reference_config();  // d=256, 8 layers, 8 heads
ModelConfig ct_small_config();      // d=128, 6 layers

struct Model {
  ModelConfig config;
  ParameterStore params;

  explicit Model(const ModelConfig &config);
  Model clone() const;
};

// Parameters of the scalar (y) head.
bool is_scalar_head_parameter(std::string_view name);
bool is_embedding_parameter(std::string_view name);
bool is_condition_parameter(std::string_view name);
// Fresh values for the scalar head, drawn from `rng`.
void reset_scalar_head(Model &model, Rng &rng);

// Positions become a tensor (optionally requiring grad, for conservative
// forces); the edge set is fixed at construction.
struct GraphBatch {
  std::size_t num_structures = 0;
  std::vector<int> species;
  std::vector<std::size_t> atom_structure;  // per atom
  std::vector<std::size_t> atom_count;      // per structure
  std::vector<std::size_t> atom_offset;     // per structure
  Tensor positions;                         // N x 3
  std::vector<std::size_t> source, target;  // per edge
  std::vector<Vec3> image_offset;           // shift . lattice, per edge
  bool has_images = false;

  std::size_t num_atoms() const { return species.size(); }
  std::size_t num_edges() const { return source.size(); }

  static GraphBatch build(std::span<const AtomicStructure> structures,
                          double cutoff, bool positions_require_grad = false);
};

struct NodeState {
  Tensor l0;  // N x d
  Tensor l1;  // 3N x d
};

// Per-structure conditioning vectors. Rows whose `present` flag is 0 take
// the unconditional path.
struct Condition {
  Tensor c;                           // B x d
  std::vector<std::uint8_t> present;  // B entries

  static Condition all_present(Tensor c);
};

struct ForwardOptions {
  bool training = false;
  std::optional<double> drop_path_rate;  // defaults to the model's
  Rng *rng = nullptr;                    // required when dropping paths
};

struct ModelOutput {
  Tensor c_out;   // B x d
  Tensor pooled;  // B x d, pre-head sum of final L0
  Tensor v;       // N x 3
  Tensor y;       // B x 1
  NodeState state;
};

ModelOutput forward(const Model &model, const GraphBatch &batch,
                    const Condition *condition = nullptr,
                    const ForwardOptions &options = {});

// ---- building blocks (exposed for tests) --------------------------------

Tensor embed_atoms(const Model &model, std::span<const int> species);

double cosine_envelope(double r, double cutoff);
// K exp-normal features times the cosine envelope.
std::vector<double> radial_basis(double r, double cutoff, std::size_t k);

struct EdgeGeometry {
  Tensor distance;  // E x 1
  Tensor unit;      // E x 3, pointing source -> target
  Tensor rbf;       // E x K, enveloped
  Tensor envelope;  // E x 1
};
EdgeGeometry edge_geometry(const GraphBatch &batch, double cutoff,
                           std::size_t k);

// normalized * (1 + scale) + shift. `modulation` is N x 3d holding
// (scale, shift, gamma) and may be undefined (plain layer norm).
// Returns the modulated features and the L0 gate 1 + tanh(gamma).
struct AdaNormResult {
  Tensor features;
  Tensor gate;  // undefined when unconditioned
};
AdaNormResult ada_norm(const Tensor &normalized, const Tensor &modulation);

// Per-structure residual multipliers: 0 with probability `rate`, else
// 1 / (1 - rate). All ones outside training.
std::vector<double> drop_path_scales(std::size_t num_structures, double rate,
                                     Rng *rng, bool training);
// Scales both channels of a residual branch by its structure's multiplier.
NodeState drop_path(const NodeState &branch,
                    std::span<const std::size_t> atom_structure,
                    std::span<const double> scales);

// One layer. `modulation` as in ada_norm, gathered per atom.
NodeState attention_layer(const Model &model, std::size_t layer,
                          const NodeState &state, const GraphBatch &batch,
                          const EdgeGeometry &edges, const Tensor &modulation,
                          std::span<const double> drop_scales);

}  // namespace scd
