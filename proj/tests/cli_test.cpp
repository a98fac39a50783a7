// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "scd/analysis.hpp"
#include "scd/checkpoint.hpp"
#include "scd/commands.hpp"
#include "scd/config.hpp"
#include "scd/synthetic.hpp"
#include "scd/xyz.hpp"

namespace scd {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string &name) {
  const fs::path p = fs::temp_directory_path() / ("scd_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path &p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// ---- config -------------------------------------------------------------

TEST(RunConfig, ParsesTypedKeys) {
  const RunConfig c = parse_run_config(R"(
# comment
model.embedding_dim = 32   # trailing comment
model.pooling = mean
train.total_steps = 50
train.warmup_steps = 5
train.phase = finetune
objective.kind = finetune
objective.reference_energies = 1:-0.5, 6:-37.8
objective.force_mode = backward
data.train = a.xyz
)");
  EXPECT_EQ(c.model.embedding_dim, 32u);
  EXPECT_EQ(c.model.pooling, Pooling::kMean);
  EXPECT_EQ(c.train.total_steps, 50u);
  EXPECT_EQ(c.train.phase, Phase::kFinetune);
  EXPECT_EQ(c.train.objective.kind, ObjectiveKind::kFinetune);
  EXPECT_EQ(c.train.objective.force_mode, ForceMode::kBackward);
  EXPECT_EQ(c.train.objective.reference_energies.at(6), -37.8);
  EXPECT_EQ(c.train_data, "a.xyz");
}

TEST(RunConfig, UnknownAndRepeatedKeysRejected) {
  try {
    parse_run_config("train.totl_steps = 5\n");
    FAIL();
  } catch (const ConfigError &e) {
    EXPECT_EQ(e.key(), "train.totl_steps");
  }
  EXPECT_THROW(parse_run_config("model.num_layers = 2\nmodel.num_layers = 3\n"), ConfigError);
  EXPECT_THROW(parse_run_config("just words\n"), ConfigError);
}

TEST(RunConfig, TypeErrorsCarryKeyPath) {
  try {
    parse_run_config("model.num_layers = two\n");
    FAIL();
  } catch (const ConfigError &e) {
    EXPECT_EQ(e.key(), "model.num_layers");
  }
  try {
    parse_run_config("objective.kind = magic\n");
    FAIL();
  } catch (const ConfigError &e) {
    EXPECT_EQ(e.key(), "objective.kind");
  }
  EXPECT_THROW(parse_run_config("model.linear_heads = yes\n"), ConfigError);
  EXPECT_THROW(parse_run_config("train.base_lr = -1\n"), ConfigError);
}

TEST(RunConfig, ScdNeedsConditioning) {
  try {
    parse_run_config("objective.kind = scd\nmodel.condition_enabled = false\n");
    FAIL();
  } catch (const ConfigError &e) {
    EXPECT_EQ(e.key(), "objective.kind");
  }
  parse_run_config("objective.kind = coord\nmodel.condition_enabled = false\n");
}

TEST(RunConfig, CrossFieldTrainErrorsNameKey) {
  try {
    parse_run_config("train.total_steps = 10\ntrain.warmup_steps = 20\n");
    FAIL();
  } catch (const ConfigError &e) {
    EXPECT_EQ(e.key(), "train.warmup_steps");
  }
}

TEST(RunConfig, ResolvedRoundTrip) {
  RunConfig c = parse_run_config(
    "model.cutoff = 4.25\ntrain.base_lr = 0.0031\nobjective.sigma_corr = 0.1\n"
    "objective.reference_energies = 8:-2.0625\noutput.dir = somewhere\n");
  const std::string text = format_run_config(c);
  const RunConfig again = parse_run_config(text);
  EXPECT_EQ(format_run_config(again), text);
  EXPECT_EQ(again.model, c.model);
  EXPECT_EQ(again.train.base_lr, 0.0031);
  // Every key appears in the resolved form.
  for (const auto &k : run_config_keys()) EXPECT_NE(text.find(k + " = "), std::string::npos) << k;
}

// ---- synthetic data -----------------------------------------------------

TEST(Morse, EquilibriumDimerHasZeroForce) {
  AtomicStructure s;
  s.species = {6, 6};
  s.positions = {{0, 0, 0}, {0, 0, 1.2}};
  const auto m = morse_energy_forces(s);
  EXPECT_EQ(m.energy, -1.0);
  for (const auto &f : m.forces) {
    for (double x : f) EXPECT_EQ(x, 0.0);
  }
}

TEST(Morse, ForcesMatchAutodiffGradient) {
  // Independent oracle: the same potential written with tensor ops and
  // differentiated by reverse mode.
  const auto data = generate(Family::kMorseClusters, 20, 4);
  const MorseParams p;
  for (const auto &s : data) {
    std::vector<double> flat;
    for (const auto &r : s.positions) flat.insert(flat.end(), r.begin(), r.end());
    const Tensor x = Tensor::parameter({s.size(), 3}, flat);
    Tensor energy = Tensor::scalar(0.0);
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = i + 1; j < s.size(); ++j) {
        const Tensor d = sub(slice(x, 0, j, 1), slice(x, 0, i, 1));
        const Tensor r = sqrt(sum(square(d)));
        const double D = p.depth * morse_depth_scale(s.species[i], s.species[j]);
        const Tensor e = exp(scale(add_scalar(r, -p.r0), -p.width));
        const Tensor one_minus = add_scalar(-e, 1.0);
        energy = add(energy, add_scalar(scale(square(one_minus), D), -D));
      }
    }
    EXPECT_NEAR(energy.item(), *s.labels.energy, 1e-12);
    const Tensor g = grad(energy, std::vector<Tensor>{x})[0];
    double net[3] = {0, 0, 0};
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (int k = 0; k < 3; ++k) {
        EXPECT_NEAR((*s.labels.forces)[i][k], -g.at(i, k), 1e-12);
        net[k] += (*s.labels.forces)[i][k];
      }
    }
    for (double n : net) EXPECT_NEAR(n, 0.0, 1e-12);
  }
}

TEST(Morse, PeriodicForcesMatchFiniteDifferences) {
  const auto data = generate(Family::kToyCrystals, 6, 2);
  MorseParams p;
  p.cutoff = 4.0;
  for (const auto &s : data) {
    ASSERT_TRUE(s.periodic());
    double net[3] = {0, 0, 0};
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (int k = 0; k < 3; ++k) {
        AtomicStructure up = s, down = s;
        up.positions[i][k] += 1e-6;
        down.positions[i][k] -= 1e-6;
        const double fd = -(morse_energy_forces(up, p).energy -
                            morse_energy_forces(down, p).energy) / 2e-6;
        EXPECT_NEAR((*s.labels.forces)[i][k], fd, 1e-6);
        net[k] += (*s.labels.forces)[i][k];
      }
    }
    for (double n : net) EXPECT_NEAR(n, 0.0, 1e-12);
  }
}

TEST(Synthetic, ConformerPairsAreDistinctConformers) {
  const double sigma_corr = ObjectiveConfig{}.sigma_corr;
  const auto data = generate(Family::kConformerPairs, 50, 7);
  ASSERT_EQ(data.size(), 100u);
  for (std::size_t m = 0; m < 50; ++m) {
    const auto &a = data[2 * m], &b = data[2 * m + 1];
    EXPECT_EQ(a.species, b.species);
    EXPECT_EQ(std::set<int>(a.species.begin() + 1, a.species.end()).size(), 4u);
    EXPECT_GT(rmsd(a.positions, b.positions), 3 * sigma_corr);
  }
}

TEST(Synthetic, PairComplexPlantsDependence) {
  const auto data = generate(Family::kPairComplexes, 20, 3);
  for (const auto &s : data) {
    ASSERT_TRUE(s.components.has_value());
    const auto a = extract_component(s, ComponentTag::kA).structure;
    const auto b = extract_component(s, ComponentTag::kB).structure;
    ASSERT_EQ(a.size(), 4u);
    ASSERT_EQ(b.size(), 4u);
    const double edge = pair_edge_length(a.positions);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = i + 1; j < 4; ++j) {
        double d2 = 0;
        for (int k = 0; k < 3; ++k) {
          d2 += std::pow(b.positions[i][k] - b.positions[j][k], 2);
        }
        EXPECT_NEAR(std::sqrt(d2), edge, 1e-12);
      }
    }
  }
}

TEST(Synthetic, RelaxedClustersSitNearMinima) {
  SyntheticOptions o;
  o.relax_steps = 2000;
  const auto relaxed = generate(Family::kMorseClusters, 10, 4, o);
  for (const auto &s : relaxed) {
    for (const auto &f : *s.labels.forces) {
      for (double x : f) EXPECT_LT(std::abs(x), 1e-3);
    }
  }
  // Relaxation only lowers the energy of the grown cluster.
  const auto raw = generate(Family::kMorseClusters, 10, 4);
  for (std::size_t i = 0; i < raw.size(); ++i) {
    ASSERT_EQ(raw[i].species, relaxed[i].species);
    EXPECT_LE(*relaxed[i].labels.energy, *raw[i].labels.energy);
  }
}

TEST(Synthetic, ThermalClustersFollowEquipartition) {
  // Near a minimum the mean excess energy is (3N - 6) kT / 2.
  SyntheticOptions o;
  o.min_atoms = o.max_atoms = 6;
  o.relax_steps = 2000;
  SyntheticOptions warm = o;
  warm.temperature = 0.01;
  warm.mc_sweeps = 400;
  double excess = 0.0;
  const int n = 200;
  for (int seed = 0; seed < n; ++seed) {
    const auto cold = generate(Family::kMorseClusters, 1, seed, o);
    const auto hot = generate(Family::kMorseClusters, 1, seed, warm);
    ASSERT_EQ(hot[0].species, cold[0].species);
    excess += *hot[0].labels.energy - *cold[0].labels.energy;
  }
  excess /= n;
  EXPECT_NEAR(excess, 6.0 * 0.01, 0.1 * 6.0 * 0.01);
}

TEST(Synthetic, DeterministicAndValid) {
  for (auto f : {Family::kConformerPairs, Family::kMorseClusters, Family::kToyCrystals,
                 Family::kPairComplexes}) {
    const auto a = generate(f, 5, 9), b = generate(f, 5, 9), c = generate(f, 5, 10);
    EXPECT_EQ(a, b) << family_name(f);
    EXPECT_NE(a, c) << family_name(f);
    for (const auto &s : a) s.validate();
    EXPECT_EQ(parse_family(family_name(f)), f);
  }
  EXPECT_THROW(parse_family("proteins"), std::invalid_argument);
  EXPECT_THROW(generate(Family::kMorseClusters, 0, 1), std::invalid_argument);
}

TEST(Synthetic, GenDataWritesReadableXyz) {
  const auto dir = scratch("gen");
  cmd_gen_data(Family::kPairComplexes, 4, 1, dir / "p.xyz");
  const auto back = read_xyz_file(dir / "p.xyz");
  EXPECT_EQ(back, generate(Family::kPairComplexes, 4, 1));
  cmd_gen_data(Family::kPairComplexes, 4, 1, dir / "q.xyz");
  EXPECT_EQ(slurp(dir / "p.xyz"), slurp(dir / "q.xyz"));
  EXPECT_ANY_THROW(cmd_gen_data(Family::kMorseClusters, 2, 1, dir / "no/such/dir/x.xyz"));
}

// ---- metrics ------------------------------------------------------------

TEST(Metrics, PerfectPrediction) {
  const std::vector<double> y{1, 3, 2, 5};
  const auto m = regression_metrics(y, y);
  EXPECT_EQ(m.mae, 0.0);
  EXPECT_EQ(m.rmse, 0.0);
  EXPECT_DOUBLE_EQ(*m.pearson, 1.0);
  EXPECT_DOUBLE_EQ(*m.spearman, 1.0);
}

TEST(Metrics, ConstantShift) {
  const std::vector<double> y{1, 3, 2, 5}, p{3.5, 5.5, 4.5, 7.5};
  const auto m = regression_metrics(p, y);
  EXPECT_DOUBLE_EQ(m.mae, 2.5);
  EXPECT_DOUBLE_EQ(*m.pearson, 1.0);
}

TEST(Metrics, HandListedPairs) {
  // Reference values worked by hand.
  const std::vector<double> pred{2.0, 1.0, 4.0, 3.0, 5.0}, label{1.0, 2.0, 3.0, 4.0, 6.0};
  const auto m = regression_metrics(pred, label);
  EXPECT_NEAR(m.mae, 1.0, 1e-15);
  EXPECT_NEAR(m.rmse, 1.0, 1e-15);
  // pred mean 3, label mean 3.2; sxy = 10, sxx = 10, syy = 14.8
  EXPECT_NEAR(*m.pearson, 10.0 / std::sqrt(10.0 * 14.8), 1e-15);
  // rank differences (1,1,1,1,0): rho = 1 - 6*4/(5*24) = 0.8
  EXPECT_NEAR(*m.spearman, 0.8, 1e-15);
}

TEST(Metrics, FractionalRanksAndDegenerate) {
  const std::vector<double> x{10, 20, 20, 5};
  EXPECT_EQ(fractional_ranks(x), (std::vector<double>{2, 3.5, 3.5, 1}));
  const std::vector<double> flat{1, 1, 1}, y{1, 2, 3};
  EXPECT_FALSE(pearson(flat, y).has_value());
  EXPECT_FALSE(regression_metrics(flat, y).pearson.has_value());
  EXPECT_NE(regression_metrics(flat, y).to_json().find("\"pearson\":null"), std::string::npos);
}

TEST(Extensivity, DegenerateCountsFlagged) {
  const std::vector<double> counts{5, 5, 5};
  const std::vector<double> emb{1, 2, 3, 4, 5, 6};
  const auto r = extensivity_report(counts, emb, 2);
  EXPECT_FALSE(r.norm_vs_n.has_value());
  EXPECT_FALSE(r.pc1_vs_n.has_value());
  EXPECT_FALSE(r.notes.empty());
  EXPECT_NE(r.to_json().find("null"), std::string::npos);
}

TEST(Extensivity, LinearInNIsPerfectlyCorrelated) {
  std::vector<double> counts, emb;
  for (int n = 1; n <= 6; ++n) {
    counts.push_back(n);
    emb.push_back(2.0 * n);
    emb.push_back(-1.0 * n);
  }
  const auto r = extensivity_report(counts, emb, 2);
  EXPECT_NEAR(*r.norm_vs_n, 1.0, 1e-12);
  EXPECT_NEAR(*r.pc1_vs_n, 1.0, 1e-12);
  EXPECT_NEAR(r.explained_variance_pc1, 1.0, 1e-12);
}

// ---- end-to-end commands -------------------------------------------------

std::string base_config(const fs::path &dir, const std::string &extra) {
  return "model.embedding_dim = 8\nmodel.num_layers = 1\nmodel.num_heads = 2\n"
         "model.num_radial_basis = 4\ntrain.warmup_steps = 10\ntrain.batch_size = 4\n"
         "output.dir = " + (dir / "run").string() + "\n" + extra;
}

TEST(Commands, PretrainSmokeRun) {
  const auto dir = scratch("smoke");
  cmd_gen_data(Family::kConformerPairs, 5, 1, dir / "conf.xyz");  // 10 frames
  const RunConfig cfg = parse_run_config(base_config(
    dir, "train.total_steps = 100\nobjective.kind = scd\ndata.train = " +
           (dir / "conf.xyz").string() + "\n"));
  std::ostringstream log;
  const RunSummary s = cmd_pretrain(cfg, std::nullopt, log);
  EXPECT_EQ(s.steps, 100u);
  std::ifstream metrics(dir / "run" / "metrics.jsonl");
  std::size_t lines = 0;
  for (std::string l; std::getline(metrics, l);) {
    ++lines;
    EXPECT_NE(l.find("\"loss\":"), std::string::npos);
  }
  EXPECT_EQ(lines, 100u);
  const CheckpointData c = load_checkpoint(s.final_checkpoint);
  EXPECT_EQ(c.step, 100u);
  Model m(c.model_config);
  restore_parameters(m, c);
  EXPECT_EQ(parse_run_config(slurp(dir / "run" / "resolved_config.txt")).train.total_steps,
            100u);
}

TEST(Commands, FinetuneEvaluateEmbed) {
  const auto dir = scratch("ft");
  cmd_gen_data(Family::kMorseClusters, 12, 2, dir / "m.xyz");
  const std::string data = "data.train = " + (dir / "m.xyz").string() + "\n";
  const RunConfig pre = parse_run_config(base_config(
    dir, "train.total_steps = 20\nobjective.kind = scd\n" + data));
  std::ostringstream log;
  const auto p = cmd_pretrain(pre, std::nullopt, log);

  RunConfig ft = parse_run_config(base_config(
    dir, "train.total_steps = 20\ntrain.phase = finetune\nobjective.kind = finetune\n"
         "objective.sigma_reg = 0\n" + data + "data.eval = " + (dir / "m.xyz").string() + "\n"));
  ft.output_dir = (dir / "ft").string();
  EXPECT_THROW(cmd_finetune(ft, std::nullopt, false, std::nullopt, log), ConfigError);
  const auto f = cmd_finetune(ft, p.final_checkpoint, true, std::nullopt, log);
  EXPECT_NE(log.str().find("head reset"), std::string::npos);
  ASSERT_TRUE(f.eval.has_value());

  const auto metrics = cmd_evaluate(f.final_checkpoint, dir / "m.xyz", "energy");
  EXPECT_EQ(metrics.n, 12u);
  EXPECT_DOUBLE_EQ(metrics.mae, f.eval->mae);
  EXPECT_THROW(cmd_evaluate(f.final_checkpoint, dir / "m.xyz", "property"),
               std::invalid_argument);
  cmd_gen_data(Family::kConformerPairs, 2, 2, dir / "c.xyz");
  std::ofstream(dir / "nolabel.xyz") << "1\nenergy=1.0\nH 0 0 0\n1\n\nH 0 0 0\n";
  EXPECT_THROW(cmd_evaluate(f.final_checkpoint, dir / "nolabel.xyz", "energy"),
               std::invalid_argument);

  const auto report = cmd_embed(f.final_checkpoint, dir / "m.xyz", dir / "emb.csv");
  EXPECT_EQ(report.n, 12u);
  std::ifstream csv(dir / "emb.csv");
  std::string header;
  std::getline(csv, header);
  EXPECT_EQ(header, "id,N,c0,c1,c2,c3,c4,c5,c6,c7");
  std::size_t rows = 0;
  for (std::string l; std::getline(csv, l);) ++rows;
  EXPECT_EQ(rows, 12u);

  RunConfig mismatch = ft;
  mismatch.model.embedding_dim = 16;
  mismatch.model.num_heads = 2;
  EXPECT_THROW(cmd_finetune(mismatch, p.final_checkpoint, false, std::nullopt, log),
               ConfigMismatchError);
}

TEST(Commands, PretrainResumeMatches) {
  const auto dir = scratch("resume");
  cmd_gen_data(Family::kConformerPairs, 4, 1, dir / "c.xyz");
  const std::string common = "train.total_steps = 12\ntrain.checkpoint_interval = 5\n"
                             "objective.kind = coord\ndata.train = " +
                             (dir / "c.xyz").string() + "\n";
  RunConfig a = parse_run_config(base_config(dir, common));
  a.output_dir = (dir / "a").string();
  std::ostringstream log;
  cmd_pretrain(a, std::nullopt, log);
  RunConfig b = a;
  b.output_dir = (dir / "b").string();
  const auto r = cmd_pretrain(b, dir / "a" / "step_5.ckpt", log);
  EXPECT_EQ(r.steps, 12u);
  EXPECT_EQ(slurp(dir / "a" / "final.ckpt"), slurp(dir / "b" / "final.ckpt"));
}

}  // namespace
}  // namespace scd
