// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "scd/objectives.hpp"
#include "test_support.hpp"

namespace scd {
namespace {

ModelConfig small() {
  ModelConfig cfg;
  cfg.embedding_dim = 16;
  cfg.num_layers = 2;
  cfg.num_heads = 4;
  cfg.num_radial_basis = 8;
  return cfg;
}

std::vector<CorruptionSample> make_batch(std::size_t n, Rng &rng,
                                         double sigma = 0.1) {
  std::vector<CorruptionSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto s = testing::random_molecule(4 + rng.index(5), rng);
    out.push_back(corrupt(s, sigma, 0.01, rng));
  }
  return out;
}

CorruptionSample rotated(const CorruptionSample &s, const Mat3 &R) {
  CorruptionSample r = s;
  r.clean = testing::rotated(s.clean, R);
  r.corrupted = testing::rotated(s.corrupted, R);
  for (Vec3 &e : r.noise) e = testing::rotate_vec(R, e);
  return r;
}

TEST(VectorMse, HandOracleFixesReduction) {
  const Tensor pred = Tensor::from_data({2, 3}, {1, 0, 0, 0, 1, 0});
  const std::vector<std::size_t> owner{0, 0}, count{2};
  const Tensor loss = vector_mse(pred, Tensor::zeros({2, 3}), owner, count);
  EXPECT_DOUBLE_EQ(loss.item(), 1.0 / 3.0);
  EXPECT_EQ(vector_mse(pred, pred, owner, count).item(), 0.0);
}

TEST(VectorMse, ZeroPredictionGivesSecondMoment) {
  Rng rng(1);
  std::vector<double> eps(30);
  double m = 0;
  for (double &x : eps) {
    x = rng.normal();
    m += x * x;
  }
  const std::vector<std::size_t> owner(10, 0), count{10};
  const Tensor loss = vector_mse(Tensor::zeros({10, 3}),
                                 Tensor::from_data({10, 3}, eps), owner, count);
  EXPECT_NEAR(loss.item(), m / 30.0, 1e-15);
}

TEST(VectorMse, SamplesWeighEquallyRegardlessOfSize) {
  // Sample 0: one atom with error 3 per entry; sample 1: 3 atoms, zero error.
  const Tensor pred = Tensor::from_data({4, 3}, {3, 3, 3, 0, 0, 0, 0, 0, 0, 0, 0, 0});
  const std::vector<std::size_t> owner{0, 1, 1, 1}, count{1, 3};
  EXPECT_DOUBLE_EQ(vector_mse(pred, Tensor::zeros({4, 3}), owner, count).item(),
                   4.5);
}

TEST(ConditionDropout, RateMatches) {
  Rng rng(2);
  const auto keep = sample_condition_mask(100000, 0.2, rng);
  std::size_t dropped = 0;
  for (auto k : keep) dropped += k == 0;
  const double frac = dropped / 1e5;
  EXPECT_GE(frac, 0.195);
  EXPECT_LE(frac, 0.205);
}

TEST(ScdLoss, FullDropoutEqualsCoord) {
  ModelConfig cfg = small();
  cfg.zero_init_condition = false;
  const Model m(cfg);
  Rng rng(3);
  const auto batch = make_batch(4, rng);
  ObjectiveConfig oc;
  oc.condition_dropout_rate = 1.0;
  Rng r(9);
  EXPECT_EQ(scd_loss(m, batch, oc, r).total.item(),
            coord_loss(m, batch).total.item());
}

TEST(ScdLoss, ZeroInitEqualsCoordWithBitwiseGradients) {
  const Model m(small());
  Rng rng(4);
  const auto batch = make_batch(4, rng);
  ObjectiveConfig oc;
  oc.condition_dropout_rate = 0.0;
  Rng r(9);

  auto &params = const_cast<ParameterStore &>(m.params);
  params.zero_grad();
  const auto coord = coord_loss(m, batch);
  backward(coord.total);
  std::vector<std::vector<double>> g_coord;
  for (const auto &e : params.entries()) {
    g_coord.emplace_back(e.value.grad().begin(), e.value.grad().end());
  }
  params.zero_grad();
  const auto scd = scd_loss(m, batch, oc, r);
  backward(scd.total);
  EXPECT_EQ(scd.total.item(), coord.total.item());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto &e = params.entries()[i];
    if (is_condition_parameter(e.name)) continue;
    const auto g = e.value.grad();
    ASSERT_EQ(g.size(), g_coord[i].size()) << e.name;
    for (std::size_t j = 0; j < g.size(); ++j) {
      ASSERT_EQ(g[j], g_coord[i][j]) << e.name << "[" << j << "]";
    }
  }
}

TEST(ScdLoss, RequiresConditioning) {
  ModelConfig cfg = small();
  cfg.condition_enabled = false;
  const Model m(cfg);
  Rng rng(5);
  const auto batch = make_batch(2, rng);
  ObjectiveConfig oc;
  EXPECT_THROW(scd_loss(m, batch, oc, rng), std::invalid_argument);
}

TEST(Losses, RotationAndTranslationInvariant) {
  ModelConfig cfg = small();
  cfg.zero_init_condition = false;
  const Model m(cfg);
  Rng rng(6);
  ObjectiveConfig oc;
  oc.condition_dropout_rate = 0.3;
  for (int trial = 0; trial < 5; ++trial) {
    const auto batch = make_batch(3, rng);
    const Mat3 R = testing::random_rotation(rng, trial % 2 == 0);
    std::vector<CorruptionSample> moved;
    for (const auto &s : batch) {
      auto r = rotated(s, R);
      for (auto *v : {&r.clean, &r.corrupted}) {
        for (Vec3 &p : v->positions) p[0] += 3.7, p[2] -= 1.1;
      }
      moved.push_back(r);
    }
    EXPECT_NEAR(coord_loss(m, batch).total.item(),
                coord_loss(m, moved).total.item(), 1e-9);
    Rng a(trial), b(trial);
    EXPECT_NEAR(scd_loss(m, batch, oc, a).total.item(),
                scd_loss(m, moved, oc, b).total.item(), 1e-9);
  }
}

TEST(Losses, NonNegativeAndZeroOnlyAtMatch) {
  const Model m(small());
  Rng rng(7);
  auto batch = make_batch(3, rng);
  EXPECT_GT(coord_loss(m, batch).total.item(), 0.0);
  // Make eps equal the model's own prediction.
  std::vector<AtomicStructure> views;
  for (const auto &s : batch) views.push_back(s.corrupted);
  const auto out = forward(m, GraphBatch::build(views, 5.0));
  std::size_t row = 0;
  for (auto &s : batch) {
    for (Vec3 &e : s.noise) {
      for (int k = 0; k < 3; ++k) e[k] = out.v.at(row, k);
      ++row;
    }
  }
  EXPECT_EQ(coord_loss(m, batch).total.item(), 0.0);
}

AtomicStructure tagged_pair(Rng &rng, std::size_t na, std::size_t nb) {
  AtomicStructure s = testing::random_molecule(na + nb, rng);
  std::vector<ComponentTag> tags(na, ComponentTag::kA);
  tags.insert(tags.end(), nb, ComponentTag::kB);
  s.components = tags;
  return s;
}

TEST(PairConditional, Errors) {
  const Model m(small());
  Rng rng(8);
  ObjectiveConfig oc;
  oc.direction = PairDirection::kEmbedBDenoiseA;
  std::vector<AtomicStructure> only_a{tagged_pair(rng, 4, 0)};
  EXPECT_THROW(pair_conditional_loss(m, only_a, oc, rng), StructureError);
  std::vector<AtomicStructure> untagged{testing::random_molecule(4, rng)};
  EXPECT_THROW(pair_conditional_loss(m, untagged, oc, rng), std::invalid_argument);
}

TEST(PairConditional, ZeroCorruptionIsMeanSquareOnDenoisedAtoms) {
  ModelConfig cfg = small();
  cfg.zero_init_condition = false;
  const Model m(cfg);
  Rng rng(9);
  const std::vector<AtomicStructure> batch{tagged_pair(rng, 3, 4)};
  ObjectiveConfig oc;
  oc.sigma_corr = 0.0;
  oc.sigma_reg = 0.0;
  oc.condition_dropout_rate = 0.0;
  oc.direction = PairDirection::kEmbedBDenoiseA;
  Rng r(1);
  const double loss = pair_conditional_loss(m, batch, oc, r).total.item();

  const auto a = extract_component(batch[0], ComponentTag::kA).structure;
  const auto b = extract_component(batch[0], ComponentTag::kB).structure;
  const std::vector<AtomicStructure> bs{b}, as{a};
  const auto c = forward(m, GraphBatch::build(bs, 5.0)).c_out;
  const Condition cond = Condition::all_present(c);
  const auto v = forward(m, GraphBatch::build(as, 5.0), &cond).v;
  double ms = 0;
  for (double x : v.data()) ms += x * x;
  EXPECT_NEAR(loss, ms / v.numel(), 1e-15);
}

TEST(PairConditional, MirrorTaggedBatchesAgree) {
  ModelConfig cfg = small();
  cfg.zero_init_condition = false;
  const Model m(cfg);
  Rng rng(10);
  std::vector<AtomicStructure> batch, mirror;
  for (int i = 0; i < 3; ++i) {
    batch.push_back(tagged_pair(rng, 3, 4));
    AtomicStructure s = batch.back();
    for (auto &t : *s.components) {
      t = t == ComponentTag::kA ? ComponentTag::kB : ComponentTag::kA;
    }
    mirror.push_back(s);
  }
  ObjectiveConfig ab, ba;
  ab.direction = PairDirection::kEmbedADenoiseB;
  ba.direction = PairDirection::kEmbedBDenoiseA;
  Rng r1(5), r2(5);
  EXPECT_EQ(pair_conditional_loss(m, batch, ab, r1).total.item(),
            pair_conditional_loss(m, mirror, ba, r2).total.item());
}

TEST(ForceEnergy, BackwardForcesOfQuadraticSurrogate) {
  Rng rng(11);
  const auto s = testing::random_molecule(6, rng);
  std::vector<double> p;
  for (const Vec3 &r : s.positions) p.insert(p.end(), r.begin(), r.end());
  const Tensor pos = Tensor::parameter({6, 3}, p);
  std::vector<std::size_t> is, js;
  for (std::size_t i = 0; i < 6; ++i) {
    for (std::size_t j = i + 1; j < 6; ++j) is.push_back(i), js.push_back(j);
  }
  const Tensor y = sum(square(sub(gather_rows(pos, is), gather_rows(pos, js))));
  const std::vector<Tensor> in{pos};
  const Tensor f = scale(grad(y, in)[0], -1.0);
  for (std::size_t i = 0; i < 6; ++i) {
    for (int k = 0; k < 3; ++k) {
      double expect = 0;
      for (std::size_t j = 0; j < 6; ++j) {
        expect -= 2.0 * (s.positions[i][k] - s.positions[j][k]);
      }
      EXPECT_NEAR(f.at(i, k), expect, 1e-9);
    }
  }
}

std::vector<AtomicStructure> labelled_batch(const Model &m, Rng &rng,
                                            ForceMode mode) {
  std::vector<AtomicStructure> batch{testing::random_molecule(5, rng),
                                     testing::random_molecule(6, rng)};
  const auto p = predict_energy_forces(m, batch, mode, false);
  std::size_t row = 0;
  for (std::size_t s = 0; s < batch.size(); ++s) {
    batch[s].labels.energy = p.energy.at(s, 0);
    std::vector<Vec3> f;
    for (std::size_t i = 0; i < batch[s].size(); ++i, ++row) {
      f.push_back({p.forces.at(row, 0), p.forces.at(row, 1), p.forces.at(row, 2)});
    }
    batch[s].labels.forces = f;
  }
  return batch;
}

TEST(ForceEnergy, PerfectLabelsGiveZero) {
  const Model m(small());
  Rng rng(12);
  for (ForceMode mode : {ForceMode::kForward, ForceMode::kBackward}) {
    const auto batch = labelled_batch(m, rng, mode);
    ObjectiveConfig oc;
    oc.force_mode = mode;
    EXPECT_EQ(force_energy_loss(m, batch, oc).total.item(), 0.0);
  }
}

TEST(ForceEnergy, WeightedCombination) {
  const Model m(small());
  Rng rng(13);
  auto batch = labelled_batch(m, rng, ForceMode::kForward);
  *batch[0].labels.energy += 0.3;
  (*batch[1].labels.forces)[2][1] -= 0.7;
  ObjectiveConfig oc;
  oc.energy_weight = 0.8;
  oc.force_weight = 0.2;
  const auto r = force_energy_loss(m, batch, oc);
  const double e = r.components[0].second, f = r.components[1].second;
  EXPECT_NEAR(e, 0.3 * 0.3 / 2.0, 1e-12);
  EXPECT_NEAR(f, 0.7 * 0.7 / (3.0 * 6.0) / 2.0, 1e-12);
  EXPECT_DOUBLE_EQ(r.total.item(), 0.8 * e + 0.2 * f);
  batch[0].labels.forces.reset();
  EXPECT_THROW(force_energy_loss(m, batch, oc), std::invalid_argument);
}

TEST(ForceEnergy, ConservativeForcesSumToZeroAndIgnoreTranslation) {
  const Model m(small());
  Rng rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    auto s = testing::random_molecule(8, rng);
    testing::snap_to_grid(s);
    auto t = s;
    for (Vec3 &p : t.positions) p[0] += 16.0, p[1] -= 2.5;
    const std::vector<AtomicStructure> a{s}, b{t};
    const auto fa = predict_energy_forces(m, a, ForceMode::kBackward, false).forces;
    const auto fb = predict_energy_forces(m, b, ForceMode::kBackward, false).forces;
    for (int k = 0; k < 3; ++k) {
      double net = 0;
      for (std::size_t i = 0; i < s.size(); ++i) net += fa.at(i, k);
      EXPECT_LT(std::abs(net), 1e-9);
    }
    for (std::size_t i = 0; i < fa.numel(); ++i) {
      ASSERT_EQ(fa.data()[i], fb.data()[i]);
    }
  }
}

TEST(Finetune, ReferenceEnergySubtraction) {
  AtomicStructure h2;
  h2.species = {1, 1};
  h2.positions = {{0, 0, 0}, {0.74, 0, 0}};
  h2.labels.energy = -1.6;
  ObjectiveConfig oc;
  oc.subtract_reference_energy = true;
  oc.reference_energies = {{1, -0.5}};
  const std::vector<AtomicStructure> train{h2};
  const auto stats = TargetStats::fit(train, oc);
  EXPECT_NEAR(stats.raw_target(h2), -0.6, 1e-15);
  EXPECT_NEAR(stats.destandardize(stats.standardize(h2), h2), -1.6, 1e-15);
}

TEST(Finetune, StandardizationAndMissingTarget) {
  std::vector<AtomicStructure> train(4);
  const double labels[] = {1.0, 2.0, 3.0, 6.0};
  for (int i = 0; i < 4; ++i) {
    train[i].species = {6};
    train[i].positions = {{0, 0, 0}};
    train[i].labels.property = labels[i];
  }
  ObjectiveConfig oc;
  oc.target_key = "property";
  const auto st = TargetStats::fit(train, oc);
  EXPECT_DOUBLE_EQ(st.mean, 3.0);
  EXPECT_DOUBLE_EQ(st.stddev, std::sqrt((4.0 + 1.0 + 0.0 + 9.0) / 4.0));
  oc.target_key = "energy";
  EXPECT_THROW(TargetStats::fit(train, oc), std::invalid_argument);
}

TEST(Finetune, PerfectPredictionAndLinearCombination) {
  const Model m(small());
  Rng rng(15);
  std::vector<AtomicStructure> batch{testing::random_molecule(5, rng),
                                     testing::random_molecule(7, rng)};
  const auto y = forward(m, GraphBatch::build(batch, 5.0)).y;
  for (std::size_t s = 0; s < 2; ++s) batch[s].labels.energy = y.at(s, 0);
  TargetStats stats;  // identity standardization
  ObjectiveConfig oc;
  oc.kind = ObjectiveKind::kFinetune;
  oc.sigma_reg = 0.0;
  LossEma ema;
  Rng r(0);
  EXPECT_EQ(finetune_loss(m, batch, oc, stats, ema, r).total.item(), 0.0);

  oc.sigma_reg = 0.02;
  oc.denoise_weight = 0.1;
  Rng r2(0);
  const auto res = finetune_loss(m, batch, oc, stats, ema, r2);
  ASSERT_EQ(res.components.size(), 2u);
  EXPECT_DOUBLE_EQ(res.total.item(),
                   res.components[0].second + 0.1 * res.components[1].second);
}

TEST(Finetune, LossEmaDividesPrimary) {
  LossEma ema{0.05, std::nullopt};
  EXPECT_EQ(ema.denominator(4.0), 4.0);
  ema.update(4.0);
  ema.update(2.0);
  EXPECT_DOUBLE_EQ(*ema.value, 0.95 * 4.0 + 0.05 * 2.0);
  LossEma tiny{0.05, 0.0};
  EXPECT_EQ(tiny.denominator(1.0), 1e-8);
}

}  // namespace
}  // namespace scd
