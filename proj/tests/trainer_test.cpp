// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <set>

#include "scd/checkpoint.hpp"
#include "scd/trainer.hpp"
#include "test_support.hpp"

namespace scd {
namespace {

namespace fs = std::filesystem;
using testing::random_molecule;

ModelConfig small_model() {
  ModelConfig m;
  m.embedding_dim = 8;
  m.num_layers = 1;
  m.num_heads = 2;
  m.num_radial_basis = 4;
  m.condition_enabled = true;
  m.init_seed = 3;
  return m;
}

std::vector<AtomicStructure> dataset(std::size_t n, std::uint64_t seed = 11) {
  Rng rng(seed);
  std::vector<AtomicStructure> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto s = random_molecule(3 + rng.index(4), rng);
    s.labels.energy = rng.normal();
    out.push_back(std::move(s));
  }
  return out;
}

TrainConfig small_train(ObjectiveKind kind = ObjectiveKind::kScd) {
  TrainConfig t;
  t.total_steps = 6;
  t.warmup_steps = 2;
  t.base_lr = 0.01;
  t.batch_size = 3;
  t.seed = 5;
  t.objective.kind = kind;
  t.drop_path_init = 0.1;
  t.drop_path_final = 0.0;
  return t;
}

fs::path scratch(const std::string &name) {
  const fs::path p = fs::temp_directory_path() / ("scd_trainer_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string file_bytes(const fs::path &p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void expect_same_tensors(const CheckpointData &a, const CheckpointData &b) {
  ASSERT_EQ(a.tensors.size(), b.tensors.size());
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    EXPECT_EQ(a.tensors[i].name, b.tensors[i].name);
    EXPECT_EQ(a.tensors[i].shape, b.tensors[i].shape);
    EXPECT_EQ(a.tensors[i].data, b.tensors[i].data) << a.tensors[i].name;
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig t;
  t.validate();
  EXPECT_EQ(t.base_lr, 0.005);
  EXPECT_EQ(t.weight_decay, 0.05);
  EXPECT_EQ(t.warmup_steps, 10000u);
  EXPECT_EQ(t.drop_path_init, 0.1);
  EXPECT_EQ(t.beta2, 0.999);
  t.warmup_steps = t.total_steps + 1;
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = TrainConfig{};
  t.base_lr = 0.0;
  EXPECT_THROW(t.validate(), std::invalid_argument);
  t = TrainConfig{};
  t.total_steps = 0;
  t.warmup_steps = 0;
  t.validate();
}

TEST(BatchIndices, EpochsArePermutationsWithPartialLastBatch) {
  const std::size_t n = 7, bs = 3;
  for (std::uint64_t epoch = 0; epoch < 3; ++epoch) {
    std::multiset<std::size_t> seen;
    std::vector<std::size_t> sizes;
    for (std::uint64_t b = epoch * 3; b < epoch * 3 + 3; ++b) {
      const auto idx = batch_indices(n, bs, 9, b);
      sizes.push_back(idx.size());
      seen.insert(idx.begin(), idx.end());
    }
    EXPECT_EQ(sizes, (std::vector<std::size_t>{3, 3, 1}));
    EXPECT_EQ(seen, (std::multiset<std::size_t>{0, 1, 2, 3, 4, 5, 6}));
  }
  EXPECT_EQ(batch_indices(n, bs, 9, 4), batch_indices(n, bs, 9, 4));
  EXPECT_NE(batch_indices(n, n, 9, 0), batch_indices(n, n, 9, 1));
}

TEST(DropPathSchedule, Linear) {
  TrainConfig t = small_train();
  t.total_steps = 10;
  t.drop_path_init = 0.2;
  t.drop_path_final = 0.1;
  EXPECT_EQ(drop_path_at(t, 0), 0.2);
  EXPECT_DOUBLE_EQ(drop_path_at(t, 5), 0.15);
  EXPECT_DOUBLE_EQ(drop_path_at(t, 10), 0.1);
}

TEST(Trainer, ZeroStepsKeepsInitialisation) {
  const Model init(small_model());
  TrainConfig t = small_train();
  t.total_steps = 0;
  t.warmup_steps = 0;
  Trainer tr(init, dataset(4), t);
  const auto dir = scratch("zero");
  tr.set_output_dir(dir);
  tr.run();
  const CheckpointData c = load_checkpoint(dir / "final.ckpt");
  EXPECT_EQ(c.step, 0u);
  Model fresh(small_model());
  expect_same_tensors(c, [&] {
    CheckpointData d;
    d.tensors = capture_parameters(fresh.params);
    return d;
  }());
}

TEST(Trainer, LogsEveryStepAndDecaysLr) {
  std::vector<MetricsRecord> recs;
  Trainer tr(Model(small_model()), dataset(5), small_train());
  tr.set_metrics_sink([&](const MetricsRecord &r) { recs.push_back(r); });
  tr.run();
  ASSERT_EQ(recs.size(), 6u);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(recs[i].step, i + 1);
    EXPECT_EQ(recs[i].phase, "pretrain");
    EXPECT_TRUE(std::isfinite(recs[i].loss));
    ASSERT_FALSE(recs[i].components.empty());
    EXPECT_EQ(recs[i].components[0].first, "denoise");
  }
  EXPECT_EQ(recs[1].lr, 0.01);
  EXPECT_EQ(recs[5].lr, 0.0);
  const std::string line = recs[0].to_json();
  EXPECT_NE(line.find("\"step\":1"), std::string::npos);
  EXPECT_NE(line.find("\"loss_components\":{\"denoise\""), std::string::npos);
  EXPECT_NE(line.find("\"wall_ms\""), std::string::npos);
}

TEST(Trainer, PretrainFreezesEmbeddings) {
  const Model init(small_model());
  Trainer tr(init, dataset(5), small_train());
  tr.run();
  const auto before = init.params.at("embedding/atom").data();
  const auto after = tr.model().params.at("embedding/atom").data();
  EXPECT_TRUE(std::equal(before.begin(), before.end(), after.begin()));
  const auto q0 = init.params.at("layer0/q/w").data();
  const auto q1 = tr.model().params.at("layer0/q/w").data();
  EXPECT_FALSE(std::equal(q0.begin(), q0.end(), q1.begin()));
}

TEST(Trainer, FinetuneUpdatesEmbeddings) {
  const Model init(small_model());
  TrainConfig t = small_train(ObjectiveKind::kFinetune);
  t.phase = Phase::kFinetune;
  Trainer tr(init, dataset(5), t);
  tr.run();
  const auto before = init.params.at("embedding/atom").data();
  const auto after = tr.model().params.at("embedding/atom").data();
  EXPECT_FALSE(std::equal(before.begin(), before.end(), after.begin()));
}

TEST(Trainer, ScdNeedsConditioning) {
  ModelConfig m = small_model();
  m.condition_enabled = false;
  EXPECT_THROW(Trainer(Model(m), dataset(3), small_train()), std::invalid_argument);
  EXPECT_THROW(Trainer(Model(small_model()), {}, small_train()), std::invalid_argument);
}

TEST(Trainer, SameSeedBitwiseIdenticalCheckpoints) {
  const auto a = scratch("det_a"), b = scratch("det_b");
  for (const auto &dir : {a, b}) {
    Trainer tr(Model(small_model()), dataset(5), small_train());
    tr.set_output_dir(dir);
    tr.run();
  }
  EXPECT_EQ(file_bytes(a / "final.ckpt"), file_bytes(b / "final.ckpt"));

  const auto c = scratch("det_c");
  TrainConfig other = small_train();
  other.seed = 6;
  Trainer tr(Model(small_model()), dataset(5), other);
  tr.set_output_dir(c);
  tr.run();
  EXPECT_NE(file_bytes(a / "final.ckpt"), file_bytes(c / "final.ckpt"));
}

void resume_matches(TrainConfig t, const std::string &tag) {
  t.total_steps = 7;
  t.checkpoint_interval = 3;
  const auto full = scratch(tag + "_full"), part = scratch(tag + "_part");
  {
    Trainer tr(Model(small_model()), dataset(5), t);
    tr.set_output_dir(full);
    tr.run();
  }
  {
    Trainer tr(Model(small_model()), dataset(5), t);
    tr.set_output_dir(part);
    tr.run(3);  // interrupted after the step-3 checkpoint
    EXPECT_FALSE(fs::exists(part / "final.ckpt"));
  }
  const CheckpointData mid = load_checkpoint(part / "step_3.ckpt");
  Trainer resumed = Trainer::resume(mid, small_model(), dataset(5), t);
  resumed.set_output_dir(part);
  resumed.run();
  EXPECT_EQ(file_bytes(full / "final.ckpt"), file_bytes(part / "final.ckpt"));
  EXPECT_EQ(file_bytes(full / "step_6.ckpt"), file_bytes(part / "step_6.ckpt"));
}

TEST(Trainer, ResumeMatchesUninterruptedScd) { resume_matches(small_train(), "scd"); }

TEST(Trainer, ResumeMatchesUninterruptedFinetuneWithEma) {
  TrainConfig t = small_train(ObjectiveKind::kFinetune);
  t.phase = Phase::kFinetune;
  t.objective.loss_ema = 0.1;
  t.objective.denoise_weight = 0.1;
  t.grad_accum = 2;
  resume_matches(t, "ft");
}

TEST(Trainer, ResumeRejectsMismatchedConfig) {
  Trainer tr(Model(small_model()), dataset(4), small_train());
  tr.run(2);
  const CheckpointData c = tr.checkpoint();
  ModelConfig other = small_model();
  other.embedding_dim = 16;
  try {
    Trainer::resume(c, other, dataset(4), small_train());
    FAIL() << "expected ConfigMismatchError";
  } catch (const ConfigMismatchError &e) {
    EXPECT_NE(std::string(e.what()).find("embedding_dim"), std::string::npos);
  }
  TrainConfig ft = small_train(ObjectiveKind::kFinetune);
  ft.phase = Phase::kFinetune;
  EXPECT_THROW(Trainer::resume(c, small_model(), dataset(4), ft), ConfigMismatchError);
}

TEST(Checkpoint, RoundTripBitwise) {
  TrainConfig t = small_train(ObjectiveKind::kFinetune);
  t.phase = Phase::kFinetune;
  t.objective.loss_ema = 0.3;
  Trainer tr(Model(small_model()), dataset(5), t);
  tr.run(2);
  const CheckpointData c = tr.checkpoint();
  const auto dir = scratch("roundtrip");
  save_checkpoint(dir / "c.ckpt", c);
  const CheckpointData d = load_checkpoint(dir / "c.ckpt");
  expect_same_tensors(c, d);
  EXPECT_EQ(d.phase, "finetune");
  EXPECT_EQ(d.step, 2u);
  EXPECT_EQ(d.model_config, c.model_config);
  EXPECT_EQ(d.optimizer_step, 2u);
  EXPECT_EQ(d.adamw.eps, 1e-8);
  EXPECT_EQ(d.rng_state, c.rng_state);
  ASSERT_TRUE(d.target_stats.has_value());
  EXPECT_EQ(d.target_stats->mean, c.target_stats->mean);
  EXPECT_EQ(d.target_stats->stddev, c.target_stats->stddev);
  EXPECT_EQ(d.loss_ema.value, c.loss_ema.value);
  // Optimiser moments are stored for every parameter.
  EXPECT_EQ(d.tensors.size(), 3 * tr.model().params.size());
}

class CheckpointErrors : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = scratch("errors");
    Model m(small_model());
    ckpt_.model_config = m.config;
    ckpt_.tensors = capture_parameters(m.params);
    save_checkpoint(dir_ / "good.ckpt", ckpt_);
    bytes_ = file_bytes(dir_ / "good.ckpt");
  }
  fs::path write(const std::string &name, const std::string &bytes) {
    std::ofstream(dir_ / name, std::ios::binary) << bytes;
    return dir_ / name;
  }
  fs::path dir_;
  CheckpointData ckpt_;
  std::string bytes_;
};

TEST_F(CheckpointErrors, VersionMismatch) {
  std::string b = bytes_;
  b[8] = 7;
  EXPECT_THROW(load_checkpoint(write("v.ckpt", b)), CheckpointVersionError);
}

TEST_F(CheckpointErrors, Truncated) {
  const auto p = write("t.ckpt", bytes_.substr(0, bytes_.size() - 5));
  EXPECT_THROW(load_checkpoint(p), CheckpointTruncatedError);
  EXPECT_THROW(load_checkpoint(write("t2.ckpt", bytes_.substr(0, 30))),
               CheckpointTruncatedError);
}

TEST_F(CheckpointErrors, NotACheckpoint) {
  EXPECT_THROW(load_checkpoint(write("x.ckpt", "hello world, not a ckpt")),
               CheckpointError);
  EXPECT_THROW(load_checkpoint(dir_ / "missing.ckpt"), CheckpointError);
}

TEST_F(CheckpointErrors, UnknownParameter) {
  CheckpointData c = ckpt_;
  c.tensors.push_back({"param/layer9/q/w", {1, 1}, {0.5}});
  save_checkpoint(dir_ / "u.ckpt", c);
  Model m(small_model());
  EXPECT_THROW(restore_parameters(m, load_checkpoint(dir_ / "u.ckpt")),
               UnknownParameterError);
}

TEST_F(CheckpointErrors, WrongModelConfigNamesShape) {
  ModelConfig other = small_model();
  other.embedding_dim = 12;
  other.num_heads = 3;
  Model m(other);
  try {
    restore_parameters(m, ckpt_);
    FAIL() << "expected ConfigMismatchError";
  } catch (const ConfigMismatchError &e) {
    EXPECT_NE(std::string(e.what()).find("embedding/atom"), std::string::npos)
      << e.what();
  }
}

TEST(Checkpoint, FinetuneHeadReset) {
  Trainer tr(Model(small_model()), dataset(5), small_train());
  tr.run();
  const CheckpointData pre = tr.checkpoint();
  const Model kept = model_from_checkpoint(pre, false, 1);
  const Model reset = model_from_checkpoint(pre, true, 1);
  std::size_t head = 0;
  for (const auto &e : tr.model().params.entries()) {
    const auto a = e.value.data();
    const auto b = reset.params.at(e.name).data();
    const auto k = kept.params.at(e.name).data();
    EXPECT_TRUE(std::equal(a.begin(), a.end(), k.begin())) << e.name;
    const bool same = std::equal(a.begin(), a.end(), b.begin());
    if (is_scalar_head_parameter(e.name)) {
      ++head;
      if (e.name.ends_with("w1") || e.name.ends_with("w2")) EXPECT_FALSE(same) << e.name;
    } else {
      EXPECT_TRUE(same) << e.name;
    }
  }
  EXPECT_EQ(head, 4u);
}

}  // namespace
}  // namespace scd
