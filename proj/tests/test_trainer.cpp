#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

#include "pinc/checkpoint.hpp"
#include "pinc/trainer.hpp"
#include "pinc/verify.hpp"
#include "test_util.hpp"

using namespace pinc;
namespace fs = std::filesystem;

namespace {

NormalizedCloud small_sphere() {
  Rng rng(3);
  const PointCloud c = synth_cloud(AnalyticShape::sphere(0.5), 300, rng);
  return prepare_cloud(c.points, c.normals);
}

TrainConfig small_config(std::int64_t iters) {
  TrainConfig t;
  t.iterations = iters;
  t.surface_batch = 32;
  t.n_global = 16;
  t.seed = 17;
  return t;
}

const MLPConfig kSmallNet{2, 16, 1, 3, 7, 100.0};

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("pinc_trainer_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST(Schedule, LearningRate) {
  const Schedule s;
  EXPECT_EQ(lr_at(0, s), 1e-3);
  EXPECT_EQ(lr_at(1999, s), 1e-3);
  EXPECT_NEAR(lr_at(4000, s), 9.801e-4, 1e-18);
  Schedule bad;
  bad.decay = 1.5;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = {};
  bad.decay_every = 0;
  EXPECT_THROW(bad.validate(), ConfigError);
  bad = {};
  bad.lr0 = 0.0;
  EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(Adam, ZeroGradientLeavesParamsAndDecaysMoments) {
  std::vector<double> p = {1.0, -2.0};
  AdamState st(2);
  st.m = {0.5, -0.5};
  st.v = {0.25, 0.25};
  const std::vector<double> g = {0.0, 0.0};
  const auto before = p;
  adam_step(p, g, st, 1e-3);
  EXPECT_EQ(st.m[0], 0.45);
  EXPECT_NEAR(st.v[0], 0.24975, 1e-17);
  // With nonzero moments the parameters still move; with fresh moments they do not.
  AdamState fresh(2);
  std::vector<double> q = before;
  adam_step(q, g, fresh, 1e-3);
  EXPECT_EQ(q, before);
  EXPECT_EQ(fresh.m, (std::vector<double>{0, 0}));
}

TEST(Adam, ConstantGradientStepApproachesLearningRate) {
  std::vector<double> p = {0.0};
  AdamState st(1);
  const std::vector<double> g = {3.7};
  double last = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const double before = p[0];
    adam_step(p, g, st, 1e-2);
    last = before - p[0];
  }
  EXPECT_NEAR(last, 1e-2, 1e-8);
}

TEST(Adam, NormalizedSgdLimit) {
  // beta1 = 0, beta2 -> 1: the step is lr * g / rms(g history).
  std::vector<double> p = {0.0};
  AdamState st(1);
  st.beta1 = 0.0;
  st.beta2 = 1.0 - 1e-6;
  st.eps = 0.0;
  const std::vector<double> g1 = {2.0};
  adam_step(p, g1, st, 0.1);
  EXPECT_NEAR(p[0], -0.1, 1e-9);
  const std::vector<double> g2 = {-1.0};
  adam_step(p, g2, st, 0.1);
  // rms over {2, -1} is sqrt(2.5).
  EXPECT_NEAR(p[0], -0.1 + 0.1 / std::sqrt(2.5), 1e-6);
}

TEST(Adam, NonFiniteGradientNamesIteration) {
  std::vector<double> p = {0.0, 0.0};
  AdamState st(2);
  const std::vector<double> g = {0.0, NAN};
  try {
    adam_step(p, g, st, 1e-3, 41);
    FAIL();
  } catch (const NumericFault& e) {
    EXPECT_NE(std::string(e.what()).find("41"), std::string::npos);
  }
  EXPECT_EQ(st.step, 0u);
}

TEST(Checkpoint, BitExactRoundTrip) {
  Checkpoint c;
  c.config = kSmallNet;
  c.params = init_kaiming(kSmallNet, 2);
  c.params[0] = -0.0;
  c.params[1] = 1e-310;
  c.affine = Affine{{0.1, -2.0, 3.5}, 0.25};
  c.adam = AdamState(c.params.size());
  c.adam->m[3] = 0.125;
  c.adam->step = 77;
  c.iteration = 77;
  const std::string bytes = encode_checkpoint(c);
  EXPECT_EQ(bytes.substr(0, 5), "PINC1");
  const Checkpoint d = decode_checkpoint(bytes);
  EXPECT_EQ(d.config, c.config);
  EXPECT_EQ(std::memcmp(d.params.data(), c.params.data(), c.params.size() * sizeof(double)), 0);
  EXPECT_EQ(d.affine, c.affine);
  EXPECT_EQ(d.adam, c.adam);
  EXPECT_EQ(encode_checkpoint(d), bytes);
}

TEST(Checkpoint, MalformedInputIsRejected) {
  Checkpoint c;
  c.config = kSmallNet;
  c.params = init_kaiming(kSmallNet, 2);
  const std::string bytes = encode_checkpoint(c);
  EXPECT_THROW(decode_checkpoint("PINC2"), InputError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), InputError);
  EXPECT_THROW(decode_checkpoint(bytes + "JUNK"), InputError);
  std::string wrong = bytes;
  wrong[5] = 9;  // depth byte: parameter count no longer matches
  EXPECT_THROW(decode_checkpoint(wrong), InputError);
  EXPECT_THROW(load_checkpoint("/nonexistent/ckpt.bin"), InputError);
}

TEST(Checkpoint, SaveIsAtomic) {
  const fs::path d = scratch("atomic");
  Checkpoint c;
  c.config = kSmallNet;
  c.params = init_kaiming(kSmallNet, 2);
  save_checkpoint(d / "a.ckpt", c);
  EXPECT_TRUE(fs::exists(d / "a.ckpt"));
  EXPECT_FALSE(fs::exists(d / "a.ckpt.tmp"));
  EXPECT_EQ(load_checkpoint(d / "a.ckpt").params, c.params);
}

TEST(Train, ZeroIterationsReturnsInitialParams) {
  const auto nc = small_sphere();
  const TrainConfig t = small_config(0);
  const auto r = train(nc.cloud, nc.affine, kSmallNet, t);
  EXPECT_EQ(r.params, initial_params(kSmallNet, t));
  EXPECT_TRUE(r.log.empty());
}

TEST(Train, SeededRunsAreByteIdentical) {
  const auto nc = small_sphere();
  const TrainConfig t = small_config(30);
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  train(nc.cloud, nc.affine, kSmallNet, t, {a / "model.ckpt", a / "loss.csv"});
  train(nc.cloud, nc.affine, kSmallNet, t, {b / "model.ckpt", b / "loss.csv"});
  EXPECT_EQ(read_file(a / "model.ckpt"), read_file(b / "model.ckpt"));
  EXPECT_EQ(read_file(a / "loss.csv"), read_file(b / "loss.csv"));
  const std::string csv = read_file(a / "loss.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n') + 1), loss_csv_header());
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 31);
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  const auto nc = small_sphere();
  TrainConfig t = small_config(12);
  const auto full = train(nc.cloud, nc.affine, kSmallNet, t);
  t.iterations = 11;
  const auto part = train(nc.cloud, nc.affine, kSmallNet, t);
  const Checkpoint ck = decode_checkpoint(encode_checkpoint(part.final_checkpoint));
  Trainer resumed(nc.cloud, ck, t);
  EXPECT_EQ(resumed.iteration(), 11);
  const LossBreakdown b = resumed.step();
  EXPECT_EQ(b.total, full.log.back().total);
  EXPECT_EQ(resumed.params(), full.params);
}

TEST(Train, LossDecreasesOnSmallRun) {
  const auto nc = small_sphere();
  const auto r = train(nc.cloud, nc.affine, kSmallNet, small_config(300));
  EXPECT_LT(r.log.back().boundary, r.log.front().boundary);
}

TEST(Train, PeriodicCheckpointsAreValid) {
  const auto nc = small_sphere();
  TrainConfig t = small_config(10);
  t.checkpoint_every = 4;
  const fs::path d = scratch("periodic");
  int seen = 0;
  train(nc.cloud, nc.affine, kSmallNet, t, {d / "m.ckpt", d / "loss.csv"}, [&](std::int64_t i, const LossBreakdown&) {
    if (i == 8) {
      // Written after iteration index 7 completed.
      EXPECT_EQ(load_checkpoint(d / "m.ckpt").iteration, 8u);
      ++seen;
    }
  });
  EXPECT_EQ(seen, 1);
  EXPECT_EQ(load_checkpoint(d / "m.ckpt").iteration, 10u);
}

TEST(Train, RejectsBadConfigs) {
  const auto nc = small_sphere();
  TrainConfig t = small_config(1);
  t.log_every = 0;
  EXPECT_THROW(train(nc.cloud, nc.affine, kSmallNet, t), ConfigError);
  MLPConfig four = kSmallNet;
  four.out_dim = 4;
  EXPECT_THROW(train(nc.cloud, nc.affine, four, small_config(1)), ConfigError);
  PointCloud empty;
  EXPECT_THROW(train(empty, std::nullopt, kSmallNet, small_config(1)), InputError);
}

TEST(Train, EikonalSplitRuns) {
  const auto nc = small_sphere();
  TrainConfig t = small_config(5);
  t.loss.mode.formulation = Formulation::eikonal_split;
  MLPConfig net = kSmallNet;
  net.out_dim = 4;
  const auto r = train(nc.cloud, nc.affine, net, t);
  EXPECT_EQ(r.log.size(), 5u);
  EXPECT_EQ(r.log.back().curl, 0.0);
}
