#pragma once

// Optimization loop: sampling, loss, Adam, logging and checkpoints.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pinc/checkpoint.hpp"
#include "pinc/common.hpp"
#include "pinc/io.hpp"
#include "pinc/loss.hpp"
#include "pinc/network.hpp"
#include "pinc/optim.hpp"
#include "pinc/rng.hpp"
#include "pinc/sampler.hpp"

namespace pinc {

enum class InitKind { geometric, kaiming };

struct TrainConfig {
  std::int64_t iterations = 10000;
  Schedule schedule;
  std::uint64_t seed = 0;
  LossSettings loss;
  std::int64_t checkpoint_every = 1000;  // 0 disables periodic checkpoints
  std::int64_t log_every = 1;
  std::size_t surface_batch = 4096;
  std::size_t n_global = 2000;
  double eta = kDomainHalfWidth;
  InitKind init = InitKind::geometric;
  double init_radius = 0.5;
  int threads = 1;

  void validate() const {
    if (iterations < 0) throw ConfigError("iterations must be non-negative");
    schedule.validate();
    loss.weights.validate();
    if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
    if (log_every < 1) throw ConfigError("log_every must be at least 1");
    if (surface_batch < 1) throw ConfigError("surface batch must be positive");
    if (!(eta > 0.0)) throw ConfigError("eta must be positive");
    if (!(init_radius > 0.0)) throw ConfigError("init radius must be positive");
    if (threads < 1) throw ConfigError("thread count must be positive");
  }
};

inline std::vector<double> initial_params(const MLPConfig& net, const TrainConfig& cfg) {
  const std::uint64_t seed = Rng(cfg.seed).substream(stream::kInit)();
  return cfg.init == InitKind::geometric ? init_geometric(net, seed, cfg.init_radius) : init_kaiming(net, seed);
}

inline std::string loss_csv_header() { return "iter,boundary,grad_match,aux_match,curl,area,total\n"; }

inline std::string loss_csv_row(std::int64_t iter, const LossBreakdown& b) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", static_cast<long long>(iter),
                b.boundary, b.grad_match, b.aux_match, b.curl, b.area, b.total);
  return buf;
}

/// Owns parameters and optimizer state for one training run. Iteration i draws
/// its batches from substreams keyed by i, so a resumed run replays exactly.
class Trainer {
 public:
  Trainer(const PointCloud& cloud, const MLPConfig& net_cfg, const TrainConfig& cfg)
      : cloud_(&cloud), net_(net_cfg), cfg_(cfg) {
    cfg_.validate();
    if (cloud.points.empty()) throw InputError("training cloud is empty");
    if (net_cfg.out_dim != cfg.loss.mode.out_dim()) {
      throw ConfigError("network output dimension does not match the loss formulation");
    }
    params_ = initial_params(net_cfg, cfg_);
    adam_ = AdamState(params_.size());
    grad_.resize(params_.size());
  }

  /// Resumes from a checkpoint that carries optimizer state.
  Trainer(const PointCloud& cloud, const Checkpoint& ckpt, const TrainConfig& cfg) : Trainer(cloud, ckpt.config, cfg) {
    if (!ckpt.adam) throw InputError("checkpoint has no optimizer state to resume from");
    params_ = ckpt.params;
    adam_ = *ckpt.adam;
  }

  std::int64_t iteration() const { return static_cast<std::int64_t>(adam_.step); }
  const std::vector<double>& params() const { return params_; }
  const AdamState& adam() const { return adam_; }
  const Mlp& net() const { return net_; }

  /// Loss at the current parameters, followed by one update.
  LossBreakdown step() {
    const std::int64_t it = iteration();
    const auto key = static_cast<std::uint64_t>(it);
    Rng base(cfg_.seed);
    Rng srng = base.substream(stream::kSurface).substream(key);
    Rng lrng = base.substream(stream::kLocal).substream(key);
    Rng grng = base.substream(stream::kGlobal).substream(key);
    const SurfaceBatch surf = sample_surface_batch(*cloud_, cfg_.surface_batch, srng);
    const CollocationBatch col = sample_collocation(*cloud_, surf, cfg_.n_global, cfg_.eta, lrng, grng);
    const std::vector<Vec3> colloc = col.all();
    const LossBreakdown b = loss_and_gradient(net_, params_, surf.points, colloc, cfg_.loss, grad_, cfg_.threads);
    adam_step(params_, grad_, adam_, lr_at(it, cfg_.schedule), it);
    return b;
  }

  Checkpoint checkpoint(const std::optional<Affine>& affine) const {
    Checkpoint c;
    c.config = net_.config();
    c.params = params_;
    c.affine = affine;
    c.adam = adam_;
    c.iteration = adam_.step;
    return c;
  }

 private:
  const PointCloud* cloud_;
  Mlp net_;
  TrainConfig cfg_;
  std::vector<double> params_;
  AdamState adam_;
  std::vector<double> grad_;
};

struct TrainOutputs {
  std::filesystem::path checkpoint;  // final checkpoint; empty when not written
  std::filesystem::path loss_csv;
};

struct TrainResult {
  std::vector<double> params;
  std::vector<LossBreakdown> log;  // one entry per iteration
  Checkpoint final_checkpoint;
};

/// Runs cfg.iterations steps. When `out.checkpoint` is set, checkpoints are
/// written atomically every cfg.checkpoint_every iterations and at the end;
/// the loss CSV is rewritten alongside each checkpoint.
inline TrainResult train(const PointCloud& cloud, const std::optional<Affine>& affine, const MLPConfig& net_cfg,
                         const TrainConfig& cfg, const TrainOutputs& out = {},
                         const std::function<void(std::int64_t, const LossBreakdown&)>& progress = {}) {
  Trainer t(cloud, net_cfg, cfg);
  TrainResult r;
  r.log.reserve(static_cast<std::size_t>(cfg.iterations));
  std::string csv = loss_csv_header();
  auto flush = [&] {
    if (!out.checkpoint.empty()) save_checkpoint(out.checkpoint, t.checkpoint(affine));
    if (!out.loss_csv.empty()) write_file_atomic(out.loss_csv, csv);
  };
  for (std::int64_t i = 0; i < cfg.iterations; ++i) {
    const LossBreakdown b = t.step();
    r.log.push_back(b);
    if (i % cfg.log_every == 0 || i + 1 == cfg.iterations) csv += loss_csv_row(i, b);
    if (progress) progress(i, b);
    if (cfg.checkpoint_every > 0 && (i + 1) % cfg.checkpoint_every == 0 && i + 1 < cfg.iterations) flush();
  }
  flush();
  r.params = t.params();
  r.final_checkpoint = t.checkpoint(affine);
  return r;
}

}  // namespace pinc
