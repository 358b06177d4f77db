// pinc: train, reconstruct, evaluate and verify implicit surfaces from point clouds.

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pinc/checkpoint.hpp"
#include "pinc/extract.hpp"
#include "pinc/fields.hpp"
#include "pinc/io.hpp"
#include "pinc/metrics.hpp"
#include "pinc/trainer.hpp"
#include "pinc/verify.hpp"

namespace fs = std::filesystem;
using namespace pinc;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;

struct Globals {
  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  bool large_scale = false;
};

struct TrainOpts {
  std::string input;
  std::string out = "run";
  std::int64_t iterations = 10000;
  double lr = 1e-3;
  double lr_decay = 0.99;
  std::int64_t decay_every = 2000;
  std::uint64_t seed = 0;
  std::size_t surface_batch = 4096;
  std::size_t n_global = 2000;
  double eta = kDomainHalfWidth;
  std::int64_t checkpoint_every = 1000;
  int width = 128;
  int depth = 4;
  int skip = 2;
  double beta = 100.0;
  std::string p = "inf";
  std::string curl_target = "on_G_tilde";
  bool area = true;
  std::string mode = "pinc";
  std::string init = "geometric";
  double init_radius = 0.5;
  LossWeights weights;
  int resolution = 128;
  std::size_t eval_samples = 100000;
};

struct Sweep {
  std::string key;
  std::vector<std::string> values;
};

CurlTarget parse_curl_target(const std::string& s) {
  if (s == "on_G_tilde" || s == "on-G-tilde") return CurlTarget::on_G_tilde;
  if (s == "on_G" || s == "on-G") return CurlTarget::on_G;
  if (s == "off") return CurlTarget::off;
  throw ConfigError("unknown curl target '" + s + "' (expected on_G_tilde, on_G or off)");
}

Formulation parse_mode(const std::string& s) {
  if (s == "pinc") return Formulation::pinc;
  if (s == "eikonal-split" || s == "eikonal_split") return Formulation::eikonal_split;
  throw ConfigError("unknown mode '" + s + "' (expected pinc or eikonal-split)");
}

MLPConfig net_config(const TrainOpts& o) {
  MLPConfig c{o.depth, o.width, o.skip, 3, parse_mode(o.mode) == Formulation::pinc ? 7 : 4, o.beta};
  c.validate();
  return c;
}

TrainConfig train_config(const TrainOpts& o, const Globals& g) {
  TrainConfig t;
  t.iterations = o.iterations;
  t.schedule = {o.lr, o.lr_decay, o.decay_every};
  t.seed = o.seed;
  t.loss.weights = o.weights;
  t.loss.mode.curl_target = parse_curl_target(o.curl_target);
  t.loss.mode.area_term = o.area;
  t.loss.mode.formulation = parse_mode(o.mode);
  t.loss.p = PExponent::parse(o.p);
  t.checkpoint_every = o.checkpoint_every;
  t.surface_batch = o.surface_batch;
  t.n_global = o.n_global;
  t.eta = o.eta;
  if (o.init == "geometric") {
    t.init = InitKind::geometric;
  } else if (o.init == "kaiming") {
    t.init = InitKind::kaiming;
  } else {
    throw ConfigError("unknown init '" + o.init + "' (expected geometric or kaiming)");
  }
  t.init_radius = o.init_radius;
  t.threads = g.threads;
  t.validate();
  return t;
}

void add_train_options(CLI::App* c, TrainOpts& o) {
  c->add_option("-i,--input", o.input, "Point cloud (.xyz or .ply)")->required();
  c->add_option("-o,--out", o.out, "Run directory")->envname("PINC_RUN_DIR");
  c->add_option("--iterations", o.iterations);
  c->add_option("--lr", o.lr, "Initial learning rate");
  c->add_option("--lr-decay", o.lr_decay);
  c->add_option("--decay-every", o.decay_every);
  c->add_option("--seed", o.seed);
  c->add_option("--surface-batch", o.surface_batch);
  c->add_option("--global-points", o.n_global);
  c->add_option("--eta", o.eta, "Half width of the collocation box");
  c->add_option("--checkpoint-every", o.checkpoint_every);
  c->add_option("--width", o.width);
  c->add_option("--depth", o.depth, "Hidden layers");
  c->add_option("--skip", o.skip, "Layer receiving the skip connection");
  c->add_option("--beta", o.beta, "Softplus sharpness");
  c->add_option("--p", o.p, "p-Poisson exponent (number >= 2 or inf)");
  c->add_option("--curl-target", o.curl_target, "on_G_tilde, on_G or off");
  c->add_option("--area", o.area, "Minimal-area term (true/false)");
  c->add_option("--mode", o.mode, "pinc or eikonal-split");
  c->add_option("--init", o.init, "geometric or kaiming");
  c->add_option("--init-radius", o.init_radius);
  c->add_option("--lambda1", o.weights.lambda1);
  c->add_option("--lambda2", o.weights.lambda2);
  c->add_option("--lambda3", o.weights.lambda3);
  c->add_option("--lambda4", o.weights.lambda4);
  c->add_option("--epsilon", o.weights.epsilon, "Dirac smearing width");
  c->add_option("--eta-baseline", o.weights.eta_baseline, "Eikonal weight of the split baseline");
  c->add_option("--resolution", o.resolution, "Extraction grid per axis (0 skips extraction)");
  c->add_option("--eval-samples", o.eval_samples, "Mesh samples for the metrics report");
}

void apply_large_scale(CLI::App* c, TrainOpts& o) {
  auto unset = [c](const char* name) { return c->get_option(name)->count() == 0; };
  if (unset("--width")) o.width = 512;
  if (unset("--depth")) o.depth = 8;
  if (unset("--skip")) o.skip = 4;
  if (unset("--surface-batch")) o.surface_batch = 16384;
  if (unset("--resolution")) o.resolution = 512;
}

std::string csv_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

struct MetricRows {
  std::string shape;
  std::string frame;
  std::uint64_t seed = 0;
  std::string text = "shape,metric,value,frame,seed\n";

  void add(const std::string& metric, const std::string& value) {
    text += shape + "," + metric + "," + value + "," + frame + "," + std::to_string(seed) + "\n";
  }
  void add(const std::string& metric, double value) { add(metric, csv_double(value)); }
};

void add_distances(MetricRows& rows, const DistanceReport& d, bool with_sum) {
  rows.add("chamfer_xy", d.chamfer_xy);
  rows.add("chamfer_yx", d.chamfer_yx);
  rows.add("chamfer", d.chamfer);
  rows.add("hausdorff_xy", d.hausdorff_xy);
  rows.add("hausdorff_yx", d.hausdorff_yx);
  rows.add("hausdorff", d.hausdorff);
  if (with_sum) rows.add("hausdorff_sum", d.hausdorff_sum);
}

/// G at the given points; normals are assumed to live in the same frame.
std::vector<Vec3> g_at(const Mlp& net, std::span<const double> params, std::span<const Vec3> pts, PExponent p) {
  std::vector<Vec3> g(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) g[i] = sample_fields(net, params, pts[i], p).G;
  return g;
}

struct SelfEval {
  DistanceReport distances;
  std::optional<double> nc;
  std::size_t triangles = 0;
};

/// Mesh samples against the training cloud, all in the normalized frame.
SelfEval self_evaluate(const Mlp& net, std::span<const double> params, const PointCloud& cloud, PExponent p,
                       int resolution, std::size_t samples, std::uint64_t seed) {
  SelfEval e;
  const TriangleMesh mesh = marching_cubes(evaluate_grid(net, params, resolution));
  e.triangles = mesh.triangles.size();
  if (!mesh.empty()) {
    Rng rng = Rng(seed).substream(stream::kEval);
    const auto pts = sample_mesh_surface(mesh, samples, rng);
    e.distances = distance_report(pts, cloud.points);
  } else {
    e.distances.chamfer = e.distances.hausdorff = INFINITY;
  }
  if (cloud.has_normals()) e.nc = normal_consistency(g_at(net, params, cloud.points, p), cloud.normals);
  return e;
}

NormalizedCloud load_cloud(const std::string& path) {
  const RawCloud raw = read_cloud(path);
  return prepare_cloud(raw.points, raw.normals);
}

void write_snapshot(const fs::path& dir, CLI::App* sub) {
  write_file_atomic(dir / "config.ini", "[" + sub->get_name() + "]\n" + sub->config_to_str(true, false));
}

int cmd_train(CLI::App* sub, TrainOpts& o, const Globals& g) {
  if (g.large_scale) apply_large_scale(sub, o);
  const MLPConfig net_cfg = net_config(o);
  const TrainConfig cfg = train_config(o, g);
  const NormalizedCloud nc = load_cloud(o.input);
  const fs::path dir = o.out;
  fs::create_directories(dir);
  write_snapshot(dir, sub);
  const auto progress = [&](std::int64_t i, const LossBreakdown& b) {
    if ((i + 1) % 100 == 0 || i + 1 == cfg.iterations) {
      std::fprintf(stderr, "iter %lld  total %.6g  boundary %.3g\n", static_cast<long long>(i + 1), b.total, b.boundary);
    }
  };
  const TrainResult r = train(nc.cloud, nc.affine, net_cfg, cfg, {dir / "model.ckpt", dir / "loss.csv"}, progress);
  if (o.resolution == 0) return kExitOk;

  const Mlp net(net_cfg);
  const TriangleMesh mesh = marching_cubes(evaluate_grid(net, r.params, o.resolution));
  write_obj(dir / "mesh.obj", de_normalize(mesh, nc.affine));
  const SelfEval e = self_evaluate(net, r.params, nc.cloud, cfg.loss.p, o.resolution, o.eval_samples, o.seed);
  MetricRows rows{fs::path(o.input).stem().string(), "normalized", o.seed};
  add_distances(rows, e.distances, false);
  if (e.nc) {
    rows.add("normal_consistency", *e.nc);
  } else {
    rows.add("normal_consistency", "absent");
  }
  write_file_atomic(dir / "metrics.csv", rows.text);
  std::printf("wrote %s (%zu triangles)\n", (dir / "mesh.obj").string().c_str(), mesh.triangles.size());
  return kExitOk;
}

struct ReconstructOpts {
  std::string checkpoint;
  std::string out = "mesh.obj";
  int resolution = 128;
  bool flip_sign = false;
  bool normalized = false;
};

int cmd_reconstruct(CLI::App* sub, ReconstructOpts& o, const Globals& g) {
  if (g.large_scale && sub->get_option("--resolution")->count() == 0) o.resolution = 512;
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const Mlp net(ck.config);
  TriangleMesh mesh = marching_cubes(evaluate_grid(net, ck.params, o.resolution), 0.0, o.flip_sign);
  if (ck.affine && !o.normalized) mesh = de_normalize(std::move(mesh), *ck.affine);
  const fs::path out = o.out;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  if (out.extension() == ".ply") {
    write_ply_mesh(out, mesh);
  } else {
    write_obj(out, mesh);
  }
  std::printf("wrote %s (%zu vertices, %zu triangles)\n", out.string().c_str(), mesh.vertices.size(),
              mesh.triangles.size());
  return kExitOk;
}

struct EvalOpts {
  std::string mesh;
  std::string checkpoint;
  std::string reference;
  std::string out = "metrics.csv";
  std::string shape;
  std::string p = "inf";
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
  int resolution = 128;
  bool hausdorff_sum = false;
};

/// Points standing in for a surface file: mesh samples, or the cloud itself.
std::vector<Vec3> surface_points(const fs::path& path, std::size_t samples, std::uint64_t seed,
                                 std::vector<Vec3>* normals) {
  const std::string ext = path.extension().string();
  if (ext == ".obj") {
    Rng rng = Rng(seed).substream(stream::kEval);
    return sample_mesh_surface(read_mesh(path), samples, rng);
  }
  if (ext == ".ply") {
    if (!fs::exists(path)) throw InputError("input file not found: " + path.string());
    PlyData d = read_ply(path);
    if (!d.triangles.empty()) {
      Rng rng = Rng(seed).substream(stream::kEval);
      return sample_mesh_surface(TriangleMesh{std::move(d.cloud.points), std::move(d.triangles)}, samples, rng);
    }
    if (normals) *normals = d.cloud.normals;
    return d.cloud.points;
  }
  RawCloud c = read_cloud(path);
  if (normals) *normals = c.normals;
  return c.points;
}

int cmd_eval(EvalOpts& o) {
  if (o.mesh.empty() == o.checkpoint.empty()) throw UsageError("eval needs exactly one of --mesh or --checkpoint");
  std::vector<Vec3> ref_normals;
  const std::vector<Vec3> ref = surface_points(o.reference, o.samples, o.seed, &ref_normals);
  std::vector<Vec3> pts;
  std::optional<double> nc;
  if (!o.mesh.empty()) {
    pts = surface_points(o.mesh, o.samples, o.seed, nullptr);
  } else {
    const Checkpoint ck = load_checkpoint(o.checkpoint);
    const Mlp net(ck.config);
    const Affine affine = ck.affine.value_or(Affine{});
    const TriangleMesh mesh = de_normalize(marching_cubes(evaluate_grid(net, ck.params, o.resolution)), affine);
    if (mesh.empty()) throw NumericFault("extracted mesh is empty; the zero level set lies outside the grid");
    Rng rng = Rng(o.seed).substream(stream::kEval);
    pts = sample_mesh_surface(mesh, o.samples, rng);
    if (!ref_normals.empty()) {
      std::vector<Vec3> local(ref.size());
      for (std::size_t i = 0; i < ref.size(); ++i) local[i] = affine.apply(ref[i]);
      nc = normal_consistency(g_at(net, ck.params, local, PExponent::parse(o.p)), ref_normals);
    }
  }
  MetricRows rows{o.shape.empty() ? fs::path(o.reference).stem().string() : o.shape, "input", o.seed};
  add_distances(rows, distance_report(pts, ref), o.hausdorff_sum);
  if (nc) {
    rows.add("normal_consistency", *nc);
  } else {
    rows.add("normal_consistency", "absent");
  }
  write_file_atomic(o.out, rows.text);
  std::cout << rows.text;
  return kExitOk;
}

Sweep parse_sweep(const std::string& s) {
  const auto eq = s.find('=');
  if (eq == std::string::npos) throw ConfigError("sweep must look like key=v1,v2,...");
  Sweep w{s.substr(0, eq), {}};
  std::stringstream ss(s.substr(eq + 1));
  for (std::string v; std::getline(ss, v, ',');) {
    if (!v.empty()) w.values.push_back(v);
  }
  if (w.key != "p" && w.key != "curl-target" && w.key != "area") {
    throw ConfigError("unknown sweep key '" + w.key + "' (expected p, curl-target or area)");
  }
  if (w.values.empty()) throw ConfigError("sweep has no values");
  return w;
}

int cmd_ablate(CLI::App* sub, TrainOpts& base, const std::string& sweep_spec, const Globals& g) {
  if (g.large_scale) apply_large_scale(sub, base);
  const Sweep sweep = parse_sweep(sweep_spec);
  const NormalizedCloud nc = load_cloud(base.input);
  const fs::path dir = base.out;
  fs::create_directories(dir);
  write_snapshot(dir, sub);

  struct Variant {
    std::string value;
    MLPConfig net;
    std::vector<double> params;
    SelfEval eval;
    double final_loss = 0.0;
  };
  std::vector<Variant> done;
  for (const std::string& v : sweep.values) {
    TrainOpts o = base;
    if (sweep.key == "p") o.p = v;
    if (sweep.key == "curl-target") o.curl_target = v;
    if (sweep.key == "area") {
      if (v != "on" && v != "off") throw ConfigError("area sweep values are on and off");
      o.area = v == "on";
    }
    const MLPConfig net_cfg = net_config(o);
    const TrainConfig cfg = train_config(o, g);
    const fs::path vdir = dir / (sweep.key + "_" + v);
    fs::create_directories(vdir);
    std::fprintf(stderr, "variant %s=%s\n", sweep.key.c_str(), v.c_str());
    const TrainResult r = train(nc.cloud, nc.affine, net_cfg, cfg, {vdir / "model.ckpt", vdir / "loss.csv"});
    const Mlp net(net_cfg);
    Variant var{v, net_cfg, r.params, {}, r.log.empty() ? 0.0 : r.log.back().total};
    if (o.resolution > 0) var.eval = self_evaluate(net, r.params, nc.cloud, cfg.loss.p, o.resolution, o.eval_samples, o.seed);
    done.push_back(std::move(var));
  }

  // Field MSE against the p = inf variant, when the sweep has one.
  const Variant* ref = nullptr;
  for (const Variant& v : done) {
    if (sweep.key == "p" && PExponent::parse(v.value).is_infinite()) ref = &v;
  }
  std::string csv = "variant,value,seed,chamfer,hausdorff,normal_consistency,final_loss,mse_vs_reference\n";
  for (const Variant& v : done) {
    std::string mse = "absent";
    if (ref != nullptr) {
      const Mlp a(v.net), b(ref->net);
      mse = csv_double(field_mse(a, v.params, b, ref->params));
    }
    csv += sweep.key + "," + v.value + "," + std::to_string(base.seed) + "," + csv_double(v.eval.distances.chamfer) +
           "," + csv_double(v.eval.distances.hausdorff) + "," + (v.eval.nc ? csv_double(*v.eval.nc) : "absent") + "," +
           csv_double(v.final_loss) + "," + mse + "\n";
  }
  write_file_atomic(dir / "ablate.csv", csv);
  std::cout << csv;
  return kExitOk;
}

struct VerifyOpts {
  std::string out;
  bool corrupt_curl = false;
};

struct CheckLine {
  std::string name;
  double value;
  std::string tolerance;
  bool pass;
};

/// Finite-difference curl of G at x, compared with the second-order curl.
double curl_audit(const Mlp& net, std::span<const double> params, const Vec3& x, bool corrupt) {
  const PExponent p = PExponent::infinity();
  Vec3 c = sample_fields(net, params, x, p, kDefaultEpsDiv, true).curl_G;
  if (corrupt) c[2] = -c[2];
  const double h = 1e-5;
  std::array<std::array<double, 3>, 3> jac{};
  for (int m = 0; m < 3; ++m) {
    Vec3 xp = x, xm = x;
    xp[m] += h;
    xm[m] -= h;
    const Vec3 gp = sample_fields(net, params, xp, p).G;
    const Vec3 gm = sample_fields(net, params, xm, p).G;
    for (int i = 0; i < 3; ++i) jac[static_cast<std::size_t>(i)][static_cast<std::size_t>(m)] = (gp[i] - gm[i]) / (2 * h);
  }
  const Vec3 fd = curl(jac);
  return norm(c - fd) / std::max(norm(fd), 1e-12);
}

int cmd_verify(const VerifyOpts& o) {
  std::vector<CheckLine> checks;
  std::string harness = "n,splitting_energy,curl_energy\n";
  for (int n : {1, 2, 4, 8}) {
    const TheoremEnergies e = theorem_a1_harness(n, 512);
    harness += std::to_string(n) + "," + csv_double(e.splitting_energy) + "," + csv_double(e.curl_energy) + "\n";
    const double split_err = std::abs(e.splitting_energy - 1.0 / (2.0 * n * n));
    checks.push_back({"harness n=" + std::to_string(n) + " splitting energy error", split_err, "< 1e-6", split_err < 1e-6});
    checks.push_back({"harness n=" + std::to_string(n) + " curl energy", e.curl_energy, "0.5 +- 1e-3",
                      std::abs(e.curl_energy - 0.5) <= 1e-3});
  }

  const MLPConfig desk = MLPConfig::desk_scale();
  const Mlp desk_net(desk);
  Rng rng(2024);
  double fd_worst = 0.0;
  for (int k = 0; k < 5; ++k) {
    const auto params = init_geometric(desk, rng(), 0.5);
    std::vector<Vec3> pts(100);
    for (auto& x : pts) x = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    fd_worst = std::max(fd_worst, finite_difference_audit(desk_net, params, pts, 1e-4).max_rel_error);
  }
  checks.push_back({"input Jacobian vs finite differences", fd_worst, "< 1e-5", fd_worst < 1e-5});

  const MLPConfig small{2, 16, 1, 3, 7, 10.0};
  const Mlp small_net(small);
  const auto sp = init_kaiming(small, 9);
  double curl_worst = 0.0;
  for (int k = 0; k < 10; ++k) {
    curl_worst = std::max(curl_worst, curl_audit(small_net, sp, {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)},
                                                 o.corrupt_curl));
  }
  checks.push_back({"curl G vs finite differences", curl_worst, "< 1e-5", curl_worst < 1e-5});

  const auto dp = init_geometric(desk, 11, 0.5);
  double unit_worst = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const Vec3 x = {rng.uniform(-1.1, 1.1), rng.uniform(-1.1, 1.1), rng.uniform(-1.1, 1.1)};
    unit_worst = std::max(unit_worst, std::abs(norm(sample_fields(desk_net, dp, x, PExponent::infinity()).G) - 1.0));
  }
  checks.push_back({"|G| = 1 for p = inf", unit_worst, "< 1e-9", unit_worst < 1e-9});

  const AnalyticShape sphere = AnalyticShape::sphere(0.5);
  const ScalarGrid grid = evaluate_grid([&](const Vec3& x) { return analytic_sdf(sphere, x).u; }, 64);
  const TriangleMesh mesh = marching_cubes(grid);
  double radius_worst = mesh.empty() ? INFINITY : 0.0;
  for (const Vec3& v : mesh.vertices) radius_worst = std::max(radius_worst, std::abs(norm(v) - 0.5));
  checks.push_back({"marching cubes sphere radius error / cell", radius_worst / grid.spacing(), "<= 2",
                    radius_worst <= 2 * grid.spacing()});

  bool all = true;
  for (const CheckLine& c : checks) {
    std::printf("%s  %-44s %.6g  (tolerance %s)\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.value, c.tolerance.c_str());
    all = all && c.pass;
  }
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    write_file_atomic(fs::path(o.out) / "harness.csv", harness);
  }
  return all ? kExitOk : kExitCheckFailed;
}

struct NoiseOpts {
  std::string input;
  std::string out;
  double sigma = 0.005;
  std::uint64_t seed = 0;
};

int cmd_add_noise(const NoiseOpts& o) {
  const RawCloud raw = read_cloud(o.input);
  PointCloud c;
  c.points = raw.points;
  c.normals = raw.normals;
  Rng rng = Rng(o.seed).substream(stream::kNoise);
  const PointCloud noisy = add_noise(c, o.sigma, rng);
  const fs::path out = o.out;
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_file_atomic(out, format_xyz(noisy.points, noisy.normals));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Implicit surface reconstruction from point clouds"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "INI file with one section per command");
  app.allow_config_extras(false);
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--threads", g.threads, "Worker threads for loss evaluation");
  app.add_flag("--paper-scale", g.large_scale, "Published network size, batch and grid");

  TrainOpts train_opts;
  CLI::App* train_cmd = app.add_subcommand("train", "Fit a network to a point cloud");
  add_train_options(train_cmd, train_opts);

  ReconstructOpts rec;
  CLI::App* rec_cmd = app.add_subcommand("reconstruct", "Extract the zero level set of a checkpoint");
  rec_cmd->add_option("-c,--checkpoint", rec.checkpoint)->required();
  rec_cmd->add_option("-o,--out", rec.out, "Mesh path (.obj or .ply)");
  rec_cmd->add_option("--resolution", rec.resolution);
  rec_cmd->add_flag("--flip-sign", rec.flip_sign, "Field is negative inside");
  rec_cmd->add_flag("--normalized", rec.normalized, "Keep the normalized frame");

  EvalOpts ev;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Distances and normal consistency against a reference");
  eval_cmd->add_option("--mesh", ev.mesh);
  eval_cmd->add_option("-c,--checkpoint", ev.checkpoint);
  eval_cmd->add_option("-r,--reference", ev.reference, "Reference cloud or mesh")->required();
  eval_cmd->add_option("-o,--out", ev.out);
  eval_cmd->add_option("--shape", ev.shape, "Label for the CSV");
  eval_cmd->add_option("--p", ev.p, "Exponent used to build G from a checkpoint");
  eval_cmd->add_option("--samples", ev.samples);
  eval_cmd->add_option("--seed", ev.seed);
  eval_cmd->add_option("--resolution", ev.resolution);
  eval_cmd->add_flag("--hausdorff-sum", ev.hausdorff_sum, "Also report the summed one-sided Hausdorff");

  TrainOpts ablate_opts;
  std::string sweep;
  CLI::App* ablate_cmd = app.add_subcommand("ablate", "Train one variant per sweep value with a shared seed");
  add_train_options(ablate_cmd, ablate_opts);
  ablate_cmd->add_option("--sweep", sweep, "p=2,10,100,inf | curl-target=off,on_G,on_G_tilde | area=on,off")->required();

  VerifyOpts ver;
  CLI::App* verify_cmd = app.add_subcommand("verify", "Run the built-in oracles");
  verify_cmd->add_option("-o,--out", ver.out, "Directory for harness.csv");
  verify_cmd->add_flag("--corrupt-curl", ver.corrupt_curl, "Deliberately break the curl to exercise the checks");

  NoiseOpts noise;
  CLI::App* noise_cmd = app.add_subcommand("add-noise", "Perturb a cloud with Gaussian noise");
  noise_cmd->add_option("-i,--input", noise.input)->required();
  noise_cmd->add_option("-o,--out", noise.out)->required();
  noise_cmd->add_option("--sigma", noise.sigma);
  noise_cmd->add_option("--seed", noise.seed);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (g.threads < 1) throw ConfigError("--threads must be positive");
    if (*train_cmd) return cmd_train(train_cmd, train_opts, g);
    if (*rec_cmd) return cmd_reconstruct(rec_cmd, rec, g);
    if (*eval_cmd) return cmd_eval(ev);
    if (*ablate_cmd) return cmd_ablate(ablate_cmd, ablate_opts, sweep, g);
    if (*verify_cmd) return cmd_verify(ver);
    if (*noise_cmd) return cmd_add_noise(noise);
  } catch (const NumericFault& e) {
    std::fprintf(stderr, "pinc: numeric fault: %s\n", e.what());
    return kExitNumeric;
  } catch (const InputError& e) {
    std::fprintf(stderr, "pinc: %s\n", e.what());
    return kExitInput;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "pinc: config: %s\n", e.what());
    return kExitInput;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "pinc: %s\n", e.what());
    return kExitInput;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "pinc: %s\n", e.what());
    return kExitCheckFailed;
  }
  return kExitInput;
}
