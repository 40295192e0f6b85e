// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.
//
//   1-3  full desk-scale pipeline run (configs/desk.json)
//   4    solver properties
//   5    projector correctness
//   6    correlation score
//   7    determinism across worker counts
//   8    outlier-free degeneracy

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <spdlog/spdlog.h>
#include <unistd.h>

#include "wrt/config.hpp"
#include "wrt/container.hpp"
#include "wrt/metrics.hpp"
#include "wrt/parallel.hpp"
#include "wrt/pipeline.hpp"
#include "wrt/rmbir.hpp"
#include "wrt/signature.hpp"
#include "wrt/simulator.hpp"

using namespace wrt;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

RunConfig desk_config() { return load_config(std::string(WRT_CONFIG_DIR) + "/desk.json"); }

void run_pipeline(const RunConfig& config, const fs::path& run) {
  set_worker_count(config.workers);
  cmd_simulate(config, run);
  cmd_fbp(config, run);
  cmd_rmbir(config, run);
  cmd_signatures(config, run);
  cmd_evaluate(config, run);
  set_worker_count(0);
}

// ---------------------------------------------------------------------------
// 1-3: desk-scale pipeline.

Outcome robustness(const json& report) {
  std::size_t affected = 0, ok = 0;
  double worst = 0.0;
  for (const auto& ch : report["channels"]) {
    if (!ch["affected"].get<bool>()) continue;
    ++affected;
    const double ratio = ch["nrmse_rmbir"].get<double>() / ch["nrmse_fbp"].get<double>();
    worst = std::max(worst, ratio);
    ok += ratio <= 0.5;
  }
  return {affected > 0 && ok == affected,
          std::to_string(ok) + "/" + std::to_string(affected) +
              " affected wavelengths with NRMSE(R-MBIR) <= 0.5 NRMSE(FBP); worst ratio " + fmt(worst)};
}

Outcome bragg_recovery(const json& report) {
  std::size_t affected = 0, ok = 0;
  double min_recall = 1.0, min_precision = 1.0;
  for (const auto& ch : report["channels"]) {
    if (!ch["affected"].get<bool>()) continue;
    ++affected;
    const auto& b = ch["bragg"];
    const double recall = b["recall"].is_number() ? b["recall"].get<double>() : 0.0;
    const double precision = b["precision"].is_number() ? b["precision"].get<double>() : 0.0;
    min_recall = std::min(min_recall, recall);
    min_precision = std::min(min_precision, precision);
    ok += recall >= 0.8 && precision >= 0.6;
  }
  return {affected > 0 && ok == affected,
          std::to_string(ok) + "/" + std::to_string(affected) + " affected wavelengths; min recall " +
              fmt(min_recall) + ", min precision " + fmt(min_precision)};
}

Outcome signature_fidelity(const json& report) {
  const json* largest = nullptr;
  for (const auto& g : report["grains"])
    if (!largest || g["voxels"].get<std::size_t>() > (*largest)["voxels"].get<std::size_t>()) largest = &g;
  if (!largest) return {false, "no grains in the report"};
  const auto& s = (*largest)["signature"];
  if (!s.is_object() || !s["tpr"].is_number() || !s["fpr"].is_number())
    return {false, "largest grain has no signature rates"};
  const double tpr = s["tpr"].get<double>(), fpr = s["fpr"].get<double>();
  std::string others;
  for (const auto& g : report["grains"])
    if (&g != largest && g["signature"].is_object() && g["signature"]["tpr"].is_number())
      others += (others.empty() ? "" : ", ") + fmt(g["signature"]["tpr"].get<double>());
  return {tpr >= 0.85 && fpr <= 0.02, "largest grain (" + std::to_string((*largest)["voxels"].get<std::size_t>()) +
                                          " voxels) TPR " + fmt(tpr) + ", FPR " + fmt(fpr) +
                                          "; other grains TPR " + (others.empty() ? "none" : others)};
}

// ---------------------------------------------------------------------------
// 4: solver properties.

Outcome solver_properties(const json& trace) {
  // Monotone cost traces over every channel of the desk run.
  double worst_violation = 0.0;
  std::size_t steps = 0;
  for (const auto& ch : trace["channels"]) {
    const auto cost = ch["cost"].get<std::vector<double>>();
    for (std::size_t i = 1; i < cost.size(); ++i, ++steps)
      worst_violation = std::max(worst_violation, (cost[i] - cost[i - 1]) / std::abs(cost[i - 1]));
  }
  const bool monotone = steps > 0 && worst_violation <= 1e-9;

  // Majorization of the Talwar penalty by its tangent surrogate.
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> X(-10.0, 10.0), Td(0.1, 6.0);
  std::size_t major_fail = 0;
  for (int i = 0; i < 10000; ++i) {
    const double x = X(rng), x0 = X(rng), T = Td(rng);
    const double w = talwar_surrogate_weight(x0, T);
    const double constant = talwar(x0, T) - w * x0 * x0;
    if (w * x * x + constant < talwar(x, T) - 1e-12) ++major_fail;
    if (std::abs(w * x0 * x0 + constant - talwar(x0, T)) > 1e-12 * std::max(1.0, talwar(x0, T))) ++major_fail;
  }

  // Gradient of surrogate plus prior against central differences.
  ViewGeometry geo;
  geo.volume = {6, 6, 2};
  geo.detector_rows = 2;
  geo.detector_cols = 6;
  geo.angles_deg = ViewGeometry::uniform_angles(0.0, 180.0, 7);
  const SystemModel model(geo);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  double worst_grad = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> f(model.volume_size()), g(model.sinogram_size()), wt(model.sinogram_size());
    WeightMatrix W;
    W.w.resize(model.sinogram_size());
    for (auto& v : f) v = 1e-3 * U(rng);
    for (std::size_t i = 0; i < g.size(); ++i) {
      g[i] = 0.3 * U(rng);
      W.w[i] = 100.0 + 400.0 * U(rng);
      wt[i] = U(rng) < 0.8 ? 1.0 : 0.0;
    }
    const QggmrfPrior prior({2e-4, 2.0, 1.2, 0.5});
    const SurrogateObjective obj(model, g, W, wt, 0.0, prior);
    const auto grad = obj.gradient(f);
    for (std::size_t j = 0; j < f.size(); ++j) {
      const double h = 1e-8;
      auto fp = f, fm = f;
      fp[j] += h;
      fm[j] -= h;
      const double fd = (obj.value(fp) - obj.value(fm)) / (2 * h);
      worst_grad = std::max(worst_grad, std::abs(fd - grad[j]) / std::max(std::abs(grad[j]), 1.0));
    }
  }
  return {monotone && major_fail == 0 && worst_grad <= 1e-5,
          "worst relative cost increase " + fmt(worst_violation) + " over " + std::to_string(steps) +
              " outer steps; majorization failures " + std::to_string(major_fail) +
              "/10000; worst gradient error " + fmt(worst_grad)};
}

// ---------------------------------------------------------------------------
// 5: projector.

ViewGeometry square_geometry(std::size_t n, std::size_t nz, std::size_t views, std::size_t cols) {
  ViewGeometry g;
  g.volume = {n, n, nz};
  g.detector_rows = nz;
  g.detector_cols = cols;
  g.angles_deg = ViewGeometry::uniform_angles(0.0, 180.0, views);
  return g;
}

// Joseph weights from the ray equation, voxel by voxel.
std::vector<double> rasterized_joseph(const ViewGeometry& g) {
  const std::size_t n = g.volume.nx;
  const double dv = g.voxel_pitch_um;
  const double c0 = 0.5 * static_cast<double>(n - 1);
  const double ccol = 0.5 * static_cast<double>(g.detector_cols - 1);
  std::vector<double> A(g.measurements() * g.volume.size(), 0.0);
  for (std::size_t v = 0; v < g.num_views(); ++v) {
    const double phi = g.angles_deg[v] * std::numbers::pi / 180.0;
    const double c = std::cos(phi), s = std::sin(phi);
    for (std::size_t col = 0; col < g.detector_cols; ++col) {
      const double u = (static_cast<double>(col) - ccol) * g.pixel_pitch_um;
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t i = 0; i < n; ++i) {
          const double x = (static_cast<double>(i) - c0) * dv, y = (static_cast<double>(j) - c0) * dv;
          double w;
          if (std::abs(c) >= std::abs(s))
            w = std::max(0.0, 1.0 - std::abs((u - y * s) / c - x) / dv) * dv / std::abs(c);
          else
            w = std::max(0.0, 1.0 - std::abs((u - x * c) / s - y) / dv) * dv / std::abs(s);
          A[(v * g.detector_cols + col) * g.volume.size() + j * n + i] = w;
        }
    }
  }
  return A;
}

Outcome projector_correctness() {
  // Adjoint identity.
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  ViewGeometry ga = square_geometry(32, 6, 45, 40);
  ga.pixel_pitch_um = 40.0;
  const SystemModel ma(ga);
  double worst_adj = 0.0;
  for (int t = 0; t < 20; ++t) {
    std::vector<double> f(ma.volume_size()), s(ma.sinogram_size());
    for (auto& v : f) v = U(rng);
    for (auto& v : s) v = U(rng);
    const auto af = ma.forward(f), bs = ma.back(s);
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) lhs += af[i] * s[i];
    for (std::size_t i = 0; i < f.size(); ++i) rhs += f[i] * bs[i];
    worst_adj = std::max(worst_adj, std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs)));
  }

  // Dense system matrix on 8x8x1.
  const ViewGeometry gd = square_geometry(8, 1, 13, 11);
  const SystemModel md(gd);
  const auto A = rasterized_joseph(gd);
  const std::size_t N = md.volume_size(), M = md.sinogram_size();
  double worst_dense = 0.0;
  for (std::size_t j = 0; j < N; ++j) {
    std::vector<double> e(N, 0.0);
    e[j] = 1.0;
    const auto col = md.forward(e);
    for (std::size_t i = 0; i < M; ++i) worst_dense = std::max(worst_dense, std::abs(col[i] - A[i * N + j]));
  }

  // FBP of analytic uniform-cylinder projections.
  const std::size_t n = 64;
  const ViewGeometry gc = square_geometry(n, 1, 180, n);
  const SystemModel mc(gc);
  const double mu = 1e-4, R = 24.0 * gc.voxel_pitch_um, ccol = 0.5 * (n - 1);
  std::vector<double> p(mc.sinogram_size());
  for (std::size_t v = 0; v < gc.num_views(); ++v)
    for (std::size_t c = 0; c < n; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 16; ++k) {
        const double u = (c - ccol + (k + 0.5) / 16 - 0.5) * gc.pixel_pitch_um;
        acc += u * u < R * R ? 2.0 * mu * std::sqrt(R * R - u * u) : 0.0;
      }
      p[v * n + c] = acc / 16;
    }
  const auto f = fbp_filter_backproject(p, mc, FbpFilter::ramlak);
  double worst_fbp = 0.0;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      if (std::hypot(x - ccol, y - ccol) * gc.voxel_pitch_um <= 0.8 * R)
        worst_fbp = std::max(worst_fbp, std::abs(f[y * n + x] - mu) / mu);

  return {worst_adj <= 1e-6 && worst_dense <= 1e-9 && worst_fbp <= 0.02,
          "adjoint relative error " + fmt(worst_adj) + "; dense 8x8x1 max deviation " + fmt(worst_dense) +
              "; cylinder FBP interior error " + fmt(100.0 * worst_fbp) + "%"};
}

// ---------------------------------------------------------------------------
// 6: correlation score.

Outcome score_suite() {
  const std::vector<std::uint8_t> p{1, 1, 1, 1, 0, 0, 0, 0}, disjoint{0, 0, 0, 0, 1, 1, 1, 1};
  bool ok = correlation_score(p, p) == 1.0 && correlation_score(p, disjoint) == 0.0;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  std::size_t bad = 0;
  for (int t = 0; t < 1000; ++t) {
    const double dp = U(rng), dq = U(rng);
    std::vector<std::uint8_t> a(64), b(64);
    for (auto& x : a) x = U(rng) < dp;
    for (auto& x : b) x = U(rng) < dq;
    a[0] = 1;
    const double s = correlation_score(a, b);
    bad += !(s == correlation_score(b, a) && s >= 0.0 && s <= 1.0);
    ok = ok && correlation_score(a, a) == 1.0;
  }
  return {ok && bad == 0, "identity and disjoint cases " + std::string(ok ? "hold" : "fail") +
                              "; symmetry/range violations " + std::to_string(bad) + "/1000"};
}

// ---------------------------------------------------------------------------
// 7: determinism across worker counts.

double max_relative_difference(const Container& a, const Container& b, std::string& where) {
  double worst = 0.0;
  if (a.arrays.size() != b.arrays.size()) {
    where = "array count";
    return std::numeric_limits<double>::infinity();
  }
  for (std::size_t i = 0; i < a.arrays.size(); ++i) {
    const auto& ra = a.arrays[i];
    const auto& rb = b.arrays[i];
    if (ra.name != rb.name || ra.shape != rb.shape || ra.dtype != rb.dtype) {
      where = ra.name;
      return std::numeric_limits<double>::infinity();
    }
    if (ra.dtype != DType::f32) {
      if (ra.payload != rb.payload) {
        where = ra.name;
        return std::numeric_limits<double>::infinity();
      }
      continue;
    }
    const auto va = ra.values<float>(), vb = rb.values<float>();
    double scale = 0.0;
    for (float v : va) scale = std::max(scale, static_cast<double>(std::abs(v)));
    for (std::size_t j = 0; j < va.size(); ++j) {
      const double d = std::abs(static_cast<double>(va[j]) - vb[j]) / std::max(scale, 1e-300);
      if (d > worst) {
        worst = d;
        where = ra.name;
      }
    }
  }
  return worst;
}

Outcome determinism(const fs::path& work) {
  json doc = desk_config().document;
  doc["wavelengths"]["count"] = 6;
  const unsigned hw = std::max(2u, std::thread::hardware_concurrency());
  double worst = 0.0;
  std::string worst_where;
  std::vector<fs::path> runs;
  for (unsigned workers : {1u, hw}) {
    doc["workers"] = workers;
    const auto config = parse_config(doc);
    runs.push_back(work / ("det_" + std::to_string(workers)));
    run_pipeline(config, runs.back());
  }
  for (const char* stage_name : {stage::measurements, stage::truth, stage::fbp, stage::rmbir, stage::signatures}) {
    std::string where;
    const double d = max_relative_difference(load_container(runs[0] / stage_name), load_container(runs[1] / stage_name), where);
    if (d >= worst) {
      worst = d;
      worst_where = std::string(stage_name) + ":" + where;
    }
  }
  const bool matches_equal = read_json(runs[0] / stage::matches) == read_json(runs[1] / stage::matches);
  return {worst <= 1e-6 && matches_equal,
          "1 vs " + std::to_string(hw) + " workers: max relative difference " + fmt(worst) +
              (worst > 0.0 ? " (" + worst_where + ")" : "") + "; matches " + (matches_equal ? "identical" : "differ")};
}

// ---------------------------------------------------------------------------
// 8: outlier-free degeneracy.

Outcome degeneracy() {
  json doc = desk_config().document;
  doc["phantom"]["n_grains"] = 0;
  doc["simulation"]["noise"] = false;
  // Noiseless data calls for a weak prior.
  doc["rmbir"]["prior"]["sigma"] = 3e-3;
  const auto config = parse_config(doc);
  const SystemModel model(config.geometry, config.supersampling);
  const auto phantom = generate_phantom(config.phantom, config.powder_material(), config.crystal_material());
  const auto sim = simulate_measurements(phantom, model, config.grid, config.simulation);
  const auto truth = ground_truth_volume(phantom, config.grid);
  RmbirParams params = config.rmbir;
  params.threshold = std::numeric_limits<double>::infinity();
  params.outlier_fraction.reset();
  const auto res = reconstruct_all(sim.counts, model, std::vector<RmbirParams>{params});
  double worst = 0.0;
  for (std::size_t k = 0; k < config.grid.size(); ++k) worst = std::max(worst, nrmse(res.volume.channel(k), truth.channel(k)));
  const auto flagged = std::count(res.bragg.data.begin(), res.bragg.data.end(), 1);
  return {worst < 0.02 && flagged == 0, "zero grains, T = inf, noiseless: worst NRMSE " + fmt(100.0 * worst) +
                                            "% over " + std::to_string(config.grid.size()) +
                                            " wavelengths; flagged measurements " + std::to_string(flagged)};
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const fs::path work = fs::temp_directory_path() / ("wrt_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(work);

  std::vector<std::pair<int, std::function<Outcome()>>> checks;
  json report, trace;
  bool desk_ok = false;
  std::string desk_error;
  try {
    const fs::path run = work / "desk";
    run_pipeline(desk_config(), run);
    report = read_json(run / stage::report);
    trace = read_json(run / stage::rmbir_trace);
    desk_ok = true;
  } catch (const std::exception& e) {
    desk_error = std::string("desk pipeline failed: ") + e.what();
  }
  auto needs_desk = [&](std::function<Outcome()> fn) {
    return [=, &desk_ok, &desk_error]() { return desk_ok ? fn() : Outcome{false, desk_error}; };
  };
  checks.emplace_back(1, needs_desk([&] { return robustness(report); }));
  checks.emplace_back(2, needs_desk([&] { return bragg_recovery(report); }));
  checks.emplace_back(3, needs_desk([&] { return signature_fidelity(report); }));
  checks.emplace_back(4, needs_desk([&] { return solver_properties(trace); }));
  checks.emplace_back(5, projector_correctness);
  checks.emplace_back(6, score_suite);
  checks.emplace_back(7, [&] { return determinism(work); });
  checks.emplace_back(8, degeneracy);

  int failures = 0;
  for (const auto& [id, fn] : checks) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s criterion %d: %s\n", o.pass ? "PASS" : "FAIL", id, o.detail.c_str());
    std::fflush(stdout);
  }
  std::error_code ec;
  fs::remove_all(work, ec);
  return failures == 0 ? 0 : 1;
}
