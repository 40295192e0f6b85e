#include "wrt/rmbir.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <sstream>

#include <spdlog/spdlog.h>

#include "wrt/parallel.hpp"

namespace wrt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// Largest eigenvalue of A^T W A by power iteration from a flat start.
double weighted_normal_norm(const SystemModel& model, const WeightMatrix& W, int iterations) {
  std::vector<double> v(model.volume_size(), 1.0 / std::sqrt(static_cast<double>(model.volume_size())));
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    auto av = model.forward(v);
    for (std::size_t i = 0; i < av.size(); ++i) av[i] *= W.w[i];
    auto u = model.back(av);
    lambda = norm(u);
    if (lambda == 0.0) return 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) v[i] = u[i] / lambda;
  }
  return lambda;
}

double data_cost(std::span<const double> g, std::span<const double> af, const WeightMatrix& W, double T) {
  double sum = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) sum += talwar((g[i] - af[i]) * std::sqrt(W.w[i]), T);
  return 0.5 * sum;
}

struct InnerState {
  std::vector<double> x;
  std::vector<double> ax;
};

// Optimized gradient method on the surrogate, projected onto f >= 0 when
// requested. A step is accepted only if it lowers the surrogate; otherwise
// the momentum restarts from the last accepted iterate.
InnerState minimize_surrogate(const SurrogateObjective& obj, const SystemModel& model, InnerState start,
                              double lipschitz, int max_inner, bool nonneg) {
  InnerState cur = std::move(start);
  double fx = obj.value_from_projection(cur.x, cur.ax);
  std::vector<double> y = cur.x, ay = cur.ax;
  double theta = 1.0;
  bool just_restarted = true;
  const double step = 1.0 / lipschitz;

  for (int it = 0; it < max_inner; ++it) {
    const auto grad = obj.gradient_from_projection(y, ay);
    std::vector<double> xn(y.size());
    for (std::size_t i = 0; i < xn.size(); ++i) {
      xn[i] = y[i] - step * grad[i];
      if (nonneg && xn[i] < 0.0) xn[i] = 0.0;
    }
    auto axn = model.forward(xn);
    const double fxn = obj.value_from_projection(xn, axn);

    if (!(fxn <= fx)) {
      if (just_restarted) break;  // no descent even without momentum
      theta = 1.0;
      y = cur.x;
      ay = cur.ax;
      just_restarted = true;
      continue;
    }
    const double theta_n = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    const double a = (theta - 1.0) / theta_n;
    const double b = theta / theta_n;
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = xn[i] + a * (xn[i] - cur.x[i]) + b * (xn[i] - y[i]);
    for (std::size_t i = 0; i < ay.size(); ++i) ay[i] = axn[i] + a * (axn[i] - cur.ax[i]) + b * (axn[i] - ay[i]);
    cur.x = std::move(xn);
    cur.ax = std::move(axn);
    fx = fxn;
    theta = theta_n;
    just_restarted = false;
  }
  return cur;
}

struct MmOutcome {
  InnerState state;
  std::vector<double> trace;
  int outer = 0;
};

MmOutcome run_mm(std::span<const double> g, const WeightMatrix& W, const SystemModel& model,
                 const QggmrfPrior& prior, InnerState state, double T, double lipschitz, int max_outer,
                 int max_inner, double tol, bool nonneg) {
  const auto& shape = model.geometry().volume;
  auto full_cost = [&](const InnerState& s) { return data_cost(g, s.ax, W, T) + prior.value(s.x, shape); };

  MmOutcome out;
  double cost = full_cost(state);
  out.trace.push_back(cost);
  for (int outer = 0; outer < max_outer; ++outer) {
    std::vector<double> wt(g.size());
    double constant = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double e = (g[i] - state.ax[i]) * std::sqrt(W.w[i]);
      wt[i] = talwar_surrogate_weight(e, T);
      constant += 0.5 * (talwar(e, T) - wt[i] * e * e);
    }
    SurrogateObjective obj(model, g, W, std::move(wt), constant, prior);
    InnerState next = minimize_surrogate(obj, model, state, lipschitz, max_inner, nonneg);
    const double next_cost = full_cost(next);
    if (next_cost > cost + 1e-9 * std::abs(cost)) {
      std::ostringstream os;
      os << "inner solve increased the cost from " << cost << " to " << next_cost << " at outer iteration "
         << outer;
      throw SolverError(os.str());
    }
    const double decrease = cost - next_cost;
    state = std::move(next);
    cost = next_cost;
    out.trace.push_back(cost);
    out.outer = outer + 1;
    if (decrease <= tol * std::abs(out.trace[out.trace.size() - 2])) break;
  }
  out.state = std::move(state);
  return out;
}

}  // namespace

double talwar(double x, double T) {
  if (!(T > 0.0)) throw InvalidArgument("Talwar threshold T must be > 0");
  return std::abs(x) < T ? x * x : T * T;
}

double talwar_surrogate_weight(double x0, double T) { return std::abs(x0) < T ? 1.0 : 0.0; }

WeightMatrix estimate_weights(std::span<const float> counts, double floor) {
  WeightMatrix W;
  W.w.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) W.w[i] = std::max(static_cast<double>(counts[i]), floor);
  return W;
}

void RmbirParams::validate() const {
  if (threshold) {
    if (!(*threshold > 0.0)) throw InvalidArgument("outlier threshold T must be > 0");
  } else if (outlier_fraction) {
    if (!(*outlier_fraction > 0.0 && *outlier_fraction < 1.0))
      throw InvalidArgument("outlier fraction must lie in (0, 1)");
  } else {
    throw InvalidArgument("either an outlier threshold or an outlier fraction is required");
  }
  prior.validate();
  if (prior.p != 2.0)
    throw InvalidArgument("the gradient solver needs a Lipschitz prior gradient; q-GGMRF p must be 2");
  if (max_outer < 1 || max_inner < 1) throw InvalidArgument("iteration caps must be >= 1");
  if (continuation_stages < 0) throw InvalidArgument("continuation stages must be >= 0");
  if (!(tol >= 0.0)) throw InvalidArgument("tolerance must be >= 0");
}

double rmbir_cost(std::span<const double> f, std::span<const double> g, const WeightMatrix& W, double T,
                  const QggmrfPrior& prior, const SystemModel& model) {
  if (f.size() != model.volume_size() || g.size() != model.sinogram_size() || W.w.size() != g.size())
    throw InvalidArgument("rmbir_cost: shape mismatch");
  const auto af = model.forward(f);
  return data_cost(g, af, W, T) + prior.value(f, model.geometry().volume);
}

SurrogateObjective::SurrogateObjective(const SystemModel& model, std::span<const double> g, const WeightMatrix& W,
                                       std::vector<double> surrogate_weights, double constant,
                                       const QggmrfPrior& prior)
    : model_(model), g_(g), W_(W), wt_(std::move(surrogate_weights)), constant_(constant), prior_(prior) {
  if (g_.size() != model_.sinogram_size() || W_.w.size() != g_.size() || wt_.size() != g_.size())
    throw InvalidArgument("surrogate: shape mismatch");
}

double SurrogateObjective::value(std::span<const double> f) const {
  const auto af = model_.forward(f);
  return value_from_projection(f, af);
}

double SurrogateObjective::value_from_projection(std::span<const double> f, std::span<const double> af) const {
  double sum = 0.0;
  for (std::size_t i = 0; i < g_.size(); ++i) {
    const double r = g_[i] - af[i];
    sum += wt_[i] * W_.w[i] * r * r;
  }
  return 0.5 * sum + constant_ + prior_.value(f, model_.geometry().volume);
}

std::vector<double> SurrogateObjective::gradient(std::span<const double> f) const {
  const auto af = model_.forward(f);
  return gradient_from_projection(f, af);
}

std::vector<double> SurrogateObjective::gradient_from_projection(std::span<const double> f,
                                                                 std::span<const double> af) const {
  std::vector<double> weighted(g_.size());
  for (std::size_t i = 0; i < g_.size(); ++i) weighted[i] = -wt_[i] * W_.w[i] * (g_[i] - af[i]);
  auto grad = model_.back(weighted);
  prior_.add_gradient(f, model_.geometry().volume, grad);
  return grad;
}

double select_threshold(std::span<const double> residuals, const WeightMatrix& W, double outlier_fraction) {
  if (!(outlier_fraction > 0.0 && outlier_fraction < 1.0))
    throw InvalidArgument("outlier fraction must lie in (0, 1)");
  if (residuals.empty() || residuals.size() != W.w.size()) throw InvalidArgument("select_threshold: shape mismatch");
  std::vector<double> e(residuals.size());
  for (std::size_t i = 0; i < e.size(); ++i) e[i] = std::abs(residuals[i]) * std::sqrt(W.w[i]);
  std::sort(e.begin(), e.end());
  const double eps = 1e-12 * std::max(1.0, e.back());
  if (e.front() == e.back()) return e.front() + eps;
  const double pos = (1.0 - outlier_fraction) * static_cast<double>(e.size());
  const auto idx = static_cast<std::size_t>(
      std::clamp(std::ceil(pos - 1e-9) - 1.0, 0.0, static_cast<double>(e.size() - 1)));
  return std::max(e[idx], eps);
}

ChannelResult rmbir_reconstruct(std::span<const double> g, const WeightMatrix& W, const SystemModel& model,
                                const RmbirParams& params, std::span<const double> init) {
  params.validate();
  if (g.size() != model.sinogram_size() || W.w.size() != g.size())
    throw InvalidArgument("rmbir: measurement size does not match the model");
  for (double w : W.w)
    if (!(w > 0.0)) throw InvalidArgument("rmbir: weights must be positive");
  if (!init.empty() && init.size() != model.volume_size()) throw InvalidArgument("rmbir: initial volume size mismatch");

  const QggmrfPrior prior(params.prior);
  InnerState state;
  if (init.empty()) {
    state.x = fbp_filter_backproject(g, model, params.init_filter);
    for (auto& v : state.x) v = std::max(v, 0.0);
  } else {
    state.x.assign(init.begin(), init.end());
    if (params.nonneg)
      for (auto& v : state.x) v = std::max(v, 0.0);
  }
  state.ax = model.forward(state.x);

  // W~ <= W elementwise, so the bound holds for every surrogate.
  const double lipschitz = 1.05 * weighted_normal_norm(model, W, 10) + prior.lipschitz_bound();

  ChannelResult result;
  if (params.threshold) {
    result.threshold = *params.threshold;
  } else {
    auto prelim = run_mm(g, W, model, prior, std::move(state), kInf, lipschitz, 1, params.max_inner, params.tol,
                         params.nonneg);
    state = std::move(prelim.state);
    std::vector<double> r(g.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = g[i] - state.ax[i];
    result.threshold = select_threshold(r, W, *params.outlier_fraction);
  }

  for (int stage = params.continuation_stages; stage >= 1; --stage) {
    auto warm = run_mm(g, W, model, prior, std::move(state), std::ldexp(result.threshold, stage), lipschitz, 1,
                       params.max_inner, params.tol, params.nonneg);
    state = std::move(warm.state);
  }

  auto mm = run_mm(g, W, model, prior, std::move(state), result.threshold, lipschitz, params.max_outer,
                   params.max_inner, params.tol, params.nonneg);
  result.cost_trace = std::move(mm.trace);
  result.outer_iterations = mm.outer;
  result.bragg_map.resize(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double e = (g[i] - mm.state.ax[i]) * std::sqrt(W.w[i]);
    result.bragg_map[i] = std::abs(e) >= result.threshold ? 1 : 0;
  }
  result.volume = std::move(mm.state.x);
  return result;
}

HyperResult reconstruct_all(const HyperSinogram& counts, const SystemModel& model, std::span<const RmbirParams> params,
                            const std::function<void(std::size_t)>& on_channel_done) {
  if (counts.kind != SinogramKind::counts) throw InvalidArgument("reconstruct_all expects a counts sinogram");
  if (!(counts.incident_flux > 0.0)) throw InvalidArgument("incident flux I0 must be > 0");
  counts.check_shape();
  const auto& geo = model.geometry();
  if (counts.views != geo.num_views() || counts.rows != geo.detector_rows || counts.cols != geo.detector_cols)
    throw InvalidArgument("sinogram shape does not match the geometry");
  const std::size_t K = counts.channels;
  if (params.size() != 1 && params.size() != K)
    throw InvalidArgument("solver parameters must be given once or once per channel");

  HyperResult out;
  out.volume = HyperVolume{K, geo.volume, std::vector<float>(K * geo.volume.size())};
  out.bragg = BraggMapStack{K, counts.views, counts.rows, counts.cols, std::vector<std::uint8_t>(counts.data.size())};
  out.channels.resize(K);
  std::vector<std::exception_ptr> errors(K);

#pragma omp parallel for schedule(dynamic, 1) num_threads(worker_count())
  for (std::size_t k = 0; k < K; ++k) {
    try {
      const auto c = counts.channel(k);
      const WeightMatrix W = estimate_weights(c);
      std::vector<double> g(c.size());
      for (std::size_t i = 0; i < g.size(); ++i) g[i] = projection_from_count(c[i], counts.incident_flux);
      auto res = rmbir_reconstruct(g, W, model, params.size() == 1 ? params[0] : params[k]);
      std::copy(res.volume.begin(), res.volume.end(), out.volume.channel(k).begin());
      std::copy(res.bragg_map.begin(), res.bragg_map.end(), out.bragg.channel(k).begin());
      res.volume.clear();
      res.bragg_map.clear();
      out.channels[k] = std::move(res);
      if (on_channel_done) {
#pragma omp critical(wrt_channel_callback)
        on_channel_done(k);
      }
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }

  for (std::size_t k = 0; k < K; ++k) {
    if (!errors[k]) continue;
    const std::string where = "channel " + std::to_string(k) + ": ";
    try {
      std::rethrow_exception(errors[k]);
    } catch (const InvalidArgument& e) {
      throw InvalidArgument(where + e.what());
    } catch (const std::exception& e) {
      throw SolverError(where + e.what());
    }
  }
  return out;
}

}  // namespace wrt
