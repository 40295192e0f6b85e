#pragma once

// Robust model-based iterative reconstruction of one wavelength channel:
//
//   c(f) = 1/2 sum_i beta_T((g_i - [Af]_i) sqrt(W_ii)) + R(f)
//
// with the saturating Talwar penalty beta_T and a q-GGMRF prior R. Solved by
// majorization-minimization: each outer iteration replaces beta_T by its
// tangent quadratic at the current residuals, and an optimized gradient
// method (with function restart and non-negativity) minimises the
// surrogate plus prior. Measurements whose normalised residual reaches T at
// the returned iterate form the Bragg map.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "wrt/core.hpp"
#include "wrt/projector.hpp"

namespace wrt {

/// x^2 for |x| < T, T^2 otherwise.
double talwar(double x, double T);

/// Curvature of the tangent majorizer of beta_T at x0:
/// 1 for |x0| < T, 0 otherwise (the measurement is left out).
double talwar_surrogate_weight(double x0, double T);

struct QggmrfParams {
  double sigma = 1e-4;  // 1/um
  double p = 2.0;
  double q = 1.2;
  double c = 0.01;

  void validate() const;
};

/// Pairwise prior over the 26-neighbourhood with inverse-distance weights,
///   rho(d) = |d/sigma|^p / (1 + |d/(c sigma)|^(p-q)).
class QggmrfPrior {
 public:
  explicit QggmrfPrior(QggmrfParams params);

  const QggmrfParams& params() const { return params_; }
  double potential(double delta) const;
  double derivative(double delta) const;
  /// Upper bound on rho''.
  double curvature_bound() const;
  /// Lipschitz constant of the prior gradient over a full volume.
  double lipschitz_bound() const;

  double value(std::span<const double> f, const VolumeShape& shape) const;
  /// grad += dR/df.
  void add_gradient(std::span<const double> f, const VolumeShape& shape, std::span<double> grad) const;

 private:
  QggmrfParams params_;
};

struct WeightMatrix {
  std::vector<double> w;  // inverse noise variance, one per measurement (counts)
};

WeightMatrix estimate_weights(std::span<const float> counts, double floor = kCountFloor);

struct RmbirParams {
  /// Explicit outlier threshold T in normalised-residual units (may be +inf).
  std::optional<double> threshold;
  /// Otherwise T is the (1 - rho) quantile of a preliminary non-robust fit.
  std::optional<double> outlier_fraction;
  QggmrfParams prior;
  /// Warm-start stages before the main solve: stage s (from this count down
  /// to 1) runs one outer iteration with threshold T * 2^s, so that streaks
  /// in the FBP start are not mistaken for outliers. Zero disables it.
  int continuation_stages = 0;
  int max_outer = 20;
  int max_inner = 30;
  double tol = 1e-4;
  bool nonneg = true;
  FbpFilter init_filter = FbpFilter::ramlak;

  void validate() const;
};

/// c(f) as defined above.
double rmbir_cost(std::span<const double> f, std::span<const double> g, const WeightMatrix& W, double T,
                  const QggmrfPrior& prior, const SystemModel& model);

/// Quadratic surrogate of the data term plus the prior:
///   1/2 sum_i wt_i W_i (g_i - [Af]_i)^2 + R(f) + const
/// where wt are surrogate weights and const collects the saturated terms.
class SurrogateObjective {
 public:
  SurrogateObjective(const SystemModel& model, std::span<const double> g, const WeightMatrix& W,
                     std::vector<double> surrogate_weights, double constant, const QggmrfPrior& prior);

  double value(std::span<const double> f) const;
  /// Value from a precomputed forward projection of f.
  double value_from_projection(std::span<const double> f, std::span<const double> af) const;
  std::vector<double> gradient(std::span<const double> f) const;
  std::vector<double> gradient_from_projection(std::span<const double> f, std::span<const double> af) const;

 private:
  const SystemModel& model_;
  std::span<const double> g_;
  const WeightMatrix& W_;
  std::vector<double> wt_;
  double constant_;
  const QggmrfPrior& prior_;
};

/// Lower-nearest (1 - rho) quantile of |r_i sqrt(W_ii)|.
double select_threshold(std::span<const double> residuals, const WeightMatrix& W, double outlier_fraction);

struct ChannelResult {
  std::vector<double> volume;
  std::vector<std::uint8_t> bragg_map;
  std::vector<double> cost_trace;  // cost at the start of the main solve, then after each outer iteration
  double threshold = 0.0;
  int outer_iterations = 0;
};

/// `g` are projections of one channel; `init` overrides the FBP warm start.
ChannelResult rmbir_reconstruct(std::span<const double> g, const WeightMatrix& W, const SystemModel& model,
                                const RmbirParams& params, std::span<const double> init = {});

struct HyperResult {
  HyperVolume volume;
  BraggMapStack bragg;
  std::vector<ChannelResult> channels;  // volume/bragg_map cleared, traces kept
};

/// Reconstructs every channel of a counts sinogram independently. `params`
/// holds one entry (shared) or one per channel.
HyperResult reconstruct_all(const HyperSinogram& counts, const SystemModel& model,
                            std::span<const RmbirParams> params,
                            const std::function<void(std::size_t)>& on_channel_done = {});

}  // namespace wrt
