#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "wrt/rmbir.hpp"

namespace wrt {

namespace {

struct Offset {
  int dx, dy, dz;
  double weight;
};

// Half of the 26-neighbourhood; each unordered pair is visited once.
const std::array<Offset, 13>& half_neighbourhood() {
  static const std::array<Offset, 13> offsets = [] {
    std::array<Offset, 13> o{};
    std::size_t n = 0;
    for (int dz = -1; dz <= 1; ++dz)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const bool forward = dz > 0 || (dz == 0 && dy > 0) || (dz == 0 && dy == 0 && dx > 0);
          if (!forward) continue;
          o[n++] = {dx, dy, dz, 1.0 / std::sqrt(static_cast<double>(dx * dx + dy * dy + dz * dz))};
        }
    return o;
  }();
  return offsets;
}

template <class PairFn>
void for_each_pair(const VolumeShape& s, PairFn&& fn) {
  const auto nx = static_cast<long>(s.nx), ny = static_cast<long>(s.ny), nz = static_cast<long>(s.nz);
  for (const auto& o : half_neighbourhood()) {
    const long x0 = std::max(0L, -static_cast<long>(o.dx)), x1 = std::min(nx, nx - o.dx);
    const long y0 = std::max(0L, -static_cast<long>(o.dy)), y1 = std::min(ny, ny - o.dy);
    const long z1 = nz - o.dz;
    const long delta = (static_cast<long>(o.dz) * ny + o.dy) * nx + o.dx;
    for (long z = 0; z < z1; ++z)
      for (long y = y0; y < y1; ++y) {
        const long base = (z * ny + y) * nx;
        for (long x = x0; x < x1; ++x) {
          const auto s_idx = static_cast<std::size_t>(base + x);
          fn(s_idx, static_cast<std::size_t>(base + x + delta), o.weight);
        }
      }
  }
}

}  // namespace

void QggmrfParams::validate() const {
  if (!(sigma > 0.0)) throw InvalidArgument("q-GGMRF sigma must be > 0");
  if (!(c > 0.0)) throw InvalidArgument("q-GGMRF c must be > 0");
  if (!(1.0 <= q && q < p && p <= 2.0)) throw InvalidArgument("q-GGMRF shape must satisfy 1 <= q < p <= 2");
}

QggmrfPrior::QggmrfPrior(QggmrfParams params) : params_(params) { params_.validate(); }

double QggmrfPrior::potential(double delta) const {
  const auto& P = params_;
  const double u = std::abs(delta) / P.sigma;
  if (u == 0.0) return 0.0;
  const double t = std::pow(u / P.c, P.p - P.q);
  const double up = P.p == 2.0 ? u * u : std::pow(u, P.p);
  return up / (1.0 + t);
}

double QggmrfPrior::derivative(double delta) const {
  const auto& P = params_;
  const double u = std::abs(delta) / P.sigma;
  if (u == 0.0) return 0.0;
  const double t = std::pow(u / P.c, P.p - P.q);
  const double up1 = P.p == 2.0 ? u : std::pow(u, P.p - 1.0);
  const double b = 1.0 + t;
  const double d = up1 * (P.p * b - (P.p - P.q) * t) / (b * b) / P.sigma;
  return delta < 0.0 ? -d : d;
}

double QggmrfPrior::curvature_bound() const {
  // rho'' is largest at the origin when p = 2 and unbounded there when p < 2.
  if (params_.p < 2.0) return std::numeric_limits<double>::infinity();
  return 2.0 / (params_.sigma * params_.sigma);
}

double QggmrfPrior::lipschitz_bound() const {
  double degree = 0.0;
  for (const auto& o : half_neighbourhood()) degree += 2.0 * o.weight;
  // Weighted graph Laplacian eigenvalues are bounded by twice the degree.
  return curvature_bound() * 2.0 * degree;
}

double QggmrfPrior::value(std::span<const double> f, const VolumeShape& shape) const {
  double sum = 0.0;
  for_each_pair(shape, [&](std::size_t s, std::size_t r, double b) { sum += b * potential(f[s] - f[r]); });
  return sum;
}

void QggmrfPrior::add_gradient(std::span<const double> f, const VolumeShape& shape, std::span<double> grad) const {
  for_each_pair(shape, [&](std::size_t s, std::size_t r, double b) {
    const double d = b * derivative(f[s] - f[r]);
    grad[s] += d;
    grad[r] -= d;
  });
}

}  // namespace wrt
