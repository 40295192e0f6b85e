#include "wrt/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <boost/math/special_functions/gamma.hpp>

#include "wrt/parallel.hpp"
#include "wrt/random.hpp"

namespace wrt {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
// Gaussian ridges are truncated beyond this squared normalised distance.
constexpr double kTruncation = 36.0;

double locus_wavelength(const ReflectionTrace& t, double phi_deg) {
  return 2.0 * t.d_spacing * std::abs(std::sin((phi_deg + t.phase_deg) * kDeg)) / t.order;
}

}  // namespace

std::int64_t poisson_inverse_cdf(double mean, double u) {
  if (!(mean > 0.0)) return 0;
  if (mean < 30.0) {
    double p = std::exp(-mean);
    double cdf = p;
    std::int64_t n = 0;
    while (u > cdf && n < 10000) {
      ++n;
      p *= mean / static_cast<double>(n);
      cdf += p;
    }
    return n;
  }
  // Start at the mode with the exact CDF and walk to the quantile.
  auto n = static_cast<std::int64_t>(std::floor(mean));
  double cdf = boost::math::gamma_q(static_cast<double>(n + 1), mean);
  double p = std::exp(static_cast<double>(n) * std::log(mean) - mean - std::lgamma(static_cast<double>(n + 1)));
  if (u <= cdf) {
    while (n > 0 && u <= cdf - p) {
      cdf -= p;
      p *= static_cast<double>(n) / mean;
      --n;
    }
  } else {
    while (u > cdf) {
      ++n;
      p *= mean / static_cast<double>(n);
      cdf += p;
      if (p == 0.0) break;
    }
  }
  return n;
}

double bragg_wavelength(double d_spacing, double theta_deg, int order) {
  if (!(theta_deg > 0.0 && theta_deg < 90.0)) throw InvalidArgument("Bragg angle must lie in (0, 90) degrees");
  if (order < 1) throw InvalidArgument("reflection order must be >= 1");
  if (!(d_spacing > 0.0)) throw InvalidArgument("d-spacing must be > 0");
  return 2.0 * d_spacing * std::sin(theta_deg * kDeg) / order;
}

double folded_bragg_angle(double phi_deg, double phase_deg) {
  double t = std::fmod(phi_deg + phase_deg, 180.0);
  if (t < 0.0) t += 180.0;
  return t <= 90.0 ? t : 180.0 - t;
}

void ReflectionTrace::validate() const {
  if (!(d_spacing > 0.0)) throw InvalidArgument("trace d-spacing must be > 0");
  if (order < 1) throw InvalidArgument("trace order must be >= 1");
  if (!(amplitude > 0.0)) throw InvalidArgument("trace amplitude must be > 0");
  if (!(angular_width_deg > 0.0) || !(wavelength_width > 0.0))
    throw InvalidArgument("trace widths must be > 0");
}

double ReflectionTrace::profile(double lambda, double phi_deg) const {
  // Squared normalised distance from (phi, lambda) to the locus
  // (phi', lambda_B(phi')): dense scan over phi' then a golden-section polish.
  if (lambda > 2.0 * d_spacing / order + 6.0 * wavelength_width) return 0.0;
  auto dist2 = [&](double p) {
    const double a = (phi_deg - p) / angular_width_deg;
    const double b = (lambda - locus_wavelength(*this, p)) / wavelength_width;
    return a * a + b * b;
  };
  constexpr int kHalfSamples = 120;
  const double step = 6.0 * angular_width_deg / kHalfSamples;
  double best_p = phi_deg;
  double best = dist2(phi_deg);
  for (int m = -kHalfSamples; m <= kHalfSamples; ++m) {
    const double p = phi_deg + m * step;
    const double d = dist2(p);
    if (d < best) {
      best = d;
      best_p = p;
    }
  }
  double lo = best_p - step, hi = best_p + step;
  const double inv_phi = 0.5 * (std::sqrt(5.0) - 1.0);
  for (int it = 0; it < 40; ++it) {
    const double a = hi - inv_phi * (hi - lo);
    const double b = lo + inv_phi * (hi - lo);
    if (dist2(a) < dist2(b)) hi = b; else lo = a;
  }
  best = std::min(best, dist2(0.5 * (lo + hi)));
  if (best > kTruncation) return 0.0;
  return std::exp(-best);
}

std::vector<ReflectionTrace> default_traces() {
  ReflectionTrace t111;
  t111.d_spacing = 2.087;
  t111.phase_deg = 20.0;
  ReflectionTrace t200;
  t200.d_spacing = 1.808;
  t200.phase_deg = 75.0;
  ReflectionTrace t220;
  t220.d_spacing = 1.278;
  t220.phase_deg = 130.0;
  return {t111, t200, t220};
}

Material::Material(MaterialKind kind, WavelengthGrid grid, std::vector<double> spectrum,
                   std::vector<ReflectionTrace> traces)
    : kind_(kind), grid_(std::move(grid)), spectrum_(std::move(spectrum)), traces_(std::move(traces)) {
  if (spectrum_.size() != grid_.size()) throw InvalidArgument("material spectrum must match the wavelength grid");
  for (double v : spectrum_)
    if (!(v > 0.0)) throw InvalidArgument("baseline spectrum must be > 0");
  if ((kind_ == MaterialKind::crystal) == traces_.empty())
    throw InvalidArgument("a crystal needs at least one reflection trace; a powder has none");
  for (const auto& t : traces_) t.validate();
}

Material Material::powder(WavelengthGrid grid, std::vector<double> spectrum) {
  return Material(MaterialKind::powder, std::move(grid), std::move(spectrum), {});
}

Material Material::crystal(WavelengthGrid grid, std::vector<double> spectrum, std::vector<ReflectionTrace> traces) {
  return Material(MaterialKind::crystal, std::move(grid), std::move(spectrum), std::move(traces));
}

double Material::baseline(double lambda) const {
  if (!grid_.contains(lambda)) throw InvalidArgument("wavelength outside the material grid");
  const auto v = grid_.values();
  if (v.size() == 1 || lambda <= v.front()) return spectrum_.front();
  if (lambda >= v.back()) return spectrum_.back();
  const auto it = std::upper_bound(v.begin(), v.end(), lambda);
  const auto k = static_cast<std::size_t>(it - v.begin());
  const double t = (lambda - v[k - 1]) / (v[k] - v[k - 1]);
  return spectrum_[k - 1] + t * (spectrum_[k] - spectrum_[k - 1]);
}

double Material::trace_contribution(double lambda, double phi_deg) const {
  if (!grid_.contains(lambda)) throw InvalidArgument("wavelength outside the material grid");
  double sum = 0.0;
  for (const auto& t : traces_) sum += t.amplitude * t.profile(lambda, phi_deg);
  return sum;
}

double Material::attenuation(double lambda, double phi_deg) const {
  return baseline(lambda) + trace_contribution(lambda, phi_deg);
}

std::vector<double> piecewise_linear_spectrum(const WavelengthGrid& grid,
                                              std::span<const std::pair<double, double>> knots) {
  if (knots.empty()) throw InvalidArgument("spectrum needs at least one knot");
  for (std::size_t i = 1; i < knots.size(); ++i)
    if (!(knots[i].first > knots[i - 1].first)) throw InvalidArgument("spectrum knots must be increasing in wavelength");
  std::vector<double> out(grid.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double l = grid[k];
    if (l <= knots.front().first) {
      out[k] = knots.front().second;
    } else if (l >= knots.back().first) {
      out[k] = knots.back().second;
    } else {
      std::size_t i = 1;
      while (knots[i].first < l) ++i;
      const double t = (l - knots[i - 1].first) / (knots[i].first - knots[i - 1].first);
      out[k] = knots[i - 1].second + t * (knots[i].second - knots[i - 1].second);
    }
  }
  return out;
}

std::vector<double> GrainPhantom::attenuation_volume(double lambda, double phi_deg) const {
  std::vector<double> mu_grain(grains.size());
  for (std::size_t g = 0; g < grains.size(); ++g) mu_grain[g] = grains[g].attenuation(lambda, phi_deg);
  const double mu_powder = powder.baseline(lambda);
  std::vector<double> out(labels.labels.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto l = labels.labels[i];
    out[i] = l > 0 ? mu_grain[static_cast<std::size_t>(l - 1)] : powder_fraction[i] * mu_powder;
  }
  return out;
}

std::vector<double> GrainPhantom::baseline_volume(double lambda) const {
  std::vector<double> mu_grain(grains.size());
  for (std::size_t g = 0; g < grains.size(); ++g) mu_grain[g] = grains[g].baseline(lambda);
  const double mu_powder = powder.baseline(lambda);
  std::vector<double> out(labels.labels.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto l = labels.labels[i];
    out[i] = l > 0 ? mu_grain[static_cast<std::size_t>(l - 1)] : powder_fraction[i] * mu_powder;
  }
  return out;
}

GrainPhantom generate_phantom(const PhantomParams& params, Material powder, Material crystal,
                              std::span<const std::optional<Material>> per_grain) {
  const auto& shape = params.shape;
  if (shape.size() == 0) throw InvalidArgument("phantom volume must be non-empty");
  if (powder.kind() != MaterialKind::powder) throw InvalidArgument("host material must be a powder");
  if (params.n_grains > 0) {
    if (!(params.grain_radius_min >= 1.0) || params.grain_radius_max < params.grain_radius_min)
      throw InvalidArgument("grain radius range must satisfy 1 <= min <= max");
    if (params.grain_radius_max > params.cylinder_radius)
      throw InvalidArgument("grains do not fit inside the cylinder");
  }

  const double cx = 0.5 * static_cast<double>(shape.nx - 1);
  const double cy = 0.5 * static_cast<double>(shape.ny - 1);
  const double cz = 0.5 * static_cast<double>(shape.nz - 1);

  struct Sphere {
    double x, y, z, r;
  };
  SplitMix64 rng(params.seed);
  std::vector<double> radii(params.n_grains);
  for (auto& r : radii) r = rng.uniform(params.grain_radius_min, params.grain_radius_max);
  // Largest first: packing is easier and label 1 is the largest grain.
  std::sort(radii.begin(), radii.end(), std::greater<>());

  std::vector<Sphere> spheres;
  for (double r : radii) {
    bool placed = false;
    for (int attempt = 0; attempt < params.max_attempts && !placed; ++attempt) {
      const double rho = std::sqrt(rng.uniform()) * (params.cylinder_radius - r);
      const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double zlo = std::min(r, cz), zhi = std::max(static_cast<double>(shape.nz - 1) - r, cz);
      Sphere s{cx + rho * std::cos(ang), cy + rho * std::sin(ang), rng.uniform(zlo, zhi), r};
      placed = std::all_of(spheres.begin(), spheres.end(), [&](const Sphere& o) {
        const double d = std::hypot(s.x - o.x, s.y - o.y, s.z - o.z);
        return d >= s.r + o.r + params.gap;
      });
      if (placed) spheres.push_back(s);
    }
    if (!placed)
      throw InvalidArgument("infeasible grain packing after " + std::to_string(params.max_attempts) +
                            " attempts; reduce n_grains or radii");
  }

  GrainPhantom ph{LabelVolume{shape, std::vector<std::int32_t>(shape.size(), 0),
                              static_cast<std::int32_t>(spheres.size())},
                  std::vector<float>(shape.size(), 0.0f), std::move(powder), {}};

  constexpr int kSub = 4;
  const double r2 = params.cylinder_radius * params.cylinder_radius;
  for (std::size_t j = 0; j < shape.ny; ++j)
    for (std::size_t i = 0; i < shape.nx; ++i) {
      int inside = 0;
      for (int sj = 0; sj < kSub; ++sj)
        for (int si = 0; si < kSub; ++si) {
          const double x = static_cast<double>(i) + (si + 0.5) / kSub - 0.5 - cx;
          const double y = static_cast<double>(j) + (sj + 0.5) / kSub - 0.5 - cy;
          inside += (x * x + y * y <= r2);
        }
      const float frac = static_cast<float>(inside) / (kSub * kSub);
      for (std::size_t l = 0; l < shape.nz; ++l) ph.powder_fraction[shape.index(i, j, l)] = frac;
    }

  for (std::size_t g = 0; g < spheres.size(); ++g) {
    const auto& s = spheres[g];
    for (std::size_t l = 0; l < shape.nz; ++l)
      for (std::size_t j = 0; j < shape.ny; ++j)
        for (std::size_t i = 0; i < shape.nx; ++i) {
          const double dx = static_cast<double>(i) - s.x, dy = static_cast<double>(j) - s.y,
                       dz = static_cast<double>(l) - s.z;
          if (dx * dx + dy * dy + dz * dz <= s.r * s.r) {
            const auto idx = shape.index(i, j, l);
            ph.labels.labels[idx] = static_cast<std::int32_t>(g + 1);
            ph.powder_fraction[idx] = 0.0f;
          }
        }
    if (g < per_grain.size() && per_grain[g]) ph.grains.push_back(*per_grain[g]);
    else ph.grains.push_back(crystal);
  }
  return ph;
}

SimulatedMeasurements simulate_measurements(const GrainPhantom& phantom, const SystemModel& model,
                                            const WavelengthGrid& grid, const SimulationParams& params) {
  if (!(params.incident_flux > 0.0)) throw InvalidArgument("incident flux I0 must be > 0");
  const auto& geo = model.geometry();
  if (!(geo.volume == phantom.labels.shape)) throw InvalidArgument("phantom shape does not match the geometry");

  const std::size_t K = grid.size();
  const std::size_t V = geo.num_views();
  const std::size_t G = phantom.grains.size();
  const std::size_t vs = geo.view_size();

  // The line integral is linear in the material images, so project each
  // material indicator once and recombine per (wavelength, view).
  std::vector<double> powder(phantom.powder_fraction.begin(), phantom.powder_fraction.end());
  const auto powder_proj = model.forward(powder);
  std::vector<std::vector<double>> grain_proj(G);
  for (std::size_t g = 0; g < G; ++g) {
    std::vector<double> ind(phantom.labels.labels.size());
    for (std::size_t i = 0; i < ind.size(); ++i)
      ind[i] = phantom.labels.labels[i] == static_cast<std::int32_t>(g + 1) ? 1.0 : 0.0;
    grain_proj[g] = model.forward(ind);
  }

  std::vector<double> mu_powder(K);
  std::vector<double> mu_grain(K * V * G);
  SimulatedMeasurements out;
  out.n_grains = G;
  out.signature_truth.assign(G * V * K, 0);
  for (std::size_t k = 0; k < K; ++k) {
    mu_powder[k] = phantom.powder.baseline(grid[k]);
    for (std::size_t v = 0; v < V; ++v)
      for (std::size_t g = 0; g < G; ++g) {
        const auto& m = phantom.grains[g];
        const double base = m.baseline(grid[k]);
        const double extra = m.trace_contribution(grid[k], geo.angles_deg[v]);
        mu_grain[(k * V + v) * G + g] = base + extra;
        out.signature_truth[(g * V + v) * K + k] = extra > params.bragg_fraction * base ? 1 : 0;
      }
  }

  out.counts = HyperSinogram{SinogramKind::counts, K, V, geo.detector_rows, geo.detector_cols,
                             params.incident_flux, std::vector<float>(K * V * vs)};
  out.bragg_truth = BraggMapStack{K, V, geo.detector_rows, geo.detector_cols, std::vector<std::uint8_t>(K * V * vs)};
  const double min_path = params.min_path_fraction * geo.voxel_pitch_um;
  const std::size_t cols = geo.detector_cols;

#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (std::size_t kv = 0; kv < K * V; ++kv) {
    const std::size_t k = kv / V, v = kv % V;
    const double* mg = mu_grain.data() + kv * G;
    for (std::size_t p = 0; p < vs; ++p) {
      const std::size_t m = v * vs + p;
      double line = mu_powder[k] * powder_proj[m];
      double active_path = 0.0;
      for (std::size_t g = 0; g < G; ++g) {
        line += mg[g] * grain_proj[g][m];
        if (out.signature_truth[(g * V + v) * K + k]) active_path += grain_proj[g][m];
      }
      const double mean = params.incident_flux * std::exp(-line);
      double count = mean;
      if (params.noise) {
        CounterRng rng(params.seed, {k, v, p / cols, p % cols});
        count = static_cast<double>(poisson_inverse_cdf(mean, rng.uniform()));
      }
      out.counts.data[kv * vs + p] = static_cast<float>(count);
      out.bragg_truth.data[kv * vs + p] = active_path > min_path ? 1 : 0;
    }
  }
  return out;
}

HyperVolume ground_truth_volume(const GrainPhantom& phantom, const WavelengthGrid& grid) {
  HyperVolume hv;
  hv.channels = grid.size();
  hv.shape = phantom.labels.shape;
  hv.data.resize(hv.channels * hv.shape.size());
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto v = phantom.baseline_volume(grid[k]);
    std::copy(v.begin(), v.end(), hv.channel(k).begin());
  }
  return hv;
}

}  // namespace wrt
