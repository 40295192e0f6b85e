#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "wrt/parallel.hpp"
#include "wrt/projector.hpp"

namespace wrt {

namespace {

// FFTW planning is not thread safe; execution is.
std::mutex g_plan_mutex;

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Frequency response of the band-limited ramp (Ram-Lak) built from its
// spatial kernel, so the DC term is exact for the discrete problem.
std::vector<double> ramp_response(std::size_t n_fft, double pitch, FbpFilter filter) {
  std::vector<double> kernel(n_fft, 0.0);
  const double pi2 = std::numbers::pi * std::numbers::pi;
  kernel[0] = 1.0 / (4.0 * pitch * pitch);
  for (std::size_t i = 1; i <= n_fft / 2; ++i) {
    if (i % 2 == 0) continue;
    const double h = -1.0 / (pi2 * static_cast<double>(i * i) * pitch * pitch);
    kernel[i] = h;
    kernel[n_fft - i] = h;
  }

  const std::size_t n_freq = n_fft / 2 + 1;
  std::vector<std::complex<double>> spectrum(n_freq);
  {
    std::lock_guard lock(g_plan_mutex);
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n_fft), kernel.data(),
                                          reinterpret_cast<fftw_complex*>(spectrum.data()), FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }

  std::vector<double> response(n_freq);
  for (std::size_t f = 0; f < n_freq; ++f) {
    // Discrete convolution integral carries one factor of the pitch.
    double h = spectrum[f].real() * pitch;
    if (filter == FbpFilter::hamming)
      h *= 0.54 + 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(f) / static_cast<double>(n_fft));
    response[f] = h;
  }
  return response;
}

}  // namespace

FbpFilter fbp_filter_from_string(const std::string& name) {
  if (name == "ramlak") return FbpFilter::ramlak;
  if (name == "hamming") return FbpFilter::hamming;
  throw InvalidArgument("unknown FBP filter '" + name + "' (expected ramlak or hamming)");
}

std::string to_string(FbpFilter f) { return f == FbpFilter::hamming ? "hamming" : "ramlak"; }

std::vector<double> fbp_filter_backproject(std::span<const double> projections, const SystemModel& model,
                                           FbpFilter filter) {
  const auto& geo = model.geometry();
  if (projections.size() != model.sinogram_size())
    throw InvalidArgument("dimension mismatch: sinogram does not match model");
  if (geo.num_views() < 2) throw InvalidArgument("FBP needs at least two views");

  const std::size_t cols = geo.detector_cols;
  const std::size_t rows = geo.detector_rows;
  const std::size_t n_fft = next_pow2(2 * cols);
  const std::size_t n_freq = n_fft / 2 + 1;
  const auto response = ramp_response(n_fft, geo.pixel_pitch_um, filter);

  // Filter every detector row.
  std::vector<double> filtered(projections.size());
  std::vector<double> line(n_fft);
  std::vector<std::complex<double>> spec(n_freq);
  auto* spec_ptr = reinterpret_cast<fftw_complex*>(spec.data());
  fftw_plan fwd, inv;
  {
    std::lock_guard lock(g_plan_mutex);
    fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n_fft), line.data(), spec_ptr, FFTW_ESTIMATE);
    inv = fftw_plan_dft_c2r_1d(static_cast<int>(n_fft), spec_ptr, line.data(), FFTW_ESTIMATE);
  }
  const std::size_t n_lines = geo.num_views() * rows;
  for (std::size_t li = 0; li < n_lines; ++li) {
    std::fill(line.begin(), line.end(), 0.0);
    std::copy_n(projections.data() + li * cols, cols, line.begin());
    fftw_execute(fwd);
    for (std::size_t f = 0; f < n_freq; ++f) spec[f] *= response[f];
    fftw_execute(inv);
    for (std::size_t c = 0; c < cols; ++c) filtered[li * cols + c] = line[c] / static_cast<double>(n_fft);
  }
  {
    std::lock_guard lock(g_plan_mutex);
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(inv);
  }

  // Pixel-driven back-projection with linear interpolation on the detector.
  const auto& vol = geo.volume;
  std::vector<double> out(vol.size(), 0.0);
  const double dv = geo.voxel_pitch_um;
  const double dp = geo.pixel_pitch_um;
  const double cx = 0.5 * static_cast<double>(vol.nx - 1);
  const double cy = 0.5 * static_cast<double>(vol.ny - 1);
  const double cz = 0.5 * static_cast<double>(vol.nz - 1);
  const double ccol = 0.5 * static_cast<double>(cols - 1);
  const double crow = 0.5 * static_cast<double>(rows - 1);
  const double weight = std::numbers::pi / static_cast<double>(geo.num_views());

  std::vector<double> cosv, sinv;
  for (double a : geo.angles_deg) {
    cosv.push_back(std::cos(a * std::numbers::pi / 180.0));
    sinv.push_back(std::sin(a * std::numbers::pi / 180.0));
  }

#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (std::size_t z = 0; z < vol.nz; ++z) {
    const double fr = (static_cast<double>(z) - cz) * dv / dp + crow;
    const double r0f = std::floor(fr);
    const double tr = fr - r0f;
    const long r0 = static_cast<long>(r0f);
    for (std::size_t v = 0; v < geo.num_views(); ++v) {
      const double* base = filtered.data() + v * rows * cols;
      for (std::size_t y = 0; y < vol.ny; ++y) {
        const double yu = (static_cast<double>(y) - cy) * dv * sinv[v];
        for (std::size_t x = 0; x < vol.nx; ++x) {
          const double u = (static_cast<double>(x) - cx) * dv * cosv[v] + yu;
          const double fc = u / dp + ccol;
          const double c0f = std::floor(fc);
          const long c0 = static_cast<long>(c0f);
          const double tc = fc - c0f;
          double acc = 0.0;
          for (int dr = 0; dr < 2; ++dr) {
            const long rr = r0 + dr;
            const double wr = dr ? tr : 1.0 - tr;
            if (wr == 0.0 || rr < 0 || rr >= static_cast<long>(rows)) continue;
            const double* row = base + static_cast<std::size_t>(rr) * cols;
            if (c0 >= 0 && c0 < static_cast<long>(cols)) acc += wr * (1.0 - tc) * row[c0];
            if (c0 + 1 >= 0 && c0 + 1 < static_cast<long>(cols)) acc += wr * tc * row[c0 + 1];
          }
          out[vol.index(x, y, z)] += weight * acc;
        }
      }
    }
  }
  return out;
}

std::vector<double> fbp_reconstruct(const HyperSinogram& sino, std::size_t k, const SystemModel& model,
                                    FbpFilter filter) {
  if (sino.kind != SinogramKind::projection)
    throw InvalidArgument("FBP expects projections; convert counts with counts_to_projection first");
  sino.check_shape();
  if (k >= sino.channels) throw InvalidArgument("channel index out of range");
  const auto ch = sino.channel(k);
  std::vector<double> g(ch.begin(), ch.end());
  return fbp_filter_backproject(g, model, filter);
}

HyperVolume fbp_reconstruct_all(const HyperSinogram& sino, const SystemModel& model, FbpFilter filter) {
  HyperVolume out;
  out.channels = sino.channels;
  out.shape = model.geometry().volume;
  out.data.resize(out.channels * out.shape.size());
  for (std::size_t k = 0; k < sino.channels; ++k) {
    const auto f = fbp_reconstruct(sino, k, model, filter);
    std::copy(f.begin(), f.end(), out.channel(k).begin());
  }
  return out;
}

}  // namespace wrt
