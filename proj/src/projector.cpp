#include "wrt/projector.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "wrt/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace wrt {

namespace {

void require_size(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw InvalidArgument(std::string("dimension mismatch: ") + what + " has " + std::to_string(got) +
                          " elements, model expects " + std::to_string(want));
}

}  // namespace

SystemModel::SystemModel(ViewGeometry geometry, int supersampling)
    : geometry_(std::move(geometry)), supersampling_(supersampling) {
  geometry_.validate();
  if (supersampling_ < 1) throw InvalidArgument("supersampling factor must be >= 1");

  const auto& vol = geometry_.volume;
  const double cx = 0.5 * static_cast<double>(vol.nx - 1);
  const double cy = 0.5 * static_cast<double>(vol.ny - 1);
  const double dv = geometry_.voxel_pitch_um;

  for (double deg : geometry_.angles_deg) {
    const double phi = deg * std::numbers::pi / 180.0;
    const double c = std::cos(phi);
    const double s = std::sin(phi);
    ViewKernel k;
    // Detector coordinate u = x cos(phi) + y sin(phi); the ray runs along
    // (-sin, cos). Minor-axis index along the ray is centre_term + u/dv *
    // inv_major + slope * plane.
    if (std::abs(c) >= std::abs(s)) {
      k.along_y = true;
      k.step = dv / std::abs(c);
      k.inv_major = 1.0 / c;
      k.slope = -s / c;
      k.centre_term = cy * s / c + cx;
    } else {
      k.along_y = false;
      k.step = dv / std::abs(s);
      k.inv_major = 1.0 / s;
      k.slope = -c / s;
      k.centre_term = cx * c / s + cy;
    }
    kernels_.push_back(k);
  }

  const int ss = supersampling_;
  for (int i = 0; i < ss; ++i) sub_offsets_.push_back((i + 0.5) / ss - 0.5);

  // z taps per detector row, averaged over sub-rows.
  const double crow = 0.5 * static_cast<double>(geometry_.detector_rows - 1);
  const double cz = 0.5 * static_cast<double>(vol.nz - 1);
  row_taps_.resize(geometry_.detector_rows);
  for (std::size_t r = 0; r < geometry_.detector_rows; ++r) {
    std::vector<double> w(vol.nz, 0.0);
    for (double off : sub_offsets_) {
      const double z_um = (static_cast<double>(r) + off - crow) * geometry_.pixel_pitch_um;
      const double fz = z_um / dv + cz;
      const double f0 = std::floor(fz);
      const double t = fz - f0;
      const auto l0 = static_cast<long>(f0);
      if (l0 >= 0 && l0 < static_cast<long>(vol.nz)) w[static_cast<std::size_t>(l0)] += (1.0 - t) / ss;
      if (l0 + 1 >= 0 && l0 + 1 < static_cast<long>(vol.nz) && t > 0.0)
        w[static_cast<std::size_t>(l0 + 1)] += t / ss;
    }
    for (std::size_t l = 0; l < vol.nz; ++l)
      if (w[l] != 0.0) row_taps_[r].push_back({l, w[l]});
  }
}

// Calls visit(offset_in_slice, weight) for every in-plane sample of the ray at
// fractional detector column `u_index` (pixel units, relative to centre).
template <class Visit>
void SystemModel::trace(const ViewKernel& k, double u_index, Visit&& visit) const {
  const auto& vol = geometry_.volume;
  const double u_vox = u_index * geometry_.pixel_pitch_um / geometry_.voxel_pitch_um;
  const double start = k.centre_term + u_vox * k.inv_major;
  if (k.along_y) {
    const long nx = static_cast<long>(vol.nx);
    for (std::size_t j = 0; j < vol.ny; ++j) {
      const double fx = start + k.slope * static_cast<double>(j);
      const double f0 = std::floor(fx);
      const long i0 = static_cast<long>(f0);
      if (i0 < -1 || i0 >= nx) continue;
      const double t = fx - f0;
      const std::size_t row = j * vol.nx;
      if (i0 >= 0) visit(row + static_cast<std::size_t>(i0), (1.0 - t) * k.step);
      if (i0 + 1 < nx) visit(row + static_cast<std::size_t>(i0 + 1), t * k.step);
    }
  } else {
    const long ny = static_cast<long>(vol.ny);
    for (std::size_t i = 0; i < vol.nx; ++i) {
      const double fy = start + k.slope * static_cast<double>(i);
      const double f0 = std::floor(fy);
      const long j0 = static_cast<long>(f0);
      if (j0 < -1 || j0 >= ny) continue;
      const double t = fy - f0;
      if (j0 >= 0) visit(static_cast<std::size_t>(j0) * vol.nx + i, (1.0 - t) * k.step);
      if (j0 + 1 < ny) visit(static_cast<std::size_t>(j0 + 1) * vol.nx + i, t * k.step);
    }
  }
}

void SystemModel::forward_one_view(std::span<const double> volume, std::size_t view,
                                   std::span<double> image) const {
  const auto& vol = geometry_.volume;
  const std::size_t slice = vol.nx * vol.ny;
  const std::size_t cols = geometry_.detector_cols;
  const std::size_t rows = geometry_.detector_rows;
  const double ccol = 0.5 * static_cast<double>(cols - 1);
  const double inv_ss = 1.0 / supersampling_;
  const ViewKernel& k = kernels_[view];

  std::vector<Sample> samples;
  std::vector<double> line(vol.nz);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r) image[r * cols + c] = 0.0;
    for (double off : sub_offsets_) {
      samples.clear();
      trace(k, static_cast<double>(c) + off - ccol,
            [&](std::size_t idx, double w) { samples.push_back({idx, w}); });
      // In-plane line integral through every slice, then z interpolation.
      for (std::size_t l = 0; l < vol.nz; ++l) {
        const double* plane = volume.data() + l * slice;
        double acc = 0.0;
        for (const auto& smp : samples) acc += smp.weight * plane[smp.index];
        line[l] = acc;
      }
      for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (const auto& tap : row_taps_[r]) acc += tap.weight * line[tap.slice];
        image[r * cols + c] += acc * inv_ss;
      }
    }
  }
}

void SystemModel::forward(std::span<const double> volume, std::span<double> sinogram) const {
  require_size(volume.size(), volume_size(), "volume");
  require_size(sinogram.size(), sinogram_size(), "sinogram");
  const std::size_t nview = geometry_.num_views();
  const std::size_t vs = view_size();
#pragma omp parallel for schedule(static) num_threads(worker_count())
  for (std::size_t v = 0; v < nview; ++v) forward_one_view(volume, v, sinogram.subspan(v * vs, vs));
}

std::vector<double> SystemModel::forward(std::span<const double> volume) const {
  std::vector<double> out(sinogram_size());
  forward(volume, out);
  return out;
}

void SystemModel::forward_view(std::span<const double> volume, std::size_t view,
                               std::span<double> image) const {
  require_size(volume.size(), volume_size(), "volume");
  require_size(image.size(), view_size(), "view image");
  if (view >= geometry_.num_views()) throw InvalidArgument("view index out of range");
  forward_one_view(volume, view, image);
}

void SystemModel::back(std::span<const double> sinogram, std::span<double> volume) const {
  require_size(volume.size(), volume_size(), "volume");
  require_size(sinogram.size(), sinogram_size(), "sinogram");
  const auto& vol = geometry_.volume;
  const std::size_t slice = vol.nx * vol.ny;
  const std::size_t cols = geometry_.detector_cols;
  const std::size_t rows = geometry_.detector_rows;
  const std::size_t vs = view_size();
  const double ccol = 0.5 * static_cast<double>(cols - 1);
  const double inv_ss = 1.0 / supersampling_;
  const std::size_t nz = vol.nz;

  // Each worker owns a contiguous block of z slices, so the accumulation
  // order into any voxel is the same for every worker count.
  const int workers = std::max(1, std::min<int>(worker_count(), static_cast<int>(nz)));
#pragma omp parallel num_threads(workers)
  {
    int nthreads = 1, tid = 0;
#ifdef _OPENMP
    nthreads = omp_get_num_threads();
    tid = omp_get_thread_num();
#endif
    const std::size_t l0 = nz * static_cast<std::size_t>(tid) / static_cast<std::size_t>(nthreads);
    const std::size_t l1 = nz * static_cast<std::size_t>(tid + 1) / static_cast<std::size_t>(nthreads);
    std::fill(volume.data() + l0 * slice, volume.data() + l1 * slice, 0.0);
    std::vector<Sample> samples;
    std::vector<double> val(nz);
    for (std::size_t v = 0; v < geometry_.num_views() && l1 > l0; ++v) {
      const ViewKernel& k = kernels_[v];
      const double* g = sinogram.data() + v * vs;
      for (std::size_t c = 0; c < cols; ++c) {
        bool any = false;
        for (std::size_t l = l0; l < l1; ++l) val[l] = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
          const double gr = g[r * cols + c];
          if (gr == 0.0) continue;
          for (const auto& tap : row_taps_[r])
            if (tap.slice >= l0 && tap.slice < l1) {
              val[tap.slice] += tap.weight * gr * inv_ss;
              any = true;
            }
        }
        if (!any) continue;
        for (double off : sub_offsets_) {
          samples.clear();
          trace(k, static_cast<double>(c) + off - ccol,
                [&](std::size_t idx, double w) { samples.push_back({idx, w}); });
          for (std::size_t l = l0; l < l1; ++l) {
            const double vl = val[l];
            if (vl == 0.0) continue;
            double* plane = volume.data() + l * slice;
            for (const auto& smp : samples) plane[smp.index] += smp.weight * vl;
          }
        }
      }
    }
  }
}

std::vector<double> SystemModel::back(std::span<const double> sinogram) const {
  std::vector<double> out(volume_size());
  back(sinogram, out);
  return out;
}

}  // namespace wrt
