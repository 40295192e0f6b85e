#include "wrt/core.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wrt {

WavelengthGrid::WavelengthGrid(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) throw InvalidArgument("wavelength grid must hold at least one value");
  for (std::size_t k = 0; k < values_.size(); ++k) {
    if (!(values_[k] > 0.0) || !std::isfinite(values_[k]))
      throw InvalidArgument("wavelengths must be positive and finite");
    if (k > 0 && !(values_[k] > values_[k - 1]))
      throw InvalidArgument("wavelengths must be strictly increasing");
  }
}

WavelengthGrid WavelengthGrid::linspace(double first, double last, std::size_t count) {
  if (count == 0) throw InvalidArgument("wavelength count must be >= 1");
  std::vector<double> v(count);
  if (count == 1) {
    v[0] = first;
  } else {
    const double step = (last - first) / static_cast<double>(count - 1);
    for (std::size_t k = 0; k < count; ++k) v[k] = first + step * static_cast<double>(k);
    v.back() = last;
  }
  return WavelengthGrid(std::move(v));
}

bool WavelengthGrid::contains(double lambda) const {
  const double slack = 1e-9 * std::max(1.0, back());
  return lambda >= front() - slack && lambda <= back() + slack;
}

std::size_t WavelengthGrid::nearest(double lambda) const {
  std::size_t best = 0;
  for (std::size_t k = 1; k < values_.size(); ++k)
    if (std::abs(values_[k] - lambda) < std::abs(values_[best] - lambda)) best = k;
  return best;
}

std::vector<double> ViewGeometry::uniform_angles(double first, double last, std::size_t count) {
  std::vector<double> a(count);
  const double step = count ? (last - first) / static_cast<double>(count) : 0.0;
  for (std::size_t v = 0; v < count; ++v) a[v] = first + step * static_cast<double>(v);
  return a;
}

void ViewGeometry::validate() const {
  if (angles_deg.empty()) throw InvalidArgument("geometry: at least one view angle is required");
  for (double a : angles_deg)
    if (!(a >= 0.0 && a < 360.0)) {
      std::ostringstream os;
      os << "geometry: view angle " << a << " outside [0, 360)";
      throw InvalidArgument(os.str());
    }
  if (detector_rows == 0 || detector_cols == 0)
    throw InvalidArgument("geometry: detector dimensions must be positive");
  if (!(pixel_pitch_um > 0.0)) throw InvalidArgument("geometry: pixel_pitch must be > 0");
  if (!(voxel_pitch_um > 0.0)) throw InvalidArgument("geometry: voxel_pitch must be > 0");
  if (volume.size() == 0) throw InvalidArgument("geometry: volume dimensions must be positive");
}

void HyperSinogram::check_shape() const {
  if (data.size() != channels * channel_size()) {
    std::ostringstream os;
    os << "sinogram payload holds " << data.size() << " values, shape (" << channels << ", "
       << views << ", " << rows << ", " << cols << ") needs " << channels * channel_size();
    throw FormatError(os.str());
  }
}

std::vector<std::size_t> LabelVolume::sizes() const {
  std::vector<std::size_t> n(static_cast<std::size_t>(count) + 1, 0);
  for (auto l : labels)
    if (l >= 0 && l <= count) ++n[static_cast<std::size_t>(l)];
  return n;
}

double projection_from_count(double count, double incident_flux, double floor) {
  return -std::log(std::max(count, floor) / incident_flux);
}

double count_from_projection(double projection, double incident_flux) {
  return incident_flux * std::exp(-projection);
}

HyperSinogram counts_to_projection(const HyperSinogram& counts, double floor) {
  if (!(counts.incident_flux > 0.0)) throw InvalidArgument("incident flux I0 must be > 0");
  if (counts.kind != SinogramKind::counts)
    throw InvalidArgument("counts_to_projection expects a counts sinogram");
  counts.check_shape();

  HyperSinogram out = counts;
  out.kind = SinogramKind::projection;
  for (std::size_t i = 0; i < counts.data.size(); ++i) {
    if (counts.data[i] < 0.0f) throw InvalidArgument("counts must be non-negative");
    out.data[i] = static_cast<float>(projection_from_count(counts.data[i], counts.incident_flux, floor));
  }
  return out;
}

}  // namespace wrt
