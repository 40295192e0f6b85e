#pragma once

// Domain types shared by every stage of the wavelength-resolved tomography
// pipeline. Array layouts are fixed, slowest to fastest:
//   sinograms  (wavelength, view, row, col)
//   volumes    (wavelength, z, y, x)

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace wrt {

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Counts below this value are clamped before taking logarithms or forming
/// noise weights.
inline constexpr double kCountFloor = 0.5;

class WavelengthGrid {
 public:
  WavelengthGrid() = default;
  /// Values in Angstrom; must be strictly increasing and positive.
  explicit WavelengthGrid(std::vector<double> values);

  static WavelengthGrid linspace(double first, double last, std::size_t count);

  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t k) const { return values_[k]; }
  std::span<const double> values() const { return values_; }
  double front() const { return values_.front(); }
  double back() const { return values_.back(); }
  bool contains(double lambda) const;
  /// Index of the grid value closest to `lambda`.
  std::size_t nearest(double lambda) const;

 private:
  std::vector<double> values_;
};

struct VolumeShape {
  std::size_t nx = 0;
  std::size_t ny = 0;
  std::size_t nz = 0;

  std::size_t size() const { return nx * ny * nz; }
  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return (z * ny + y) * nx + x;
  }
  bool operator==(const VolumeShape&) const = default;
};

/// Parallel-beam acquisition about a single rotation axis (the volume z axis,
/// which is also the detector row direction).
struct ViewGeometry {
  std::vector<double> angles_deg;
  std::size_t detector_rows = 0;
  std::size_t detector_cols = 0;
  double pixel_pitch_um = 50.0;
  double voxel_pitch_um = 50.0;
  VolumeShape volume;

  /// `count` angles evenly spaced over [first, last), endpoint excluded.
  static std::vector<double> uniform_angles(double first, double last, std::size_t count);

  std::size_t num_views() const { return angles_deg.size(); }
  std::size_t view_size() const { return detector_rows * detector_cols; }
  std::size_t measurements() const { return num_views() * view_size(); }

  /// Throws InvalidArgument describing the first violated invariant.
  void validate() const;
};

enum class SinogramKind { counts, projection };

struct HyperSinogram {
  SinogramKind kind = SinogramKind::counts;
  std::size_t channels = 0;
  std::size_t views = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  double incident_flux = 0.0;
  std::vector<float> data;

  std::size_t channel_size() const { return views * rows * cols; }
  std::span<const float> channel(std::size_t k) const {
    return std::span<const float>(data).subspan(k * channel_size(), channel_size());
  }
  std::span<float> channel(std::size_t k) {
    return std::span<float>(data).subspan(k * channel_size(), channel_size());
  }
  /// Throws FormatError if the payload length disagrees with the shape.
  void check_shape() const;
};

struct HyperVolume {
  std::size_t channels = 0;
  VolumeShape shape;
  std::vector<float> data;

  std::size_t channel_size() const { return shape.size(); }
  std::span<const float> channel(std::size_t k) const {
    return std::span<const float>(data).subspan(k * channel_size(), channel_size());
  }
  std::span<float> channel(std::size_t k) {
    return std::span<float>(data).subspan(k * channel_size(), channel_size());
  }
};

struct BraggMapStack {
  std::size_t channels = 0;
  std::size_t views = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::uint8_t> data;

  std::size_t channel_size() const { return views * rows * cols; }
  std::size_t view_size() const { return rows * cols; }
  std::span<const std::uint8_t> channel(std::size_t k) const {
    return std::span<const std::uint8_t>(data).subspan(k * channel_size(), channel_size());
  }
  std::span<std::uint8_t> channel(std::size_t k) {
    return std::span<std::uint8_t>(data).subspan(k * channel_size(), channel_size());
  }
};

/// 0 is background/powder, 1..count are domain ids.
struct LabelVolume {
  VolumeShape shape;
  std::vector<std::int32_t> labels;
  std::int32_t count = 0;

  /// Number of voxels carrying each label; index 0 is the background.
  std::vector<std::size_t> sizes() const;
};

struct CrystalSignature {
  std::int32_t domain_id = 0;
  std::size_t views = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> matrix;  // (view, wavelength)
  std::vector<float> scores;         // best accepted score per cell, 0 elsewhere

  std::uint8_t at(std::size_t view, std::size_t k) const { return matrix[view * channels + k]; }
};

/// -ln(max(count, floor) / incident_flux).
double projection_from_count(double count, double incident_flux, double floor = kCountFloor);

/// Noise-free inverse of projection_from_count for counts above the floor.
double count_from_projection(double projection, double incident_flux);

HyperSinogram counts_to_projection(const HyperSinogram& counts, double floor = kCountFloor);

}  // namespace wrt
