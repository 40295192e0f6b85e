#pragma once

// Parametric grain phantom and wavelength-resolved measurement simulator.
//
// Powder attenuation depends on wavelength only. Each single-crystal grain
// adds Gaussian ridges that follow the Bragg loci
//   lambda_B(phi) = 2 d sin(theta) / n,   theta = (phi + phase) folded into [0, 90] deg
// in the (rotation angle, wavelength) plane.

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "wrt/core.hpp"
#include "wrt/projector.hpp"

namespace wrt {

/// 2 d sin(theta) / n. theta in degrees, strictly inside (0, 90).
double bragg_wavelength(double d_spacing, double theta_deg, int order);

/// Bragg angle for a crystal rotated by `phi_deg` with plane phase `phase_deg`.
double folded_bragg_angle(double phi_deg, double phase_deg);

struct ReflectionTrace {
  double d_spacing = 2.087;        // Angstrom
  double phase_deg = 0.0;
  int order = 1;
  double amplitude = 9e-5;          // 1/um
  double angular_width_deg = 1.5;
  double wavelength_width = 0.02;   // Angstrom

  void validate() const;
  /// Amplitude-normalised ridge profile in [0, 1] at (lambda, phi).
  double profile(double lambda, double phi_deg) const;
};

/// Default reflections: three copper-like spacings at distinct phases.
std::vector<ReflectionTrace> default_traces();

enum class MaterialKind { powder, crystal };

class Material {
 public:
  /// `spectrum` is mu(lambda) in 1/um sampled on `grid`.
  static Material powder(WavelengthGrid grid, std::vector<double> spectrum);
  static Material crystal(WavelengthGrid grid, std::vector<double> spectrum, std::vector<ReflectionTrace> traces);

  MaterialKind kind() const { return kind_; }
  const WavelengthGrid& grid() const { return grid_; }
  std::span<const double> spectrum() const { return spectrum_; }
  std::span<const ReflectionTrace> traces() const { return traces_; }

  /// Off-Bragg attenuation, linearly interpolated on the grid.
  double baseline(double lambda) const;
  /// Sum of reflection contributions (zero for powder).
  double trace_contribution(double lambda, double phi_deg) const;
  double attenuation(double lambda, double phi_deg) const;

 private:
  Material(MaterialKind kind, WavelengthGrid grid, std::vector<double> spectrum, std::vector<ReflectionTrace> traces);

  MaterialKind kind_;
  WavelengthGrid grid_;
  std::vector<double> spectrum_;
  std::vector<ReflectionTrace> traces_;
};

/// Evaluates a piecewise-linear (lambda, mu) knot list on `grid`, holding the
/// end values constant outside the knots.
std::vector<double> piecewise_linear_spectrum(const WavelengthGrid& grid,
                                              std::span<const std::pair<double, double>> knots);

struct PhantomParams {
  std::uint64_t seed = 1;
  VolumeShape shape{64, 64, 8};
  std::size_t n_grains = 4;
  double grain_radius_min = 6.0;  // voxels
  double grain_radius_max = 10.0;
  double cylinder_radius = 28.0;  // voxels, axis along z through the volume centre
  double gap = 2.0;               // minimum surface separation between grains, voxels
  int max_attempts = 2000;
};

struct GrainPhantom {
  LabelVolume labels;
  std::vector<float> powder_fraction;  // coverage of powder per voxel, 0 inside grains
  Material powder;
  std::vector<Material> grains;        // grains[i] belongs to label i + 1

  /// Attenuation volume (z, y, x) at one wavelength and rotation angle.
  std::vector<double> attenuation_volume(double lambda, double phi_deg) const;
  /// Off-Bragg attenuation volume at one wavelength.
  std::vector<double> baseline_volume(double lambda) const;
};

/// Powder cylinder with non-overlapping spherical grains (truncated by the
/// volume bounds). Every grain uses `crystal` unless `per_grain` supplies an
/// override at its index. Throws InvalidArgument when packing fails.
GrainPhantom generate_phantom(const PhantomParams& params, Material powder, Material crystal,
                              std::span<const std::optional<Material>> per_grain = {});

struct SimulationParams {
  double incident_flux = 500.0;
  std::uint64_t seed = 7;
  bool noise = true;
  /// A voxel is Bragg-active when its trace contribution exceeds this
  /// fraction of its baseline.
  double bragg_fraction = 0.1;
  /// A ray passes through active material when its path length through it
  /// exceeds this fraction of the voxel pitch.
  double min_path_fraction = 0.5;
};

struct SimulatedMeasurements {
  HyperSinogram counts;
  BraggMapStack bragg_truth;
  /// Binarised per-grain Bragg pattern, shape (grain, view, wavelength).
  std::vector<std::uint8_t> signature_truth;
  std::size_t n_grains = 0;
};

SimulatedMeasurements simulate_measurements(const GrainPhantom& phantom, const SystemModel& model,
                                            const WavelengthGrid& grid, const SimulationParams& params);

/// Off-Bragg ground truth for every wavelength, (wavelength, z, y, x).
HyperVolume ground_truth_volume(const GrainPhantom& phantom, const WavelengthGrid& grid);

}  // namespace wrt
