#pragma once

// Parallel-beam forward projector, its exact adjoint, and the filtered
// back-projection baseline.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "wrt/core.hpp"

namespace wrt {

/// Implicit system matrix A (views*rows*cols x nx*ny*nz), never stored.
///
/// Rays are detector-pixel centred. In-plane the kernel is Joseph's method:
/// the ray is stepped across voxel-centre planes perpendicular to its major
/// axis and the volume is linearly interpolated along the minor axis, with
/// each sample weighted by the step length. Along z (the rotation axis) the
/// row position is linearly interpolated between slices. back() applies the
/// transpose of exactly the same weights.
///
/// Units: volume in 1/um, sinogram dimensionless (path lengths in um).
class SystemModel {
 public:
  /// `supersampling` sub-rays per pixel along each detector axis.
  explicit SystemModel(ViewGeometry geometry, int supersampling = 1);

  const ViewGeometry& geometry() const { return geometry_; }
  std::size_t volume_size() const { return geometry_.volume.size(); }
  std::size_t sinogram_size() const { return geometry_.measurements(); }
  std::size_t view_size() const { return geometry_.view_size(); }

  void forward(std::span<const double> volume, std::span<double> sinogram) const;
  std::vector<double> forward(std::span<const double> volume) const;

  /// One view only; `image` is (row, col).
  void forward_view(std::span<const double> volume, std::size_t view, std::span<double> image) const;

  void back(std::span<const double> sinogram, std::span<double> volume) const;
  std::vector<double> back(std::span<const double> sinogram) const;

 private:
  struct ViewKernel {
    bool along_y = true;  // step across y planes (|cos| >= |sin|)
    double step = 0.0;    // path length per plane, um
    double slope = 0.0;   // minor-axis index change per plane
    double inv_major = 0.0;
    double centre_term = 0.0;
  };
  struct Sample {
    std::size_t index;
    double weight;
  };
  struct SliceTap {
    std::size_t slice;
    double weight;
  };

  template <class Visit>
  void trace(const ViewKernel& k, double u_index, Visit&& visit) const;

  void forward_one_view(std::span<const double> volume, std::size_t view, std::span<double> image) const;

  ViewGeometry geometry_;
  int supersampling_ = 1;
  std::vector<ViewKernel> kernels_;
  std::vector<std::vector<SliceTap>> row_taps_;  // per detector row
  std::vector<double> sub_offsets_;              // sub-ray offsets in pixel units
};

enum class FbpFilter { ramlak, hamming };

FbpFilter fbp_filter_from_string(const std::string& name);
std::string to_string(FbpFilter f);

/// Ramp-filters each detector row and back-projects with angular weight
/// pi/|views|. `projections` is one channel (view, row, col).
std::vector<double> fbp_filter_backproject(std::span<const double> projections, const SystemModel& model,
                                           FbpFilter filter = FbpFilter::ramlak);

/// FBP of channel `k` of a projection sinogram. Counts are rejected.
std::vector<double> fbp_reconstruct(const HyperSinogram& sino, std::size_t k, const SystemModel& model,
                                    FbpFilter filter = FbpFilter::ramlak);

HyperVolume fbp_reconstruct_all(const HyperSinogram& sino, const SystemModel& model,
                                FbpFilter filter = FbpFilter::ramlak);

}  // namespace wrt
