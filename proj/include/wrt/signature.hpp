#pragma once

// Domain segmentation, Bragg-map anomaly extraction and per-domain crystal
// signatures.
//
// Domains come from K-means on voxel spectra followed by 3D connected
// components. Anomalies are 2D connected components of each (wavelength,
// view) Bragg map. Each anomaly is scored against every domain's binarised
// projection at the same view with
//   S(p, q) = 1 - (|p & !q| + |!p & q|) / (|p| + |q|)
// and credited to the best domain whose score reaches the threshold.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "wrt/core.hpp"
#include "wrt/projector.hpp"

namespace wrt {

struct KmeansParams {
  std::size_t n_classes = 3;
  std::uint64_t seed = 11;
  int max_iterations = 100;
};

/// Class map with labels 0..n_classes-1 ordered by ascending centroid norm.
LabelVolume kmeans_segment(const HyperVolume& volume, const KmeansParams& params);

/// Connected components of `classes == foreground_class`. Labels are assigned
/// in raster discovery order; components smaller than `min_voxels` are dropped.
/// `connectivity` is 6, 18 or 26.
LabelVolume connected_components_3d(const LabelVolume& classes, std::int32_t foreground_class, int connectivity = 26,
                                    std::size_t min_voxels = 8);

struct AnomalyComponent {
  std::size_t view = 0;     // view index
  double view_deg = 0.0;
  std::size_t channel = 0;  // wavelength index
  std::vector<std::uint32_t> pixels;  // row * cols + col, ascending
  std::size_t area() const { return pixels.size(); }
};

/// 8-connected components of every (wavelength, view) Bragg map, ordered by
/// (wavelength, view, discovery). Components below `min_area` are dropped.
std::vector<AnomalyComponent> connected_components_2d(const BraggMapStack& bragg, const std::vector<double>& angles_deg,
                                                      std::size_t min_area = 4);

/// Binary image (row, col) of pixels whose path length through `mask`
/// exceeds `binarize_fraction` voxel pitches.
std::vector<std::uint8_t> project_and_binarize(std::span<const std::uint8_t> mask, const SystemModel& model,
                                               std::size_t view, double binarize_fraction = 0.5);

/// Correlation score of two equally sized binary images. Throws
/// InvalidArgument when both are empty or the sizes differ.
double correlation_score(std::span<const std::uint8_t> p, std::span<const std::uint8_t> q);

struct MatchRecord {
  std::size_t anomaly = 0;   // index into the anomaly list
  std::int32_t domain_id = 0;  // best-scoring domain, 0 when there are none
  double score = 0.0;
  bool accepted = false;
};

struct SignatureParams {
  double score_threshold = 0.5;
  double binarize_fraction = 0.5;
};

struct SignatureResult {
  std::vector<CrystalSignature> signatures;  // one per domain, ordered by id
  std::vector<MatchRecord> records;          // one per anomaly
};

SignatureResult match_signatures(const LabelVolume& domains, const std::vector<AnomalyComponent>& anomalies,
                                 const SystemModel& model, std::size_t channels, const SignatureParams& params = {});

}  // namespace wrt
