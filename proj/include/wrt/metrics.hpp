#pragma once

// Quantitative evaluation against simulator ground truth.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "wrt/core.hpp"

namespace wrt {

inline constexpr int kReportSchemaVersion = 1;

/// ||recon - truth||_2 / ||truth||_2. Throws on size mismatch or zero truth.
double nrmse(std::span<const float> recon, std::span<const float> truth);
double nrmse(std::span<const double> recon, std::span<const double> truth);

struct BinaryRates {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::optional<double> tpr;        // absent when the truth has no positives
  std::optional<double> fpr;        // absent when the truth has no negatives
  std::optional<double> precision;  // absent when nothing is predicted
  std::optional<double> recall() const { return tpr; }
};

BinaryRates binary_rates(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth);

nlohmann::json to_json(const BinaryRates& r);

struct ChannelReport {
  std::size_t channel = 0;
  double wavelength = 0.0;
  double affected_fraction = 0.0;  // share of measurements in the truth Bragg mask
  bool affected = false;
  std::optional<double> nrmse_rmbir;
  std::optional<double> nrmse_fbp;
  std::optional<BinaryRates> bragg;
};

struct GrainReport {
  std::int32_t grain = 0;   // ground-truth label
  std::size_t voxels = 0;
  std::int32_t domain = 0;  // matched reconstructed domain, 0 if none
  std::size_t overlap = 0;
  std::optional<BinaryRates> signature;
};

struct EvalReport {
  std::vector<ChannelReport> channels;
  std::vector<GrainReport> grains;
  std::size_t domain_count = 0;
  nlohmann::json runtime = nlohmann::json::object();

  nlohmann::json to_json() const;
};

/// Everything evaluate() can compare; absent pieces are skipped.
struct EvalInputs {
  WavelengthGrid grid;
  const HyperVolume* truth = nullptr;
  const HyperVolume* rmbir = nullptr;
  const HyperVolume* fbp = nullptr;
  const BraggMapStack* bragg_truth = nullptr;
  const BraggMapStack* bragg_predicted = nullptr;
  const LabelVolume* truth_labels = nullptr;
  const LabelVolume* domains = nullptr;
  /// (grain, view, wavelength), grain-major in truth label order.
  std::span<const std::uint8_t> signature_truth;
  const std::vector<CrystalSignature>* signatures = nullptr;
  /// A wavelength is Bragg-affected when this share of measurements is flagged in the truth.
  double affected_threshold = 0.02;
};

/// Per-wavelength NRMSE and Bragg-map rates, plus per-grain signature rates.
/// Each truth grain is paired with the reconstructed domain sharing the most
/// voxels (smaller domain id on ties).
EvalReport evaluate(const EvalInputs& in);

}  // namespace wrt
