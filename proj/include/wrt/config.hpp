#pragma once

// Run configuration: one JSON document that fully determines a pipeline run.
// User documents are merged onto the built-in defaults; unknown keys are
// rejected so that typos cannot silently fall back to a default.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "wrt/core.hpp"
#include "wrt/projector.hpp"
#include "wrt/rmbir.hpp"
#include "wrt/signature.hpp"
#include "wrt/simulator.hpp"

namespace wrt {

/// A configuration problem; the message starts with the offending field path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SignatureConfig {
  KmeansParams kmeans;
  /// Class treated as crystal; negative selects the class with the largest norm.
  int grain_class = -1;
  int connectivity = 26;
  std::size_t min_voxels = 8;
  std::size_t min_area = 4;
  SignatureParams match;
};

struct RunConfig {
  nlohmann::json document;  // the complete, merged document

  ViewGeometry geometry;
  int supersampling = 1;
  WavelengthGrid grid;
  PhantomParams phantom;
  std::vector<std::pair<double, double>> powder_knots;
  std::vector<std::pair<double, double>> crystal_knots;
  std::vector<ReflectionTrace> traces;
  SimulationParams simulation;
  FbpFilter fbp_filter = FbpFilter::ramlak;
  RmbirParams rmbir;
  SignatureConfig signatures;
  double affected_threshold = 0.02;
  int workers = 0;

  Material powder_material() const;
  Material crystal_material() const;
};

nlohmann::json default_config_document();

/// Merges `user` onto the defaults and parses the result.
RunConfig parse_config(const nlohmann::json& user);
RunConfig load_config(const std::string& path);

/// Applies a `dotted.path=value` override. The value is parsed as JSON when
/// possible and kept as a string otherwise.
void apply_override(nlohmann::json& document, const std::string& assignment);

}  // namespace wrt
