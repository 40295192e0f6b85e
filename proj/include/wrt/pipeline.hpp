#pragma once

// Pipeline stages over a run directory:
//
//   measurements.wrt   counts sinogram                       (simulate)
//   truth.wrt          ground truth from the simulator       (simulate)
//   fbp.wrt            FBP volume                            (reconstruct-fbp)
//   rmbir.wrt          R-MBIR volume and Bragg maps          (reconstruct-rmbir)
//   rmbir.trace.json   per-channel cost traces and thresholds
//   signatures.wrt     class map, domains, signatures        (signatures)
//   matches.json       one record per Bragg-map anomaly
//   report.json        evaluation report                     (evaluate)
//
// Every stage reads only the files it needs, so any stage can be rerun on
// its own. Each container manifest embeds the config and the tool version.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "wrt/config.hpp"

namespace wrt {

inline constexpr const char* kToolVersion = "0.1.0";

namespace stage {
inline constexpr const char* measurements = "measurements.wrt";
inline constexpr const char* truth = "truth.wrt";
inline constexpr const char* fbp = "fbp.wrt";
inline constexpr const char* rmbir = "rmbir.wrt";
inline constexpr const char* rmbir_trace = "rmbir.trace.json";
inline constexpr const char* signatures = "signatures.wrt";
inline constexpr const char* matches = "matches.json";
inline constexpr const char* report = "report.json";
}  // namespace stage

/// Config embedded in the manifest of `run_dir/measurements.wrt`.
RunConfig config_from_run(const std::filesystem::path& run_dir);

void cmd_simulate(const RunConfig& config, const std::filesystem::path& run_dir);
void cmd_fbp(const RunConfig& config, const std::filesystem::path& run_dir);
void cmd_rmbir(const RunConfig& config, const std::filesystem::path& run_dir);
void cmd_signatures(const RunConfig& config, const std::filesystem::path& run_dir);
nlohmann::json cmd_evaluate(const RunConfig& config, const std::filesystem::path& run_dir);

/// Writes JSON through a temporary file and a rename.
void write_json_atomic(const std::filesystem::path& path, const nlohmann::json& value);

}  // namespace wrt
