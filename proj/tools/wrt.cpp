// wrt: wavelength-resolved tomography pipeline.
//
//   wrt simulate          --config C --out RUN
//   wrt reconstruct-fbp   --out RUN
//   wrt reconstruct-rmbir --out RUN
//   wrt signatures        --out RUN
//   wrt evaluate          --out RUN
//
// Stages after `simulate` reuse the config embedded in RUN/measurements.wrt
// unless --config is given. --set path=value overrides any config field.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 solver failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "wrt/config.hpp"
#include "wrt/parallel.hpp"
#include "wrt/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kConfigError = 2, kDataError = 3, kSolverError = 4 };

struct Options {
  std::string config;
  std::string out;
  std::optional<int> workers;
  std::optional<std::int64_t> seed;
  std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, Options& o, bool config_required) {
  auto* c = cmd->add_option("--config", o.config, "run configuration (JSON)");
  if (config_required) c->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", o.out, "run directory")->required();
  cmd->add_option("--workers", o.workers, "worker threads (default: all cores)")->check(CLI::NonNegativeNumber);
  cmd->add_option("--seed", o.seed, "simulation seed override");
  cmd->add_option("--set", o.overrides, "override a config field, e.g. rmbir.max_outer=10");
}

wrt::RunConfig resolve_config(const Options& o) {
  wrt::RunConfig base = o.config.empty() ? wrt::config_from_run(o.out) : wrt::load_config(o.config);
  nlohmann::json doc = base.document;
  for (const auto& s : o.overrides) wrt::apply_override(doc, s);
  if (o.seed) doc["simulation"]["seed"] = *o.seed;
  if (o.workers) doc["workers"] = *o.workers;
  return wrt::parse_config(doc);
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_level(spdlog::level::info);
  if (const char* level = std::getenv("WRT_LOG")) spdlog::set_level(spdlog::level::from_str(level));

  CLI::App app{"Robust wavelength-resolved neutron tomography pipeline"};
  app.set_version_flag("--version", std::string(wrt::kToolVersion));
  app.require_subcommand(1);

  Options opt;
  auto* sim = app.add_subcommand("simulate", "generate a phantom and simulated measurements");
  auto* fbp = app.add_subcommand("reconstruct-fbp", "filtered back-projection of every wavelength");
  auto* rmbir = app.add_subcommand("reconstruct-rmbir", "robust MBIR of every wavelength plus Bragg maps");
  auto* sig = app.add_subcommand("signatures", "segment domains and assemble crystal signatures");
  auto* eval = app.add_subcommand("evaluate", "compare run outputs against the simulator ground truth");
  add_common(sim, opt, true);
  for (auto* c : {fbp, rmbir, sig, eval}) add_common(c, opt, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfigError;
  }

  try {
    const wrt::RunConfig config = resolve_config(opt);
    wrt::set_worker_count(config.workers);
    const std::filesystem::path run = opt.out;
    if (sim->parsed()) {
      wrt::cmd_simulate(config, run);
    } else if (fbp->parsed()) {
      wrt::cmd_fbp(config, run);
    } else if (rmbir->parsed()) {
      wrt::cmd_rmbir(config, run);
    } else if (sig->parsed()) {
      wrt::cmd_signatures(config, run);
    } else if (eval->parsed()) {
      const auto report = wrt::cmd_evaluate(config, run);
      std::cout << report.dump(2) << '\n';
    }
  } catch (const wrt::ConfigError& e) {
    spdlog::error("config error: {}", e.what());
    return kConfigError;
  } catch (const wrt::SolverError& e) {
    spdlog::error("solver failure: {}", e.what());
    return kSolverError;
  } catch (const wrt::InvalidArgument& e) {
    spdlog::error("invalid input: {}", e.what());
    return kDataError;
  } catch (const wrt::FormatError& e) {
    spdlog::error("data error: {}", e.what());
    return kDataError;
  } catch (const std::exception& e) {
    spdlog::error("data error: {}", e.what());
    return kDataError;
  }
  return kOk;
}
