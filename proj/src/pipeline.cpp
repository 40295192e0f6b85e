#include "wrt/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <random>

#include <spdlog/spdlog.h>

#include "wrt/container.hpp"
#include "wrt/metrics.hpp"
#include "wrt/parallel.hpp"

namespace wrt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

json base_metadata(const RunConfig& config, const std::string& stage_name) {
  return {{"stage", stage_name},
          {"tool_version", kToolVersion},
          {"config", config.document},
          {"wavelengths", to_json(config.grid)},
          {"geometry", to_json(config.geometry)}};
}

Container load_stage(const fs::path& run_dir, const char* name) {
  const fs::path p = run_dir / name;
  if (!fs::exists(p)) throw FormatError(p.string() + ": missing; run the stage that produces it first");
  return load_container(p);
}

SystemModel make_model(const RunConfig& config) { return SystemModel(config.geometry, config.supersampling); }

HyperSinogram load_counts(const RunConfig& config, const fs::path& run_dir) {
  const auto c = load_stage(run_dir, stage::measurements);
  const double flux = c.metadata.at("incident_flux").get<double>();
  auto counts = sinogram_from_record(c.array("counts"), SinogramKind::counts, flux);
  if (counts.channels != config.grid.size() || counts.views != config.geometry.num_views() ||
      counts.rows != config.geometry.detector_rows || counts.cols != config.geometry.detector_cols)
    throw FormatError("measurements do not match the configured geometry and wavelength grid");
  return counts;
}

}  // namespace

void write_json_atomic(const fs::path& path, const json& value) {
  const fs::path target = fs::absolute(path);
  fs::create_directories(target.parent_path());
  std::random_device rd;
  const fs::path tmp = target.parent_path() / ("." + target.filename().string() + ".tmp" + std::to_string(rd()));
  {
    std::ofstream out(tmp);
    out << value.dump(2) << '\n';
    if (!out) throw FormatError(target.string() + ": write failed");
  }
  fs::rename(tmp, target);
}

RunConfig config_from_run(const fs::path& run_dir) {
  const fs::path manifest = run_dir / stage::measurements / "manifest.json";
  std::ifstream in(manifest);
  if (!in) throw FormatError(manifest.string() + ": missing");
  const json m = json::parse(in, nullptr, false);
  if (m.is_discarded() || !m.contains("config")) throw FormatError(manifest.string() + ": no embedded config");
  return parse_config(m.at("config"));
}

void cmd_simulate(const RunConfig& config, const fs::path& run_dir) {
  Stopwatch clock;
  const SystemModel model = make_model(config);
  spdlog::info("simulate: generating phantom with {} grains", config.phantom.n_grains);
  const auto phantom = generate_phantom(config.phantom, config.powder_material(), config.crystal_material());
  spdlog::info("simulate: projecting {} wavelengths x {} views", config.grid.size(), config.geometry.num_views());
  const auto meas = simulate_measurements(phantom, model, config.grid, config.simulation);
  const auto truth = ground_truth_volume(phantom, config.grid);

  Container m;
  m.metadata = base_metadata(config, "simulate");
  m.metadata["incident_flux"] = config.simulation.incident_flux;
  m.metadata["seed"] = config.simulation.seed;
  m.add(to_record("counts", meas.counts));

  Container t;
  t.metadata = base_metadata(config, "simulate");
  t.metadata["n_grains"] = meas.n_grains;
  t.add(to_record("volume", truth, "1/um"));
  t.add(to_record("labels", phantom.labels));
  t.add(to_record("bragg", meas.bragg_truth));
  t.add(ArrayRecord::make<std::uint8_t>("signatures", {meas.n_grains, config.geometry.num_views(), config.grid.size()},
                                        {"grain", "view", "wavelength"}, "1", meas.signature_truth));
  t.add(ArrayRecord::make<float>("powder_fraction", {config.geometry.volume.nz, config.geometry.volume.ny,
                                                     config.geometry.volume.nx},
                                 {"z", "y", "x"}, "1", phantom.powder_fraction));

  const double elapsed = clock.seconds();
  m.metadata["runtime_s"] = elapsed;
  t.metadata["runtime_s"] = elapsed;
  save_container(run_dir / stage::truth, t);
  save_container(run_dir / stage::measurements, m);
  spdlog::info("simulate: done in {:.1f} s", elapsed);
}

void cmd_fbp(const RunConfig& config, const fs::path& run_dir) {
  Stopwatch clock;
  const auto counts = load_counts(config, run_dir);
  const SystemModel model = make_model(config);
  const auto proj = counts_to_projection(counts);
  spdlog::info("reconstruct-fbp: {} channels, {} filter", proj.channels, to_string(config.fbp_filter));
  const auto vol = fbp_reconstruct_all(proj, model, config.fbp_filter);
  Container c;
  c.metadata = base_metadata(config, "reconstruct-fbp");
  c.metadata["runtime_s"] = clock.seconds();
  c.add(to_record("volume", vol, "1/um"));
  save_container(run_dir / stage::fbp, c);
  spdlog::info("reconstruct-fbp: done in {:.1f} s", clock.seconds());
}

void cmd_rmbir(const RunConfig& config, const fs::path& run_dir) {
  Stopwatch clock;
  const auto counts = load_counts(config, run_dir);
  const SystemModel model = make_model(config);
  const std::size_t K = counts.channels;
  std::size_t done = 0;
  spdlog::info("reconstruct-rmbir: {} channels", K);
  const RmbirParams params[] = {config.rmbir};
  const auto res = reconstruct_all(counts, model, params, [&](std::size_t k) {
    ++done;
    spdlog::info("reconstruct-rmbir: channel {} finished ({}/{})", k, done, K);
  });

  json trace = json::object();
  trace["schema_version"] = 1;
  trace["tool_version"] = kToolVersion;
  json chans = json::array();
  for (std::size_t k = 0; k < K; ++k) {
    const auto& ch = res.channels[k];
    chans.push_back({{"channel", k},
                     {"wavelength", config.grid[k]},
                     {"threshold", ch.threshold},
                     {"outer_iterations", ch.outer_iterations},
                     {"cost", ch.cost_trace}});
  }
  trace["channels"] = chans;

  Container c;
  c.metadata = base_metadata(config, "reconstruct-rmbir");
  c.metadata["runtime_s"] = clock.seconds();
  json thresholds = json::array();
  for (const auto& ch : res.channels) thresholds.push_back(ch.threshold);
  c.metadata["thresholds"] = thresholds;
  c.add(to_record("volume", res.volume, "1/um"));
  c.add(to_record("bragg", res.bragg));
  save_container(run_dir / stage::rmbir, c);
  write_json_atomic(run_dir / stage::rmbir_trace, trace);
  spdlog::info("reconstruct-rmbir: done in {:.1f} s", clock.seconds());
}

void cmd_signatures(const RunConfig& config, const fs::path& run_dir) {
  Stopwatch clock;
  const auto rec = load_stage(run_dir, stage::rmbir);
  const auto volume = volume_from_record(rec.array("volume"));
  const auto bragg = bragg_maps_from_record(rec.array("bragg"));
  if (!(volume.shape == config.geometry.volume) || volume.channels != config.grid.size())
    throw FormatError("reconstruction does not match the configured geometry");
  const SystemModel model = make_model(config);
  const auto& sc = config.signatures;

  const auto classes = kmeans_segment(volume, sc.kmeans);
  const std::int32_t grain_class =
      sc.grain_class < 0 ? static_cast<std::int32_t>(sc.kmeans.n_classes) - 1 : sc.grain_class;
  const auto domains = connected_components_3d(classes, grain_class, sc.connectivity, sc.min_voxels);
  const auto anomalies = connected_components_2d(bragg, config.geometry.angles_deg, sc.min_area);
  spdlog::info("signatures: {} domains, {} anomalies", domains.count, anomalies.size());
  const auto result = match_signatures(domains, anomalies, model, config.grid.size(), sc.match);

  const std::size_t D = result.signatures.size(), V = config.geometry.num_views(), K = config.grid.size();
  std::vector<std::uint8_t> bits;
  std::vector<float> scores;
  bits.reserve(D * V * K);
  scores.reserve(D * V * K);
  for (const auto& s : result.signatures) {
    bits.insert(bits.end(), s.matrix.begin(), s.matrix.end());
    scores.insert(scores.end(), s.scores.begin(), s.scores.end());
  }

  json matches = json::array();
  std::size_t accepted = 0;
  for (const auto& r : result.records) {
    const auto& a = anomalies[r.anomaly];
    accepted += r.accepted;
    matches.push_back({{"anomaly", r.anomaly},
                       {"view", a.view},
                       {"view_deg", a.view_deg},
                       {"channel", a.channel},
                       {"area", a.area()},
                       {"domain_id", r.domain_id},
                       {"score", r.score},
                       {"accepted", r.accepted}});
  }

  Container c;
  c.metadata = base_metadata(config, "signatures");
  c.metadata["grain_class"] = grain_class;
  c.metadata["domain_count"] = domains.count;
  c.metadata["anomaly_count"] = anomalies.size();
  c.metadata["accepted_count"] = accepted;
  c.metadata["runtime_s"] = clock.seconds();
  c.add(to_record("classes", classes));
  c.add(to_record("domains", domains));
  c.add(ArrayRecord::make<std::uint8_t>("signatures", {D, V, K}, {"domain", "view", "wavelength"}, "1", bits));
  c.add(ArrayRecord::make<float>("scores", {D, V, K}, {"domain", "view", "wavelength"}, "1", scores));
  save_container(run_dir / stage::signatures, c);
  write_json_atomic(run_dir / stage::matches,
                    json{{"schema_version", 1}, {"tool_version", kToolVersion}, {"records", matches}});
  spdlog::info("signatures: {} of {} anomalies accepted in {:.1f} s", accepted, anomalies.size(), clock.seconds());
}

json cmd_evaluate(const RunConfig& config, const fs::path& run_dir) {
  EvalInputs in;
  in.grid = config.grid;
  in.affected_threshold = config.affected_threshold;
  json runtime = json::object();

  const auto truth_c = load_stage(run_dir, stage::truth);
  const auto truth = volume_from_record(truth_c.array("volume"));
  auto truth_labels = labels_from_record(truth_c.array("labels"));
  truth_labels.count = truth_c.metadata.at("n_grains").get<std::int32_t>();
  const auto bragg_truth = bragg_maps_from_record(truth_c.array("bragg"));
  const auto sig_truth = truth_c.array("signatures").values<std::uint8_t>();
  in.truth = &truth;
  in.truth_labels = &truth_labels;
  in.bragg_truth = &bragg_truth;
  in.signature_truth = sig_truth;
  runtime["simulate"] = truth_c.metadata.value("runtime_s", 0.0);

  std::optional<HyperVolume> fbp, rmbir;
  std::optional<BraggMapStack> bragg;
  std::optional<LabelVolume> domains;
  std::vector<CrystalSignature> sigs;
  if (fs::exists(run_dir / stage::fbp)) {
    const auto c = load_container(run_dir / stage::fbp);
    fbp = volume_from_record(c.array("volume"));
    in.fbp = &*fbp;
    runtime["reconstruct-fbp"] = c.metadata.value("runtime_s", 0.0);
  }
  if (fs::exists(run_dir / stage::rmbir)) {
    const auto c = load_container(run_dir / stage::rmbir);
    rmbir = volume_from_record(c.array("volume"));
    bragg = bragg_maps_from_record(c.array("bragg"));
    in.rmbir = &*rmbir;
    in.bragg_predicted = &*bragg;
    runtime["reconstruct-rmbir"] = c.metadata.value("runtime_s", 0.0);
  }
  if (fs::exists(run_dir / stage::signatures)) {
    const auto c = load_container(run_dir / stage::signatures);
    domains = labels_from_record(c.array("domains"));
    domains->count = c.metadata.at("domain_count").get<std::int32_t>();
    const auto& rec = c.array("signatures");
    const auto bits = rec.values<std::uint8_t>();
    const std::size_t D = rec.shape.at(0), V = rec.shape.at(1), K = rec.shape.at(2);
    for (std::size_t d = 0; d < D; ++d) {
      CrystalSignature s;
      s.domain_id = static_cast<std::int32_t>(d + 1);
      s.views = V;
      s.channels = K;
      s.matrix.assign(bits.begin() + static_cast<std::ptrdiff_t>(d * V * K),
                      bits.begin() + static_cast<std::ptrdiff_t>((d + 1) * V * K));
      sigs.push_back(std::move(s));
    }
    in.domains = &*domains;
    in.signatures = &sigs;
    runtime["signatures"] = c.metadata.value("runtime_s", 0.0);
  }

  auto report = evaluate(in);
  report.runtime = runtime;
  json j = report.to_json();
  j["tool_version"] = kToolVersion;
  write_json_atomic(run_dir / stage::report, j);
  return j;
}

}  // namespace wrt
