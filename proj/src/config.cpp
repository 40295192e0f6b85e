#include "wrt/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace wrt {

namespace {

using nlohmann::json;

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::stringstream ss(path);
  std::string item;
  while (std::getline(ss, item, '.')) parts.push_back(item);
  return parts;
}

json* locate(json& root, const std::string& path) {
  json* node = &root;
  for (const auto& part : split_path(path)) {
    if (node->is_object()) {
      auto it = node->find(part);
      if (it == node->end()) return nullptr;
      node = &*it;
    } else if (node->is_array()) {
      std::size_t idx = 0;
      try {
        std::size_t used = 0;
        idx = std::stoul(part, &used);
        if (used != part.size()) return nullptr;
      } catch (const std::exception&) {
        return nullptr;
      }
      if (idx >= node->size()) return nullptr;
      node = &(*node)[idx];
    } else {
      return nullptr;
    }
  }
  return node;
}

// Recursive merge of `user` onto `base`; objects merge key by key, anything
// else replaces. Keys absent from `base` are configuration errors.
void merge(json& base, const json& user, const std::string& prefix) {
  if (!user.is_object()) throw ConfigError((prefix.empty() ? "<root>" : prefix) + ": expected an object");
  for (auto it = user.begin(); it != user.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    auto b = base.find(it.key());
    if (b == base.end()) throw ConfigError(path + ": unknown field");
    if (b->is_object() && it->is_object())
      merge(*b, *it, path);
    else
      *b = *it;
  }
}

class Reader {
 public:
  explicit Reader(const json& root) : root_(root) {}

  const json& node(const std::string& path) const {
    const json* n = &root_;
    for (const auto& part : split_path(path)) {
      if (n->is_object() && n->contains(part)) {
        n = &(*n)[part];
      } else if (n->is_array()) {
        n = &n->at(std::stoul(part));
      } else {
        throw ConfigError(path + ": missing");
      }
    }
    return *n;
  }

  double number(const std::string& path) const {
    const auto& n = node(path);
    if (!n.is_number()) throw ConfigError(path + ": expected a number");
    const double v = n.get<double>();
    if (!std::isfinite(v)) throw ConfigError(path + ": must be finite");
    return v;
  }
  double positive(const std::string& path) const {
    const double v = number(path);
    if (!(v > 0.0)) throw ConfigError(path + ": must be > 0");
    return v;
  }
  std::int64_t integer(const std::string& path) const {
    const auto& n = node(path);
    if (!n.is_number_integer()) throw ConfigError(path + ": expected an integer");
    return n.get<std::int64_t>();
  }
  std::size_t count(const std::string& path, std::int64_t min = 1) const {
    const auto v = integer(path);
    if (v < min) throw ConfigError(path + ": must be >= " + std::to_string(min));
    return static_cast<std::size_t>(v);
  }
  bool boolean(const std::string& path) const {
    const auto& n = node(path);
    if (!n.is_boolean()) throw ConfigError(path + ": expected true or false");
    return n.get<bool>();
  }
  std::string string(const std::string& path) const {
    const auto& n = node(path);
    if (!n.is_string()) throw ConfigError(path + ": expected a string");
    return n.get<std::string>();
  }
  std::optional<double> optional_number(const std::string& path) const {
    if (node(path).is_null()) return std::nullopt;
    return number(path);
  }
  std::vector<std::pair<double, double>> knots(const std::string& path) const {
    const auto& n = node(path);
    if (!n.is_array() || n.empty()) throw ConfigError(path + ": expected a non-empty list of [wavelength, mu] pairs");
    std::vector<std::pair<double, double>> out;
    for (std::size_t i = 0; i < n.size(); ++i) {
      const auto& e = n[i];
      if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
        throw ConfigError(path + "." + std::to_string(i) + ": expected [wavelength, mu]");
      const double lam = e[0].get<double>(), mu = e[1].get<double>();
      if (!(mu >= 0.0)) throw ConfigError(path + "." + std::to_string(i) + ": attenuation must be >= 0");
      if (!out.empty() && !(lam > out.back().first))
        throw ConfigError(path + "." + std::to_string(i) + ": wavelengths must increase");
      out.emplace_back(lam, mu);
    }
    return out;
  }

 private:
  const json& root_;
};

json trace_to_json(const ReflectionTrace& t) {
  return {{"d_spacing", t.d_spacing},
          {"phase_deg", t.phase_deg},
          {"order", t.order},
          {"amplitude", t.amplitude},
          {"angular_width_deg", t.angular_width_deg},
          {"wavelength_width", t.wavelength_width}};
}

template <class Fn>
void wrap(const std::string& section, Fn&& fn) {
  try {
    fn();
  } catch (const InvalidArgument& e) {
    throw ConfigError(section + ": " + e.what());
  }
}

}  // namespace

json default_config_document() {
  const PhantomParams ph;
  const SimulationParams sim;
  const RmbirParams rm;
  const SignatureConfig sc;
  json traces = json::array();
  for (const auto& t : default_traces()) traces.push_back(trace_to_json(t));
  return {
      {"geometry",
       {{"volume", {ph.shape.nx, ph.shape.ny, ph.shape.nz}},
        {"voxel_pitch_um", 50.0},
        {"pixel_pitch_um", 50.0},
        {"detector_rows", ph.shape.nz},
        {"detector_cols", ph.shape.nx},
        {"views", 90},
        {"first_angle_deg", 0.0},
        {"last_angle_deg", 180.0},
        {"supersampling", 1}}},
      {"wavelengths", {{"first", 2.25}, {"last", 4.0}, {"count", 40}}},
      {"phantom",
       {{"seed", ph.seed},
        {"n_grains", ph.n_grains},
        {"grain_radius_min", ph.grain_radius_min},
        {"grain_radius_max", ph.grain_radius_max},
        {"cylinder_radius", ph.cylinder_radius},
        {"gap", ph.gap},
        {"max_attempts", ph.max_attempts}}},
      {"materials",
       {{"powder", {{"spectrum", {{2.25, 6e-5}, {4.0, 9e-5}}}}},
        {"crystal", {{"spectrum", {{2.25, 1.4e-4}, {4.0, 1.4e-4}}}, {"traces", traces}}}}},
      {"simulation",
       {{"incident_flux", sim.incident_flux},
        {"seed", sim.seed},
        {"noise", sim.noise},
        {"bragg_fraction", sim.bragg_fraction},
        {"min_path_fraction", sim.min_path_fraction}}},
      {"fbp", {{"filter", to_string(FbpFilter::ramlak)}}},
      {"rmbir",
       {{"threshold", nullptr},
        {"outlier_fraction", 0.1},
        {"prior", {{"sigma", rm.prior.sigma}, {"p", rm.prior.p}, {"q", rm.prior.q}, {"c", rm.prior.c}}},
        {"max_outer", rm.max_outer},
        {"max_inner", rm.max_inner},
        {"continuation_stages", rm.continuation_stages},
        {"tol", rm.tol},
        {"nonneg", rm.nonneg},
        {"init_filter", to_string(rm.init_filter)}}},
      {"signatures",
       {{"n_classes", sc.kmeans.n_classes},
        {"kmeans_seed", sc.kmeans.seed},
        {"kmeans_max_iterations", sc.kmeans.max_iterations},
        {"grain_class", sc.grain_class},
        {"connectivity", sc.connectivity},
        {"min_voxels", sc.min_voxels},
        {"min_area", sc.min_area},
        {"score_threshold", sc.match.score_threshold},
        {"binarize_fraction", sc.match.binarize_fraction}}},
      {"evaluate", {{"affected_threshold", 0.02}}},
      {"workers", 0},
  };
}

void apply_override(json& document, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment + ": expected path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json* target = locate(document, path);
  if (!target) throw ConfigError(path + ": unknown field");
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  *target = std::move(value);
}

RunConfig parse_config(const json& user) {
  RunConfig c;
  c.document = default_config_document();
  merge(c.document, user, "");
  const Reader r(c.document);

  // Geometry.
  const auto& vol = r.node("geometry.volume");
  if (!vol.is_array() || vol.size() != 3) throw ConfigError("geometry.volume: expected [nx, ny, nz]");
  c.geometry.volume = {r.count("geometry.volume.0"), r.count("geometry.volume.1"), r.count("geometry.volume.2")};
  c.geometry.voxel_pitch_um = r.positive("geometry.voxel_pitch_um");
  c.geometry.pixel_pitch_um = r.positive("geometry.pixel_pitch_um");
  c.geometry.detector_rows = r.count("geometry.detector_rows");
  c.geometry.detector_cols = r.count("geometry.detector_cols");
  const double first = r.number("geometry.first_angle_deg"), last = r.number("geometry.last_angle_deg");
  if (!(last > first)) throw ConfigError("geometry.last_angle_deg: must exceed first_angle_deg");
  c.geometry.angles_deg = ViewGeometry::uniform_angles(first, last, r.count("geometry.views"));
  c.supersampling = static_cast<int>(r.count("geometry.supersampling"));
  wrap("geometry", [&] { c.geometry.validate(); });

  // Wavelength grid.
  const double lf = r.positive("wavelengths.first"), ll = r.positive("wavelengths.last");
  const auto lk = r.count("wavelengths.count");
  if (lk > 1 && !(ll > lf)) throw ConfigError("wavelengths.last: must exceed wavelengths.first");
  wrap("wavelengths", [&] { c.grid = WavelengthGrid::linspace(lf, ll, lk); });

  // Phantom.
  c.phantom.seed = static_cast<std::uint64_t>(r.integer("phantom.seed"));
  c.phantom.shape = c.geometry.volume;
  c.phantom.n_grains = r.count("phantom.n_grains", 0);
  c.phantom.grain_radius_min = r.positive("phantom.grain_radius_min");
  c.phantom.grain_radius_max = r.positive("phantom.grain_radius_max");
  if (c.phantom.grain_radius_max < c.phantom.grain_radius_min)
    throw ConfigError("phantom.grain_radius_max: must be >= grain_radius_min");
  c.phantom.cylinder_radius = r.positive("phantom.cylinder_radius");
  c.phantom.gap = r.number("phantom.gap");
  if (c.phantom.gap < 0.0) throw ConfigError("phantom.gap: must be >= 0");
  c.phantom.max_attempts = static_cast<int>(r.count("phantom.max_attempts"));

  // Materials.
  c.powder_knots = r.knots("materials.powder.spectrum");
  c.crystal_knots = r.knots("materials.crystal.spectrum");
  const auto& traces = r.node("materials.crystal.traces");
  if (!traces.is_array()) throw ConfigError("materials.crystal.traces: expected a list");
  const json trace_defaults = trace_to_json(ReflectionTrace{});
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const std::string p = "materials.crystal.traces." + std::to_string(i);
    json t = trace_defaults;
    merge(t, traces[i], p);
    const Reader tr(t);
    ReflectionTrace rt;
    rt.d_spacing = tr.number("d_spacing");
    rt.phase_deg = tr.number("phase_deg");
    rt.order = static_cast<int>(tr.integer("order"));
    rt.amplitude = tr.number("amplitude");
    rt.angular_width_deg = tr.number("angular_width_deg");
    rt.wavelength_width = tr.number("wavelength_width");
    wrap(p, [&] { rt.validate(); });
    c.traces.push_back(rt);
  }

  // Simulation.
  c.simulation.incident_flux = r.positive("simulation.incident_flux");
  c.simulation.seed = static_cast<std::uint64_t>(r.integer("simulation.seed"));
  c.simulation.noise = r.boolean("simulation.noise");
  c.simulation.bragg_fraction = r.positive("simulation.bragg_fraction");
  c.simulation.min_path_fraction = r.number("simulation.min_path_fraction");
  if (c.simulation.min_path_fraction < 0.0) throw ConfigError("simulation.min_path_fraction: must be >= 0");

  // Reconstruction.
  wrap("fbp.filter", [&] { c.fbp_filter = fbp_filter_from_string(r.string("fbp.filter")); });
  c.rmbir.threshold = r.optional_number("rmbir.threshold");
  c.rmbir.outlier_fraction = r.optional_number("rmbir.outlier_fraction");
  if (c.rmbir.threshold) {
    if (!(*c.rmbir.threshold > 0.0)) throw ConfigError("rmbir.threshold: must be > 0");
  } else if (!c.rmbir.outlier_fraction) {
    throw ConfigError("rmbir.threshold: either threshold or outlier_fraction must be set");
  } else if (!(*c.rmbir.outlier_fraction > 0.0 && *c.rmbir.outlier_fraction < 1.0)) {
    throw ConfigError("rmbir.outlier_fraction: must lie in (0, 1)");
  }
  c.rmbir.prior.sigma = r.positive("rmbir.prior.sigma");
  c.rmbir.prior.p = r.number("rmbir.prior.p");
  c.rmbir.prior.q = r.number("rmbir.prior.q");
  c.rmbir.prior.c = r.positive("rmbir.prior.c");
  c.rmbir.max_outer = static_cast<int>(r.count("rmbir.max_outer"));
  c.rmbir.max_inner = static_cast<int>(r.count("rmbir.max_inner"));
  c.rmbir.continuation_stages = static_cast<int>(r.count("rmbir.continuation_stages", 0));
  c.rmbir.tol = r.number("rmbir.tol");
  c.rmbir.nonneg = r.boolean("rmbir.nonneg");
  wrap("rmbir.init_filter", [&] { c.rmbir.init_filter = fbp_filter_from_string(r.string("rmbir.init_filter")); });
  wrap("rmbir", [&] { c.rmbir.validate(); });

  // Signatures.
  c.signatures.kmeans.n_classes = r.count("signatures.n_classes", 2);
  c.signatures.kmeans.seed = static_cast<std::uint64_t>(r.integer("signatures.kmeans_seed"));
  c.signatures.kmeans.max_iterations = static_cast<int>(r.count("signatures.kmeans_max_iterations"));
  c.signatures.grain_class = static_cast<int>(r.integer("signatures.grain_class"));
  if (c.signatures.grain_class >= static_cast<int>(c.signatures.kmeans.n_classes))
    throw ConfigError("signatures.grain_class: must be below n_classes");
  c.signatures.connectivity = static_cast<int>(r.integer("signatures.connectivity"));
  if (c.signatures.connectivity != 6 && c.signatures.connectivity != 18 && c.signatures.connectivity != 26)
    throw ConfigError("signatures.connectivity: must be 6, 18 or 26");
  c.signatures.min_voxels = r.count("signatures.min_voxels", 0);
  c.signatures.min_area = r.count("signatures.min_area", 0);
  c.signatures.match.score_threshold = r.number("signatures.score_threshold");
  if (!(c.signatures.match.score_threshold > 0.0 && c.signatures.match.score_threshold < 1.0))
    throw ConfigError("signatures.score_threshold: must lie in (0, 1)");
  c.signatures.match.binarize_fraction = r.number("signatures.binarize_fraction");
  if (!(c.signatures.match.binarize_fraction > 0.0 && c.signatures.match.binarize_fraction < 1.0))
    throw ConfigError("signatures.binarize_fraction: must lie in (0, 1)");

  c.affected_threshold = r.number("evaluate.affected_threshold");
  if (!(c.affected_threshold >= 0.0 && c.affected_threshold <= 1.0))
    throw ConfigError("evaluate.affected_threshold: must lie in [0, 1]");
  c.workers = static_cast<int>(r.count("workers", 0));

  // Spectra must cover the grid so that materials can be built.
  wrap("materials", [&] {
    c.powder_material();
    c.crystal_material();
  });
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) throw ConfigError(path + ": not valid JSON");
  return parse_config(doc);
}

Material RunConfig::powder_material() const {
  return Material::powder(grid, piecewise_linear_spectrum(grid, powder_knots));
}

Material RunConfig::crystal_material() const {
  return Material::crystal(grid, piecewise_linear_spectrum(grid, crystal_knots), traces);
}

}  // namespace wrt
