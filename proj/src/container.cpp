#include "wrt/container.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using nlohmann::json;

namespace wrt {

namespace {

const char* kManifestName = "manifest.json";

void swap_bytes_if_needed(std::vector<std::byte>& bytes, std::size_t width) {
  if constexpr (std::endian::native == std::endian::little) {
    return;
  } else {
    for (std::size_t i = 0; i + width <= bytes.size(); i += width)
      std::reverse(bytes.begin() + static_cast<std::ptrdiff_t>(i),
                   bytes.begin() + static_cast<std::ptrdiff_t>(i + width));
  }
}

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  return n;
}

void check_record(const ArrayRecord& r) {
  if (r.name.empty() || r.name.find_first_of("/\\") != std::string::npos || r.name[0] == '.')
    throw FormatError("invalid array name '" + r.name + "'");
  if (!r.axes.empty() && r.axes.size() != r.shape.size())
    throw FormatError("array '" + r.name + "': axis labels do not match rank");
  const std::size_t expected = r.element_count() * dtype_size(r.dtype);
  if (r.payload.size() != expected) {
    std::ostringstream os;
    os << "array '" << r.name << "': payload of " << r.payload.size() << " bytes, shape needs "
       << expected;
    throw FormatError(os.str());
  }
}

std::string file_name(const ArrayRecord& r) { return r.name + ".raw"; }

}  // namespace

std::string to_string(DType t) {
  switch (t) {
    case DType::f32: return "f32";
    case DType::u8: return "u8";
    case DType::i32: return "i32";
  }
  return "?";
}

DType dtype_from_string(const std::string& s) {
  if (s == "f32") return DType::f32;
  if (s == "u8") return DType::u8;
  if (s == "i32") return DType::i32;
  throw FormatError("unsupported element kind '" + s + "'");
}

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::f32: return 4;
    case DType::u8: return 1;
    case DType::i32: return 4;
  }
  return 0;
}

std::size_t ArrayRecord::element_count() const { return product(shape); }

bool Container::has(const std::string& name) const {
  return std::any_of(arrays.begin(), arrays.end(), [&](const auto& a) { return a.name == name; });
}

const ArrayRecord& Container::array(const std::string& name) const {
  for (const auto& a : arrays)
    if (a.name == name) return a;
  throw FormatError("container has no array named '" + name + "'");
}

void Container::add(ArrayRecord record) {
  for (auto& a : arrays)
    if (a.name == record.name) {
      a = std::move(record);
      return;
    }
  arrays.push_back(std::move(record));
}

void save_container(const fs::path& dir, const Container& container) {
  for (const auto& a : container.arrays) check_record(a);

  json manifest = container.metadata.is_object() ? container.metadata : json::object();
  manifest["schema_version"] = kContainerSchemaVersion;
  json table = json::array();
  for (const auto& a : container.arrays) {
    table.push_back({{"name", a.name},
                     {"file", file_name(a)},
                     {"shape", a.shape},
                     {"dtype", to_string(a.dtype)},
                     {"axes", a.axes},
                     {"units", a.units}});
  }
  manifest["arrays"] = table;

  const fs::path target = fs::absolute(dir);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  std::random_device rd;
  const fs::path tmp =
      target.parent_path() / ("." + target.filename().string() + ".tmp" + std::to_string(rd()));
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  try {
    for (const auto& a : container.arrays) {
      std::vector<std::byte> bytes = a.payload;
      swap_bytes_if_needed(bytes, dtype_size(a.dtype));
      std::ofstream out(tmp / file_name(a), std::ios::binary);
      out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      if (!out) throw FormatError("failed writing array '" + a.name + "'");
    }
    std::ofstream out(tmp / kManifestName);
    out << manifest.dump(2) << '\n';
    if (!out) throw FormatError("failed writing manifest");
    out.close();

    fs::remove_all(target);
    fs::rename(tmp, target);
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
}

Container load_container(const fs::path& dir) {
  const fs::path manifest_path = dir / kManifestName;
  std::ifstream in(manifest_path);
  if (!in) throw FormatError("missing manifest: " + manifest_path.string());

  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw FormatError("malformed manifest " + manifest_path.string() + ": " + e.what());
  }
  if (!manifest.is_object() || !manifest.contains("arrays") || !manifest["arrays"].is_array())
    throw FormatError("manifest lacks an array table: " + manifest_path.string());
  if (manifest.value("schema_version", 0) != kContainerSchemaVersion)
    throw FormatError("unsupported container schema version");

  Container c;
  try {
    for (const auto& entry : manifest["arrays"]) {
      ArrayRecord r;
      r.name = entry.at("name").get<std::string>();
      r.dtype = dtype_from_string(entry.at("dtype").get<std::string>());
      r.shape = entry.at("shape").get<std::vector<std::size_t>>();
      r.axes = entry.value("axes", std::vector<std::string>{});
      r.units = entry.value("units", std::string{});
      const fs::path file = dir / entry.value("file", file_name(r));

      std::error_code ec;
      const auto bytes = fs::file_size(file, ec);
      if (ec) throw FormatError("missing array file: " + file.string());
      const std::size_t expected = r.element_count() * dtype_size(r.dtype);
      if (bytes != expected) {
        std::ostringstream os;
        os << "array '" << r.name << "': file holds " << bytes << " bytes, manifest shape needs "
           << expected;
        throw FormatError(os.str());
      }
      r.payload.resize(expected);
      std::ifstream raw(file, std::ios::binary);
      raw.read(reinterpret_cast<char*>(r.payload.data()), static_cast<std::streamsize>(expected));
      if (!raw) throw FormatError("failed reading array file: " + file.string());
      swap_bytes_if_needed(r.payload, dtype_size(r.dtype));
      c.arrays.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed array table: ") + e.what());
  }

  manifest.erase("arrays");
  manifest.erase("schema_version");
  c.metadata = std::move(manifest);
  return c;
}

json to_json(const WavelengthGrid& grid) {
  return json(std::vector<double>(grid.values().begin(), grid.values().end()));
}

WavelengthGrid wavelength_grid_from_json(const json& j) {
  try {
    return WavelengthGrid(j.get<std::vector<double>>());
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad wavelength grid: ") + e.what());
  }
}

json to_json(const ViewGeometry& g) {
  return {{"angles_deg", g.angles_deg},
          {"detector_rows", g.detector_rows},
          {"detector_cols", g.detector_cols},
          {"pixel_pitch_um", g.pixel_pitch_um},
          {"voxel_pitch_um", g.voxel_pitch_um},
          {"volume", {{"nx", g.volume.nx}, {"ny", g.volume.ny}, {"nz", g.volume.nz}}}};
}

ViewGeometry view_geometry_from_json(const json& j) {
  try {
    ViewGeometry g;
    g.angles_deg = j.at("angles_deg").get<std::vector<double>>();
    g.detector_rows = j.at("detector_rows").get<std::size_t>();
    g.detector_cols = j.at("detector_cols").get<std::size_t>();
    g.pixel_pitch_um = j.at("pixel_pitch_um").get<double>();
    g.voxel_pitch_um = j.at("voxel_pitch_um").get<double>();
    const auto& v = j.at("volume");
    g.volume = {v.at("nx").get<std::size_t>(), v.at("ny").get<std::size_t>(), v.at("nz").get<std::size_t>()};
    return g;
  } catch (const json::exception& e) {
    throw FormatError(std::string("bad view geometry: ") + e.what());
  }
}

ArrayRecord to_record(const std::string& name, const HyperSinogram& s) {
  s.check_shape();
  return ArrayRecord::make<float>(name, {s.channels, s.views, s.rows, s.cols},
                                  {"wavelength", "view", "row", "col"},
                                  s.kind == SinogramKind::counts ? "counts" : "1", s.data);
}

HyperSinogram sinogram_from_record(const ArrayRecord& rec, SinogramKind kind, double incident_flux) {
  if (rec.shape.size() != 4) throw FormatError("array '" + rec.name + "' is not a 4-D sinogram");
  HyperSinogram s;
  s.kind = kind;
  s.channels = rec.shape[0];
  s.views = rec.shape[1];
  s.rows = rec.shape[2];
  s.cols = rec.shape[3];
  s.incident_flux = incident_flux;
  s.data = rec.values<float>();
  return s;
}

ArrayRecord to_record(const std::string& name, const HyperVolume& v, const std::string& units) {
  if (v.data.size() != v.channels * v.shape.size())
    throw FormatError("volume '" + name + "': payload does not match shape");
  return ArrayRecord::make<float>(name, {v.channels, v.shape.nz, v.shape.ny, v.shape.nx},
                                  {"wavelength", "z", "y", "x"}, units, v.data);
}

HyperVolume volume_from_record(const ArrayRecord& rec) {
  if (rec.shape.size() != 4) throw FormatError("array '" + rec.name + "' is not a 4-D volume");
  HyperVolume v;
  v.channels = rec.shape[0];
  v.shape = {rec.shape[3], rec.shape[2], rec.shape[1]};
  v.data = rec.values<float>();
  return v;
}

ArrayRecord to_record(const std::string& name, const BraggMapStack& m) {
  if (m.data.size() != m.channels * m.channel_size())
    throw FormatError("bragg maps '" + name + "': payload does not match shape");
  return ArrayRecord::make<std::uint8_t>(name, {m.channels, m.views, m.rows, m.cols},
                                         {"wavelength", "view", "row", "col"}, "1", m.data);
}

BraggMapStack bragg_maps_from_record(const ArrayRecord& rec) {
  if (rec.shape.size() != 4) throw FormatError("array '" + rec.name + "' is not a 4-D map stack");
  BraggMapStack m;
  m.channels = rec.shape[0];
  m.views = rec.shape[1];
  m.rows = rec.shape[2];
  m.cols = rec.shape[3];
  m.data = rec.values<std::uint8_t>();
  return m;
}

ArrayRecord to_record(const std::string& name, const LabelVolume& l) {
  if (l.labels.size() != l.shape.size())
    throw FormatError("labels '" + name + "': payload does not match shape");
  return ArrayRecord::make<std::int32_t>(name, {l.shape.nz, l.shape.ny, l.shape.nx}, {"z", "y", "x"},
                                         "label", l.labels);
}

LabelVolume labels_from_record(const ArrayRecord& rec) {
  if (rec.shape.size() != 3) throw FormatError("array '" + rec.name + "' is not a 3-D label volume");
  LabelVolume l;
  l.shape = {rec.shape[2], rec.shape[1], rec.shape[0]};
  l.labels = rec.values<std::int32_t>();
  l.count = l.labels.empty() ? 0 : *std::max_element(l.labels.begin(), l.labels.end());
  return l;
}

}  // namespace wrt
