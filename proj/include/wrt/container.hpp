#pragma once

// On-disk run container: a directory `<name>.wrt/` with a `manifest.json`
// describing every array plus one raw little-endian, C-order file per array.

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "wrt/core.hpp"

namespace wrt {

inline constexpr int kContainerSchemaVersion = 1;

enum class DType { f32, u8, i32 };

std::string to_string(DType t);
DType dtype_from_string(const std::string& s);
std::size_t dtype_size(DType t);

template <class T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::f32; }
template <>
constexpr DType dtype_of<std::uint8_t>() { return DType::u8; }
template <>
constexpr DType dtype_of<std::int32_t>() { return DType::i32; }

struct ArrayRecord {
  std::string name;
  DType dtype = DType::f32;
  std::vector<std::size_t> shape;
  std::vector<std::string> axes;
  std::string units;
  std::vector<std::byte> payload;  // host byte order

  std::size_t element_count() const;

  template <class T>
  static ArrayRecord make(std::string name, std::vector<std::size_t> shape,
                          std::vector<std::string> axes, std::string units,
                          std::span<const T> values);

  /// Copies the payload out as T; throws FormatError on dtype mismatch.
  template <class T>
  std::vector<T> values() const;
};

struct Container {
  /// Extra manifest fields (wavelengths, geometry, incident flux, seed,
  /// config, tool version...). `schema_version` and `arrays` are reserved.
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<ArrayRecord> arrays;

  bool has(const std::string& name) const;
  const ArrayRecord& array(const std::string& name) const;
  void add(ArrayRecord record);
};

/// Writes into a temporary sibling directory and renames it into place.
void save_container(const std::filesystem::path& dir, const Container& container);
Container load_container(const std::filesystem::path& dir);

nlohmann::json to_json(const WavelengthGrid& grid);
WavelengthGrid wavelength_grid_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ViewGeometry& geometry);
ViewGeometry view_geometry_from_json(const nlohmann::json& j);

// Typed adapters for the domain arrays.
ArrayRecord to_record(const std::string& name, const HyperSinogram& sino);
HyperSinogram sinogram_from_record(const ArrayRecord& rec, SinogramKind kind, double incident_flux);
ArrayRecord to_record(const std::string& name, const HyperVolume& vol, const std::string& units);
HyperVolume volume_from_record(const ArrayRecord& rec);
ArrayRecord to_record(const std::string& name, const BraggMapStack& maps);
BraggMapStack bragg_maps_from_record(const ArrayRecord& rec);
ArrayRecord to_record(const std::string& name, const LabelVolume& labels);
LabelVolume labels_from_record(const ArrayRecord& rec);

// ---------------------------------------------------------------------------

template <class T>
ArrayRecord ArrayRecord::make(std::string name, std::vector<std::size_t> shape,
                              std::vector<std::string> axes, std::string units,
                              std::span<const T> values) {
  ArrayRecord r;
  r.name = std::move(name);
  r.dtype = dtype_of<T>();
  r.shape = std::move(shape);
  r.axes = std::move(axes);
  r.units = std::move(units);
  const auto* bytes = reinterpret_cast<const std::byte*>(values.data());
  r.payload.assign(bytes, bytes + values.size_bytes());
  return r;
}

template <class T>
std::vector<T> ArrayRecord::values() const {
  if (dtype != dtype_of<T>())
    throw FormatError("array '" + name + "' has dtype " + to_string(dtype) + ", requested " +
                      to_string(dtype_of<T>()));
  std::vector<T> out(payload.size() / sizeof(T));
  std::memcpy(out.data(), payload.data(), out.size() * sizeof(T));
  return out;
}

}  // namespace wrt
