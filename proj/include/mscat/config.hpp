#pragma once

// Experiment configuration: INI-style sections of key = value pairs.

#include "mscat/geometry.hpp"
#include "mscat/types.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <fstream>
#include <optional>
#include <sstream>

namespace mscat {

enum class Method { Smv, Mmv, Music };
enum class IlluminationMode { Point, Random, Optimal };

inline std::string to_string(Method m) {
  switch (m) {
    case Method::Smv: return "smv";
    case Method::Mmv: return "mmv";
    case Method::Music: return "music";
  }
  return "?";
}

inline std::string to_string(IlluminationMode m) {
  switch (m) {
    case IlluminationMode::Point: return "point";
    case IlluminationMode::Random: return "random";
    case IlluminationMode::Optimal: return "optimal";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "smv") return Method::Smv;
  if (s == "mmv") return Method::Mmv;
  if (s == "music") return Method::Music;
  throw ConfigError("solver.method", "unknown method '" + s + "' (smv, mmv or music)");
}

inline ArrayKind parse_array_kind(const std::string& s) {
  if (s == "linear") return ArrayKind::Linear;
  if (s == "planar") return ArrayKind::Planar;
  if (s == "spherical") return ArrayKind::Spherical;
  throw ConfigError("array.kind", "unknown array kind '" + s + "' (linear, planar or spherical)");
}

struct IlluminationSpec {
  IlluminationMode mode = IlluminationMode::Point;
  /// Transducer number (1-based) for point mode, shot count otherwise.
  Index value = 51;

  bool operator==(const IlluminationSpec&) const = default;
};

/// Parses "point:s", "random:nu" or "optimal:nu".
inline IlluminationSpec parse_illumination(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw ConfigError("illumination", "expected point:s, random:nu or optimal:nu, got '" + s + "'");
  const std::string mode = s.substr(0, colon), num = s.substr(colon + 1);
  IlluminationSpec spec;
  if (mode == "point")
    spec.mode = IlluminationMode::Point;
  else if (mode == "random")
    spec.mode = IlluminationMode::Random;
  else if (mode == "optimal")
    spec.mode = IlluminationMode::Optimal;
  else
    throw ConfigError("illumination", "unknown illumination mode '" + mode + "'");
  long v = 0;
  const auto [ptr, ec] = std::from_chars(num.data(), num.data() + num.size(), v);
  if (ec != std::errc() || ptr != num.data() + num.size() || v < 1)
    throw ConfigError("illumination", "expected a positive integer after ':' in '" + s + "'");
  spec.value = v;
  return spec;
}

inline std::string to_string(const IlluminationSpec& s) { return to_string(s.mode) + ":" + std::to_string(s.value); }

struct ExperimentConfig {
  // [array]
  ArrayKind array_kind = ArrayKind::Linear;
  Index sensor_count = 100;  // linear arrays
  double sensor_pitch = 1.0;  // linear and planar arrays
  double aperture = 100.0;    // planar arrays
  double sphere_radius = 100.0;  // spherical arrays

  // [window]
  double distance = 100.0;
  Index nx = 41;
  Index ny = 41;
  double pixel_pitch = 1.0;

  // [scene]
  IndexSet scatterers = {506, 840, 641, 1165, 1091};  // 0-based grid indices
  std::vector<double> amplitudes = {2.96, 2.76, 2.05, 1.54, 1.35};
  std::uint64_t phase_seed = 1;

  // [data]
  IlluminationSpec illumination;
  double noise_pct = 0.0;

  // [solver]
  Method method = Method::Smv;
  double tau_scale = 0.3;
  Index max_iters = 50000;
  double tolerance = 1e-10;
  double support_fraction = 0.1;
  Index music_vectors = 5;

  // [run]
  std::uint64_t seed = 1;
  std::string output_dir = "out";

  bool operator==(const ExperimentConfig&) const = default;
};

/// Geometry implied by the config.
inline ArrayGeometry make_geometry(const ExperimentConfig& c) {
  switch (c.array_kind) {
    case ArrayKind::Linear: return ArrayGeometry::linear(c.sensor_count, c.sensor_pitch);
    case ArrayKind::Planar: return ArrayGeometry::planar(c.aperture, c.sensor_pitch);
    case ArrayKind::Spherical: return ArrayGeometry::spherical(c.sphere_radius, c.sensor_pitch);
  }
  throw ConfigError("array.kind", "unsupported array kind");
}

/// Image window placement: broadside at distance L in the z = 0 plane for linear arrays, on the
/// axis of planar arrays (cross-range x, range z), and at the centre of spherical arrays.
inline ImageWindow make_window(const ExperimentConfig& c) {
  switch (c.array_kind) {
    case ArrayKind::Linear:
      return ImageWindow(Point3(0.0, c.distance, 0.0), c.nx, c.ny, c.pixel_pitch, Point3::UnitX(), Point3::UnitY());
    case ArrayKind::Planar:
      return ImageWindow(Point3(0.0, 0.0, c.distance), c.nx, c.ny, c.pixel_pitch, Point3::UnitX(), Point3::UnitZ());
    case ArrayKind::Spherical:
      return ImageWindow(Point3::Zero(), c.nx, c.ny, c.pixel_pitch, Point3::UnitX(), Point3::UnitY());
  }
  throw ConfigError("array.kind", "unsupported array kind");
}

inline void validate(const ExperimentConfig& c) {
  if (c.array_kind == ArrayKind::Linear && c.sensor_count < 1) throw ConfigError("array.count", "must be at least 1");
  if (!(c.sensor_pitch > 0.0)) throw ConfigError("array.pitch", "must be positive");
  if (c.array_kind == ArrayKind::Planar && !(c.aperture > 0.0)) throw ConfigError("array.aperture", "must be positive");
  if (c.array_kind == ArrayKind::Spherical && !(c.sphere_radius > 0.0)) throw ConfigError("array.radius", "must be positive");
  if (c.nx < 1 || c.ny < 1) throw ConfigError("window.nx", "grid dimensions must be at least 1");
  if (!(c.pixel_pitch > 0.0)) throw ConfigError("window.pitch", "must be positive");
  if (c.array_kind != ArrayKind::Spherical && !(c.distance > 0.0)) throw ConfigError("window.distance", "must be positive");
  if (c.scatterers.empty()) throw ConfigError("scene.indices", "scene must contain at least one scatterer");
  if (c.amplitudes.size() != c.scatterers.size())
    throw ConfigError("scene.amplitudes", "need one amplitude per scatterer index");
  const Index k = c.nx * c.ny;
  for (Index s : c.scatterers)
    if (s < 0 || s >= k)
      throw ConfigError("scene.indices", "scatterer index " + std::to_string(s + 1) + " outside 1.." + std::to_string(k));
  IndexSet sorted = c.scatterers;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw ConfigError("scene.indices", "duplicate scatterer index");
  for (double a : c.amplitudes)
    if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError("scene.amplitudes", "amplitudes must be positive and finite");
  if (!(c.noise_pct >= 0.0) || !std::isfinite(c.noise_pct)) throw ConfigError("data.noise", "noise percentage must be nonnegative");
  if (c.illumination.value < 1) throw ConfigError("data.illumination", "count or transducer must be at least 1");
  if (c.method == Method::Smv && c.illumination.value != 1 && c.illumination.mode != IlluminationMode::Point)
    throw ConfigError("data.illumination", "single-measurement recovery uses exactly one illumination");
  if (!(c.tau_scale >= 0.0)) throw ConfigError("solver.tau_scale", "must be nonnegative");
  if (c.max_iters < 1) throw ConfigError("solver.max_iters", "must be at least 1");
  if (!(c.tolerance > 0.0)) throw ConfigError("solver.tolerance", "must be positive");
  if (!(c.support_fraction > 0.0 && c.support_fraction < 1.0)) throw ConfigError("solver.support_fraction", "must lie in (0, 1)");
  if (c.music_vectors < 1) throw ConfigError("solver.music_vectors", "must be at least 1");
}

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
T parse_number(const std::string& field, const std::string& text) {
  T v{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first < last && std::isspace(static_cast<unsigned char>(*first))) ++first;
  while (last > first && std::isspace(static_cast<unsigned char>(last[-1]))) --last;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || first == last) throw ConfigError(field, "cannot parse '" + text + "' as a number");
  return v;
}

template <typename T>
std::vector<T> parse_list(const std::string& field, const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_number<T>(field, item));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& xs, bool one_based = false) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>)
      out += format_double(xs[i]);
    else
      out += std::to_string(xs[i] + (one_based ? 1 : 0));
  }
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("", std::string("malformed config: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  static const std::vector<std::string> known = {
      "array.kind", "array.count", "array.pitch", "array.aperture", "array.radius", "window.distance", "window.nx",
      "window.ny", "window.pitch", "scene.indices", "scene.amplitudes", "scene.phase_seed", "data.illumination",
      "data.noise", "solver.method", "solver.tau_scale", "solver.max_iters", "solver.tolerance",
      "solver.support_fraction", "solver.music_vectors", "run.seed", "run.output"};
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError(section, "keys must live inside a [section]");
    for (const auto& [key, value] : body) {
      const std::string name = section + "." + key;
      if (std::find(known.begin(), known.end(), name) == known.end()) throw ConfigError(name, "unknown key");
    }
  }

  ExperimentConfig c;
  auto get = [&tree](const std::string& key) -> std::optional<std::string> {
    if (auto v = tree.get_optional<std::string>(pt::ptree::path_type(key, '.'))) return *v;
    return std::nullopt;
  };
  if (auto v = get("array.kind")) c.array_kind = parse_array_kind(*v);
  if (auto v = get("array.count")) c.sensor_count = detail::parse_number<long>("array.count", *v);
  if (auto v = get("array.pitch")) c.sensor_pitch = detail::parse_number<double>("array.pitch", *v);
  if (auto v = get("array.aperture")) c.aperture = detail::parse_number<double>("array.aperture", *v);
  if (auto v = get("array.radius")) c.sphere_radius = detail::parse_number<double>("array.radius", *v);
  if (auto v = get("window.distance")) c.distance = detail::parse_number<double>("window.distance", *v);
  if (auto v = get("window.nx")) c.nx = detail::parse_number<long>("window.nx", *v);
  if (auto v = get("window.ny")) c.ny = detail::parse_number<long>("window.ny", *v);
  if (auto v = get("window.pitch")) c.pixel_pitch = detail::parse_number<double>("window.pitch", *v);
  if (auto v = get("scene.indices")) {
    c.scatterers.clear();
    for (long k : detail::parse_list<long>("scene.indices", *v)) c.scatterers.push_back(k - 1);
  }
  if (auto v = get("scene.amplitudes")) c.amplitudes = detail::parse_list<double>("scene.amplitudes", *v);
  if (auto v = get("scene.phase_seed")) c.phase_seed = detail::parse_number<std::uint64_t>("scene.phase_seed", *v);
  if (auto v = get("data.illumination")) c.illumination = parse_illumination(*v);
  if (auto v = get("data.noise")) c.noise_pct = detail::parse_number<double>("data.noise", *v);
  if (auto v = get("solver.method")) c.method = parse_method(*v);
  if (auto v = get("solver.tau_scale")) c.tau_scale = detail::parse_number<double>("solver.tau_scale", *v);
  if (auto v = get("solver.max_iters")) c.max_iters = detail::parse_number<long>("solver.max_iters", *v);
  if (auto v = get("solver.tolerance")) c.tolerance = detail::parse_number<double>("solver.tolerance", *v);
  if (auto v = get("solver.support_fraction"))
    c.support_fraction = detail::parse_number<double>("solver.support_fraction", *v);
  if (auto v = get("solver.music_vectors")) c.music_vectors = detail::parse_number<long>("solver.music_vectors", *v);
  if (auto v = get("run.seed")) c.seed = detail::parse_number<std::uint64_t>("run.seed", *v);
  if (auto v = get("run.output")) c.output_dir = *v;
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file " + path);
  return parse_config(in);
}

/// Writes every field; doubles use the shortest round-trip representation.
inline void write_config(std::ostream& out, const ExperimentConfig& c) {
  using detail::format_double;
  out << "[array]\n"
      << "kind = " << to_string(c.array_kind) << '\n'
      << "count = " << c.sensor_count << '\n'
      << "pitch = " << format_double(c.sensor_pitch) << '\n'
      << "aperture = " << format_double(c.aperture) << '\n'
      << "radius = " << format_double(c.sphere_radius) << "\n\n"
      << "[window]\n"
      << "distance = " << format_double(c.distance) << '\n'
      << "nx = " << c.nx << '\n'
      << "ny = " << c.ny << '\n'
      << "pitch = " << format_double(c.pixel_pitch) << "\n\n"
      << "[scene]\n"
      << "indices = " << detail::join(c.scatterers, true) << '\n'
      << "amplitudes = " << detail::join(c.amplitudes) << '\n'
      << "phase_seed = " << c.phase_seed << "\n\n"
      << "[data]\n"
      << "illumination = " << to_string(c.illumination) << '\n'
      << "noise = " << format_double(c.noise_pct) << "\n\n"
      << "[solver]\n"
      << "method = " << to_string(c.method) << '\n'
      << "tau_scale = " << format_double(c.tau_scale) << '\n'
      << "max_iters = " << c.max_iters << '\n'
      << "tolerance = " << format_double(c.tolerance) << '\n'
      << "support_fraction = " << format_double(c.support_fraction) << '\n'
      << "music_vectors = " << c.music_vectors << "\n\n"
      << "[run]\n"
      << "seed = " << c.seed << '\n'
      << "output = " << c.output_dir << '\n';
}

inline std::string to_string(const ExperimentConfig& c) {
  std::ostringstream out;
  write_config(out, c);
  return out.str();
}

}  // namespace mscat
