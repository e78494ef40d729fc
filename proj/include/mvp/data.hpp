// Copyright (C) 2026 The MVP Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mvp/geometry.hpp"
#include "mvp/random.hpp"

namespace mvp {

static_assert(std::endian::native == std::endian::little, "binary I/O assumes a little-endian host");

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ---- atomic file output -------------------------------------------------------

/// Writes to `<path>.tmp` and renames over `path`.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- PLY ---------------------------------------------------------------------

enum class PlyFormat { Ascii, BinaryLittleEndian };

namespace detail {

inline std::size_t ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  return 0;
}

template <typename T>
T read_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  return v;
}

inline double ply_read_scalar(const std::string& t, const char* p) {
  if (t == "char" || t == "int8") return read_le<std::int8_t>(p);
  if (t == "uchar" || t == "uint8") return read_le<std::uint8_t>(p);
  if (t == "short" || t == "int16") return read_le<std::int16_t>(p);
  if (t == "ushort" || t == "uint16") return read_le<std::uint16_t>(p);
  if (t == "int" || t == "int32") return read_le<std::int32_t>(p);
  if (t == "uint" || t == "uint32") return read_le<std::uint32_t>(p);
  if (t == "float" || t == "float32") return read_le<float>(p);
  return read_le<double>(p);
}

inline void append_le(std::string& out, const void* v, std::size_t n) { out.append(static_cast<const char*>(v), n); }

}  // namespace detail

/// Reads vertex x/y/z from an ASCII or binary little-endian PLY 1.0 file.
/// Other vertex properties are skipped; list properties on vertices are not supported.
inline PointCloud parse_ply(const std::string& bytes, const std::string& name = "<ply>") {
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::string {
    if (pos >= bytes.size()) throw ParseError(name + ": unexpected end of header at line " + std::to_string(line_no));
    const std::size_t nl = bytes.find('\n', pos);
    const std::size_t end = nl == std::string::npos ? bytes.size() : nl;
    std::string line = bytes.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = nl == std::string::npos ? bytes.size() : nl + 1;
    ++line_no;
    return line;
  };

  if (next_line() != "ply") throw ParseError(name + ": line 1: missing 'ply' magic");
  PlyFormat format = PlyFormat::Ascii;
  bool have_format = false;
  struct Element {
    std::string name;
    std::size_t count = 0;
    std::vector<std::pair<std::string, std::string>> props;  // (type, name)
  };
  std::vector<Element> elements;
  for (;;) {
    const std::string line = next_line();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "end_header") break;
    if (kw.empty() || kw == "comment" || kw == "obj_info") continue;
    if (kw == "format") {
      std::string f, version;
      ls >> f >> version;
      if (f == "ascii") format = PlyFormat::Ascii;
      else if (f == "binary_little_endian") format = PlyFormat::BinaryLittleEndian;
      else throw ParseError(name + ": line " + std::to_string(line_no) + ": unsupported format '" + f + "'");
      have_format = true;
    } else if (kw == "element") {
      Element e;
      long long count = -1;
      ls >> e.name >> count;
      if (!ls || count < 0) throw ParseError(name + ": line " + std::to_string(line_no) + ": malformed element");
      e.count = static_cast<std::size_t>(count);
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty()) throw ParseError(name + ": line " + std::to_string(line_no) + ": property before element");
      std::string type, pname;
      ls >> type;
      if (type == "list") {
        if (elements.back().name == "vertex") {
          throw ParseError(name + ": line " + std::to_string(line_no) + ": list properties on vertices unsupported");
        }
        std::string ct, it;
        ls >> ct >> it >> pname;
        elements.back().props.push_back({"list " + ct + " " + it, pname});
        continue;
      }
      ls >> pname;
      if (!ls || detail::ply_type_size(type) == 0) {
        throw ParseError(name + ": line " + std::to_string(line_no) + ": bad property '" + line + "'");
      }
      elements.back().props.push_back({type, pname});
    } else {
      throw ParseError(name + ": line " + std::to_string(line_no) + ": unknown header keyword '" + kw + "'");
    }
  }
  if (!have_format) throw ParseError(name + ": missing format line");
  if (elements.empty() || elements.front().name != "vertex") {
    throw ParseError(name + ": the first element must be 'vertex'");
  }
  const Element& vert = elements.front();
  int ix = -1, iy = -1, iz = -1;
  for (std::size_t i = 0; i < vert.props.size(); ++i) {
    if (vert.props[i].second == "x") ix = static_cast<int>(i);
    if (vert.props[i].second == "y") iy = static_cast<int>(i);
    if (vert.props[i].second == "z") iz = static_cast<int>(i);
  }
  if (ix < 0 || iy < 0 || iz < 0) throw ParseError(name + ": vertex element lacks x/y/z");

  PointCloud cloud;
  cloud.points.resize(vert.count);
  if (format == PlyFormat::Ascii) {
    for (std::size_t v = 0; v < vert.count; ++v) {
      const std::string line = next_line();
      std::istringstream ls(line);
      std::vector<double> vals(vert.props.size());
      for (auto& x : vals) {
        std::string tok;
        if (!(ls >> tok)) {
          throw ParseError(name + ": line " + std::to_string(line_no) + ": expected " +
                           std::to_string(vert.props.size()) + " values");
        }
        try {
          x = std::stod(tok);
        } catch (...) {
          throw ParseError(name + ": line " + std::to_string(line_no) + ": bad number '" + tok + "'");
        }
      }
      cloud.points[v] = {vals[static_cast<std::size_t>(ix)], vals[static_cast<std::size_t>(iy)],
                         vals[static_cast<std::size_t>(iz)]};
      if (!is_finite(cloud.points[v])) {
        throw ParseError(name + ": line " + std::to_string(line_no) + ": non-finite coordinate");
      }
    }
  } else {
    std::size_t stride = 0;
    std::vector<std::size_t> offsets;
    for (const auto& p : vert.props) {
      offsets.push_back(stride);
      stride += detail::ply_type_size(p.first);
    }
    if (bytes.size() - pos < stride * vert.count) {
      throw ParseError(name + ": byte offset " + std::to_string(pos) + ": vertex data truncated (need " +
                       std::to_string(stride * vert.count) + " bytes)");
    }
    for (std::size_t v = 0; v < vert.count; ++v) {
      const char* rec = bytes.data() + pos + v * stride;
      auto get = [&](int i) {
        return detail::ply_read_scalar(vert.props[static_cast<std::size_t>(i)].first,
                                       rec + offsets[static_cast<std::size_t>(i)]);
      };
      cloud.points[v] = {get(ix), get(iy), get(iz)};
      if (!is_finite(cloud.points[v])) {
        throw ParseError(name + ": byte offset " + std::to_string(pos + v * stride) + ": non-finite coordinate");
      }
    }
  }
  return cloud;
}

/// Serializes points (as doubles, so binary output is lossless) and optional RGB.
inline std::string serialize_ply(const PointCloud& cloud, PlyFormat format,
                                 const std::vector<std::array<std::uint8_t, 3>>* colors = nullptr) {
  std::ostringstream h;
  h << "ply\nformat " << (format == PlyFormat::Ascii ? "ascii" : "binary_little_endian") << " 1.0\n";
  if (!cloud.category.empty()) h << "comment category " << cloud.category << "\n";
  h << "element vertex " << cloud.size() << "\n";
  h << "property double x\nproperty double y\nproperty double z\n";
  if (colors) h << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  h << "end_header\n";
  std::string out = h.str();
  if (format == PlyFormat::Ascii) {
    char buf[128];
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const auto& p = cloud.points[i];
      int n = std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g", p[0], p[1], p[2]);
      out.append(buf, static_cast<std::size_t>(n));
      if (colors) {
        const auto& c = (*colors)[i];
        n = std::snprintf(buf, sizeof buf, " %u %u %u", c[0], c[1], c[2]);
        out.append(buf, static_cast<std::size_t>(n));
      }
      out.push_back('\n');
    }
  } else {
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      detail::append_le(out, cloud.points[i].data(), 3 * sizeof(double));
      if (colors) detail::append_le(out, (*colors)[i].data(), 3);
    }
  }
  return out;
}

/// Whitespace-separated XYZ text: first three columns of each non-empty,
/// non-comment line.
inline PointCloud parse_xyz(const std::string& text, const std::string& name = "<xyz>") {
  PointCloud cloud;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    Vec3 p{};
    for (double& x : p) {
      std::string tok;
      if (!(ls >> tok)) throw ParseError(name + ": line " + std::to_string(line_no) + ": expected 3 coordinates");
      try {
        x = std::stod(tok);
      } catch (...) {
        throw ParseError(name + ": line " + std::to_string(line_no) + ": bad number '" + tok + "'");
      }
    }
    if (!is_finite(p)) throw ParseError(name + ": line " + std::to_string(line_no) + ": non-finite coordinate");
    cloud.points.push_back(p);
  }
  return cloud;
}

inline std::vector<std::uint8_t> parse_labels(const std::string& text, const std::string& name = "<labels>") {
  std::vector<std::uint8_t> labels;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto last = line.find_last_not_of(" \t\r");
    const std::string tok = line.substr(first, last - first + 1);
    if (tok != "0" && tok != "1") {
      throw ParseError(name + ": line " + std::to_string(line_no) + ": label must be 0 or 1, got '" + tok + "'");
    }
    labels.push_back(tok == "1" ? 1 : 0);
  }
  return labels;
}

inline std::filesystem::path labels_path_for(const std::filesystem::path& cloud_path) {
  return cloud_path.parent_path() / (cloud_path.stem().string() + ".labels.txt");
}

/// Loads a .ply or .xyz/.txt cloud plus its `<name>.labels.txt` sidecar if present.
inline PointCloud load_cloud(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const std::string ext = path.extension().string();
  PointCloud cloud = ext == ".ply" ? parse_ply(bytes, path.string()) : parse_xyz(bytes, path.string());
  const auto lp = labels_path_for(path);
  if (std::filesystem::exists(lp)) {
    cloud.labels = parse_labels(read_file(lp), lp.string());
    if (cloud.labels.size() != cloud.size()) {
      throw ParseError(lp.string() + ": " + std::to_string(cloud.labels.size()) + " labels for " +
                       std::to_string(cloud.size()) + " points");
    }
    cloud.object_label = static_cast<std::uint8_t>(*std::max_element(cloud.labels.begin(), cloud.labels.end()));
  }
  return cloud;
}

/// Writes the cloud (binary PLY for .ply, XYZ text otherwise) and its label sidecar.
inline void save_cloud(const PointCloud& cloud, const std::filesystem::path& path,
                       PlyFormat format = PlyFormat::BinaryLittleEndian) {
  if (path.extension() == ".ply") {
    write_file_atomic(path, serialize_ply(cloud, format));
  } else {
    std::string out;
    char buf[96];
    for (const auto& p : cloud.points) {
      const int n = std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
      out.append(buf, static_cast<std::size_t>(n));
    }
    write_file_atomic(path, out);
  }
  if (cloud.has_labels()) {
    std::string lab;
    for (auto l : cloud.labels) lab += l ? "1\n" : "0\n";
    write_file_atomic(labels_path_for(path), lab);
  }
}

// ---- colored export ------------------------------------------------------------

/// Blue (score 0) to red (score 1): (round(255 s), 0, round(255 (1 - s))),
/// rounding half away from zero; 0.5 maps to (128, 0, 128).
inline std::array<std::uint8_t, 3> score_color(double s) {
  s = std::clamp(std::isfinite(s) ? s : 0.5, 0.0, 1.0);
  const auto r = static_cast<std::uint8_t>(std::floor(255.0 * s + 0.5));
  const auto b = static_cast<std::uint8_t>(std::floor(255.0 * (1.0 - s) + 0.5));
  return {r, 0, b};
}

inline void export_colored(const PointCloud& cloud, const std::vector<double>& map, const std::filesystem::path& path) {
  if (map.size() != cloud.size()) throw std::invalid_argument("score count does not match point count");
  std::vector<std::array<std::uint8_t, 3>> colors;
  colors.reserve(map.size());
  for (double s : map) colors.push_back(score_color(s));
  write_file_atomic(path, serialize_ply(cloud, PlyFormat::BinaryLittleEndian, &colors));
}

// ---- synthetic benchmark ------------------------------------------------------

enum class AnomalyType { Bump, Dent, Hole, Flash };

inline const char* to_string(AnomalyType t) {
  switch (t) {
    case AnomalyType::Bump: return "bump";
    case AnomalyType::Dent: return "dent";
    case AnomalyType::Hole: return "hole";
    case AnomalyType::Flash: return "flash";
  }
  return "?";
}

inline AnomalyType anomaly_from_string(const std::string& s) {
  if (s == "bump") return AnomalyType::Bump;
  if (s == "dent") return AnomalyType::Dent;
  if (s == "hole") return AnomalyType::Hole;
  if (s == "flash") return AnomalyType::Flash;
  throw std::invalid_argument("unknown anomaly type '" + s + "'");
}

inline const std::vector<std::string>& shape_names() {
  static const std::vector<std::string> names{"sphere", "box", "cylinder", "torus", "cone"};
  return names;
}

struct SyntheticSpec {
  std::vector<std::string> categories{"sphere", "box", "torus", "cylinder", "cone"};
  std::vector<std::string> train_categories{"sphere", "box", "torus"};
  std::vector<std::string> test_categories{"cylinder", "cone"};
  std::size_t points_per_cloud = 800;
  std::size_t clouds_per_category = 40;
  std::vector<AnomalyType> anomaly_types{AnomalyType::Bump, AnomalyType::Dent, AnomalyType::Hole, AnomalyType::Flash};
  double anomaly_fraction = 0.5;
  double anomaly_area = 0.08;
  double min_displacement = 0.03;  // fraction of the object radius
  double max_displacement = 0.08;
  std::uint64_t seed = 0;
};

struct LabeledCloud {
  PointCloud cloud;
  std::string id;
  std::string anomaly;  // "none" for normal clouds
};

struct DatasetSplit {
  std::vector<std::string> train_categories;
  std::vector<std::string> test_categories;
  std::vector<LabeledCloud> train;
  std::vector<LabeledCloud> test;
};

/// Labeled points sit at least this far from the undeformed surface (in units
/// of the object radius) and unlabeled points at most this far.
inline double deformation_threshold(const SyntheticSpec& spec) { return 0.25 * spec.min_displacement; }

namespace detail {

struct SurfaceSample {
  Vec3 p;
  Vec3 n;
};

inline SurfaceSample sample_surface(const std::string& shape, Rng& rng) {
  constexpr double pi = std::numbers::pi;
  if (shape == "sphere") {
    Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    while (norm(v) < 1e-12) v = {rng.normal(), rng.normal(), rng.normal()};
    const Vec3 n = normalized(v);
    return {n, n};
  }
  if (shape == "box") {
    const Vec3 h{1.0, 0.7, 0.5};
    const double areas[3] = {h[1] * h[2], h[0] * h[2], h[0] * h[1]};  // faces normal to x, y, z (per side)
    const double total = areas[0] + areas[1] + areas[2];
    double u = rng.uniform() * total;
    int axis = u < areas[0] ? 0 : (u < areas[0] + areas[1] ? 1 : 2);
    const double side = rng.uniform() < 0.5 ? -1.0 : 1.0;
    Vec3 p{rng.uniform(-h[0], h[0]), rng.uniform(-h[1], h[1]), rng.uniform(-h[2], h[2])};
    p[static_cast<std::size_t>(axis)] = side * h[static_cast<std::size_t>(axis)];
    Vec3 n{0.0, 0.0, 0.0};
    n[static_cast<std::size_t>(axis)] = side;
    return {p, n};
  }
  if (shape == "cylinder") {
    const double r = 0.6, hh = 0.9;
    const double side_area = 2 * pi * r * 2 * hh, cap_area = pi * r * r;
    const double u = rng.uniform() * (side_area + 2 * cap_area);
    if (u < side_area) {
      const double a = rng.uniform(0.0, 2 * pi);
      return {{r * std::cos(a), r * std::sin(a), rng.uniform(-hh, hh)}, {std::cos(a), std::sin(a), 0.0}};
    }
    const double s = u < side_area + cap_area ? 1.0 : -1.0;
    const double rr = r * std::sqrt(rng.uniform());
    const double a = rng.uniform(0.0, 2 * pi);
    return {{rr * std::cos(a), rr * std::sin(a), s * hh}, {0.0, 0.0, s}};
  }
  if (shape == "torus") {
    const double R = 0.8, r = 0.3;
    for (;;) {
      const double a = rng.uniform(0.0, 2 * pi);
      const double b = rng.uniform(0.0, 2 * pi);
      if (rng.uniform() * (R + r) > R + r * std::cos(b)) continue;  // area-proportional acceptance
      const Vec3 n{std::cos(b) * std::cos(a), std::cos(b) * std::sin(a), std::sin(b)};
      const Vec3 p{(R + r * std::cos(b)) * std::cos(a), (R + r * std::cos(b)) * std::sin(a), r * std::sin(b)};
      return {p, n};
    }
  }
  if (shape == "cone") {
    const double r = 0.8, h = 1.6;
    const double slant = std::sqrt(r * r + h * h);
    const double lat_area = pi * r * slant, base_area = pi * r * r;
    const double a = rng.uniform(0.0, 2 * pi);
    if (rng.uniform() * (lat_area + base_area) < lat_area) {
      const double t = std::sqrt(rng.uniform());  // distance from apex, area-uniform
      const double rr = r * t;
      const Vec3 p{rr * std::cos(a), rr * std::sin(a), h / 2 - h * t};
      const Vec3 n = normalized(Vec3{h * std::cos(a), h * std::sin(a), r});
      return {p, n};
    }
    const double rr = r * std::sqrt(rng.uniform());
    return {{rr * std::cos(a), rr * std::sin(a), -h / 2}, {0.0, 0.0, -1.0}};
  }
  throw std::invalid_argument("unknown shape '" + shape + "'");
}

inline Mat3 rotation_z(double a) {
  Mat3 r = Mat3::identity();
  r(0, 0) = std::cos(a);
  r(0, 1) = -std::sin(a);
  r(1, 0) = std::sin(a);
  r(1, 1) = std::cos(a);
  return r;
}

}  // namespace detail

/// One synthetic cloud with an optional anomaly. Exposed for tests that need
/// the undeformed surface.
inline LabeledCloud make_synthetic_cloud(const std::string& shape, bool anomalous, AnomalyType type,
                                         const SyntheticSpec& spec, Rng& rng) {
  std::vector<detail::SurfaceSample> s(spec.points_per_cloud);
  for (auto& x : s) x = detail::sample_surface(shape, rng);
  const Mat3 rot = detail::rotation_z(rng.uniform(0.0, 2.0 * std::numbers::pi));
  for (auto& x : s) {
    x.p = rot * x.p;
    x.n = rot * x.n;
  }

  LabeledCloud out;
  out.cloud.category = shape;
  out.anomaly = "none";
  std::vector<std::uint8_t> labels(s.size(), 0);
  std::vector<bool> keep(s.size(), true);

  if (anomalous) {
    out.anomaly = to_string(type);
    const std::size_t k = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(spec.anomaly_area * static_cast<double>(s.size()))));
    const std::size_t center = rng.index(s.size());
    std::vector<std::pair<double, std::size_t>> dist(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) dist[i] = {norm(s[i].p - s[center].p), i};
    std::nth_element(dist.begin(), dist.begin() + static_cast<long>(k - 1), dist.end());
    const double radius = std::max(dist[k - 1].first, 1e-9);
    const double h = rng.uniform(spec.min_displacement, spec.max_displacement);
    // Tangent direction for the flash ridge.
    Vec3 t = cross(s[center].n, Vec3{0.0, 0.0, 1.0});
    if (norm(t) < 1e-6) t = cross(s[center].n, Vec3{1.0, 0.0, 0.0});
    t = normalized(t);

    std::size_t labeled = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      const Vec3 off = s[i].p - s[center].p;
      const double d = norm(off);
      if (d > radius) continue;
      const double profile = 1.0 - 0.5 * (d / radius) * (d / radius);  // in [0.5, 1]
      switch (type) {
        case AnomalyType::Bump:
          s[i].p = s[i].p + (h * profile) * s[i].n;
          labels[i] = 1;
          break;
        case AnomalyType::Dent:
          s[i].p = s[i].p - (h * profile) * s[i].n;
          labels[i] = 1;
          break;
        case AnomalyType::Flash:
          if (std::abs(dot(off, t)) <= 0.35 * radius) {
            s[i].p = s[i].p + (h * profile) * s[i].n;
            labels[i] = 1;
          }
          break;
        case AnomalyType::Hole:
          if (d < 0.6 * radius) keep[i] = false;
          else labels[i] = 1;
          break;
      }
      labeled += labels[i];
    }
    if (labeled == 0) {
      // Hole too small to leave a rim: mark the nearest surviving point.
      double best = std::numeric_limits<double>::infinity();
      std::size_t arg = center;
      for (std::size_t i = 0; i < s.size(); ++i) {
        const double d = norm(s[i].p - s[center].p);
        if (keep[i] && d < best) {
          best = d;
          arg = i;
        }
      }
      keep[arg] = true;
      labels[arg] = 1;
    }
  }

  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!keep[i]) continue;
    out.cloud.points.push_back(s[i].p);
    out.cloud.labels.push_back(labels[i]);
  }
  out.cloud.object_label = static_cast<std::uint8_t>(
      *std::max_element(out.cloud.labels.begin(), out.cloud.labels.end()));
  return out;
}

/// Category-disjoint synthetic benchmark, deterministic under the seed.
inline DatasetSplit generate(const SyntheticSpec& spec) {
  if (!(spec.anomaly_area > 0.0 && spec.anomaly_area <= 0.3)) {
    throw std::invalid_argument("anomaly_area must lie in (0, 0.3]");
  }
  if (spec.anomaly_area * static_cast<double>(spec.points_per_cloud) < 1.0) {
    throw std::invalid_argument("anomaly_area * points_per_cloud < 1: no point could be anomalous");
  }
  if (!(spec.anomaly_fraction >= 0.0 && spec.anomaly_fraction <= 1.0)) {
    throw std::invalid_argument("anomaly_fraction must lie in [0, 1]");
  }
  if (spec.anomaly_types.empty() && spec.anomaly_fraction > 0.0) throw std::invalid_argument("no anomaly types");
  if (spec.clouds_per_category == 0) throw std::invalid_argument("clouds_per_category must be positive");
  for (const auto& c : spec.train_categories) {
    if (std::find(spec.test_categories.begin(), spec.test_categories.end(), c) != spec.test_categories.end()) {
      throw std::invalid_argument("category '" + c + "' is in both train and test splits");
    }
  }
  auto known = [&](const std::string& c) {
    return std::find(spec.categories.begin(), spec.categories.end(), c) != spec.categories.end();
  };
  for (const auto& c : spec.train_categories)
    if (!known(c)) throw std::invalid_argument("train category '" + c + "' not in categories");
  for (const auto& c : spec.test_categories)
    if (!known(c)) throw std::invalid_argument("test category '" + c + "' not in categories");

  DatasetSplit split;
  split.train_categories = spec.train_categories;
  split.test_categories = spec.test_categories;
  for (std::size_t ci = 0; ci < spec.categories.size(); ++ci) {
    const std::string& cat = spec.categories[ci];
    const bool is_train = known(cat) && std::find(spec.train_categories.begin(), spec.train_categories.end(), cat) !=
                                            spec.train_categories.end();
    const bool is_test = std::find(spec.test_categories.begin(), spec.test_categories.end(), cat) !=
                         spec.test_categories.end();
    if (!is_train && !is_test) continue;
    Rng rng(spec.seed * 7919ULL + ci * 104729ULL + 17ULL);
    const auto n_anom = static_cast<std::size_t>(
        std::llround(spec.anomaly_fraction * static_cast<double>(spec.clouds_per_category)));
    std::vector<bool> anomalous(spec.clouds_per_category, false);
    for (std::size_t i = 0; i < n_anom; ++i) anomalous[i] = true;
    rng.shuffle(anomalous);
    std::size_t type_cursor = 0;
    for (std::size_t k = 0; k < spec.clouds_per_category; ++k) {
      AnomalyType type = AnomalyType::Bump;
      if (anomalous[k]) type = spec.anomaly_types[type_cursor++ % spec.anomaly_types.size()];
      LabeledCloud lc = make_synthetic_cloud(cat, anomalous[k], type, spec, rng);
      char id[64];
      std::snprintf(id, sizeof id, "%s_%03zu", cat.c_str(), k);
      lc.id = id;
      (is_train ? split.train : split.test).push_back(std::move(lc));
    }
  }
  return split;
}

// ---- manifest ---------------------------------------------------------------------

struct ManifestEntry {
  std::string category;
  std::string path;  // relative to the manifest directory
  std::string split;
  int object_label = 0;
};

inline std::string format_manifest(const std::vector<ManifestEntry>& entries) {
  std::string out = "# category path split object_label\n";
  for (const auto& e : entries) {
    out += e.category + " " + e.path + " " + e.split + " " + std::to_string(e.object_label) + "\n";
  }
  return out;
}

inline std::vector<ManifestEntry> parse_manifest(const std::string& text, const std::string& name = "<manifest>") {
  std::vector<ManifestEntry> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    ManifestEntry e;
    if (!(ls >> e.category >> e.path >> e.split >> e.object_label) || (e.object_label != 0 && e.object_label != 1)) {
      throw ParseError(name + ": line " + std::to_string(line_no) + ": expected 'category path split object_label'");
    }
    out.push_back(e);
  }
  return out;
}

}  // namespace mvp
