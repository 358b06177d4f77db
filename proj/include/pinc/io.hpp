#pragma once

// File formats: XYZ and PLY point clouds, OBJ and PLY meshes.

#include <algorithm>
#include <bit>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pinc/common.hpp"
#include "pinc/mesh.hpp"

namespace pinc {

struct RawCloud {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;  // empty when the file carries none
};

/// Writes to `<path>.tmp` and renames over `path`, so readers never see a
/// partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw InputError("cannot open " + tmp.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw InputError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t b = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > b) out.push_back(line.substr(b, i - b));
  }
  return out;
}

inline bool parse_double(std::string_view s, double& v) {
  std::string tmp(s);
  char* end = nullptr;
  v = std::strtod(tmp.c_str(), &end);
  return end == tmp.c_str() + tmp.size() && !tmp.empty();
}

inline std::string where(const std::string& file, std::size_t line) {
  return file + ":" + std::to_string(line);
}

}  // namespace detail

/// Whitespace-separated rows of 3 (positions) or 6 (positions + normals)
/// numbers. Blank lines and '#' comments are skipped.
inline RawCloud parse_xyz(std::string_view text, const std::string& name = "<xyz>") {
  RawCloud c;
  std::size_t line_no = 0;
  int columns = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (const auto h = line.find('#'); h != std::string_view::npos) line = line.substr(0, h);
    const auto tok = detail::split_ws(line);
    if (tok.empty()) {
      if (nl == text.size()) break;
      continue;
    }
    if (tok.size() != 3 && tok.size() != 6) {
      throw InputError(detail::where(name, line_no) + ": expected 3 or 6 columns, found " + std::to_string(tok.size()));
    }
    if (columns == 0) columns = static_cast<int>(tok.size());
    if (static_cast<int>(tok.size()) != columns) {
      throw InputError(detail::where(name, line_no) + ": column count changed from " + std::to_string(columns));
    }
    double v[6];
    for (std::size_t k = 0; k < tok.size(); ++k) {
      if (!detail::parse_double(tok[k], v[k]) || !std::isfinite(v[k])) {
        throw InputError(detail::where(name, line_no) + ": malformed number '" + std::string(tok[k]) + "'");
      }
    }
    c.points.push_back({v[0], v[1], v[2]});
    if (columns == 6) c.normals.push_back({v[3], v[4], v[5]});
    if (nl == text.size()) break;
  }
  if (c.points.empty()) throw InputError(name + ": no points");
  return c;
}

inline RawCloud read_xyz(const std::filesystem::path& path) { return parse_xyz(read_file(path), path.string()); }

/// One point per line, normals appended when present, 17 significant digits.
inline std::string format_xyz(std::span<const Vec3> points, std::span<const Vec3> normals = {}) {
  if (!normals.empty() && normals.size() != points.size()) throw UsageError("normal count differs from point count");
  std::string s;
  char buf[160];
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Vec3& p = points[i];
    if (normals.empty()) {
      std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
    } else {
      const Vec3& n = normals[i];
      std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g %.17g %.17g\n", p[0], p[1], p[2], n[0], n[1], n[2]);
    }
    s += buf;
  }
  return s;
}

struct PlyData {
  RawCloud cloud;
  std::vector<std::array<std::uint32_t, 3>> triangles;  // fan-triangulated faces
};

namespace detail {

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

inline PlyType ply_type(std::string_view s, const std::string& where) {
  if (s == "char" || s == "int8") return PlyType::i8;
  if (s == "uchar" || s == "uint8") return PlyType::u8;
  if (s == "short" || s == "int16") return PlyType::i16;
  if (s == "ushort" || s == "uint16") return PlyType::u16;
  if (s == "int" || s == "int32") return PlyType::i32;
  if (s == "uint" || s == "uint32") return PlyType::u32;
  if (s == "float" || s == "float32") return PlyType::f32;
  if (s == "double" || s == "float64") return PlyType::f64;
  throw InputError(where + ": unknown PLY type '" + std::string(s) + "'");
}

inline std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::i8:
    case PlyType::u8:
      return 1;
    case PlyType::i16:
    case PlyType::u16:
      return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32:
      return 4;
    case PlyType::f64:
      return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::f32;
  bool is_list = false;
  PlyType count_type = PlyType::u8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

class PlyCursor {
 public:
  PlyCursor(std::string_view body, bool ascii, bool big_endian, std::string name, std::size_t first_line)
      : body_(body), ascii_(ascii), big_(big_endian), name_(std::move(name)), line_(first_line) {}

  double read(PlyType t) {
    if (ascii_) return read_ascii();
    const std::size_t n = ply_size(t);
    if (pos_ + n > body_.size()) throw InputError(name_ + ": truncated binary PLY body");
    unsigned char b[8];
    std::memcpy(b, body_.data() + pos_, n);
    pos_ += n;
    if (big_ != (std::endian::native == std::endian::big)) std::reverse(b, b + n);
    switch (t) {
      case PlyType::i8: { std::int8_t v; std::memcpy(&v, b, 1); return v; }
      case PlyType::u8: { std::uint8_t v; std::memcpy(&v, b, 1); return v; }
      case PlyType::i16: { std::int16_t v; std::memcpy(&v, b, 2); return v; }
      case PlyType::u16: { std::uint16_t v; std::memcpy(&v, b, 2); return v; }
      case PlyType::i32: { std::int32_t v; std::memcpy(&v, b, 4); return v; }
      case PlyType::u32: { std::uint32_t v; std::memcpy(&v, b, 4); return v; }
      case PlyType::f32: { float v; std::memcpy(&v, b, 4); return v; }
      case PlyType::f64: { double v; std::memcpy(&v, b, 8); return v; }
    }
    return 0.0;
  }

  void end_row() {
    if (!ascii_) return;
    while (pos_ < body_.size() && body_[pos_] != '\n') {
      if (!std::isspace(static_cast<unsigned char>(body_[pos_]))) {
        throw InputError(where() + ": unexpected trailing data in PLY row");
      }
      ++pos_;
    }
    if (pos_ < body_.size()) ++pos_;
    ++line_;
  }

  std::string where() const { return name_ + ":" + std::to_string(line_); }

 private:
  double read_ascii() {
    while (pos_ < body_.size() && (body_[pos_] == ' ' || body_[pos_] == '\t' || body_[pos_] == '\r')) ++pos_;
    if (pos_ >= body_.size() || body_[pos_] == '\n') throw InputError(where() + ": PLY row has too few values");
    const std::size_t b = pos_;
    while (pos_ < body_.size() && !std::isspace(static_cast<unsigned char>(body_[pos_]))) ++pos_;
    double v = 0.0;
    if (!parse_double(body_.substr(b, pos_ - b), v)) {
      throw InputError(where() + ": malformed number '" + std::string(body_.substr(b, pos_ - b)) + "'");
    }
    return v;
  }

  std::string_view body_;
  bool ascii_;
  bool big_;
  std::string name_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// ASCII or binary PLY with vertex x, y, z (and optional nx, ny, nz) and an
/// optional face element with a vertex index list.
inline PlyData parse_ply(std::string_view data, const std::string& name = "<ply>") {
  using namespace detail;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  auto next_line = [&]() -> std::string_view {
    if (pos >= data.size()) throw InputError(name + ": unexpected end of PLY header");
    std::size_t nl = data.find('\n', pos);
    if (nl == std::string_view::npos) nl = data.size();
    std::string_view l = data.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    return l;
  };
  if (next_line() != "ply") throw InputError(name + ":1: missing 'ply' magic");
  bool ascii = false;
  bool big = false;
  bool have_format = false;
  std::vector<PlyElement> elements;
  for (;;) {
    const auto tok = split_ws(next_line());
    const std::string here = where(name, line_no);
    if (tok.empty()) continue;
    if (tok[0] == "end_header") break;
    if (tok[0] == "comment" || tok[0] == "obj_info") continue;
    if (tok[0] == "format") {
      if (tok.size() < 2) throw InputError(here + ": malformed format line");
      if (tok[1] == "ascii") {
        ascii = true;
      } else if (tok[1] == "binary_little_endian") {
        big = false;
      } else if (tok[1] == "binary_big_endian") {
        big = true;
      } else {
        throw InputError(here + ": unknown PLY format '" + std::string(tok[1]) + "'");
      }
      have_format = true;
    } else if (tok[0] == "element") {
      double n = 0;
      if (tok.size() != 3 || !parse_double(tok[2], n) || n < 0) throw InputError(here + ": malformed element line");
      elements.push_back({std::string(tok[1]), static_cast<std::size_t>(n), {}});
    } else if (tok[0] == "property") {
      if (elements.empty()) throw InputError(here + ": property before any element");
      PlyProperty p;
      if (tok.size() == 5 && tok[1] == "list") {
        p.is_list = true;
        p.count_type = ply_type(tok[2], here);
        p.type = ply_type(tok[3], here);
        p.name = std::string(tok[4]);
      } else if (tok.size() == 3) {
        p.type = ply_type(tok[1], here);
        p.name = std::string(tok[2]);
      } else {
        throw InputError(here + ": malformed property line");
      }
      elements.back().props.push_back(p);
    } else {
      throw InputError(here + ": unknown PLY header keyword '" + std::string(tok[0]) + "'");
    }
  }
  if (!have_format) throw InputError(name + ": PLY header lacks a format line");

  PlyData out;
  PlyCursor cur(data.substr(std::min(pos, data.size())), ascii, big, name, line_no + 1);
  for (const PlyElement& el : elements) {
    const bool is_vertex = el.name == "vertex";
    const bool is_face = el.name == "face";
    int ix[6] = {-1, -1, -1, -1, -1, -1};
    int list_prop = -1;
    for (std::size_t k = 0; k < el.props.size(); ++k) {
      static constexpr const char* kNames[6] = {"x", "y", "z", "nx", "ny", "nz"};
      for (int a = 0; a < 6; ++a) {
        if (el.props[k].name == kNames[a]) ix[a] = static_cast<int>(k);
      }
      if (el.props[k].is_list && (el.props[k].name == "vertex_indices" || el.props[k].name == "vertex_index")) {
        list_prop = static_cast<int>(k);
      }
    }
    if (is_vertex && (ix[0] < 0 || ix[1] < 0 || ix[2] < 0)) throw InputError(name + ": vertex element lacks x/y/z");
    const bool normals = is_vertex && ix[3] >= 0 && ix[4] >= 0 && ix[5] >= 0;
    std::vector<double> row(el.props.size());
    std::vector<std::uint32_t> poly;
    for (std::size_t r = 0; r < el.count; ++r) {
      for (std::size_t k = 0; k < el.props.size(); ++k) {
        const PlyProperty& p = el.props[k];
        if (!p.is_list) {
          row[k] = cur.read(p.type);
          continue;
        }
        const double n = cur.read(p.count_type);
        if (n < 0) throw InputError(cur.where() + ": negative list length");
        if (static_cast<int>(k) == list_prop) poly.clear();
        for (std::size_t j = 0; j < static_cast<std::size_t>(n); ++j) {
          const double v = cur.read(p.type);
          if (static_cast<int>(k) == list_prop) {
            if (v < 0) throw InputError(cur.where() + ": negative vertex index");
            poly.push_back(static_cast<std::uint32_t>(v));
          }
        }
      }
      cur.end_row();
      if (is_vertex) {
        const Vec3 p{row[static_cast<std::size_t>(ix[0])], row[static_cast<std::size_t>(ix[1])],
                     row[static_cast<std::size_t>(ix[2])]};
        if (!is_finite(p)) throw InputError(cur.where() + ": non-finite vertex coordinate");
        out.cloud.points.push_back(p);
        if (normals) {
          out.cloud.normals.push_back({row[static_cast<std::size_t>(ix[3])], row[static_cast<std::size_t>(ix[4])],
                                      row[static_cast<std::size_t>(ix[5])]});
        }
      } else if (is_face && list_prop >= 0) {
        for (std::size_t j = 2; j < poly.size(); ++j) out.triangles.push_back({poly[0], poly[j - 1], poly[j]});
      }
    }
  }
  for (const auto& t : out.triangles) {
    for (auto v : t) {
      if (v >= out.cloud.points.size()) throw InputError(name + ": face index out of range");
    }
  }
  return out;
}

inline PlyData read_ply(const std::filesystem::path& path) { return parse_ply(read_file(path), path.string()); }

/// Reads a point cloud by extension (.xyz/.txt/.pts or .ply).
inline RawCloud read_cloud(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError("input file not found: " + path.string());
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (ext == ".ply") return read_ply(path).cloud;
  return read_xyz(path);
}

/// OBJ: "v x y z" and "f a b c" records, 1-based indices, 9 significant digits.
inline std::string format_obj(const TriangleMesh& m) {
  std::string s = "# pinc mesh: " + std::to_string(m.vertices.size()) + " vertices, " +
                  std::to_string(m.triangles.size()) + " triangles\n";
  char buf[128];
  for (const Vec3& v : m.vertices) {
    std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", v[0], v[1], v[2]);
    s += buf;
  }
  for (const auto& t : m.triangles) {
    std::snprintf(buf, sizeof buf, "f %u %u %u\n", t[0] + 1, t[1] + 1, t[2] + 1);
    s += buf;
  }
  return s;
}

inline void write_obj(const std::filesystem::path& path, const TriangleMesh& m) { write_file_atomic(path, format_obj(m)); }

/// Reads "v" and "f" records (v/vt/vn index forms accepted, polygons fanned).
inline TriangleMesh parse_obj(std::string_view text, const std::string& name = "<obj>") {
  TriangleMesh m;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const std::string_view line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    const auto tok = detail::split_ws(line);
    if (tok.empty() || tok[0][0] == '#') continue;
    const std::string here = detail::where(name, line_no);
    if (tok[0] == "v") {
      double v[3];
      if (tok.size() < 4) throw InputError(here + ": vertex needs 3 coordinates");
      for (int a = 0; a < 3; ++a) {
        if (!detail::parse_double(tok[static_cast<std::size_t>(a + 1)], v[a])) throw InputError(here + ": malformed vertex");
      }
      m.vertices.push_back({v[0], v[1], v[2]});
    } else if (tok[0] == "f") {
      std::vector<std::uint32_t> idx;
      for (std::size_t k = 1; k < tok.size(); ++k) {
        const std::string_view t = tok[k].substr(0, tok[k].find('/'));
        double v = 0;
        if (!detail::parse_double(t, v)) throw InputError(here + ": malformed face index");
        long i = static_cast<long>(v);
        if (i < 0) i = static_cast<long>(m.vertices.size()) + i + 1;
        if (i < 1 || static_cast<std::size_t>(i) > m.vertices.size()) throw InputError(here + ": face index out of range");
        idx.push_back(static_cast<std::uint32_t>(i - 1));
      }
      if (idx.size() < 3) throw InputError(here + ": face needs at least 3 vertices");
      for (std::size_t j = 2; j < idx.size(); ++j) m.triangles.push_back({idx[0], idx[j - 1], idx[j]});
    }
  }
  return m;
}

inline TriangleMesh read_obj(const std::filesystem::path& path) { return parse_obj(read_file(path), path.string()); }

/// Reads a mesh by extension (.obj or .ply).
inline TriangleMesh read_mesh(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw InputError("input file not found: " + path.string());
  if (path.extension() == ".ply") {
    PlyData d = read_ply(path);
    return TriangleMesh{std::move(d.cloud.points), std::move(d.triangles)};
  }
  return read_obj(path);
}

/// Binary little-endian PLY with float64 vertices and uint32 face lists.
inline std::string format_ply_mesh(const TriangleMesh& m) {
  std::string s = "ply\nformat binary_little_endian 1.0\nelement vertex " + std::to_string(m.vertices.size()) +
                  "\nproperty double x\nproperty double y\nproperty double z\nelement face " +
                  std::to_string(m.triangles.size()) + "\nproperty list uchar uint vertex_indices\nend_header\n";
  auto put = [&s](const void* p, std::size_t n) {
    unsigned char b[8];
    std::memcpy(b, p, n);
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + n);
    s.append(reinterpret_cast<const char*>(b), n);
  };
  for (const Vec3& v : m.vertices) {
    for (double c : v) put(&c, 8);
  }
  for (const auto& t : m.triangles) {
    const std::uint8_t three = 3;
    put(&three, 1);
    for (std::uint32_t i : t) put(&i, 4);
  }
  return s;
}

inline void write_ply_mesh(const std::filesystem::path& path, const TriangleMesh& m) {
  write_file_atomic(path, format_ply_mesh(m));
}

}  // namespace pinc
