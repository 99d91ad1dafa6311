#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "s2df/error.hpp"
#include "s2df/geometry.hpp"

namespace s2df::io {

namespace detail {

inline std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream is(path, mode);
  if (!is) throw ParseError("cannot open " + path);
  return is;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path + " for writing");
  os << std::setprecision(17);
  return os;
}

inline bool is_blank_or_comment(const std::string& line) {
  const auto p = line.find_first_not_of(" \t\r");
  return p == std::string::npos || line[p] == '#';
}

}  // namespace detail

/// Whitespace-separated points, one per line: D coordinates, optionally
/// followed by D normal components. Blank lines and '#' comments are skipped.
template <int D>
PointCloud<D> read_xyz(std::istream& is, const std::string& name = "<stream>") {
  PointCloud<D> cloud;
  std::string line;
  std::size_t lineno = 0;
  int columns = -1;
  while (std::getline(is, line)) {
    ++lineno;
    if (detail::is_blank_or_comment(line)) continue;
    std::istringstream ls(line);
    std::vector<double> v;
    std::string tok;
    while (ls >> tok) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError(name + ":" + std::to_string(lineno) + ": not a number: " + tok);
      }
    }
    const int n = static_cast<int>(v.size());
    if (n != D && n != 2 * D)
      throw ParseError(name + ":" + std::to_string(lineno) + ": expected " + std::to_string(D) + " or " +
                       std::to_string(2 * D) + " columns, got " + std::to_string(n));
    if (columns >= 0 && n != columns) throw ParseError(name + ":" + std::to_string(lineno) + ": inconsistent column count");
    columns = n;
    Point<D> p;
    for (int i = 0; i < D; ++i) p[i] = v[i];
    cloud.points.push_back(p);
    if (n == 2 * D) {
      Point<D> nrm;
      for (int i = 0; i < D; ++i) nrm[i] = v[D + i];
      const double len = nrm.norm();
      if (!(len > 0)) throw ParseError(name + ":" + std::to_string(lineno) + ": zero normal");
      cloud.normals.push_back(nrm / len);
    }
  }
  validate_cloud(cloud);
  return cloud;
}

template <int D>
PointCloud<D> read_xyz(const std::string& path) {
  auto is = detail::open_in(path);
  return read_xyz<D>(is, path);
}

template <int D>
void write_xyz(std::ostream& os, const PointCloud<D>& cloud) {
  os << std::setprecision(17);
  const bool normals = cloud.has_normals();
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    for (int k = 0; k < D; ++k) os << (k ? " " : "") << cloud.points[i][k];
    if (normals)
      for (int k = 0; k < D; ++k) os << ' ' << cloud.normals[i][k];
    os << '\n';
  }
}

template <int D>
void write_xyz(const std::string& path, const PointCloud<D>& cloud) {
  auto os = detail::open_out(path);
  write_xyz(os, cloud);
}

/// Vertices (with optional normals) and faces of a PLY file.
struct PlyData {
  std::vector<Point3> vertices;
  std::vector<Point3> normals;
  std::vector<std::array<std::int32_t, 3>> faces;  // polygons fan-triangulated
};

namespace detail {

enum class PlyFormat { kAscii, kBinaryLE, kBinaryBE };

struct PlyProperty {
  std::string name;
  std::string type;        // scalar type, or list item type
  std::string count_type;  // non-empty for list properties
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

inline std::size_t ply_type_size(const std::string& t) {
  if (t == "char" || t == "uchar" || t == "int8" || t == "uint8") return 1;
  if (t == "short" || t == "ushort" || t == "int16" || t == "uint16") return 2;
  if (t == "int" || t == "uint" || t == "float" || t == "int32" || t == "uint32" || t == "float32") return 4;
  if (t == "double" || t == "float64") return 8;
  throw ParseError("PLY: unknown property type " + t);
}

template <typename T>
T load_swapped(const char* p, bool swap) {
  std::array<char, sizeof(T)> b;
  std::memcpy(b.data(), p, sizeof(T));
  if (swap) std::reverse(b.begin(), b.end());
  T v;
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

inline double ply_binary_value(std::istream& is, const std::string& t, bool swap) {
  char buf[8];
  const std::size_t n = ply_type_size(t);
  if (!is.read(buf, static_cast<std::streamsize>(n))) throw ParseError("PLY: truncated binary body");
  if (t == "char" || t == "int8") return static_cast<std::int8_t>(buf[0]);
  if (t == "uchar" || t == "uint8") return static_cast<std::uint8_t>(buf[0]);
  if (t == "short" || t == "int16") return load_swapped<std::int16_t>(buf, swap);
  if (t == "ushort" || t == "uint16") return load_swapped<std::uint16_t>(buf, swap);
  if (t == "int" || t == "int32") return load_swapped<std::int32_t>(buf, swap);
  if (t == "uint" || t == "uint32") return load_swapped<std::uint32_t>(buf, swap);
  if (t == "float" || t == "float32") return load_swapped<float>(buf, swap);
  return load_swapped<double>(buf, swap);
}

}  // namespace detail

inline PlyData read_ply(std::istream& is, const std::string& name = "<stream>") {
  using namespace detail;
  std::string line;
  if (!std::getline(is, line) || line.rfind("ply", 0) != 0) throw ParseError(name + ": not a PLY file");
  PlyFormat format = PlyFormat::kAscii;
  std::vector<PlyElement> elements;
  bool header_done = false;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "format") {
      std::string f;
      ls >> f;
      if (f == "ascii") format = PlyFormat::kAscii;
      else if (f == "binary_little_endian") format = PlyFormat::kBinaryLE;
      else if (f == "binary_big_endian") format = PlyFormat::kBinaryBE;
      else throw ParseError(name + ": unknown PLY format " + f);
    } else if (kw == "element") {
      PlyElement e;
      ls >> e.name >> e.count;
      if (!ls) throw ParseError(name + ": bad element line");
      elements.push_back(e);
    } else if (kw == "property") {
      if (elements.empty()) throw ParseError(name + ": property before element");
      PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        ls >> p.count_type >> p.type >> p.name;
      } else {
        p.type = t;
        ls >> p.name;
      }
      if (!ls) throw ParseError(name + ": bad property line");
      ply_type_size(p.type);
      elements.back().props.push_back(p);
    } else if (kw == "end_header") {
      header_done = true;
      break;
    }
  }
  if (!header_done) throw ParseError(name + ": missing end_header");

  const bool swap = (format == PlyFormat::kBinaryLE) != (std::endian::native == std::endian::little);
  PlyData out;
  for (const auto& e : elements) {
    const bool is_vertex = e.name == "vertex";
    const bool is_face = e.name == "face";
    int ix = -1, iy = -1, iz = -1, inx = -1, iny = -1, inz = -1, ilist = -1;
    for (int k = 0; k < static_cast<int>(e.props.size()); ++k) {
      const auto& n = e.props[k].name;
      if (n == "x") ix = k;
      if (n == "y") iy = k;
      if (n == "z") iz = k;
      if (n == "nx") inx = k;
      if (n == "ny") iny = k;
      if (n == "nz") inz = k;
      if (!e.props[k].count_type.empty() && (n == "vertex_indices" || n == "vertex_index")) ilist = k;
    }
    if (is_vertex && (ix < 0 || iy < 0 || iz < 0)) throw ParseError(name + ": vertex element lacks x/y/z");
    const bool has_normals = inx >= 0 && iny >= 0 && inz >= 0;

    std::istringstream* ascii_line = nullptr;
    std::istringstream ls;
    for (std::size_t r = 0; r < e.count; ++r) {
      if (format == PlyFormat::kAscii) {
        do {
          if (!std::getline(is, line)) throw ParseError(name + ": truncated PLY body");
        } while (detail::is_blank_or_comment(line));
        ls = std::istringstream(line);
        ascii_line = &ls;
      }
      auto scalar = [&](const std::string& t) {
        if (ascii_line) {
          double v;
          if (!(*ascii_line >> v)) throw ParseError(name + ": malformed PLY row");
          return v;
        }
        return ply_binary_value(is, t, swap);
      };
      std::vector<double> vals(e.props.size(), 0.0);
      std::vector<std::int32_t> list;
      for (int k = 0; k < static_cast<int>(e.props.size()); ++k) {
        const auto& p = e.props[k];
        if (p.count_type.empty()) {
          vals[k] = scalar(p.type);
        } else {
          const double cnt = scalar(p.count_type);
          if (cnt < 0) throw ParseError(name + ": negative list length");
          std::vector<std::int32_t> items(static_cast<std::size_t>(cnt));
          for (auto& it : items) it = static_cast<std::int32_t>(scalar(p.type));
          if (k == ilist) list = std::move(items);
        }
      }
      if (is_vertex) {
        out.vertices.emplace_back(vals[ix], vals[iy], vals[iz]);
        if (has_normals) out.normals.emplace_back(vals[inx], vals[iny], vals[inz]);
      } else if (is_face && list.size() >= 3) {
        for (std::size_t t = 1; t + 1 < list.size(); ++t) out.faces.push_back({list[0], list[t], list[t + 1]});
      }
    }
  }
  const auto nv = static_cast<std::int32_t>(out.vertices.size());
  for (const auto& f : out.faces)
    for (auto i : f)
      if (i < 0 || i >= nv) throw ParseError(name + ": face index out of range");
  return out;
}

inline PlyData read_ply(const std::string& path) {
  auto is = detail::open_in(path, std::ios::in | std::ios::binary);
  return read_ply(is, path);
}

/// Point cloud from a PLY file's vertices; normals are normalized when present.
inline PointCloud<3> ply_to_cloud(const PlyData& ply) {
  PointCloud<3> c;
  c.points = ply.vertices;
  if (!ply.normals.empty()) {
    for (const auto& n : ply.normals) {
      const double len = n.norm();
      if (!(len > 0)) throw ParseError("PLY: zero-length vertex normal");
      c.normals.push_back(n / len);
    }
  }
  validate_cloud(c);
  return c;
}

inline TriangleMesh ply_to_mesh(const PlyData& ply) { return {ply.vertices, ply.faces}; }

inline void write_obj(std::ostream& os, const TriangleMesh& m) {
  os << std::setprecision(17);
  for (const auto& v : m.vertices) os << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : m.faces) os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

inline void write_ply(std::ostream& os, const TriangleMesh& m) {
  os << std::setprecision(17);
  os << "ply\nformat ascii 1.0\nelement vertex " << m.vertices.size()
     << "\nproperty double x\nproperty double y\nproperty double z\nelement face " << m.faces.size()
     << "\nproperty list uchar int vertex_indices\nend_header\n";
  for (const auto& v : m.vertices) os << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& f : m.faces) os << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

/// OBJ reader for `v` and `f` records; polygon faces are fan-triangulated and
/// `v/vt/vn` index forms and negative indices are accepted.
inline TriangleMesh read_obj(std::istream& is, const std::string& name = "<stream>") {
  TriangleMesh m;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string kw;
    ls >> kw;
    if (kw == "v") {
      double x, y, z;
      if (!(ls >> x >> y >> z)) throw ParseError(name + ":" + std::to_string(lineno) + ": bad vertex");
      m.vertices.emplace_back(x, y, z);
    } else if (kw == "f") {
      std::vector<std::int32_t> idx;
      std::string tok;
      while (ls >> tok) {
        long v;
        try {
          v = std::stol(tok.substr(0, tok.find('/')));
        } catch (const std::exception&) {
          throw ParseError(name + ":" + std::to_string(lineno) + ": bad face index " + tok);
        }
        const long n = static_cast<long>(m.vertices.size());
        const long zero_based = v > 0 ? v - 1 : n + v;
        if (v == 0 || zero_based < 0 || zero_based >= n)
          throw ParseError(name + ":" + std::to_string(lineno) + ": face index out of range");
        idx.push_back(static_cast<std::int32_t>(zero_based));
      }
      if (idx.size() < 3) throw ParseError(name + ":" + std::to_string(lineno) + ": face with < 3 vertices");
      for (std::size_t t = 1; t + 1 < idx.size(); ++t) m.faces.push_back({idx[0], idx[t], idx[t + 1]});
    }
  }
  return m;
}

inline TriangleMesh read_mesh(const std::string& path) {
  const auto ext = path.substr(path.find_last_of('.') + 1);
  if (ext == "obj") {
    auto is = detail::open_in(path);
    return read_obj(is, path);
  }
  if (ext == "ply") return ply_to_mesh(read_ply(path));
  throw ParseError("unsupported mesh format: " + path);
}

inline void write_mesh(const std::string& path, const TriangleMesh& m) {
  auto os = detail::open_out(path);
  const auto ext = path.substr(path.find_last_of('.') + 1);
  if (ext == "ply") write_ply(os, m);
  else write_obj(os, m);
  if (!os) throw Error("failed writing " + path);
}

/// Point cloud from .xyz/.txt/.pts (text) or .ply.
template <int D>
PointCloud<D> read_cloud(const std::string& path) {
  const auto ext = path.substr(path.find_last_of('.') + 1);
  if (ext == "ply") {
    if constexpr (D == 3) {
      return ply_to_cloud(read_ply(path));
    } else {
      throw ParseError("PLY input is 3D only: " + path);
    }
  }
  return read_xyz<D>(path);
}

}  // namespace s2df::io
