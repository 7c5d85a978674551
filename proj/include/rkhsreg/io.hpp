// rkhsreg: file formats for clouds, meshes, poses and encoder weights.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "rkhsreg/core.hpp"
#include "rkhsreg/features.hpp"
#include "rkhsreg/point_cloud.hpp"
#include "rkhsreg/se3.hpp"
#include "rkhsreg/shapes.hpp"

namespace rkhsreg {

namespace detail {

struct LineReader {
  std::istream& in;
  int line_no = 0;
  std::string buf;

  /// Next non-empty, non-comment line; returns false at EOF.
  bool next(std::string& out) {
    while (std::getline(in, buf)) {
      ++line_no;
      const std::size_t start = buf.find_first_not_of(" \t\r\n");
      if (start == std::string::npos) continue;
      if (buf[start] == '#') continue;
      out = buf.substr(start);
      return true;
    }
    return false;
  }
};

inline std::string lower_ext(const std::string& path) {
  const std::size_t dot = path.find_last_of('.');
  if (dot == std::string::npos) return "";
  std::string e = path.substr(dot + 1);
  for (char& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e;
}

}  // namespace detail

/**
 * OFF mesh reader. Accepts the counts on the header line or the next line;
 * faces with more than three vertices are fan-triangulated; zero-area
 * triangles are dropped after load.
 */
inline MeshShape load_off(std::istream& in) {
  detail::LineReader rd{in};
  std::string line;
  if (!rd.next(line)) throw ParseError("empty OFF stream", rd.line_no);
  std::size_t nv = 0, nf = 0, ne = 0;
  {
    std::istringstream hs(line);
    std::string magic;
    hs >> magic;
    if (magic != "OFF") throw ParseError("missing OFF header", rd.line_no);
    if (!(hs >> nv >> nf >> ne)) {
      if (!rd.next(line)) throw ParseError("missing OFF element counts", rd.line_no);
      std::istringstream cs(line);
      if (!(cs >> nv >> nf >> ne)) throw ParseError("bad OFF element counts", rd.line_no);
    }
  }
  MeshShape mesh;
  mesh.vertices.reserve(nv);
  for (std::size_t i = 0; i < nv; ++i) {
    if (!rd.next(line)) throw ParseError("unexpected end of OFF vertices", rd.line_no);
    std::istringstream vs(line);
    Vec3 p;
    if (!(vs >> p.x() >> p.y() >> p.z())) throw ParseError("bad OFF vertex", rd.line_no);
    mesh.vertices.push_back(p);
  }
  for (std::size_t f = 0; f < nf; ++f) {
    if (!rd.next(line)) throw ParseError("unexpected end of OFF faces", rd.line_no);
    std::istringstream fs(line);
    std::size_t k = 0;
    if (!(fs >> k) || k < 3) throw ParseError("bad OFF face arity", rd.line_no);
    std::vector<int> idx(k);
    for (std::size_t i = 0; i < k; ++i) {
      if (!(fs >> idx[i]) || idx[i] < 0 || idx[i] >= static_cast<int>(nv))
        throw ParseError("OFF face index out of range", rd.line_no);
    }
    for (std::size_t i = 2; i < k; ++i) mesh.faces.push_back({idx[0], idx[i - 1], idx[i]});
  }
  mesh.remove_degenerate_faces();
  return mesh;
}

/**
 * ASCII PLY point reader: parses the vertex element's x, y, z properties and
 * skips everything else, including faces.
 */
inline PointCloud load_ply(std::istream& in) {
  detail::LineReader rd{in};
  std::string line;
  if (!rd.next(line) || line.rfind("ply", 0) != 0) throw ParseError("missing ply magic", rd.line_no);

  std::size_t n_vertices = 0;
  int xi = -1, yi = -1, zi = -1, prop_count = 0;
  bool in_vertex = false, saw_format = false;
  std::vector<std::pair<std::string, std::size_t>> other_elements;  // after vertex
  bool vertex_seen = false;

  while (true) {
    if (!rd.next(line)) throw ParseError("unterminated PLY header", rd.line_no);
    std::istringstream hs(line);
    std::string tok;
    hs >> tok;
    if (tok == "end_header") break;
    if (tok == "comment") continue;
    if (tok == "format") {
      std::string kind;
      hs >> kind;
      if (kind != "ascii") throw UnsupportedFormatError("only ascii PLY is supported");
      saw_format = true;
    } else if (tok == "element") {
      std::string name;
      std::size_t count = 0;
      hs >> name >> count;
      if (name == "vertex") {
        n_vertices = count;
        in_vertex = true;
        vertex_seen = true;
      } else {
        in_vertex = false;
        if (vertex_seen) other_elements.emplace_back(name, count);
      }
    } else if (tok == "property" && in_vertex) {
      std::string type, name;
      hs >> type >> name;
      if (type == "list") throw ParseError("list property on vertex element", rd.line_no);
      if (name == "x") xi = prop_count;
      if (name == "y") yi = prop_count;
      if (name == "z") zi = prop_count;
      ++prop_count;
    }
  }
  if (!saw_format) throw ParseError("PLY header lacks a format line", rd.line_no);
  if (xi < 0 || yi < 0 || zi < 0) throw ParseError("PLY vertex element lacks x/y/z", rd.line_no);

  PointCloud out;
  out.points.reserve(n_vertices);
  std::vector<double> vals(prop_count);
  for (std::size_t v = 0; v < n_vertices; ++v) {
    if (!rd.next(line)) throw ParseError("unexpected end of PLY vertices", rd.line_no);
    std::istringstream vs(line);
    for (int p = 0; p < prop_count; ++p)
      if (!(vs >> vals[p])) throw ParseError("bad PLY vertex row", rd.line_no);
    out.points.push_back({vals[xi], vals[yi], vals[zi]});
  }
  return out;
}

/// Whitespace-separated x y z triples, one point per line.
inline PointCloud load_xyz(std::istream& in) {
  detail::LineReader rd{in};
  std::string line;
  PointCloud out;
  while (rd.next(line)) {
    std::istringstream vs(line);
    Vec3 p;
    if (!(vs >> p.x() >> p.y() >> p.z())) throw ParseError("bad xyz row", rd.line_no);
    out.points.push_back(p);
  }
  return out;
}

using LoadedShape = std::variant<PointCloud, MeshShape>;

/**
 * Loads by declared format ("off", "ply", "xyz") or by file extension when
 * format is empty. OFF yields a mesh, the others a point cloud.
 */
inline LoadedShape load_shape(const std::string& path, std::string format = "") {
  if (format.empty()) format = detail::lower_ext(path);
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  if (format == "off") return load_off(in);
  if (format == "ply") return load_ply(in);
  if (format == "xyz") return load_xyz(in);
  throw UnsupportedFormatError("unsupported shape format: " + format);
}

/// A cloud regardless of source kind; meshes are surface-sampled.
inline PointCloud load_as_cloud(const std::string& path, std::size_t mesh_samples = 4096,
                                std::uint64_t seed = 0, std::string format = "") {
  LoadedShape shape = load_shape(path, std::move(format));
  if (std::holds_alternative<PointCloud>(shape)) return std::get<PointCloud>(std::move(shape));
  Rng rng(mix_seed(seed, 0x5a3c));
  return sample_mesh_surface(std::get<MeshShape>(shape), mesh_samples, rng);
}

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// ASCII PLY writer; %.17g coordinates reload bit-identically.
inline void save_ply(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
      << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
  for (const Vec3& p : cloud.points)
    out << detail::format_double(p.x()) << ' ' << detail::format_double(p.y()) << ' '
        << detail::format_double(p.z()) << '\n';
}

inline void save_xyz(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  for (const Vec3& p : cloud.points)
    out << detail::format_double(p.x()) << ' ' << detail::format_double(p.y()) << ' '
        << detail::format_double(p.z()) << '\n';
}

inline void save_off(const MeshShape& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "OFF\n" << mesh.vertices.size() << ' ' << mesh.faces.size() << " 0\n";
  for (const Vec3& v : mesh.vertices)
    out << detail::format_double(v.x()) << ' ' << detail::format_double(v.y()) << ' '
        << detail::format_double(v.z()) << '\n';
  for (const auto& f : mesh.faces) out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
}

/// Pose as JSON: row-major 3x3 rotation plus translation.
inline nlohmann::json pose_to_json(const Pose& pose) {
  nlohmann::json j;
  std::vector<double> r;
  r.reserve(9);
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) r.push_back(pose.rotation()(row, col));
  j["rotation"] = r;
  j["translation"] = {pose.translation().x(), pose.translation().y(), pose.translation().z()};
  return j;
}

inline Pose pose_from_json(const nlohmann::json& j) {
  const auto r = j.at("rotation").get<std::vector<double>>();
  const auto t = j.at("translation").get<std::vector<double>>();
  if (r.size() != 9 || t.size() != 3) throw Error("pose JSON has wrong arity");
  Mat3 rot;
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) rot(row, col) = r[row * 3 + col];
  return {rot, Vec3(t[0], t[1], t[2])};
}

namespace detail {
inline constexpr char kWeightsMagic[8] = {'R', 'K', 'H', 'S', 'W', '0', '0', '1'};
}

/// Binary encoder-weight container; round-trips bit-exactly.
inline void save_weights(const EncoderWeights& w, const std::string& path) {
  w.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out.write(detail::kWeightsMagic, 8);
  auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  put_u32(static_cast<std::uint32_t>(w.neighbor_count));
  put_u32(static_cast<std::uint32_t>(w.layers.size()));
  for (const auto& l : w.layers) {
    put_u32(static_cast<std::uint32_t>(l.c_in));
    put_u32(static_cast<std::uint32_t>(l.c_out));
    auto put_vec = [&](const std::vector<double>& v) {
      out.write(reinterpret_cast<const char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
    };
    put_vec(l.w_self);
    put_vec(l.w_neigh);
    put_vec(l.directions);
  }
  if (!out) throw Error("failed writing " + path);
}

inline EncoderWeights load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, detail::kWeightsMagic, 8) != 0)
    throw Error("not an encoder weight file: " + path);
  auto get_u32 = [&] {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    return v;
  };
  EncoderWeights w;
  w.neighbor_count = static_cast<int>(get_u32());
  const std::uint32_t n_layers = get_u32();
  if (!in || n_layers == 0 || n_layers > 64) throw Error("corrupt weight file: " + path);
  for (std::uint32_t li = 0; li < n_layers; ++li) {
    EncoderLayer l;
    l.c_in = static_cast<int>(get_u32());
    l.c_out = static_cast<int>(get_u32());
    if (!in || l.c_in <= 0 || l.c_out <= 0 || l.c_out > EncoderLayer::kMaxWidth)
      throw Error("corrupt weight file: " + path);
    auto get_vec = [&](std::vector<double>& v, std::size_t n) {
      v.resize(n);
      in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    };
    const std::size_t wn = static_cast<std::size_t>(l.c_in) * l.c_out;
    get_vec(l.w_self, wn);
    get_vec(l.w_neigh, wn);
    get_vec(l.directions, static_cast<std::size_t>(l.c_out) * l.c_out);
    w.layers.push_back(std::move(l));
  }
  if (!in) throw Error("corrupt weight file: " + path);
  w.validate();
  return w;
}

}  // namespace rkhsreg
