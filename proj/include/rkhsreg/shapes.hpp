// rkhsreg: procedural benchmark meshes and surface sampling.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rkhsreg/core.hpp"
#include "rkhsreg/point_cloud.hpp"

namespace rkhsreg {

/// Triangle soup; does not need to be watertight, only sampleable.
struct MeshShape {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> faces;

  double total_area() const {
    double a = 0.0;
    for (const auto& f : faces) {
      const Vec3 e1 = vertices[f[1]] - vertices[f[0]];
      const Vec3 e2 = vertices[f[2]] - vertices[f[0]];
      a += 0.5 * e1.cross(e2).norm();
    }
    return a;
  }

  /// Drops zero-area faces; returns how many were removed.
  std::size_t remove_degenerate_faces(double min_area = 1e-14) {
    std::vector<std::array<int, 3>> kept;
    kept.reserve(faces.size());
    for (const auto& f : faces) {
      const Vec3 e1 = vertices[f[1]] - vertices[f[0]];
      const Vec3 e2 = vertices[f[2]] - vertices[f[0]];
      if (0.5 * e1.cross(e2).norm() > min_area) kept.push_back(f);
    }
    const std::size_t removed = faces.size() - kept.size();
    faces = std::move(kept);
    return removed;
  }
};

/**
 * Area-weighted uniform surface sampling: triangle by cumulative area, then
 * a uniform barycentric point. Deterministic given the rng state.
 */
inline PointCloud sample_mesh_surface(const MeshShape& mesh, std::size_t n, Rng& rng) {
  if (mesh.faces.empty()) throw EmptyMeshError();
  std::vector<double> cum(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& face = mesh.faces[f];
    const Vec3 e1 = mesh.vertices[face[1]] - mesh.vertices[face[0]];
    const Vec3 e2 = mesh.vertices[face[2]] - mesh.vertices[face[0]];
    total += 0.5 * e1.cross(e2).norm();
    cum[f] = total;
  }
  if (total <= 0.0) throw EmptyMeshError();

  PointCloud out;
  out.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform() * total;
    const auto it = std::lower_bound(cum.begin(), cum.end(), u);
    const auto& face = mesh.faces[it == cum.end() ? mesh.faces.size() - 1 : it - cum.begin()];
    double b1 = rng.uniform(), b2 = rng.uniform();
    if (b1 + b2 > 1.0) {
      b1 = 1.0 - b1;
      b2 = 1.0 - b2;
    }
    const Vec3& a = mesh.vertices[face[0]];
    out.points.push_back(a + b1 * (mesh.vertices[face[1]] - a) + b2 * (mesh.vertices[face[2]] - a));
  }
  return out;
}

namespace detail {

inline void push_quad(MeshShape& m, int a, int b, int c, int d) {
  m.faces.push_back({a, b, c});
  m.faces.push_back({a, c, d});
}

}  // namespace detail

/// Axis-aligned box with unequal sides so no 90-degree rotation maps it to itself.
inline MeshShape make_box(double sx = 1.0, double sy = 0.62, double sz = 0.38) {
  MeshShape m;
  for (int i = 0; i < 8; ++i)
    m.vertices.push_back({(i & 1 ? sx : -sx) * 0.5, (i & 2 ? sy : -sy) * 0.5,
                          (i & 4 ? sz : -sz) * 0.5});
  detail::push_quad(m, 0, 2, 3, 1);  // bottom
  detail::push_quad(m, 4, 5, 7, 6);  // top
  detail::push_quad(m, 0, 1, 5, 4);
  detail::push_quad(m, 2, 6, 7, 3);
  detail::push_quad(m, 0, 4, 6, 2);
  detail::push_quad(m, 1, 3, 7, 5);
  return m;
}

/// Closed cylinder with a half-torus handle on one side.
inline MeshShape make_mug(double radius = 0.4, double height = 1.0, int seg = 32, int rings = 8) {
  MeshShape m;
  // body
  for (int r = 0; r <= rings; ++r) {
    const double zc = height * (static_cast<double>(r) / rings - 0.5);
    for (int s = 0; s < seg; ++s) {
      const double a = 2.0 * EIGEN_PI * s / seg;
      m.vertices.push_back({radius * std::cos(a), radius * std::sin(a), zc});
    }
  }
  for (int r = 0; r < rings; ++r)
    for (int s = 0; s < seg; ++s) {
      const int s1 = (s + 1) % seg;
      detail::push_quad(m, r * seg + s, r * seg + s1, (r + 1) * seg + s1, (r + 1) * seg + s);
    }
  // caps
  const int base_center = static_cast<int>(m.vertices.size());
  m.vertices.push_back({0.0, 0.0, -height * 0.5});
  m.vertices.push_back({0.0, 0.0, height * 0.5});
  for (int s = 0; s < seg; ++s) {
    const int s1 = (s + 1) % seg;
    m.faces.push_back({base_center, s1, s});
    m.faces.push_back({base_center + 1, rings * seg + s, rings * seg + s1});
  }
  // handle: half torus in the x-z plane attached at +x
  const int hseg = 12, htube = 8;
  const double ring_r = 0.32, tube_r = 0.08;
  const int handle_base = static_cast<int>(m.vertices.size());
  for (int i = 0; i <= hseg; ++i) {
    const double a = EIGEN_PI * (static_cast<double>(i) / hseg - 0.5);  // -90..90 degrees
    const Vec3 center(radius + ring_r * std::cos(a), 0.0, ring_r * std::sin(a));
    const Vec3 ta(-std::sin(a), 0.0, std::cos(a));  // curve tangent
    const Vec3 n1(std::cos(a), 0.0, std::sin(a));   // radial
    const Vec3 n2 = ta.cross(n1);
    for (int t = 0; t < htube; ++t) {
      const double b = 2.0 * EIGEN_PI * t / htube;
      m.vertices.push_back(center + tube_r * (std::cos(b) * n1 + std::sin(b) * n2));
    }
  }
  for (int i = 0; i < hseg; ++i)
    for (int t = 0; t < htube; ++t) {
      const int t1 = (t + 1) % htube;
      detail::push_quad(m, handle_base + i * htube + t, handle_base + i * htube + t1,
                        handle_base + (i + 1) * htube + t1, handle_base + (i + 1) * htube + t);
    }
  return m;
}

/// Two overlapping slabs forming an L profile.
inline MeshShape make_l_bracket() {
  const MeshShape a = make_box(1.0, 0.3, 0.25);
  MeshShape b = make_box(0.3, 0.8, 0.25);
  MeshShape m = a;
  const int off = static_cast<int>(m.vertices.size());
  const Vec3 shift(-0.35, 0.4, 0.0);
  for (const Vec3& v : b.vertices) m.vertices.push_back(v + shift);
  for (const auto& f : b.faces) m.faces.push_back({f[0] + off, f[1] + off, f[2] + off});
  return m;
}

/**
 * Tube around a (2,3) torus knot with a modulated tube radius; the
 * modulation period matches the full curve, killing the knot's rotational
 * symmetry.
 */
inline MeshShape make_torus_knot(int p = 2, int q = 3, int seg = 160, int tube_seg = 10,
                                 double scale = 0.22, double tube_r = 0.065) {
  MeshShape m;
  auto curve = [&](double t) {
    const double r = 2.0 + std::cos(q * t);
    return Vec3(scale * r * std::cos(p * t), scale * r * std::sin(p * t),
                scale * std::sin(q * t));
  };
  // rotation-minimizing-ish frames by projecting the previous normal
  Vec3 prev_n(0.0, 0.0, 1.0);
  for (int i = 0; i <= seg; ++i) {
    const double t = 2.0 * EIGEN_PI * i / seg;
    const double dt = 1e-4;
    const Vec3 c = curve(t);
    Vec3 ta = (curve(t + dt) - curve(t - dt)).normalized();
    Vec3 n = (prev_n - prev_n.dot(ta) * ta).normalized();
    prev_n = n;
    const Vec3 bn = ta.cross(n);
    const double r = tube_r * (1.0 + 0.35 * std::sin(t) + 0.15 * std::cos(2.0 * t));
    for (int s = 0; s < tube_seg; ++s) {
      const double b = 2.0 * EIGEN_PI * s / tube_seg;
      m.vertices.push_back(c + r * (std::cos(b) * n + std::sin(b) * bn));
    }
  }
  for (int i = 0; i < seg; ++i)
    for (int s = 0; s < tube_seg; ++s) {
      const int s1 = (s + 1) % tube_seg;
      detail::push_quad(m, i * tube_seg + s, i * tube_seg + s1, (i + 1) * tube_seg + s1,
                        (i + 1) * tube_seg + s);
    }
  return m;
}

/**
 * Convex hull of anisotropically scaled random sphere points, by incremental
 * insertion. Deterministic per seed; generic position is enforced by the
 * random draw itself. The anisotropy and the wide radius jitter keep the
 * hulls far from any surface of revolution: near-round hulls leave rotations
 * about their long axis almost free, which registration cannot pin down.
 */
inline MeshShape make_convex_polyhedron(std::uint64_t seed, int n_points = 40) {
  Rng rng(mix_seed(seed, 0xc0117e11ull));
  std::vector<Vec3> pts;
  const Vec3 aniso(1.0, 0.72, 0.5);
  for (int i = 0; i < n_points; ++i) {
    Vec3 v = rng.unit_vector() * (0.42 + 0.28 * rng.uniform());
    pts.push_back(v.cwiseProduct(aniso));
  }

  struct Face {
    int a, b, c;
    Vec3 n;
    double d;
    bool alive = true;
  };
  auto face_from = [&](int a, int b, int c) {
    Face f{a, b, c, Vec3::Zero(), 0.0, true};
    f.n = (pts[b] - pts[a]).cross(pts[c] - pts[a]);
    f.d = f.n.dot(pts[a]);
    return f;
  };

  // initial tetrahedron from the first four non-degenerate points
  int i0 = 0, i1 = -1, i2 = -1, i3 = -1;
  for (std::size_t i = 1; i < pts.size() && i3 < 0; ++i) {
    if (i1 < 0) {
      if ((pts[i] - pts[i0]).norm() > 1e-9) i1 = static_cast<int>(i);
    } else if (i2 < 0) {
      if ((pts[i1] - pts[i0]).cross(pts[i] - pts[i0]).norm() > 1e-9) i2 = static_cast<int>(i);
    } else {
      const Vec3 n = (pts[i1] - pts[i0]).cross(pts[i2] - pts[i0]);
      if (std::abs(n.dot(pts[i] - pts[i0])) > 1e-9) i3 = static_cast<int>(i);
    }
  }
  if (i3 < 0) throw Error("degenerate point set for convex polyhedron");

  std::vector<Face> faces;
  {
    const Vec3 n = (pts[i1] - pts[i0]).cross(pts[i2] - pts[i0]);
    if (n.dot(pts[i3] - pts[i0]) > 0.0) std::swap(i1, i2);
    faces.push_back(face_from(i0, i1, i2));
    faces.push_back(face_from(i0, i3, i1));
    faces.push_back(face_from(i1, i3, i2));
    faces.push_back(face_from(i0, i2, i3));
  }

  for (std::size_t pi = 0; pi < pts.size(); ++pi) {
    const int p = static_cast<int>(pi);
    if (p == i0 || p == i1 || p == i2 || p == i3) continue;
    // faces visible from p
    std::vector<int> visible;
    for (std::size_t f = 0; f < faces.size(); ++f)
      if (faces[f].alive && faces[f].n.dot(pts[p]) - faces[f].d > 1e-12) visible.push_back(static_cast<int>(f));
    if (visible.empty()) continue;
    // horizon edges: edges of visible faces shared with a hidden face
    std::vector<std::pair<int, int>> horizon;
    auto edge_hidden = [&](int a, int b) {
      for (std::size_t f = 0; f < faces.size(); ++f) {
        const Face& fc = faces[f];
        if (!fc.alive) continue;
        const bool vis = fc.n.dot(pts[p]) - fc.d > 1e-12;
        if (vis) continue;
        const int fa[3] = {fc.a, fc.b, fc.c};
        for (int e = 0; e < 3; ++e)
          if (fa[e] == b && fa[(e + 1) % 3] == a) return true;
      }
      return false;
    };
    for (int f : visible) {
      const int fa[3] = {faces[f].a, faces[f].b, faces[f].c};
      for (int e = 0; e < 3; ++e) {
        const int a = fa[e], b = fa[(e + 1) % 3];
        if (edge_hidden(a, b)) horizon.emplace_back(a, b);
      }
    }
    for (int f : visible) faces[f].alive = false;
    for (const auto& [a, b] : horizon) faces.push_back(face_from(a, b, p));
  }

  MeshShape m;
  m.vertices = pts;
  for (const Face& f : faces)
    if (f.alive) m.faces.push_back({f.a, f.b, f.c});
  m.remove_degenerate_faces();
  return m;
}

struct NamedMesh {
  std::string name;
  MeshShape mesh;
};

/// Fixed catalogue used by the benchmark harness.
inline std::vector<NamedMesh> standard_shape_set(std::size_t count = 10) {
  std::vector<NamedMesh> out;
  out.push_back({"box", make_box()});
  out.push_back({"mug", make_mug()});
  out.push_back({"bracket", make_l_bracket()});
  out.push_back({"knot", make_torus_knot()});
  for (std::uint64_t s = 0; out.size() < count; ++s)
    out.push_back({"poly" + std::to_string(s), make_convex_polyhedron(s + 1)});
  return out;
}

inline MeshShape make_shape_by_name(const std::string& name) {
  if (name == "box") return make_box();
  if (name == "mug") return make_mug();
  if (name == "bracket") return make_l_bracket();
  if (name == "knot") return make_torus_knot();
  if (name.rfind("poly", 0) == 0) {
    const std::string num = name.substr(4);
    std::uint64_t s = 0;
    for (char c : num) {
      if (c < '0' || c > '9') throw Error("unknown shape: " + name);
      s = s * 10 + static_cast<std::uint64_t>(c - '0');
    }
    return make_convex_polyhedron(s + 1);
  }
  throw Error("unknown shape: " + name);
}

}  // namespace rkhsreg
