#pragma once

// Structured triangulations of rectangles (with optional rectangular cutouts)
// into halved squares, plus uniform red refinement and boundary tagging.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "npf/errors.hpp"

namespace npf {

struct Rect {
  double x0, x1, y0, y1;

  bool contains(const Eigen::Vector2d& p, double tol = 0.0) const {
    return p.x() >= x0 - tol && p.x() <= x1 + tol && p.y() >= y0 - tol && p.y() <= y1 + tol;
  }
  double area() const { return (x1 - x0) * (y1 - y0); }
};

/// Closed straight boundary piece; vertices on it receive the owning tag.
struct Segment {
  Eigen::Vector2d a, b;

  double distance(const Eigen::Vector2d& p) const {
    const Eigen::Vector2d d = b - a;
    const double len2 = d.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(d) / len2, 0.0, 1.0) : 0.0;
    return (p - (a + t * d)).norm();
  }
};

enum class Side { left, right, bottom, top };

struct DomainSpec {
  Rect box{-1.0, 1.0, -1.0, 1.0};
  std::vector<Rect> cutouts;
  int level = 0;  // side length 2^-level
  std::vector<Segment> gamma_y;
  std::vector<Segment> gamma_n;
  std::optional<Eigen::Vector2d> pinned;

  double h_hat() const { return std::ldexp(1.0, -level); }

  Segment side(Side s) const {
    switch (s) {
      case Side::left: return {{box.x0, box.y0}, {box.x0, box.y1}};
      case Side::right: return {{box.x1, box.y0}, {box.x1, box.y1}};
      case Side::bottom: return {{box.x0, box.y0}, {box.x1, box.y0}};
      case Side::top: return {{box.x0, box.y1}, {box.x1, box.y1}};
    }
    return {};
  }
};

namespace tag {
inline constexpr std::uint8_t boundary = 1;
inline constexpr std::uint8_t gamma_y = 2;
inline constexpr std::uint8_t gamma_n = 4;
inline constexpr std::uint8_t pinned = 8;
}  // namespace tag

struct Edge {
  int a, b;
  Eigen::Vector2d midpoint;
  bool boundary;
};

struct Triangulation {
  std::vector<Eigen::Vector2d> vertices;
  std::vector<std::array<int, 3>> triangles;  // counterclockwise
  std::vector<Edge> edges;
  std::vector<std::array<int, 3>> triangle_edges;  // local edge k is opposite local vertex k
  std::vector<std::uint8_t> vertex_tags;
  double h_hat = 1.0;
  int level = 0;

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
  int num_edges() const { return static_cast<int>(edges.size()); }
  bool has_tag(int v, std::uint8_t t) const { return (vertex_tags[v] & t) != 0; }

  double area(int t) const {
    const auto& tri = triangles[t];
    const Eigen::Vector2d e1 = vertices[tri[1]] - vertices[tri[0]];
    const Eigen::Vector2d e2 = vertices[tri[2]] - vertices[tri[0]];
    return 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
  }
  double total_area() const {
    double s = 0.0;
    for (int t = 0; t < num_triangles(); ++t) s += area(t);
    return s;
  }
};

namespace detail {

inline bool on_grid(double v, double h) {
  const double q = v / h;
  return std::abs(q - std::round(q)) < 1e-9;
}

/// Builds edges, boundary flags and the boundary tag from vertices + triangles.
inline void build_topology(Triangulation& t) {
  std::map<std::pair<int, int>, int> index;
  std::vector<int> count;
  t.edges.clear();
  t.triangle_edges.assign(t.triangles.size(), {0, 0, 0});
  for (std::size_t ti = 0; ti < t.triangles.size(); ++ti) {
    const auto& tri = t.triangles[ti];
    for (int k = 0; k < 3; ++k) {
      const int a = tri[(k + 1) % 3], b = tri[(k + 2) % 3];
      const auto key = std::minmax(a, b);
      auto [it, inserted] = index.try_emplace({key.first, key.second}, static_cast<int>(t.edges.size()));
      if (inserted) {
        t.edges.push_back({key.first, key.second, 0.5 * (t.vertices[a] + t.vertices[b]), false});
        count.push_back(0);
      }
      ++count[it->second];
      t.triangle_edges[ti][k] = it->second;
    }
  }
  t.vertex_tags.resize(t.vertices.size(), 0);
  for (std::size_t e = 0; e < t.edges.size(); ++e) {
    t.edges[e].boundary = count[e] == 1;
    if (t.edges[e].boundary) {
      t.vertex_tags[t.edges[e].a] |= tag::boundary;
      t.vertex_tags[t.edges[e].b] |= tag::boundary;
    }
  }
}

/// Renumbers vertices lexicographically by (y, x).
inline void sort_vertices(Triangulation& t) {
  std::vector<int> order(t.vertices.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
    const auto& p = t.vertices[i];
    const auto& q = t.vertices[j];
    if (p.y() != q.y()) return p.y() < q.y();
    return p.x() < q.x();
  });
  std::vector<int> inverse(order.size());
  std::vector<Eigen::Vector2d> verts(order.size());
  std::vector<std::uint8_t> tags(order.size(), 0);
  for (std::size_t i = 0; i < order.size(); ++i) {
    inverse[order[i]] = static_cast<int>(i);
    verts[i] = t.vertices[order[i]];
    if (!t.vertex_tags.empty()) tags[i] = t.vertex_tags[order[i]];
  }
  for (auto& tri : t.triangles)
    for (auto& v : tri) v = inverse[v];
  t.vertices = std::move(verts);
  t.vertex_tags = std::move(tags);
}

}  // namespace detail

/// Triangulates spec.box minus the cutouts into halved squares of side 2^-level,
/// each square split along its lower-left to upper-right diagonal.
inline Triangulation generate(const DomainSpec& spec) {
  const double h = spec.h_hat();
  const Rect& box = spec.box;
  if (!(box.x1 > box.x0 && box.y1 > box.y0)) throw BadSpec("mesh: empty bounding rectangle");
  if (!detail::on_grid(box.x1 - box.x0, h) || !detail::on_grid(box.y1 - box.y0, h))
    throw BadSpec("mesh: rectangle side lengths must be multiples of 2^-level");
  for (const auto& c : spec.cutouts) {
    if (!(c.x1 > c.x0 && c.y1 > c.y0)) throw BadSpec("mesh: degenerate cutout");
    if (c.x0 < box.x0 || c.x1 > box.x1 || c.y0 < box.y0 || c.y1 > box.y1)
      throw BadSpec("mesh: cutout outside the rectangle");
    for (double v : {c.x0 - box.x0, c.x1 - box.x0, c.y0 - box.y0, c.y1 - box.y0})
      if (!detail::on_grid(v, h)) throw BadSpec("mesh: cutout corners must lie on the grid");
  }
  const int nx = static_cast<int>(std::lround((box.x1 - box.x0) / h));
  const int ny = static_cast<int>(std::lround((box.y1 - box.y0) / h));

  auto grid_index = [nx](int i, int j) { return j * (nx + 1) + i; };
  std::vector<int> used((nx + 1) * (ny + 1), -1);
  std::vector<std::array<int, 3>> tris;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const Eigen::Vector2d centre(box.x0 + (i + 0.5) * h, box.y0 + (j + 0.5) * h);
      const bool removed =
          std::any_of(spec.cutouts.begin(), spec.cutouts.end(), [&](const Rect& c) { return c.contains(centre); });
      if (removed) continue;
      const int v00 = grid_index(i, j), v10 = grid_index(i + 1, j);
      const int v11 = grid_index(i + 1, j + 1), v01 = grid_index(i, j + 1);
      tris.push_back({v00, v10, v11});
      tris.push_back({v00, v11, v01});
      for (int v : {v00, v10, v11, v01}) used[v] = 0;
    }
  if (tris.empty()) throw BadSpec("mesh: no triangles remain");

  Triangulation t;
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) {
      const int g = grid_index(i, j);
      if (used[g] < 0) continue;
      used[g] = static_cast<int>(t.vertices.size());
      t.vertices.emplace_back(box.x0 + i * h, box.y0 + j * h);
    }
  for (auto& tri : tris)
    for (auto& v : tri) v = used[v];
  t.triangles = std::move(tris);
  t.h_hat = h;
  t.level = spec.level;
  detail::build_topology(t);

  constexpr double tol = 1e-12;
  for (int v = 0; v < t.num_vertices(); ++v) {
    if (!t.has_tag(v, tag::boundary)) continue;
    const auto& p = t.vertices[v];
    for (const auto& s : spec.gamma_y)
      if (s.distance(p) <= tol) t.vertex_tags[v] |= tag::gamma_y;
    for (const auto& s : spec.gamma_n)
      if (s.distance(p) <= tol) t.vertex_tags[v] |= tag::gamma_n;
  }
  if (spec.pinned) {
    int best = 0;
    for (int v = 1; v < t.num_vertices(); ++v)
      if ((t.vertices[v] - *spec.pinned).norm() < (t.vertices[best] - *spec.pinned).norm()) best = v;
    t.vertex_tags[best] |= tag::pinned;
  }
  return t;
}

/// Splits every triangle into four through its edge midpoints. Midpoints of
/// boundary edges inherit the Dirichlet tags shared by both endpoints.
inline Triangulation red_refine(const Triangulation& t) {
  Triangulation r;
  const int nv = t.num_vertices();
  r.vertices = t.vertices;
  r.vertex_tags = t.vertex_tags;
  for (const auto& e : t.edges) {
    r.vertices.push_back(e.midpoint);
    std::uint8_t tg = 0;
    if (e.boundary) tg = tag::boundary | (t.vertex_tags[e.a] & t.vertex_tags[e.b] & (tag::gamma_y | tag::gamma_n));
    r.vertex_tags.push_back(tg);
  }
  r.triangles.reserve(4 * t.triangles.size());
  for (int ti = 0; ti < t.num_triangles(); ++ti) {
    const auto& tri = t.triangles[ti];
    const auto& te = t.triangle_edges[ti];
    const int a = tri[0], b = tri[1], c = tri[2];
    const int m0 = nv + te[0], m1 = nv + te[1], m2 = nv + te[2];
    r.triangles.push_back({a, m2, m1});
    r.triangles.push_back({m2, b, m0});
    r.triangles.push_back({m1, m0, c});
    r.triangles.push_back({m0, m1, m2});
  }
  detail::sort_vertices(r);
  detail::build_topology(r);
  r.h_hat = 0.5 * t.h_hat;
  r.level = t.level + 1;
  return r;
}

struct MeshStats {
  int vertices = 0;
  int edges = 0;
  int triangles = 0;
  int gamma_y_vertices = 0;
  int gamma_n_vertices = 0;
  int deformation_dofs = 0;
  int director_dofs = 0;

  bool operator==(const MeshStats&) const = default;
};

inline MeshStats stats(const Triangulation& t) {
  MeshStats s;
  s.vertices = t.num_vertices();
  s.edges = t.num_edges();
  s.triangles = t.num_triangles();
  for (int v = 0; v < s.vertices; ++v) {
    s.gamma_y_vertices += t.has_tag(v, tag::gamma_y) ? 1 : 0;
    s.gamma_n_vertices += t.has_tag(v, tag::gamma_n) ? 1 : 0;
  }
  s.deformation_dofs = 9 * s.vertices;
  s.director_dofs = 3 * s.vertices;
  return s;
}

}  // namespace npf
