#pragma once

// Finite element spaces on a Triangulation:
//  * P1 vector fields (director), 3 dofs per vertex;
//  * DKT vector fields (deformation), nodal value + nodal gradient, 9 dofs per vertex;
//  * the discrete gradient Theta_h mapping DKT data to continuous P2 gradient fields.
//
// Deformation dof layout: 9 v + 3 j + c, with j = 0 value, j = 1 d/dx1, j = 2 d/dx2
// and c the Cartesian component. Element-local scalar dofs are ordered 3 a + j.

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "npf/errors.hpp"
#include "npf/mesh.hpp"

namespace npf {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Matrix32 = Eigen::Matrix<double, 3, 2>;

inline int dkt_dof(int vertex, int slot, int comp) { return 9 * vertex + 3 * slot + comp; }
inline int p1_dof(int vertex, int comp) { return 3 * vertex + comp; }

struct P1VectorField {
  Eigen::VectorXd data;

  P1VectorField() = default;
  explicit P1VectorField(int num_vertices) : data(Eigen::VectorXd::Zero(3 * num_vertices)) {}

  int num_vertices() const { return static_cast<int>(data.size() / 3); }
  Eigen::Vector3d at(int v) const { return data.segment<3>(3 * v); }
  void set(int v, const Eigen::Vector3d& x) { data.segment<3>(3 * v) = x; }
};

struct DKTVectorField {
  Eigen::VectorXd data;

  DKTVectorField() = default;
  explicit DKTVectorField(int num_vertices) : data(Eigen::VectorXd::Zero(9 * num_vertices)) {}

  int num_vertices() const { return static_cast<int>(data.size() / 9); }
  Eigen::Vector3d value(int v) const { return data.segment<3>(9 * v); }
  Matrix32 gradient(int v) const {
    Matrix32 g;
    g.col(0) = data.segment<3>(9 * v + 3);
    g.col(1) = data.segment<3>(9 * v + 6);
    return g;
  }
  void set_value(int v, const Eigen::Vector3d& x) { data.segment<3>(9 * v) = x; }
  void set_gradient(int v, const Matrix32& g) {
    data.segment<3>(9 * v + 3) = g.col(0);
    data.segment<3>(9 * v + 6) = g.col(1);
  }
  /// Scalar element dofs (value, d1, d2 per local vertex) of one component.
  Eigen::Matrix<double, 9, 1> local(const std::array<int, 3>& tri, int comp) const {
    Eigen::Matrix<double, 9, 1> u;
    for (int a = 0; a < 3; ++a)
      for (int j = 0; j < 3; ++j) u(3 * a + j) = data(dkt_dof(tri[a], j, comp));
    return u;
  }
};

/// Continuous piecewise quadratic 3x2 field: one value per vertex, then one per edge midpoint.
struct P2VectorField {
  std::vector<Matrix32> nodes;
};

/// Precomputed per-triangle matrices. All are constant on the element.
struct ElementKernel {
  double area = 0.0;
  std::array<Eigen::Vector2d, 3> grad_lambda;
  /// Theta_h: 9 scalar DKT dofs -> 12 P2 values (row 2 m + i, node m, gradient component i).
  Eigen::Matrix<double, 12, 9> theta;
  /// (grad phi_m, grad phi_m') over the triangle for the six P2 basis functions.
  Eigen::Matrix<double, 6, 6> p2_stiffness;
  /// Gradient of Theta_h at local vertex a, row 2 i + j holding d_j (Theta_h)_i.
  std::array<Eigen::Matrix<double, 4, 9>, 3> hessian;
  /// theta^T (I_2 (x) p2_stiffness) theta.
  Eigen::Matrix<double, 9, 9> h2_stiffness;
  Eigen::Matrix3d p1_stiffness;
  Eigen::Matrix3d p1_mass;
};

namespace detail {

/// Gradients of the P2 basis (vertices 0..2, then midpoint of edge k at 3 + k) at barycentric point l.
inline std::array<Eigen::Vector2d, 6> p2_gradients(const std::array<Eigen::Vector2d, 3>& gl, const Eigen::Vector3d& l) {
  std::array<Eigen::Vector2d, 6> g;
  for (int a = 0; a < 3; ++a) g[a] = (4.0 * l(a) - 1.0) * gl[a];
  for (int k = 0; k < 3; ++k) {
    const int a = (k + 1) % 3, b = (k + 2) % 3;
    g[3 + k] = 4.0 * (l(a) * gl[b] + l(b) * gl[a]);
  }
  return g;
}

/// Midpoint value of Theta_h on the edge from za to zb:
///   3/(2L) (u_b - u_a) tau + (nu nu^T / 2 - tau tau^T / 4)(grad u_a + grad u_b).
struct EdgeRule {
  Eigen::Vector2d value_weight;  // multiplies (u_b - u_a)
  Eigen::Matrix2d grad_weight;   // multiplies (grad u_a + grad u_b)
};

inline EdgeRule edge_rule(const Eigen::Vector2d& za, const Eigen::Vector2d& zb) {
  const Eigen::Vector2d e = zb - za;
  const double len = e.norm();
  const Eigen::Vector2d tau = e / len;
  const Eigen::Vector2d nu(-tau.y(), tau.x());
  return {1.5 / len * tau, 0.5 * nu * nu.transpose() - 0.25 * tau * tau.transpose()};
}

inline ElementKernel make_kernel(const std::array<Eigen::Vector2d, 3>& z) {
  ElementKernel k;
  const Eigen::Vector2d e1 = z[1] - z[0], e2 = z[2] - z[0];
  k.area = 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
  if (!(k.area > 0.0)) throw ShapeMismatch("element with non-positive area");
  for (int a = 0; a < 3; ++a) {
    const Eigen::Vector2d d = z[(a + 2) % 3] - z[(a + 1) % 3];
    k.grad_lambda[a] = Eigen::Vector2d(-d.y(), d.x()) / (2.0 * k.area);
  }

  k.theta.setZero();
  for (int a = 0; a < 3; ++a)
    for (int i = 0; i < 2; ++i) k.theta(2 * a + i, 3 * a + 1 + i) = 1.0;
  for (int e = 0; e < 3; ++e) {
    const int a = (e + 1) % 3, b = (e + 2) % 3;
    const EdgeRule rule = edge_rule(z[a], z[b]);
    for (int i = 0; i < 2; ++i) {
      const int row = 2 * (3 + e) + i;
      k.theta(row, 3 * b) += rule.value_weight(i);
      k.theta(row, 3 * a) -= rule.value_weight(i);
      for (int l = 0; l < 2; ++l) {
        k.theta(row, 3 * a + 1 + l) += rule.grad_weight(i, l);
        k.theta(row, 3 * b + 1 + l) += rule.grad_weight(i, l);
      }
    }
  }

  // Edge-midpoint rule, exact for the quadratic integrand grad phi . grad phi'.
  k.p2_stiffness.setZero();
  for (int q = 0; q < 3; ++q) {
    Eigen::Vector3d l = Eigen::Vector3d::Constant(0.5);
    l(q) = 0.0;
    const auto g = p2_gradients(k.grad_lambda, l);
    for (int m = 0; m < 6; ++m)
      for (int n = 0; n < 6; ++n) k.p2_stiffness(m, n) += k.area / 3.0 * g[m].dot(g[n]);
  }

  for (int a = 0; a < 3; ++a) {
    const auto g = p2_gradients(k.grad_lambda, Eigen::Vector3d::Unit(a));
    k.hessian[a].setZero();
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j)
        for (int m = 0; m < 6; ++m) k.hessian[a].row(2 * i + j) += g[m](j) * k.theta.row(2 * m + i);
  }

  Eigen::Matrix<double, 12, 12> s = Eigen::Matrix<double, 12, 12>::Zero();
  for (int m = 0; m < 6; ++m)
    for (int n = 0; n < 6; ++n)
      for (int i = 0; i < 2; ++i) s(2 * m + i, 2 * n + i) = k.p2_stiffness(m, n);
  k.h2_stiffness = k.theta.transpose() * s * k.theta;
  k.h2_stiffness = 0.5 * (k.h2_stiffness + k.h2_stiffness.transpose()).eval();

  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      k.p1_stiffness(a, b) = k.area * k.grad_lambda[a].dot(k.grad_lambda[b]);
      k.p1_mass(a, b) = k.area / 12.0 * (a == b ? 2.0 : 1.0);
    }
  return k;
}

}  // namespace detail

/// A triangulation together with its element kernels.
class FeSpace {
 public:
  explicit FeSpace(Triangulation mesh) : mesh_(std::move(mesh)) {
    kernels_.reserve(mesh_.triangles.size());
    for (const auto& tri : mesh_.triangles)
      kernels_.push_back(detail::make_kernel({mesh_.vertices[tri[0]], mesh_.vertices[tri[1]], mesh_.vertices[tri[2]]}));
  }

  const Triangulation& mesh() const { return mesh_; }
  const ElementKernel& kernel(int t) const { return kernels_[t]; }
  int num_vertices() const { return mesh_.num_vertices(); }
  int num_triangles() const { return mesh_.num_triangles(); }
  int deformation_dofs() const { return 9 * num_vertices(); }
  int director_dofs() const { return 3 * num_vertices(); }

 private:
  Triangulation mesh_;
  std::vector<ElementKernel> kernels_;
};

struct ValueAndGradient {
  Eigen::Vector3d value;
  Matrix32 gradient;
};

/// Samples f and its gradient at the vertices.
template <class F>
DKTVectorField dkt_interpolate(F&& f, const Triangulation& t) {
  DKTVectorField y(t.num_vertices());
  for (int v = 0; v < t.num_vertices(); ++v) {
    const ValueAndGradient s = f(t.vertices[v]);
    y.set_value(v, s.value);
    y.set_gradient(v, s.gradient);
  }
  return y;
}

template <class F>
P1VectorField p1_interpolate(F&& f, const Triangulation& t) {
  P1VectorField n(t.num_vertices());
  for (int v = 0; v < t.num_vertices(); ++v) n.set(v, f(t.vertices[v]));
  return n;
}

/// Theta_h y: nodal gradients at vertices; at edge midpoints the tangential part
/// comes from the Hermite cubic edge trace and the normal part is the endpoint average.
inline P2VectorField discrete_gradient(const DKTVectorField& y, const Triangulation& t) {
  if (y.num_vertices() != t.num_vertices()) throw ShapeMismatch("discrete_gradient: field/mesh size mismatch");
  P2VectorField out;
  out.nodes.reserve(t.vertices.size() + t.edges.size());
  for (int v = 0; v < t.num_vertices(); ++v) out.nodes.push_back(y.gradient(v));
  for (const auto& e : t.edges) {
    const auto rule = detail::edge_rule(t.vertices[e.a], t.vertices[e.b]);
    const Matrix32 g = (y.value(e.b) - y.value(e.a)) * rule.value_weight.transpose() +
                       (y.gradient(e.a) + y.gradient(e.b)) * rule.grad_weight;
    out.nodes.push_back(g);
  }
  return out;
}

/// Element-local gradient of Theta_h y at local vertex a: h[c](i, j) = d_j (Theta_h y_c)_i.
inline std::array<Eigen::Matrix2d, 3> discrete_hessian_at_vertex(const DKTVectorField& y, const FeSpace& space, int t,
                                                                int a) {
  const auto& tri = space.mesh().triangles[t];
  const auto& d = space.kernel(t).hessian[a];
  std::array<Eigen::Matrix2d, 3> h;
  for (int c = 0; c < 3; ++c) {
    const Eigen::Vector4d v = d * y.local(tri, c);
    h[c] << v(0), v(1), v(2), v(3);
  }
  return h;
}

/// Delta_h y = div Theta_h y at local vertex a of triangle t.
inline Eigen::Vector3d discrete_laplacian_at_vertex(const DKTVectorField& y, const FeSpace& space, int t, int a) {
  const auto h = discrete_hessian_at_vertex(y, space, t, a);
  return {h[0].trace(), h[1].trace(), h[2].trace()};
}

/// b_h(z) = d1 y(z) x d2 y(z), not normalised.
inline std::vector<Eigen::Vector3d> nodal_normal(const DKTVectorField& y) {
  std::vector<Eigen::Vector3d> b(y.num_vertices());
  for (int v = 0; v < y.num_vertices(); ++v) {
    const Matrix32 g = y.gradient(v);
    b[v] = g.col(0).cross(g.col(1));
  }
  return b;
}

/// Integral of the element-wise linear interpolant of element-local vertex samples.
inline double nodal_interpolant_integral(std::span<const std::array<double, 3>> samples, const FeSpace& space) {
  if (static_cast<int>(samples.size()) != space.num_triangles())
    throw ShapeMismatch("nodal_interpolant_integral: one sample triple per triangle expected");
  double s = 0.0;
  for (int t = 0; t < space.num_triangles(); ++t)
    s += space.kernel(t).area / 3.0 * (samples[t][0] + samples[t][1] + samples[t][2]);
  return s;
}

/// Matrix of (grad Theta_h u, grad Theta_h w)_{L2} on the deformation dofs.
inline SparseMatrix assemble_h2_stiffness(const FeSpace& space) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(space.num_triangles()) * 81 * 3);
  for (int t = 0; t < space.num_triangles(); ++t) {
    const auto& tri = space.mesh().triangles[t];
    const auto& k = space.kernel(t).h2_stiffness;
    for (int c = 0; c < 3; ++c)
      for (int a = 0; a < 3; ++a)
        for (int j = 0; j < 3; ++j)
          for (int b = 0; b < 3; ++b)
            for (int l = 0; l < 3; ++l)
              trip.emplace_back(dkt_dof(tri[a], j, c), dkt_dof(tri[b], l, c), k(3 * a + j, 3 * b + l));
  }
  SparseMatrix m(space.deformation_dofs(), space.deformation_dofs());
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

struct H1Matrices {
  SparseMatrix stiffness;  // scalar, V x V
  SparseMatrix mass;       // scalar, V x V
};

inline H1Matrices assemble_h1(const FeSpace& space) {
  std::vector<Eigen::Triplet<double>> ks, ms;
  for (int t = 0; t < space.num_triangles(); ++t) {
    const auto& tri = space.mesh().triangles[t];
    const auto& k = space.kernel(t);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        ks.emplace_back(tri[a], tri[b], k.p1_stiffness(a, b));
        ms.emplace_back(tri[a], tri[b], k.p1_mass(a, b));
      }
  }
  const int n = space.num_vertices();
  H1Matrices out{SparseMatrix(n, n), SparseMatrix(n, n)};
  out.stiffness.setFromTriplets(ks.begin(), ks.end());
  out.mass.setFromTriplets(ms.begin(), ms.end());
  return out;
}

/// Scalar V x V matrix applied to each of the three components of a P1 vector field.
inline SparseMatrix expand_components(const SparseMatrix& scalar) {
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(3 * static_cast<std::size_t>(scalar.nonZeros()));
  for (int col = 0; col < scalar.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(scalar, col); it; ++it)
      for (int c = 0; c < 3; ++c) trip.emplace_back(p1_dof(it.row(), c), p1_dof(it.col(), c), it.value());
  SparseMatrix m(3 * scalar.rows(), 3 * scalar.cols());
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

/// Scalar matrix placed on the given deformation slots (j) of every component.
inline SparseMatrix expand_deformation_slots(const SparseMatrix& scalar, std::initializer_list<int> slots) {
  std::vector<Eigen::Triplet<double>> trip;
  for (int col = 0; col < scalar.outerSize(); ++col)
    for (SparseMatrix::InnerIterator it(scalar, col); it; ++it)
      for (int j : slots)
        for (int c = 0; c < 3; ++c) trip.emplace_back(dkt_dof(it.row(), j, c), dkt_dof(it.col(), j, c), it.value());
  SparseMatrix m(9 * scalar.rows(), 9 * scalar.cols());
  m.setFromTriplets(trip.begin(), trip.end());
  return m;
}

}  // namespace npf
