#pragma once

// Discrete energy
//   E_h(y, n) = (mu + lambda_bar)/12 int |grad Theta_h y|^2 + N(y, n) + eps^2/2 int |grad n|^2
// where N collects the non-convex coupling terms, integrated with the vertex rule
// on element-local samples, plus the constant r^2 (mu + 2 lambda_bar)/72 |S|.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <vector>

#include "npf/errors.hpp"
#include "npf/fem.hpp"
#include "npf/model_algebra.hpp"

namespace npf {

/// How the lambda_bar coupling term reads the discrete Laplacian.
///  * trace_second_form: tr(II_h) tr(P) = -(Delta_h y . b_h) tr(P), consistent with the
///    continuum density for isometries;
///  * laplacian_dot_normal: +(Delta_h y . b_h) tr(P), the opposite sign.
enum class LaplacianCoupling { laplacian_dot_normal, trace_second_form };

struct EnergyOptions {
  LaplacianCoupling coupling = LaplacianCoupling::trace_second_form;
};

struct EnergyBreakdown {
  double total = 0.0;
  double bending = 0.0;
  double nonconvex = 0.0;  // includes the constant
  double constant = 0.0;
  double oseen_frank = 0.0;
};

/// Vertex sample of the N integrand and its partial derivatives.
struct CouplingSample {
  double value = 0.0;
  Matrix32 d_gradient = Matrix32::Zero();
  std::array<Eigen::Matrix2d, 3> d_hessian{};
  Eigen::Vector3d d_director = Eigen::Vector3d::Zero();
};

/// g = r/8 [mu II.P + s lambda_bar L tr P] + r^2/16 [(mu + lambda_bar)|p|^4 - (2 mu + 4 lambda_bar)/3 |p|^2]
/// with b = F_1 x F_2, II = -b.H, L = b.tr(H), p = F^T n, P = I/3 - p p^T.
inline CouplingSample coupling_sample(const Matrix32& f, const std::array<Eigen::Matrix2d, 3>& h, const Eigen::Vector3d& n,
                                      const MaterialParams& prm, const EnergyOptions& opt, bool with_derivatives) {
  const double mu = prm.mu, lb = prm.lambda_bar(), r = prm.r_bar;
  const double sigma = opt.coupling == LaplacianCoupling::laplacian_dot_normal ? 1.0 : -1.0;
  const Eigen::Vector3d b = f.col(0).cross(f.col(1));
  Eigen::Matrix2d ii = Eigen::Matrix2d::Zero();
  double lap = 0.0;
  for (int c = 0; c < 3; ++c) {
    ii -= b(c) * h[c];
    lap += b(c) * h[c].trace();
  }
  const Eigen::Vector2d p = f.transpose() * n;
  const double s = p.squaredNorm();
  const Eigen::Matrix2d pm = Eigen::Matrix2d::Identity() / 3.0 - p * p.transpose();
  const double trp = 2.0 / 3.0 - s;

  CouplingSample out;
  out.value = r / 8.0 * (mu * (ii.cwiseProduct(pm)).sum() + sigma * lb * lap * trp) +
              r * r / 16.0 * ((mu + lb) * s * s - (2.0 * mu + 4.0 * lb) / 3.0 * s);
  if (!with_derivatives) return out;

  Eigen::Vector3d d_b;
  for (int c = 0; c < 3; ++c) {
    out.d_hessian[c] = r / 8.0 * b(c) * (-mu * pm + sigma * lb * trp * Eigen::Matrix2d::Identity());
    d_b(c) = r / 8.0 * (-mu * (h[c].cwiseProduct(pm)).sum() + sigma * lb * trp * h[c].trace());
  }
  const Eigen::Vector2d d_p = r / 8.0 * (-mu * (ii + ii.transpose()) * p - 2.0 * sigma * lb * lap * p) +
                              r * r / 16.0 * (4.0 * (mu + lb) * s * p - 2.0 * (2.0 * mu + 4.0 * lb) / 3.0 * p);
  out.d_gradient = n * d_p.transpose();
  out.d_gradient.col(0) += f.col(1).cross(d_b);
  out.d_gradient.col(1) += d_b.cross(f.col(0));
  out.d_director = f * d_p;
  return out;
}

namespace detail {

inline void check_shapes(const DKTVectorField& y, const P1VectorField& n, const FeSpace& space) {
  if (y.num_vertices() != space.num_vertices() || n.num_vertices() != space.num_vertices() ||
      y.data.size() != 9 * space.num_vertices() || n.data.size() != 3 * space.num_vertices())
    throw ShapeMismatch("field sizes do not match the mesh");
}

inline std::array<Eigen::Matrix2d, 3> local_hessian(const FeSpace& space, int t, int a,
                                                    const std::array<Eigen::Matrix<double, 9, 1>, 3>& u) {
  std::array<Eigen::Matrix2d, 3> h;
  const auto& d = space.kernel(t).hessian[a];
  for (int c = 0; c < 3; ++c) {
    const Eigen::Vector4d v = d * u[c];
    h[c] << v(0), v(1), v(2), v(3);
  }
  return h;
}

}  // namespace detail

/// (mu + lambda_bar)/12 int |grad Theta_h y|^2. grad Theta_h y is affine on each element, so the
/// edge-midpoint rule is exact; summing squares keeps the value non-negative under roundoff.
inline double bending_energy(const DKTVectorField& y, const FeSpace& space, const MaterialParams& p) {
  double s = 0.0;
  for (int t = 0; t < space.num_triangles(); ++t) {
    const auto& tri = space.mesh().triangles[t];
    const auto& k = space.kernel(t);
    for (int c = 0; c < 3; ++c) {
      const auto u = y.local(tri, c);
      const std::array<Eigen::Vector4d, 3> d{k.hessian[0] * u, k.hessian[1] * u, k.hessian[2] * u};
      for (int e = 0; e < 3; ++e) s += k.area / 12.0 * (d[(e + 1) % 3] + d[(e + 2) % 3]).squaredNorm();
    }
  }
  return (p.mu + p.lambda_bar()) / 12.0 * s;
}

/// eps^2/2 int |grad n|^2, exact.
inline double oseen_frank(const P1VectorField& n, const FeSpace& space, const MaterialParams& p) {
  double s = 0.0;
  for (int t = 0; t < space.num_triangles(); ++t) {
    const auto& tri = space.mesh().triangles[t];
    const auto& k = space.kernel(t).p1_stiffness;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) s += k(a, b) * n.at(tri[a]).dot(n.at(tri[b]));
  }
  return 0.5 * p.eps_bar * p.eps_bar * s;
}

inline double nonconvex_constant(const FeSpace& space, const MaterialParams& p) {
  double area = 0.0;
  for (int t = 0; t < space.num_triangles(); ++t) area += space.kernel(t).area;
  return p.r_bar * p.r_bar / 72.0 * (p.mu + 2.0 * p.lambda_bar()) * area;
}

/// Visits every element-local vertex sample of N with its quadrature weight.
template <class Visit>
void for_each_coupling_sample(const DKTVectorField& y, const P1VectorField& n, const FeSpace& space,
                              const MaterialParams& p, const EnergyOptions& opt, bool with_derivatives, Visit&& visit) {
  for (int t = 0; t < space.num_triangles(); ++t) {
    const auto& tri = space.mesh().triangles[t];
    const std::array<Eigen::Matrix<double, 9, 1>, 3> u{y.local(tri, 0), y.local(tri, 1), y.local(tri, 2)};
    const double w = space.kernel(t).area / 3.0;
    for (int a = 0; a < 3; ++a) {
      const auto h = detail::local_hessian(space, t, a, u);
      const auto sample = coupling_sample(y.gradient(tri[a]), h, n.at(tri[a]), p, opt, with_derivatives);
      visit(t, a, w, sample);
    }
  }
}

inline double nonconvex_energy(const DKTVectorField& y, const P1VectorField& n, const FeSpace& space,
                               const MaterialParams& p, const EnergyOptions& opt = {}) {
  double s = 0.0;
  if (p.r_bar != 0.0)
    for_each_coupling_sample(y, n, space, p, opt, false,
                             [&](int, int, double w, const CouplingSample& g) { s += w * g.value; });
  return s + nonconvex_constant(space, p);
}

inline EnergyBreakdown energy(const DKTVectorField& y, const P1VectorField& n, const MaterialParams& p,
                              const FeSpace& space, const EnergyOptions& opt = {}) {
  detail::check_shapes(y, n, space);
  EnergyBreakdown e;
  e.bending = bending_energy(y, space, p);
  e.constant = nonconvex_constant(space, p);
  e.nonconvex = nonconvex_energy(y, n, space, p, opt);
  e.oseen_frank = oseen_frank(n, space, p);
  e.total = e.bending + e.nonconvex + e.oseen_frank;
  return e;
}

/// Derivative of N with respect to the deformation dofs.
inline Eigen::VectorXd grad_y(const DKTVectorField& y, const P1VectorField& n, const MaterialParams& p,
                              const FeSpace& space, const EnergyOptions& opt = {}) {
  detail::check_shapes(y, n, space);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(space.deformation_dofs());
  if (p.r_bar == 0.0) return g;
  for_each_coupling_sample(y, n, space, p, opt, true, [&](int t, int a, double w, const CouplingSample& s) {
    const auto& tri = space.mesh().triangles[t];
    const int v = tri[a];
    for (int i = 0; i < 2; ++i) g.segment<3>(dkt_dof(v, 1 + i, 0)) += w * s.d_gradient.col(i);
    const auto& d = space.kernel(t).hessian[a];
    for (int c = 0; c < 3; ++c) {
      const Eigen::Vector4d dh(s.d_hessian[c](0, 0), s.d_hessian[c](0, 1), s.d_hessian[c](1, 0), s.d_hessian[c](1, 1));
      const Eigen::Matrix<double, 9, 1> local = w * d.transpose() * dh;
      for (int b = 0; b < 3; ++b)
        for (int j = 0; j < 3; ++j) g(dkt_dof(tri[b], j, c)) += local(3 * b + j);
    }
  });
  return g;
}

/// Derivative of N with respect to the director dofs.
inline Eigen::VectorXd grad_n(const DKTVectorField& y, const P1VectorField& n, const MaterialParams& p,
                              const FeSpace& space, const EnergyOptions& opt = {}) {
  detail::check_shapes(y, n, space);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(space.director_dofs());
  if (p.r_bar == 0.0) return g;
  for_each_coupling_sample(y, n, space, p, opt, true, [&](int t, int a, double w, const CouplingSample& s) {
    g.segment<3>(p1_dof(space.mesh().triangles[t][a], 0)) += w * s.d_director;
  });
  return g;
}

struct ConstraintErrors {
  double err1 = 0.0;         // unit length of the director in local coordinates R_y^T n
  double err1_global = 0.0;  // unit length of n itself
  double erriso = 0.0;
};

/// err1 = max_z ||R_y(z)^T n(z)| - 1| with R_y = (d1 y, d2 y, d1 y x d2 y),
/// err1_global = max_z ||n(z)| - 1|, erriso = max_z |grad y(z)^T grad y(z) - I|_F.
/// Both unit-length measures agree on nodal isometries.
inline ConstraintErrors err_metrics(const DKTVectorField& y, const P1VectorField& n) {
  if (y.num_vertices() != n.num_vertices()) throw ShapeMismatch("err_metrics: field sizes differ");
  ConstraintErrors e;
  for (int v = 0; v < y.num_vertices(); ++v) {
    const Matrix32 g = y.gradient(v);
    const Eigen::Vector3d nv = n.at(v);
    const Eigen::Vector3d local(g.col(0).dot(nv), g.col(1).dot(nv), g.col(0).cross(g.col(1)).dot(nv));
    e.err1 = std::max(e.err1, std::abs(local.norm() - 1.0));
    e.err1_global = std::max(e.err1_global, std::abs(nv.norm() - 1.0));
    e.erriso = std::max(e.erriso, (g.transpose() * g - Eigen::Matrix2d::Identity()).norm());
  }
  return e;
}

}  // namespace npf
