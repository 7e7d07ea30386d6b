#pragma once

// Quadratic forms of the reduced bilayer plate model: the isotropic 3d form Q,
// its plane-stress relaxation Q2, the bending form Q_el, the residual form
// E_res and the spontaneous-curvature map B. Closed forms for homogeneous
// isotropic material live next to the general definitions (exact quadratic
// minimisation over a layered isotropic profile), so each can check the other.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "npf/errors.hpp"

namespace npf {

struct SymMat2 {
  double a11 = 0.0;
  double a12 = 0.0;
  double a22 = 0.0;

  static SymMat2 identity() { return {1.0, 0.0, 1.0}; }
  static SymMat2 outer(const Eigen::Vector2d& v) { return {v(0) * v(0), v(0) * v(1), v(1) * v(1)}; }
  /// Symmetric part of a general 2x2 matrix.
  static SymMat2 sym(const Eigen::Matrix2d& m) { return {m(0, 0), 0.5 * (m(0, 1) + m(1, 0)), m(1, 1)}; }

  double trace() const { return a11 + a22; }
  double norm2() const { return a11 * a11 + 2.0 * a12 * a12 + a22 * a22; }
  double dot(const SymMat2& o) const { return a11 * o.a11 + 2.0 * a12 * o.a12 + a22 * o.a22; }
  Eigen::Matrix2d matrix() const {
    Eigen::Matrix2d m;
    m << a11, a12, a12, a22;
    return m;
  }

  friend SymMat2 operator+(const SymMat2& a, const SymMat2& b) { return {a.a11 + b.a11, a.a12 + b.a12, a.a22 + b.a22}; }
  friend SymMat2 operator-(const SymMat2& a, const SymMat2& b) { return {a.a11 - b.a11, a.a12 - b.a12, a.a22 - b.a22}; }
  friend SymMat2 operator*(double s, const SymMat2& a) { return {s * a.a11, s * a.a12, s * a.a22}; }
};

struct SymMat3 {
  double a11 = 0.0, a12 = 0.0, a13 = 0.0;
  double a22 = 0.0, a23 = 0.0;
  double a33 = 0.0;

  static SymMat3 sym(const Eigen::Matrix3d& m) {
    const Eigen::Matrix3d s = 0.5 * (m + m.transpose());
    return {s(0, 0), s(0, 1), s(0, 2), s(1, 1), s(1, 2), s(2, 2)};
  }
  Eigen::Matrix3d matrix() const {
    Eigen::Matrix3d m;
    m << a11, a12, a13, a12, a22, a23, a13, a23, a33;
    return m;
  }
  SymMat2 upper_left() const { return {a11, a12, a22}; }
};

/// Embeds a 2x2 matrix into the upper-left block of a 3x3 matrix.
inline Eigen::Matrix3d embed(const SymMat2& a) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  m.topLeftCorner<2, 2>() = a.matrix();
  return m;
}

/// Orthonormal basis G1, G2, G3 of the symmetric 2x2 matrices.
inline std::array<SymMat2, 3> sym2_basis() {
  const double s = 1.0 / std::sqrt(2.0);
  return {SymMat2{1.0, 0.0, 0.0}, SymMat2{0.0, 0.0, 1.0}, SymMat2{0.0, s, 0.0}};
}

inline SymMat2 from_basis_coords(const double* c) {
  const auto g = sym2_basis();
  return c[0] * g[0] + c[1] * g[1] + c[2] * g[2];
}

/// Isotropic material and model parameters. lambda_bar is always derived.
struct MaterialParams {
  double mu = 1.0;
  double lambda = 0.0;
  double r_bar = 0.0;
  double eps_bar = 0.0;

  double lambda_bar() const { return mu * lambda / (2.0 * mu + lambda); }

  void validate() const {
    if (!(mu > 0.0)) throw BadConfig("material: mu must be positive");
    if (!(lambda >= 0.0)) throw BadConfig("material: lambda must be non-negative");
    if (!(eps_bar >= 0.0)) throw BadConfig("material: eps_bar must be non-negative");
  }
};

/// x3-dependent isotropic material across the thickness (-1/2, 1/2).
struct LayeredProfile {
  struct Layer {
    double lo;
    double hi;
    MaterialParams material;
  };
  std::vector<Layer> layers;

  static LayeredProfile homogeneous(const MaterialParams& p) { return {{{-0.5, 0.5, p}}}; }

  void validate() const {
    if (layers.empty()) throw BadConfig("profile: no layers");
    double expect = -0.5;
    for (const auto& l : layers) {
      if (std::abs(l.lo - expect) > 1e-14 || !(l.hi > l.lo))
        throw BadConfig("profile: layers must be ordered and contiguous");
      l.material.validate();
      expect = l.hi;
    }
    if (std::abs(expect - 0.5) > 1e-14) throw BadConfig("profile: layers must cover (-1/2, 1/2)");
  }
};

/// Q(G) = lambda/2 tr(G)^2 + mu |sym G|^2.
inline double q_iso(const Eigen::Matrix3d& g, const MaterialParams& p) {
  const double tr = g.trace();
  const Eigen::Matrix3d s = 0.5 * (g + g.transpose());
  return 0.5 * p.lambda * tr * tr + p.mu * s.squaredNorm();
}

inline double q_iso(const SymMat3& g, const MaterialParams& p) { return q_iso(g.matrix(), p); }

struct Q2Result {
  double value;
  Eigen::Vector3d minimizer;
};

/// Q2(A) = min_d Q(iota(A) + sym(d (x) e3)), closed form for isotropic Q.
inline Q2Result q2_iso(const SymMat2& a, const MaterialParams& p) {
  const double tr = a.trace();
  Eigen::Vector3d d = Eigen::Vector3d::Zero();
  d(2) = -p.lambda / (2.0 * p.mu + p.lambda) * tr;
  return {p.lambda_bar() * tr * tr + p.mu * a.norm2(), d};
}

inline double q_el(const SymMat2& a, const MaterialParams& p) {
  const double tr = a.trace();
  return (p.lambda_bar() * tr * tr + p.mu * a.norm2()) / 12.0;
}

inline double e_res(const SymMat2& u, const MaterialParams& p) {
  const double tr = u.trace();
  return (p.lambda_bar() * tr * tr + p.mu * u.norm2()) / 64.0;
}

/// Homogeneous case: B(U) = 3/4 U.
inline SymMat2 bmap(const SymMat2& u, const MaterialParams&) { return 0.75 * u; }

namespace detail {

template <int N>
struct QuadraticMin {
  double value;
  Eigen::Matrix<double, N, 1> argmin;
};

/// Exact minimiser of a convex quadratic f: R^N -> R, recovered from point
/// evaluations by polarisation.
template <int N, class F>
QuadraticMin<N> minimize_quadratic(F&& f) {
  using Vec = Eigen::Matrix<double, N, 1>;
  using Mat = Eigen::Matrix<double, N, N>;
  const double f0 = f(Vec::Zero().eval());
  Vec fp, fm, grad;
  for (int i = 0; i < N; ++i) {
    fp(i) = f(Vec::Unit(i).eval());
    fm(i) = f((-Vec::Unit(i)).eval());
    grad(i) = 0.5 * (fp(i) - fm(i));
  }
  // f(x) = f0 + grad.x + x.H x / 2, so f(e_i + e_j) - f(e_i) - f(e_j) + f0 = H_ij.
  Mat hess;
  for (int i = 0; i < N; ++i) {
    hess(i, i) = fp(i) + fm(i) - 2.0 * f0;
    for (int j = i + 1; j < N; ++j) {
      const double fij = f((Vec::Unit(i) + Vec::Unit(j)).eval());
      hess(i, j) = hess(j, i) = fij - fp(i) - fp(j) + f0;
    }
  }
  Eigen::LLT<Mat> llt(hess);
  if (llt.info() != Eigen::Success) throw SingularProfile("normal-equation matrix is not positive definite");
  const Vec x = -llt.solve(grad);
  return {f0 + 0.5 * grad.dot(x), x};
}

/// Integrates g(x3, material) over the profile, exact for piecewise quadratics
/// in x3 on each layer (and on each side of x3 = 0 when split_at_zero).
template <class G>
double integrate_thickness(const LayeredProfile& profile, bool split_at_zero, G&& g) {
  static const double gauss = 1.0 / std::sqrt(3.0);
  double total = 0.0;
  auto piece = [&](double lo, double hi, const MaterialParams& m) {
    const double c = 0.5 * (lo + hi), h = 0.5 * (hi - lo);
    total += h * (g(c - h * gauss, m) + g(c + h * gauss, m));
  };
  for (const auto& l : profile.layers) {
    if (split_at_zero && l.lo < 0.0 && l.hi > 0.0) {
      piece(l.lo, 0.0, l.material);
      piece(0.0, l.hi, l.material);
    } else {
      piece(l.lo, l.hi, l.material);
    }
  }
  return total;
}

inline double indicator_top(double x3) { return x3 > 0.0 ? 1.0 : 0.0; }

}  // namespace detail

struct GeneralResult {
  double value;
  SymMat2 a;  // bending minimiser (zero where not applicable)
  SymMat2 m;  // membrane minimiser
};

/// Q_el(A) = min_M int Q2(x3, x3 A + M).
inline GeneralResult q_el_general(const SymMat2& a, const LayeredProfile& profile) {
  profile.validate();
  auto obj = [&](const Eigen::Vector3d& c) {
    const SymMat2 m = from_basis_coords(c.data());
    return detail::integrate_thickness(profile, false, [&](double x3, const MaterialParams& mat) {
      return q2_iso(x3 * a + m, mat).value;
    });
  };
  const auto r = detail::minimize_quadratic<3>(obj);
  return {r.value, SymMat2{}, from_basis_coords(r.argmin.data())};
}

/// E_res(U) = min_{A,M} int Q2(x3, x3 A + M + 1(x3>0) U/2).
inline GeneralResult e_res_general(const SymMat2& u, const LayeredProfile& profile) {
  profile.validate();
  auto obj = [&](const Eigen::Matrix<double, 6, 1>& c) {
    const SymMat2 a = from_basis_coords(c.data());
    const SymMat2 m = from_basis_coords(c.data() + 3);
    return detail::integrate_thickness(profile, true, [&](double x3, const MaterialParams& mat) {
      return q2_iso(x3 * a + m + (0.5 * detail::indicator_top(x3)) * u, mat).value;
    });
  };
  const auto r = detail::minimize_quadratic<6>(obj);
  return {r.value, from_basis_coords(r.argmin.data()), from_basis_coords(r.argmin.data() + 3)};
}

/// B(U) = sum_i (U . G_i) A_i with (A_i, M_i) minimising
/// int Q2(x3, 1(x3>0) G_i/2 - (x3 A + M)).
inline SymMat2 bmap(const SymMat2& u, const LayeredProfile& profile) {
  profile.validate();
  const auto basis = sym2_basis();
  SymMat2 out;
  for (const auto& gi : basis) {
    auto obj = [&](const Eigen::Matrix<double, 6, 1>& c) {
      const SymMat2 a = from_basis_coords(c.data());
      const SymMat2 m = from_basis_coords(c.data() + 3);
      return detail::integrate_thickness(profile, true, [&](double x3, const MaterialParams& mat) {
        return q2_iso((0.5 * detail::indicator_top(x3)) * gi - (x3 * a + m), mat).value;
      });
    };
    const auto r = detail::minimize_quadratic<6>(obj);
    out = out + u.dot(gi) * from_basis_coords(r.argmin.data());
  }
  return out;
}

struct ReductionCheck {
  double lhs;
  double rhs;
};

/// Both sides of the relaxation identity
///   inf_{M,d} int Q(iota(x3 A) + 1(x3>0) r/2 U + iota(M) + sym(d (x) e3))
///     = Q_el(A + r B(U')) + r^2 E_res(U').
/// The left side eliminates d pointwise by minimising the full 3d form, then M.
inline ReductionCheck check_reduction(const SymMat2& a, const SymMat3& u, const LayeredProfile& profile,
                                      double r_bar) {
  profile.validate();
  const Eigen::Matrix3d um = u.matrix();
  auto pointwise = [&](const Eigen::Matrix3d& g, const MaterialParams& mat) {
    auto inner = [&](const Eigen::Vector3d& d) {
      const Eigen::Matrix3d de3 = d * Eigen::RowVector3d::UnitZ();
      return q_iso(g + 0.5 * (de3 + de3.transpose()), mat);
    };
    return detail::minimize_quadratic<3>(inner).value;
  };
  auto obj = [&](const Eigen::Vector3d& c) {
    const Eigen::Matrix3d m = embed(from_basis_coords(c.data()));
    return detail::integrate_thickness(profile, true, [&](double x3, const MaterialParams& mat) {
      const Eigen::Matrix3d g = x3 * embed(a) + (0.5 * r_bar * detail::indicator_top(x3)) * um + m;
      return pointwise(g, mat);
    });
  };
  const double lhs = detail::minimize_quadratic<3>(obj).value;

  const SymMat2 up = u.upper_left();
  const double rhs =
      q_el_general(a + r_bar * bmap(up, profile), profile).value + r_bar * r_bar * e_res_general(up, profile).value;
  return {lhs, rhs};
}

inline ReductionCheck check_reduction(const SymMat2& a, const SymMat3& u, const MaterialParams& p) {
  return check_reduction(a, u, LayeredProfile::homogeneous(p), p.r_bar);
}

/// In-plane director target 1/3 I - n' (x) n'.
inline SymMat2 director_strain(const Eigen::Vector2d& nhat) { return (1.0 / 3.0) * SymMat2::identity() - SymMat2::outer(nhat); }

/// Pointwise density Q_el(II + r B(P)) + r^2 E_res(P) + eps^2/2 |grad n|^2.
inline double continuum_density(const SymMat2& ii, const Eigen::Vector2d& nhat, const Eigen::Matrix<double, 2, 3>& grad_n,
                                 const MaterialParams& p) {
  const SymMat2 pm = director_strain(nhat);
  return q_el(ii + p.r_bar * bmap(pm, p), p) + p.r_bar * p.r_bar * e_res(pm, p) +
         0.5 * p.eps_bar * p.eps_bar * grad_n.squaredNorm();
}

/// The same density after expanding the squares, written the way the discrete
/// energy splits it: convex bending term, coupling terms, director terms and a
/// constant. Uses |II|^2 = tr(II)^2, i.e. assumes II has rank at most one (the
/// situation for isometric immersions).
inline double expanded_density(const SymMat2& ii, const Eigen::Vector2d& nhat, const Eigen::Matrix<double, 2, 3>& grad_n,
                               const MaterialParams& p) {
  const double mu = p.mu, lb = p.lambda_bar(), r = p.r_bar;
  const SymMat2 pm = director_strain(nhat);
  const double s = nhat.squaredNorm();
  const double tr = ii.trace();
  return (mu + lb) / 12.0 * tr * tr + r / 8.0 * mu * ii.dot(pm) + r / 8.0 * lb * tr * pm.trace() +
         r * r / 16.0 * ((mu + lb) * s * s - (2.0 * mu + 4.0 * lb) / 3.0 * s) + r * r / 72.0 * (mu + 2.0 * lb) +
         0.5 * p.eps_bar * p.eps_bar * grad_n.squaredNorm();
}

}  // namespace npf
