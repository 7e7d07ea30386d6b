#pragma once

// Self-checks run by `npf verify`: the relaxation identity, closed forms against
// the general layered minimisation, and analytic derivatives of N against
// central differences.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "npf/energy.hpp"
#include "npf/fem.hpp"
#include "npf/mesh.hpp"
#include "npf/model_algebra.hpp"

namespace npf {

struct CheckResult {
  std::string name;
  int cases = 0;
  int failures = 0;
  double worst = 0.0;  // largest relative deviation seen
  double tolerance = 0.0;
};

namespace detail {

inline double rel_dev(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

inline SymMat2 random_sym2(std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return {u(rng), u(rng), u(rng)};
}

inline SymMat3 random_sym3(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Eigen::Matrix3d m;
  for (int i = 0; i < 9; ++i) m(i) = u(rng);
  return SymMat3::sym(m);
}

inline MaterialParams random_material(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 5.0), r(0.0, 4.0);
  return {u(rng), u(rng), r(rng), 1.0};
}

}  // namespace detail

inline CheckResult check_relaxation_identity(int cases = 50, std::uint64_t seed = 1) {
  std::mt19937_64 rng(seed);
  CheckResult c{"relaxation identity", cases, 0, 0.0, 1e-9};
  for (int i = 0; i < cases; ++i) {
    const MaterialParams p = detail::random_material(rng);
    const auto r = check_reduction(detail::random_sym2(rng), detail::random_sym3(rng), p);
    const double d = detail::rel_dev(r.lhs, r.rhs);
    c.worst = std::max(c.worst, d);
    c.failures += d > c.tolerance ? 1 : 0;
  }
  return c;
}

inline CheckResult check_closed_forms(int cases = 100, std::uint64_t seed = 2) {
  std::mt19937_64 rng(seed);
  CheckResult c{"closed forms vs layered minimisation", cases, 0, 0.0, 1e-10};
  for (int i = 0; i < cases; ++i) {
    const MaterialParams p = detail::random_material(rng);
    const LayeredProfile prof = LayeredProfile::homogeneous(p);
    const SymMat2 a = detail::random_sym2(rng), u = detail::random_sym2(rng);
    const SymMat2 b0 = bmap(u, p), b1 = bmap(u, prof);
    const double scale = std::max(1.0, std::sqrt(b0.norm2()));
    const double d = std::max({detail::rel_dev(q_el(a, p), q_el_general(a, prof).value),
                               detail::rel_dev(e_res(u, p), e_res_general(u, prof).value),
                               std::sqrt((b0 - b1).norm2()) / scale});
    c.worst = std::max(c.worst, d);
    c.failures += d > c.tolerance ? 1 : 0;
  }
  return c;
}

/// A perturbed flat state on the given mesh: nodal values and gradients jittered, unit-ish directors.
inline std::pair<DKTVectorField, P1VectorField> random_state(const Triangulation& t, std::mt19937_64& rng,
                                                             double amplitude = 0.2) {
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  DKTVectorField y(t.num_vertices());
  P1VectorField n(t.num_vertices());
  std::normal_distribution<double> g;
  for (int v = 0; v < t.num_vertices(); ++v) {
    const auto& x = t.vertices[v];
    y.set_value(v, Eigen::Vector3d(x.x() + u(rng), x.y() + u(rng), u(rng)));
    Matrix32 f;
    f << 1.0 + u(rng), u(rng), u(rng), 1.0 + u(rng), u(rng), u(rng);
    y.set_gradient(v, f);
    n.set(v, Eigen::Vector3d(g(rng), g(rng), g(rng)).normalized());
  }
  return {std::move(y), std::move(n)};
}

/// Directional central differences of N in random directions, on a k=2 clamped-plate mesh.
inline CheckResult check_gradients(int cases = 20, std::uint64_t seed = 3) {
  std::mt19937_64 rng(seed);
  DomainSpec spec;
  spec.level = 2;
  FeSpace space(generate(spec));
  CheckResult c{"N derivatives vs central differences", 2 * cases, 0, 0.0, 1e-6};
  const MaterialParams p{1.0, 1000.0, 2.0, 1.0};
  std::normal_distribution<double> g;
  for (int i = 0; i < cases; ++i) {
    auto [y, n] = random_state(space.mesh(), rng);
    Eigen::VectorXd vy(y.data.size()), vn(n.data.size());
    for (auto& x : vy) x = g(rng);
    for (auto& x : vn) x = g(rng);
    const double h = 1e-5;
    const double ay = grad_y(y, n, p, space).dot(vy);
    const double an = grad_n(y, n, p, space).dot(vn);
    auto shifted_y = [&](double s) {
      DKTVectorField z = y;
      z.data += s * vy;
      return nonconvex_energy(z, n, space, p);
    };
    auto shifted_n = [&](double s) {
      P1VectorField z = n;
      z.data += s * vn;
      return nonconvex_energy(y, z, space, p);
    };
    const double fy = (shifted_y(h) - shifted_y(-h)) / (2.0 * h);
    const double fn = (shifted_n(h) - shifted_n(-h)) / (2.0 * h);
    for (auto [a, f] : {std::pair{ay, fy}, std::pair{an, fn}}) {
      const double d = std::abs(a - f) / std::max(1e-12, std::abs(a));
      c.worst = std::max(c.worst, d);
      c.failures += d > c.tolerance ? 1 : 0;
    }
  }
  return c;
}

inline std::vector<CheckResult> run_verification() {
  return {check_relaxation_identity(), check_closed_forms(), check_gradients()};
}

}  // namespace npf
