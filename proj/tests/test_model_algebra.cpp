#include <gtest/gtest.h>

#include <functional>
#include <random>

#include "npf/model_algebra.hpp"

namespace {

using npf::MaterialParams;
using npf::SymMat2;
using npf::SymMat3;

SymMat2 random_sym2(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  return {u(rng), u(rng), u(rng)};
}

MaterialParams random_params(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.2, 5.0), r(0.0, 4.0);
  return {u(rng), u(rng), r(rng), 1.0};
}

// min over d of a strictly convex quadratic f on R^3, via polarisation and a dense solve.
double brute_min(const std::function<double(const Eigen::Vector3d&)>& f) {
  const double f0 = f(Eigen::Vector3d::Zero());
  Eigen::Matrix3d h;
  Eigen::Vector3d g;
  for (int i = 0; i < 3; ++i) {
    const Eigen::Vector3d ei = Eigen::Vector3d::Unit(i);
    g(i) = 0.5 * (f(ei) - f(-ei));
    for (int j = 0; j < 3; ++j) {
      const Eigen::Vector3d ej = Eigen::Vector3d::Unit(j);
      h(i, j) = 0.5 * (f(ei + ej) - f(ei) - f(ej) + f0);
    }
  }
  // f(d) = f0 + g.d + d^T h d  ->  minimum f0 - g^T h^-1 g / 4
  return f0 - 0.25 * g.dot(h.ldlt().solve(g));
}

}  // namespace

TEST(ModelAlgebra, LambdaBar) {
  const MaterialParams p{1.0, 1000.0, 1.0, 1.0};
  EXPECT_NEAR(p.lambda_bar(), 1000.0 / 1002.0, 1e-15);
  EXPECT_DOUBLE_EQ((MaterialParams{2.0, 0.0, 0.0, 0.0}).lambda_bar(), 0.0);
}

TEST(ModelAlgebra, QIsoOfScaledIdentity) {
  const MaterialParams p{1.5, 2.0, 0.0, 0.0};
  // Q(t I) = lambda/2 (3t)^2 + mu 3 t^2
  const double t = 0.7;
  EXPECT_NEAR(npf::q_iso(Eigen::Matrix3d(t * Eigen::Matrix3d::Identity()), p), 0.5 * 2.0 * 9 * t * t + 1.5 * 3 * t * t,
              1e-14);
  // skew parts do not count
  Eigen::Matrix3d w;
  w << 0, 1, -2, -1, 0, 3, 2, -3, 0;
  EXPECT_NEAR(npf::q_iso(w, p), 0.0, 1e-14);
}

TEST(ModelAlgebra, Q2MatchesBruteForceRelaxation) {
  std::mt19937_64 rng(11);
  for (int i = 0; i < 50; ++i) {
    const auto p = random_params(rng);
    const SymMat2 a = random_sym2(rng);
    auto f = [&](const Eigen::Vector3d& d) {
      const Eigen::Matrix3d de3 = d * Eigen::RowVector3d::UnitZ();
      return npf::q_iso(npf::embed(a) + 0.5 * (de3 + de3.transpose()), p);
    };
    const auto q2 = npf::q2_iso(a, p);
    EXPECT_NEAR(q2.value, brute_min(f), 1e-10 * std::max(1.0, q2.value));
    EXPECT_NEAR(f(q2.minimizer), q2.value, 1e-10 * std::max(1.0, q2.value));
  }
}

TEST(ModelAlgebra, Q2IsAMinimum) {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> g;
  const MaterialParams p{1.0, 1000.0, 0.0, 0.0};
  const SymMat2 a{0.3, -0.2, 0.5};
  const double v = npf::q2_iso(a, p).value;
  for (int i = 0; i < 200; ++i) {
    const Eigen::Vector3d d(g(rng), g(rng), g(rng));
    const Eigen::Matrix3d de3 = d * Eigen::RowVector3d::UnitZ();
    EXPECT_GE(npf::q_iso(npf::embed(a) + 0.5 * (de3 + de3.transpose()), p), v - 1e-12);
  }
}

TEST(ModelAlgebra, ClosedFormsAgainstLayeredMinimisation) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 100; ++i) {
    const auto p = random_params(rng);
    const auto prof = npf::LayeredProfile::homogeneous(p);
    const SymMat2 a = random_sym2(rng), u = random_sym2(rng);
    const double qe = npf::q_el(a, p), er = npf::e_res(u, p);
    EXPECT_NEAR(qe, npf::q_el_general(a, prof).value, 1e-10 * std::max(1.0, qe));
    EXPECT_NEAR(er, npf::e_res_general(u, prof).value, 1e-10 * std::max(1.0, er));
    const SymMat2 b0 = npf::bmap(u, p), b1 = npf::bmap(u, prof);
    EXPECT_LT(std::sqrt((b0 - b1).norm2()), 1e-10 * std::max(1.0, std::sqrt(b0.norm2())));
  }
}

TEST(ModelAlgebra, BendingFormIsTwelfthOfQ2) {
  const MaterialParams p{1.0, 3.0, 0.0, 0.0};
  const SymMat2 a{1.0, 0.25, -0.5};
  EXPECT_NEAR(npf::q_el(a, p), npf::q2_iso(a, p).value / 12.0, 1e-15);
}

TEST(ModelAlgebra, RelaxationIdentity) {
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const auto p = random_params(rng);
    Eigen::Matrix3d m;
    for (int j = 0; j < 9; ++j) m(j) = u(rng);
    const auto r = npf::check_reduction(random_sym2(rng), SymMat3::sym(m), p);
    EXPECT_NEAR(r.lhs, r.rhs, 1e-9 * std::max(1.0, std::abs(r.rhs)));
  }
}

TEST(ModelAlgebra, RelaxationIdentityOnTwoLayerProfile) {
  npf::LayeredProfile prof;
  prof.layers = {{-0.5, 0.0, {1.0, 2.0, 0.0, 0.0}}, {0.0, 0.5, {3.0, 1.0, 0.0, 0.0}}};
  const SymMat2 a{0.4, 0.1, -0.3};
  Eigen::Matrix3d m;
  m << 1, 0.2, 0.1, 0.2, -0.5, 0.3, 0.1, 0.3, 0.7;
  const auto r = npf::check_reduction(a, SymMat3::sym(m), prof, 2.0);
  EXPECT_NEAR(r.lhs, r.rhs, 1e-9 * std::max(1.0, std::abs(r.rhs)));
}

TEST(ModelAlgebra, ProfileValidation) {
  npf::LayeredProfile gap;
  gap.layers = {{-0.5, 0.0, {1.0, 1.0, 0.0, 0.0}}, {0.1, 0.5, {1.0, 1.0, 0.0, 0.0}}};
  EXPECT_THROW(gap.validate(), npf::BadConfig);
  EXPECT_THROW((MaterialParams{0.0, 1.0, 0.0, 0.0}).validate(), npf::BadConfig);
  EXPECT_THROW((MaterialParams{1.0, -1.0, 0.0, 0.0}).validate(), npf::BadConfig);
}

TEST(ModelAlgebra, ExpandedDensityMatchesForRankOneSecondForm) {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 50; ++i) {
    const auto p = random_params(rng);
    const Eigen::Vector2d v(u(rng), u(rng));
    const SymMat2 ii = u(rng) * SymMat2::outer(v.normalized());
    const double ang = 3.0 * u(rng);
    const Eigen::Vector2d nhat(std::cos(ang), std::sin(ang));
    Eigen::Matrix<double, 2, 3> gn;
    for (int j = 0; j < 6; ++j) gn(j) = u(rng);
    const double c = npf::continuum_density(ii, nhat, gn, p);
    EXPECT_NEAR(npf::expanded_density(ii, nhat, gn, p), c, 1e-11 * std::max(1.0, std::abs(c)));
  }
}

TEST(ModelAlgebra, DirectorStrainTrace) {
  const Eigen::Vector2d n(0.6, 0.8);
  const SymMat2 pm = npf::director_strain(n);
  EXPECT_NEAR(pm.trace(), 2.0 / 3.0 - 1.0, 1e-15);
  EXPECT_NEAR(pm.matrix().determinant(), 1.0 / 9.0 - 1.0 / 3.0, 1e-15);
}
