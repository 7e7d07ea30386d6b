#include <gtest/gtest.h>

#include <random>

#include "npf/energy.hpp"
#include "npf/verify.hpp"

namespace {

using npf::Matrix32;

npf::FeSpace clamped_plate(int k) {
  npf::DomainSpec d;
  d.level = k;
  d.gamma_y = {d.side(npf::Side::left)};
  return npf::FeSpace(npf::generate(d));
}

npf::DKTVectorField flat(const npf::Triangulation& t) {
  return npf::dkt_interpolate(
      [](const Eigen::Vector2d& x) {
        return npf::ValueAndGradient{{x.x(), x.y(), 0.0}, (Matrix32() << 1, 0, 0, 1, 0, 0).finished()};
      },
      t);
}

npf::DKTVectorField cylinder(const npf::Triangulation& t, double r) {
  return npf::dkt_interpolate(
      [&](const Eigen::Vector2d& x) {
        const double s = (x.x() + 1.0) / r;
        Matrix32 g;
        g << std::cos(s), 0.0, 0.0, 1.0, std::sin(s), 0.0;
        return npf::ValueAndGradient{{r * std::sin(s) - 1.0, x.y(), r * (1.0 - std::cos(s))}, g};
      },
      t);
}

npf::P1VectorField constant(const npf::Triangulation& t, const Eigen::Vector3d& v) {
  return npf::p1_interpolate([&](const Eigen::Vector2d&) { return v; }, t);
}

}  // namespace

TEST(Energy, FlatStateWithNormalDirector) {
  const auto space = clamped_plate(3);
  const npf::MaterialParams p{1.0, 1000.0, 1.0, 1.0};
  const auto e = npf::energy(flat(space.mesh()), constant(space.mesh(), Eigen::Vector3d::UnitZ()), p, space);
  const double lb = 1000.0 / 1002.0;
  EXPECT_NEAR(e.total, 4.0 * (2.0 * lb + 1.0) / 72.0, 1e-12);
  EXPECT_NEAR(e.total, 0.1664449, 1e-7);
  EXPECT_NEAR(e.bending, 0.0, 1e-14);
  EXPECT_NEAR(e.oseen_frank, 0.0, 1e-14);
  EXPECT_NEAR(e.nonconvex, e.constant, 1e-14);
}

TEST(Energy, ZeroCouplingFlatConstantDirector) {
  const auto space = clamped_plate(2);
  const npf::MaterialParams p{1.0, 1000.0, 0.0, 3.0};
  const auto e = npf::energy(flat(space.mesh()), constant(space.mesh(), Eigen::Vector3d(0.6, 0.8, 0.0)), p, space);
  EXPECT_NEAR(e.total, 0.0, 1e-14);
}

TEST(Energy, ZeroCouplingHasNoNonconvexGradient) {
  const auto space = clamped_plate(2);
  std::mt19937_64 rng(31);
  auto [y, n] = npf::random_state(space.mesh(), rng);
  const npf::MaterialParams p{1.0, 1000.0, 0.0, 1.0};
  EXPECT_EQ(npf::grad_y(y, n, p, space).norm(), 0.0);
  EXPECT_EQ(npf::grad_n(y, n, p, space).norm(), 0.0);
}

TEST(Energy, InPlaneDirectorOnFlatPlate) {
  // II = 0, p = e1: N = r^2/16 [(mu + lb) - (2 mu + 4 lb)/3] |S| + constant.
  const auto space = clamped_plate(2);
  const npf::MaterialParams p{1.0, 1000.0, 2.0, 1.0};
  const double lb = p.lambda_bar();
  const double expect = 4.0 * (4.0 / 16.0 * ((1.0 + lb) - (2.0 + 4.0 * lb) / 3.0) + 4.0 / 72.0 * (1.0 + 2.0 * lb));
  EXPECT_NEAR(npf::nonconvex_energy(flat(space.mesh()), constant(space.mesh(), Eigen::Vector3d::UnitX()), space, p),
              expect, 1e-12);
}

TEST(Energy, OseenFrankOfLinearField) {
  const auto space = clamped_plate(2);
  const npf::MaterialParams p{1.0, 0.0, 0.0, 2.0};
  const auto n = npf::p1_interpolate(
      [](const Eigen::Vector2d& x) { return Eigen::Vector3d(x.x(), 2.0 * x.y(), 1.0); }, space.mesh());
  // eps^2/2 * |grad n|^2 * |S| = 2 * 5 * 4
  EXPECT_NEAR(npf::oseen_frank(n, space, p), 40.0, 1e-11);
}

TEST(Energy, CylinderBendingConverges) {
  // (mu + lb)/12 * int |D^2 y|^2 = (mu + lb)/12 * |S| / R^2 for a cylinder of radius R.
  const npf::MaterialParams p{1.0, 1000.0, 0.0, 0.0};
  const double r = 1.0, exact = (1.0 + p.lambda_bar()) / 12.0 * 4.0 / (r * r);
  double prev = 1e300;
  for (int k = 2; k <= 5; ++k) {
    const auto space = clamped_plate(k);
    const double err = std::abs(npf::bending_energy(cylinder(space.mesh(), r), space, p) - exact);
    EXPECT_LT(err, prev);
    prev = err;
  }
  EXPECT_LT(prev / exact, 1e-2);
}

TEST(Energy, CouplingSignConventions) {
  const auto space = clamped_plate(2);
  const auto y = cylinder(space.mesh(), 0.9);
  const auto n = constant(space.mesh(), Eigen::Vector3d(0.0, 1.0, 0.0));
  const npf::MaterialParams p{1.0, 1000.0, 1.0, 1.0};
  npf::EnergyOptions a, b;
  a.coupling = npf::LaplacianCoupling::trace_second_form;
  b.coupling = npf::LaplacianCoupling::laplacian_dot_normal;
  // n = e2 is along the ruling: P = I/3 - e2 e2^T, tr P = -1/3, II . P = II_11 / 3, tr II = II_11.
  // The two options differ only in the sign of the lambda_bar term.
  const double ea = npf::nonconvex_energy(y, n, space, p, a), eb = npf::nonconvex_energy(y, n, space, p, b);
  double lap_term = 0.0;
  npf::for_each_coupling_sample(y, n, space, p, a, false, [&](int t, int v, double w, const npf::CouplingSample&) {
    const Eigen::Vector3d l = npf::discrete_laplacian_at_vertex(y, space, t, v);
    const Matrix32 g = y.gradient(space.mesh().triangles[t][v]);
    lap_term += w * p.r_bar / 8.0 * p.lambda_bar() * l.dot(g.col(0).cross(g.col(1))) * (-1.0 / 3.0);
  });
  EXPECT_NEAR(eb - ea, 2.0 * lap_term, 1e-10);
  EXPECT_GT(std::abs(lap_term), 1e-3);
}

TEST(Energy, GradientsMatchCentralDifferences) {
  for (auto coupling : {npf::LaplacianCoupling::trace_second_form, npf::LaplacianCoupling::laplacian_dot_normal}) {
    const auto space = clamped_plate(2);
    std::mt19937_64 rng(32);
    std::normal_distribution<double> g;
    const npf::MaterialParams p{1.0, 1000.0, 2.0, 1.0};
    npf::EnergyOptions opt;
    opt.coupling = coupling;
    for (int rep = 0; rep < 5; ++rep) {
      auto [y, n] = npf::random_state(space.mesh(), rng);
      Eigen::VectorXd vy(y.data.size()), vn(n.data.size());
      for (auto& x : vy) x = g(rng);
      for (auto& x : vn) x = g(rng);
      const double h = 1e-5;
      auto ey = [&](double s) {
        auto z = y;
        z.data += s * vy;
        return npf::nonconvex_energy(z, n, space, p, opt);
      };
      auto en = [&](double s) {
        auto z = n;
        z.data += s * vn;
        return npf::nonconvex_energy(y, z, space, p, opt);
      };
      const double ay = npf::grad_y(y, n, p, space, opt).dot(vy), an = npf::grad_n(y, n, p, space, opt).dot(vn);
      EXPECT_NEAR(ay, (ey(h) - ey(-h)) / (2 * h), 1e-6 * std::abs(ay));
      EXPECT_NEAR(an, (en(h) - en(-h)) / (2 * h), 1e-6 * std::abs(an));
    }
  }
}

TEST(Energy, ConstraintErrorsOfIsometry) {
  const auto space = clamped_plate(3);
  const auto y = cylinder(space.mesh(), 0.7);
  // R_y e1 = d1 y, a unit tangent
  npf::P1VectorField n(space.num_vertices());
  for (int v = 0; v < space.num_vertices(); ++v) n.set(v, y.gradient(v).col(0));
  const auto e = npf::err_metrics(y, n);
  EXPECT_LT(e.err1, 1e-14);
  EXPECT_LT(e.err1_global, 1e-14);
  EXPECT_LT(e.erriso, 1e-14);

  auto y2 = y;
  y2.set_gradient(0, 1.1 * y.gradient(0));
  const auto e2 = npf::err_metrics(y2, n);
  EXPECT_NEAR(e2.erriso, std::sqrt(2.0) * (1.21 - 1.0), 1e-13);
  EXPECT_NEAR(e2.err1, 0.1, 1e-13);
  EXPECT_LT(e2.err1_global, 1e-14);
}

TEST(Energy, ShapeMismatchThrows) {
  const auto space = clamped_plate(1);
  const npf::MaterialParams p{1.0, 1.0, 1.0, 1.0};
  EXPECT_THROW(npf::energy(npf::DKTVectorField(3), npf::P1VectorField(space.num_vertices()), p, space),
               npf::ShapeMismatch);
}
