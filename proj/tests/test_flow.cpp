#include <gtest/gtest.h>

#include <random>

#include "npf/flow.hpp"
#include "npf/verify.hpp"

namespace {

using npf::Matrix32;

npf::FeSpace plate(int k, bool anchored = true) {
  npf::DomainSpec d;
  d.level = k;
  d.gamma_y = {d.side(npf::Side::left)};
  if (anchored) d.gamma_n = d.gamma_y;
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

npf::P1VectorField twisted(const npf::Triangulation& t) {
  return npf::p1_interpolate(
      [](const Eigen::Vector2d& x) {
        const double a = 0.8 * (x.x() + 1.0);
        return Eigen::Vector3d(std::cos(a), std::sin(a) * std::cos(x.y()), std::sin(a) * std::sin(x.y()));
      },
      t);
}

/// Dense saddle-point solve [A C^T; C 0] [d; l] = [b; 0] with one row per constraint.
Eigen::VectorXd dense_kkt(const npf::SparseMatrix& a, const Eigen::VectorXd& b, const Eigen::MatrixXd& c) {
  const int n = static_cast<int>(a.rows()), m = static_cast<int>(c.rows());
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(n + m, n + m);
  k.topLeftCorner(n, n) = Eigen::MatrixXd(a);
  k.bottomLeftCorner(m, n) = c;
  k.topRightCorner(n, m) = c.transpose();
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + m);
  rhs.head(n) = b;
  return k.fullPivLu().solve(rhs).head(n);
}

/// Deformation constraint rows: full Dirichlet rows at fixed vertices, linearised isometry elsewhere.
Eigen::MatrixXd deformation_rows(const npf::DKTVectorField& y, const npf::BoundaryConditions& bc) {
  std::vector<Eigen::RowVectorXd> rows;
  const int n = static_cast<int>(y.data.size());
  for (int v = 0; v < y.num_vertices(); ++v) {
    if (bc.deformation_fixed[v]) {
      for (int i = 0; i < 9; ++i) rows.push_back(Eigen::RowVectorXd::Unit(n, 9 * v + i));
      continue;
    }
    const Matrix32 f = y.gradient(v);
    // sym(grad w^T F) = 0: w_1.F_1 = 0, w_2.F_2 = 0, w_1.F_2 + w_2.F_1 = 0
    Eigen::RowVectorXd r0 = Eigen::RowVectorXd::Zero(n), r1 = r0, r2 = r0;
    for (int c = 0; c < 3; ++c) {
      r0(npf::dkt_dof(v, 1, c)) = f(c, 0);
      r1(npf::dkt_dof(v, 2, c)) = f(c, 1);
      r2(npf::dkt_dof(v, 1, c)) = f(c, 1);
      r2(npf::dkt_dof(v, 2, c)) = f(c, 0);
    }
    rows.insert(rows.end(), {r0, r1, r2});
  }
  Eigen::MatrixXd c(rows.size(), n);
  for (std::size_t i = 0; i < rows.size(); ++i) c.row(i) = rows[i];
  return c;
}

Eigen::MatrixXd director_rows(const npf::P1VectorField& n, const npf::DKTVectorField& y,
                              const npf::BoundaryConditions& bc) {
  std::vector<Eigen::RowVectorXd> rows;
  const int m = static_cast<int>(n.data.size());
  for (int v = 0; v < n.num_vertices(); ++v) {
    if (bc.director_fixed[v]) {
      for (int i = 0; i < 3; ++i) rows.push_back(Eigen::RowVectorXd::Unit(m, 3 * v + i));
      continue;
    }
    Eigen::RowVectorXd r = Eigen::RowVectorXd::Zero(m);
    r.segment<3>(3 * v) = n.at(v).transpose();
    rows.push_back(r);
    if (bc.tangential_anchoring) {
      const Matrix32 g = y.gradient(v);
      r.segment<3>(3 * v) = g.col(0).cross(g.col(1)).transpose();
      rows.push_back(r);
    }
  }
  Eigen::MatrixXd c(rows.size(), m);
  for (std::size_t i = 0; i < rows.size(); ++i) c.row(i) = rows[i];
  return c;
}

npf::FlowConfig config(double tau = 0.025) {
  npf::FlowConfig c;
  c.tau = tau;
  return c;
}

}  // namespace

TEST(Flow, NullSpaceIsOrthonormal) {
  const Matrix32 f = (Matrix32() << 1.0, 0.2, -0.1, 0.9, 0.3, 0.1).finished();
  const Eigen::MatrixXd k = npf::detail::null_space(npf::isometry_rows(f));
  ASSERT_EQ(k.cols(), 3);
  EXPECT_LT((k.transpose() * k - Eigen::Matrix3d::Identity()).norm(), 1e-14);
  EXPECT_LT((npf::isometry_rows(f) * k).norm(), 1e-14);
  EXPECT_EQ(npf::detail::null_space(Eigen::MatrixXd(0, 4)).cols(), 4);
}

TEST(Flow, DeformationStepMatchesDenseKkt) {
  for (const auto metric : {npf::DeformationMetric::h2, npf::DeformationMetric::h2_grad,
                            npf::DeformationMetric::h2_grad_value}) {
    const auto space = plate(2);
    std::mt19937_64 rng(41);
    auto [y, n] = npf::random_state(space.mesh(), rng, 0.1);
    const auto bc = npf::BoundaryConditions::from_tags(space.mesh());
    auto cfg = config();
    cfg.deformation_metric = metric;
    npf::GradientFlow flow(space, {1.0, 1000.0, 1.0, 1.0}, cfg, bc);
    const Eigen::VectorXd oracle =
        dense_kkt(flow.deformation_system(), flow.deformation_rhs(y, n), deformation_rows(y, bc));
    const auto step = flow.deformation_step(y, n);
    EXPECT_LE((step.velocity - oracle).norm(), 1e-10 * std::max(1.0, oracle.norm()));
    EXPECT_GT(oracle.norm(), 1e-3);
  }
}

TEST(Flow, DirectorStepMatchesDenseKkt) {
  for (const bool tangential : {false, true}) {
    for (const auto metric : {npf::DirectorMetric::h1, npf::DirectorMetric::h1_semi, npf::DirectorMetric::l2}) {
      const auto space = plate(2);
      std::mt19937_64 rng(42);
      auto [y, n] = npf::random_state(space.mesh(), rng, 0.1);
      const auto bc = npf::BoundaryConditions::from_tags(space.mesh(), tangential);
      auto cfg = config();
      cfg.director_metric = metric;
      npf::GradientFlow flow(space, {1.0, 1000.0, 1.0, 1.0}, cfg, bc);
      const Eigen::VectorXd oracle = dense_kkt(flow.director_system(), flow.director_rhs(y, n), director_rows(n, y, bc));
      const auto step = flow.director_step(y, n);
      EXPECT_LE((step.velocity - oracle).norm(), 1e-10 * std::max(1.0, oracle.norm()));
      EXPECT_GT(oracle.norm(), 1e-3);
    }
  }
}

TEST(Flow, VelocitiesLieInTangentSpace) {
  const auto space = plate(2);
  std::mt19937_64 rng(43);
  auto [y, n] = npf::random_state(space.mesh(), rng, 0.1);
  const auto bc = npf::BoundaryConditions::from_tags(space.mesh(), true);
  npf::GradientFlow flow(space, {1.0, 1000.0, 2.0, 1.0}, config(), bc);
  for (int it = 0; it < 5; ++it) {
    const auto y_old = y;
    const auto dy = flow.deformation_step(y, n);
    const double ry = (deformation_rows(y_old, bc) * dy.velocity).cwiseAbs().maxCoeff();
    EXPECT_LE(ry, 1e-9 * (1.0 + dy.velocity.norm()));
    const auto n_old = n;
    const auto dn = flow.director_step(y, n);
    const double rn = (director_rows(n_old, y, bc) * dn.velocity).cwiseAbs().maxCoeff();
    EXPECT_LE(rn, 1e-9 * (1.0 + dn.velocity.norm()));
  }
}

TEST(Flow, DirichletDofsAreBitIdentical) {
  const auto space = plate(2);
  const auto y0 = flat(space.mesh());
  const auto n0 = twisted(space.mesh());
  const auto bc = npf::BoundaryConditions::from_tags(space.mesh());
  auto cfg = config();
  cfg.max_iter = 30;
  npf::GradientFlow flow(space, {1.0, 1000.0, 1.0, 1.0}, cfg, bc);
  const auto trace = flow.run(y0, n0);
  for (int v = 0; v < space.num_vertices(); ++v) {
    if (bc.deformation_fixed[v])
      for (int i = 0; i < 9; ++i) EXPECT_EQ(trace.y.data(9 * v + i), y0.data(9 * v + i));
    if (bc.director_fixed[v])
      for (int i = 0; i < 3; ++i) EXPECT_EQ(trace.n.data(3 * v + i), n0.data(3 * v + i));
  }
}

TEST(Flow, FullyClampedSquareDoesNotMove) {
  npf::DomainSpec d;
  d.box = {0.0, 1.0, 0.0, 1.0};
  d.level = 0;
  for (auto s : {npf::Side::left, npf::Side::right, npf::Side::bottom, npf::Side::top}) d.gamma_y.push_back(d.side(s));
  d.gamma_n = d.gamma_y;
  const npf::FeSpace space(npf::generate(d));
  ASSERT_EQ(space.num_triangles(), 2);
  auto y = flat(space.mesh());
  auto n = twisted(space.mesh());
  npf::GradientFlow flow(space, {1.0, 1000.0, 3.0, 1.0}, config(), npf::BoundaryConditions::from_tags(space.mesh()));
  EXPECT_EQ(flow.deformation_step(y, n).velocity.norm(), 0.0);
  EXPECT_EQ(flow.director_step(y, n).velocity.norm(), 0.0);
}

TEST(Flow, ConstantDirectorIsStationaryWithoutCoupling) {
  const auto space = plate(2, false);
  auto y = cylinder(space.mesh(), 1.3);
  auto n = npf::p1_interpolate([](const Eigen::Vector2d&) { return Eigen::Vector3d(0.0, 0.6, 0.8); }, space.mesh());
  auto cfg = config();
  cfg.director_metric = npf::DirectorMetric::h1;
  npf::GradientFlow flow(space, {1.0, 1000.0, 0.0, 2.5}, cfg, npf::BoundaryConditions::from_tags(space.mesh()));
  EXPECT_LT(flow.director_step(y, n).velocity.norm(), 1e-12);
}

TEST(Flow, StationaryFlatStateStopsAtFirstIteration) {
  const auto space = plate(2);
  auto cfg = config();
  npf::GradientFlow flow(space, {1.0, 1000.0, 0.0, 0.0}, cfg, npf::BoundaryConditions::from_tags(space.mesh()));
  const auto trace = flow.run(flat(space.mesh()), twisted(space.mesh()));
  ASSERT_EQ(trace.iterations(), 1);
  EXPECT_TRUE(trace.converged);
  EXPECT_FALSE(trace.max_iter_exceeded);
  EXPECT_LT(trace.records[0].step_norm, 1e-12);
  ASSERT_TRUE(trace.records[0].energy.has_value());
}

TEST(Flow, EnergyDecreasesWithoutCoupling) {
  const auto space = plate(2);
  auto cfg = config(0.05);
  cfg.max_iter = 100;
  cfg.eps_stop = 1e-14;
  npf::GradientFlow flow(space, {1.0, 1000.0, 0.0, 1.0}, cfg, npf::BoundaryConditions::from_tags(space.mesh()));
  const auto trace = flow.run(cylinder(space.mesh(), 1.0), twisted(space.mesh()));
  ASSERT_EQ(trace.iterations(), 100);
  for (int k = 1; k < trace.iterations(); ++k) {
    const double prev = trace.records[k - 1].energy->total, cur = trace.records[k].energy->total;
    EXPECT_LE(cur, prev + 1e-12 * (1.0 + std::abs(prev)));
  }
  EXPECT_TRUE(trace.max_iter_exceeded);
}

TEST(Flow, RunsAreDeterministic) {
  const auto space = plate(2);
  auto cfg = config();
  cfg.max_iter = 20;
  npf::GradientFlow a(space, {1.0, 1000.0, 1.0, 1.0}, cfg, npf::BoundaryConditions::from_tags(space.mesh()));
  npf::GradientFlow b(space, {1.0, 1000.0, 1.0, 1.0}, cfg, npf::BoundaryConditions::from_tags(space.mesh()));
  const auto ta = a.run(flat(space.mesh()), twisted(space.mesh()));
  const auto tb = b.run(flat(space.mesh()), twisted(space.mesh()));
  EXPECT_EQ(ta.y.data, tb.y.data);
  EXPECT_EQ(ta.n.data, tb.n.data);
}

TEST(Flow, TraceEveryControlsEnergyEvaluation) {
  const auto space = plate(1);
  auto cfg = config();
  cfg.max_iter = 10;
  cfg.eps_stop = 1e-14;
  cfg.trace_every = 4;
  npf::GradientFlow flow(space, {1.0, 1000.0, 1.0, 1.0}, cfg, npf::BoundaryConditions::from_tags(space.mesh()));
  int seen = 0;
  const auto trace = flow.run(flat(space.mesh()), twisted(space.mesh()), [&](const npf::FlowRecord&) { ++seen; });
  EXPECT_EQ(seen, 10);
  for (const auto& r : trace.records) EXPECT_EQ(r.energy.has_value(), r.iteration % 4 == 0 || r.iteration == 10);
}

TEST(Flow, UnanchoredDeformationIsSingular) {
  npf::DomainSpec d;
  d.level = 1;
  const npf::FeSpace space(npf::generate(d));
  auto y = flat(space.mesh());
  auto n = twisted(space.mesh());
  npf::GradientFlow flow(space, {1.0, 1000.0, 1.0, 1.0}, config(), npf::BoundaryConditions::from_tags(space.mesh()));
  EXPECT_THROW(flow.deformation_step(y, n), npf::SingularSystem);
}

TEST(Flow, PinnedVertexMakesDeformationStepWellPosed) {
  npf::DomainSpec d;
  d.level = 1;
  d.pinned = Eigen::Vector2d(-1.0, -1.0);
  const npf::FeSpace space(npf::generate(d));
  auto y = flat(space.mesh());
  auto n = twisted(space.mesh());
  npf::GradientFlow flow(space, {1.0, 1000.0, 1.0, 1.0}, config(), npf::BoundaryConditions::from_tags(space.mesh()));
  const auto s = flow.deformation_step(y, n);
  EXPECT_TRUE(std::isfinite(s.norm));
}

TEST(Flow, FrameFollowingAnchoring) {
  const auto space = plate(1);
  auto bc = npf::BoundaryConditions::from_tags(space.mesh());
  bc.director_local_target.assign(space.num_vertices(), Eigen::Vector3d(0.0, 1.0, 0.0));
  const auto y = cylinder(space.mesh(), 0.8);
  npf::P1VectorField n(space.num_vertices());
  npf::apply_director_frame(y, n, bc);
  for (int v = 0; v < space.num_vertices(); ++v) {
    if (bc.director_fixed[v])
      EXPECT_LT((n.at(v) - y.gradient(v).col(1)).norm(), 1e-15);
    else
      EXPECT_EQ(n.at(v).norm(), 0.0);
  }
}

TEST(Flow, ConfigValidation) {
  npf::FlowConfig c;
  c.tau = 0.0;
  EXPECT_THROW(c.validate(), npf::BadConfig);
  c = {};
  c.max_iter = 0;
  EXPECT_THROW(c.validate(), npf::BadConfig);
  const auto space = plate(1);
  npf::BoundaryConditions bc;
  EXPECT_THROW(npf::GradientFlow(space, {1.0, 1.0, 1.0, 1.0}, npf::FlowConfig{}, bc), npf::ShapeMismatch);
}
