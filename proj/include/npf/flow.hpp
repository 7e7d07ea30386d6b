#pragma once

// Alternating semi-implicit gradient flow with node-wise linearised constraints.
//
// Each step solves  (metric + tau * convex) d = -convex * x_old - dN(x_old)
// over the tangent space of the nodal constraints at the previous iterate.
// All constraint rows act on the dofs of a single vertex, so the tangent space is
// a block-diagonal null-space basis T; the saddle-point system is solved in the
// equivalent reduced form  T^T A T x = T^T b,  d = T x  (sparse LDL^T).

#include <Eigen/Dense>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "npf/energy.hpp"
#include "npf/errors.hpp"
#include "npf/fem.hpp"

namespace npf {

/// Inner product (.,.)** used for deformation velocities.
enum class DeformationMetric {
  h2,            // (grad Theta u, grad Theta w)
  h2_grad,       // + (I grad u, I grad w) with P1-interpolated nodal gradients
  h2_grad_value  // + L2 product of P1-interpolated nodal values
};

/// Inner product (.,.)* used for director velocities.
enum class DirectorMetric {
  h1,       // mass + stiffness
  h1_semi,  // stiffness only
  l2        // mass only
};

struct FlowConfig {
  double tau = 0.0125;
  double eps_stop = 2e-3;
  int max_iter = 100000;
  DeformationMetric deformation_metric = DeformationMetric::h2;
  DirectorMetric director_metric = DirectorMetric::h1_semi;
  int trace_every = 1;  // evaluate the full energy every n-th iteration (and at the last one)
  EnergyOptions energy{};

  void validate() const {
    if (!(tau > 0.0)) throw BadConfig("flow: tau must be positive");
    if (!(eps_stop > 0.0)) throw BadConfig("flow: eps_stop must be positive");
    if (max_iter < 1) throw BadConfig("flow: max_iter must be at least 1");
    if (trace_every < 1) throw BadConfig("flow: trace_every must be at least 1");
  }
};

/// Which vertices carry Dirichlet data, plus the optional tangential anchoring rows.
struct BoundaryConditions {
  std::vector<std::uint8_t> deformation_fixed;  // value and gradient prescribed
  std::vector<std::uint8_t> director_fixed;
  bool tangential_anchoring = false;
  /// When non-empty, anchored directors are prescribed in the local frame:
  /// n(z) = R_y(z) nhat(z) with R_y = (d1 y, d2 y, d1 y x d2 y), refreshed after every deformation step.
  std::vector<Eigen::Vector3d> director_local_target;

  /// Gamma_y and pinned vertices fix the deformation, Gamma_n fixes the director.
  static BoundaryConditions from_tags(const Triangulation& t, bool tangential = false) {
    BoundaryConditions bc;
    bc.deformation_fixed.resize(t.num_vertices());
    bc.director_fixed.resize(t.num_vertices());
    for (int v = 0; v < t.num_vertices(); ++v) {
      bc.deformation_fixed[v] = t.has_tag(v, tag::gamma_y) || t.has_tag(v, tag::pinned);
      bc.director_fixed[v] = t.has_tag(v, tag::gamma_n);
    }
    bc.tangential_anchoring = tangential;
    return bc;
  }
};

/// Resets anchored directors to R_y nhat for frame-following anchoring; no-op otherwise.
inline void apply_director_frame(const DKTVectorField& y, P1VectorField& n, const BoundaryConditions& bc) {
  if (bc.director_local_target.empty()) return;
  for (int v = 0; v < n.num_vertices(); ++v) {
    if (!bc.director_fixed[v]) continue;
    const Matrix32 g = y.gradient(v);
    const Eigen::Vector3d& t = bc.director_local_target[v];
    n.set(v, t(0) * g.col(0) + t(1) * g.col(1) + t(2) * g.col(0).cross(g.col(1)));
  }
}

/// Per-vertex orthonormal bases of the admissible velocity directions.
struct TangentBasis {
  int block = 0;                     // dofs per vertex (9 or 3)
  std::vector<Eigen::MatrixXd> per_vertex;  // block x r_v

  int reduced_size() const {
    int m = 0;
    for (const auto& b : per_vertex) m += static_cast<int>(b.cols());
    return m;
  }
  std::vector<int> signature() const {
    std::vector<int> s(per_vertex.size());
    for (std::size_t v = 0; v < per_vertex.size(); ++v) s[v] = static_cast<int>(per_vertex[v].cols());
    return s;
  }
  SparseMatrix matrix() const {
    std::vector<Eigen::Triplet<double>> trip;
    int col = 0;
    for (std::size_t v = 0; v < per_vertex.size(); ++v) {
      const auto& b = per_vertex[v];
      for (int k = 0; k < b.cols(); ++k, ++col)
        for (int i = 0; i < block; ++i) trip.emplace_back(block * static_cast<int>(v) + i, col, b(i, k));
    }
    SparseMatrix t(block * static_cast<int>(per_vertex.size()), col);
    t.setFromTriplets(trip.begin(), trip.end());
    return t;
  }
};

namespace detail {

/// Orthonormal basis of ker(rows) for a small dense row block.
inline Eigen::MatrixXd null_space(const Eigen::MatrixXd& rows) {
  const int n = static_cast<int>(rows.cols());
  if (rows.rows() == 0) return Eigen::MatrixXd::Identity(n, n);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(rows, Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  const double tol = 1e-12 * std::max(1.0, s.size() > 0 ? s(0) : 0.0);
  int rank = 0;
  for (int i = 0; i < s.size(); ++i) rank += s(i) > tol ? 1 : 0;
  return svd.matrixV().rightCols(n - rank);
}

}  // namespace detail

/// Linearised isometry rows sym(grad w^T grad y) = 0 at every free vertex.
inline Eigen::Matrix<double, 3, 6> isometry_rows(const Matrix32& f) {
  Eigen::Matrix<double, 3, 6> l = Eigen::Matrix<double, 3, 6>::Zero();
  l.block<1, 3>(0, 0) = f.col(0).transpose();
  l.block<1, 3>(1, 3) = f.col(1).transpose();
  l.block<1, 3>(2, 0) = f.col(1).transpose();
  l.block<1, 3>(2, 3) = f.col(0).transpose();
  return l;
}

inline TangentBasis deformation_tangent(const DKTVectorField& y, const BoundaryConditions& bc) {
  TangentBasis tb;
  tb.block = 9;
  tb.per_vertex.resize(y.num_vertices());
  for (int v = 0; v < y.num_vertices(); ++v) {
    if (bc.deformation_fixed[v]) {
      tb.per_vertex[v] = Eigen::MatrixXd(9, 0);
      continue;
    }
    const Eigen::MatrixXd ker = detail::null_space(isometry_rows(y.gradient(v)));
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(9, 3 + ker.cols());
    b.topLeftCorner(3, 3).setIdentity();
    b.bottomRightCorner(6, ker.cols()) = ker;
    tb.per_vertex[v] = std::move(b);
  }
  return tb;
}

/// Rows s.n(z) = 0 and, with tangential anchoring, s.b_h(z) = 0.
inline TangentBasis director_tangent(const P1VectorField& n, const DKTVectorField& y, const BoundaryConditions& bc) {
  TangentBasis tb;
  tb.block = 3;
  tb.per_vertex.resize(n.num_vertices());
  for (int v = 0; v < n.num_vertices(); ++v) {
    if (bc.director_fixed[v]) {
      tb.per_vertex[v] = Eigen::MatrixXd(3, 0);
      continue;
    }
    Eigen::MatrixXd rows(bc.tangential_anchoring ? 2 : 1, 3);
    rows.row(0) = n.at(v).transpose();
    if (bc.tangential_anchoring) {
      const Matrix32 g = y.gradient(v);
      rows.row(1) = g.col(0).cross(g.col(1)).transpose();
    }
    tb.per_vertex[v] = detail::null_space(rows);
  }
  return tb;
}

/// Solves T^T A T x = T^T rhs for a fixed SPD-on-the-tangent-space matrix A.
///
/// A is split once into dense vertex blocks; the reduced matrix (lower triangle)
/// is written straight into a CSC pattern that is rebuilt only when the number
/// of tangent directions at some vertex changes.
class ReducedSolver {
 public:
  ReducedSolver() = default;

  ReducedSolver(const SparseMatrix& a, int block) : block_(block) {
    const int nv = static_cast<int>(a.rows()) / block;
    std::map<std::pair<int, int>, int> index;
    for (int col = 0; col < a.outerSize(); ++col)
      for (SparseMatrix::InnerIterator it(a, col); it; ++it) {
        const int v = static_cast<int>(it.row()) / block, w = col / block;
        if (v < w) continue;
        auto [pos, inserted] = index.try_emplace({w, v}, static_cast<int>(blocks_.size()));
        if (inserted) blocks_.push_back({v, w, Eigen::MatrixXd::Zero(block, block), 0});
        blocks_[pos->second].a(it.row() - v * block, col - w * block) = it.value();
      }
    // Column-block major, ascending row block: the order rows appear in each CSC column.
    std::sort(blocks_.begin(), blocks_.end(), [](const Block& x, const Block& y) {
      return x.w != y.w ? x.w < y.w : x.v < y.v;
    });
    num_vertices_ = nv;
  }

  Eigen::VectorXd solve(const TangentBasis& basis, const Eigen::VectorXd& rhs) {
    if (basis.block != block_ || static_cast<int>(basis.per_vertex.size()) != num_vertices_)
      throw ShapeMismatch("flow: tangent basis does not match the system");
    const auto sig = basis.signature();
    if (sig != signature_) rebuild_pattern(sig);
    const int m = static_cast<int>(reduced_.rows());
    Eigen::VectorXd full = Eigen::VectorXd::Zero(rhs.size());
    if (m == 0) return full;

    double* values = reduced_.valuePtr();
    const int* outer = reduced_.outerIndexPtr();
    for (const auto& b : blocks_) {
      const auto& tv = basis.per_vertex[b.v];
      const auto& tw = basis.per_vertex[b.w];
      if (tv.cols() == 0 || tw.cols() == 0) continue;
      const Eigen::MatrixXd r = tv.transpose() * b.a * tw;
      for (int j = 0; j < r.cols(); ++j) {
        double* col = values + outer[offset_[b.w] + j] + b.row_start;
        for (int i = 0; i < r.rows(); ++i) col[i] = r(i, j);
      }
    }
    llt_->factorize(reduced_);
    if (llt_->info() != Eigen::Success) throw SingularSystem("flow: step system is not positive definite on the tangent space");
    const auto& l = llt_->matrixL().nestedExpression();
    double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
    for (int j = 0; j < m; ++j) {
      const double d = l.valuePtr()[l.outerIndexPtr()[j]];
      dmin = std::min(dmin, d * d);
      dmax = std::max(dmax, d * d);
    }
    if (!(dmin > 1e-13 * dmax)) throw SingularSystem("flow: step system is singular on the tangent space");

    Eigen::VectorXd reduced_rhs(m);
    for (int v = 0; v < num_vertices_; ++v) {
      const auto& t = basis.per_vertex[v];
      if (t.cols() > 0) reduced_rhs.segment(offset_[v], t.cols()) = t.transpose() * rhs.segment(block_ * v, block_);
    }
    const Eigen::VectorXd x = llt_->solve(reduced_rhs);
    for (int v = 0; v < num_vertices_; ++v) {
      const auto& t = basis.per_vertex[v];
      if (t.cols() > 0) full.segment(block_ * v, block_) = t * x.segment(offset_[v], t.cols());
    }
    return full;
  }

 private:
  struct Block {
    int v, w;  // row and column vertex, v >= w
    Eigen::MatrixXd a;
    int row_start;  // offset of this block's rows inside each column of column block w
  };

  void rebuild_pattern(const std::vector<int>& sig) {
    offset_.assign(num_vertices_ + 1, 0);
    for (int v = 0; v < num_vertices_; ++v) offset_[v + 1] = offset_[v] + sig[v];
    const int m = offset_[num_vertices_];
    std::vector<Eigen::Triplet<double>> trip;
    std::vector<int> column_fill(num_vertices_, 0);
    for (auto& b : blocks_) {
      b.row_start = column_fill[b.w];
      column_fill[b.w] += sig[b.v];
      for (int j = 0; j < sig[b.w]; ++j)
        for (int i = 0; i < sig[b.v]; ++i) trip.emplace_back(offset_[b.v] + i, offset_[b.w] + j, 0.0);
    }
    reduced_ = SparseMatrix(m, m);
    reduced_.setFromTriplets(trip.begin(), trip.end());
    reduced_.makeCompressed();
    signature_ = sig;
    if (m > 0) llt_->analyzePattern(reduced_);
  }

  int block_ = 0;
  int num_vertices_ = 0;
  std::vector<Block> blocks_;
  std::vector<int> offset_;
  std::vector<int> signature_;
  SparseMatrix reduced_;
  using Factor = Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower, Eigen::AMDOrdering<int>>;
  std::unique_ptr<Factor> llt_ = std::make_unique<Factor>();
};

struct FlowRecord {
  int iteration = 0;
  double step_norm = 0.0;
  double step_norm_y = 0.0;
  double step_norm_n = 0.0;
  std::optional<EnergyBreakdown> energy;
  ConstraintErrors errors;
};

struct FlowTrace {
  std::vector<FlowRecord> records;
  DKTVectorField y;
  P1VectorField n;
  bool converged = false;
  bool max_iter_exceeded = false;

  int iterations() const { return static_cast<int>(records.size()); }
};

struct StepResult {
  Eigen::VectorXd velocity;
  double norm = 0.0;
};

class GradientFlow {
 public:
  GradientFlow(const FeSpace& space, const MaterialParams& params, const FlowConfig& cfg, BoundaryConditions bc)
      : space_(space), params_(params), cfg_(cfg), bc_(std::move(bc)) {
    params_.validate();
    cfg_.validate();
    if (static_cast<int>(bc_.deformation_fixed.size()) != space.num_vertices() ||
        static_cast<int>(bc_.director_fixed.size()) != space.num_vertices())
      throw ShapeMismatch("flow: boundary masks do not match the mesh");

    convex_y_ = assemble_h2_stiffness(space);
    const H1Matrices h1 = assemble_h1(space);
    stiffness_n_ = expand_components(h1.stiffness);

    metric_y_ = convex_y_;
    if (cfg_.deformation_metric != DeformationMetric::h2) metric_y_ += expand_deformation_slots(h1.mass, {1, 2});
    if (cfg_.deformation_metric == DeformationMetric::h2_grad_value) metric_y_ += expand_deformation_slots(h1.mass, {0});
    switch (cfg_.director_metric) {
      case DirectorMetric::h1: metric_n_ = expand_components(h1.mass) + stiffness_n_; break;
      case DirectorMetric::h1_semi: metric_n_ = stiffness_n_; break;
      case DirectorMetric::l2: metric_n_ = expand_components(h1.mass); break;
    }
    bending_coeff_ = (params_.mu + params_.lambda_bar()) / 6.0;
    system_y_ = metric_y_ + (cfg_.tau * bending_coeff_) * convex_y_;
    const double of_coeff = params_.eps_bar * params_.eps_bar;
    system_n_ = metric_n_ + (cfg_.tau * of_coeff) * stiffness_n_;
    solver_y_ = ReducedSolver(system_y_, 9);
    solver_n_ = ReducedSolver(system_n_, 3);
  }

  const FlowConfig& config() const { return cfg_; }
  const SparseMatrix& deformation_metric() const { return metric_y_; }
  const SparseMatrix& director_metric() const { return metric_n_; }
  const SparseMatrix& deformation_system() const { return system_y_; }
  const SparseMatrix& director_system() const { return system_n_; }
  const SparseMatrix& bending_stiffness() const { return convex_y_; }
  const SparseMatrix& director_stiffness() const { return stiffness_n_; }
  double bending_coefficient() const { return bending_coeff_; }

  /// Right-hand side of the deformation step at the previous iterate.
  Eigen::VectorXd deformation_rhs(const DKTVectorField& y, const P1VectorField& n) const {
    return -bending_coeff_ * (convex_y_ * y.data) - grad_y(y, n, params_, space_, cfg_.energy);
  }
  Eigen::VectorXd director_rhs(const DKTVectorField& y, const P1VectorField& n) const {
    return -(params_.eps_bar * params_.eps_bar) * (stiffness_n_ * n.data) - grad_n(y, n, params_, space_, cfg_.energy);
  }

  /// Updates y in place; constraints are linearised at the incoming y.
  StepResult deformation_step(DKTVectorField& y, const P1VectorField& n) {
    const TangentBasis basis = deformation_tangent(y, bc_);
    StepResult r;
    r.velocity = solver_y_.solve(basis, deformation_rhs(y, n));
    r.norm = std::sqrt(std::abs(r.velocity.dot(metric_y_ * r.velocity)));
    y.data += cfg_.tau * r.velocity;
    return r;
  }

  /// Updates n in place using the already updated deformation y.
  StepResult director_step(const DKTVectorField& y, P1VectorField& n) {
    const TangentBasis basis = director_tangent(n, y, bc_);
    StepResult r;
    r.velocity = solver_n_.solve(basis, director_rhs(y, n));
    r.norm = std::sqrt(std::abs(r.velocity.dot(metric_n_ * r.velocity)));
    n.data += cfg_.tau * r.velocity;
    return r;
  }

  /// Iterates both steps until the combined velocity norm drops below eps_stop.
  template <class Observer>
  FlowTrace run(DKTVectorField y, P1VectorField n, Observer&& observe) {
    FlowTrace trace;
    for (int k = 1; k <= cfg_.max_iter; ++k) {
      FlowRecord rec;
      rec.iteration = k;
      rec.step_norm_y = deformation_step(y, n).norm;
      apply_director_frame(y, n, bc_);
      rec.step_norm_n = director_step(y, n).norm;
      rec.step_norm = std::sqrt(rec.step_norm_y * rec.step_norm_y + rec.step_norm_n * rec.step_norm_n);
      if (!std::isfinite(rec.step_norm)) throw Diverged("flow: non-finite step at iteration " + std::to_string(k));
      const bool done = rec.step_norm < cfg_.eps_stop;
      if (done || k == cfg_.max_iter || k % cfg_.trace_every == 0) {
        rec.energy = energy(y, n, params_, space_, cfg_.energy);
        rec.errors = err_metrics(y, n);
      }
      trace.records.push_back(rec);
      observe(trace.records.back());
      if (done) {
        trace.converged = true;
        break;
      }
    }
    trace.max_iter_exceeded = !trace.converged;
    trace.y = std::move(y);
    trace.n = std::move(n);
    return trace;
  }

  FlowTrace run(DKTVectorField y, P1VectorField n) {
    return run(std::move(y), std::move(n), [](const FlowRecord&) {});
  }

 private:
  const FeSpace& space_;
  MaterialParams params_;
  FlowConfig cfg_;
  BoundaryConditions bc_;
  SparseMatrix convex_y_, stiffness_n_, metric_y_, metric_n_, system_y_, system_n_;
  double bending_coeff_ = 0.0;
  ReducedSolver solver_y_, solver_n_;
};

}  // namespace npf
