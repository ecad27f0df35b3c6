#pragma once
// Fixed-step BDF1/BDF2 integration of E x' = f(x, u), y = g(x, u) with Newton.

#include <Eigen/SparseLU>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "mqsrom/mqs_system.hpp"

namespace mqsrom {

using InputFunction = std::function<Vector(double)>;

/// Sum of amp * sin(omega * pi * t) terms per channel.
struct SinusoidInput {
  struct Term {
    double amplitude = 0.0;
    double omega = 0.0;
  };
  std::vector<std::vector<Term>> channels;

  Vector operator()(double t) const {
    Vector u(static_cast<Index>(channels.size()));
    for (std::size_t c = 0; c < channels.size(); ++c) {
      double v = 0.0;
      for (const auto& term : channels[c]) v += term.amplitude * std::sin(term.omega * M_PI * t);
      u(static_cast<Index>(c)) = v;
    }
    return u;
  }
  Index size() const { return static_cast<Index>(channels.size()); }
};

/// Training input of the transformer example.
inline SinusoidInput training_input() { return {{{{45.5e3, 900.0}}, {{77e3, 1700.0}}}}; }
/// Test input of the transformer example.
inline SinusoidInput test_input() { return {{{{46.5e3, 1010.0}}, {{78e3, 1900.0}}}}; }

struct TimeGrid {
  std::vector<double> t;

  static TimeGrid uniform(double t0, double t1, int steps) {
    if (steps < 1 || !(t1 > t0)) throw ParameterError("time grid needs t1 > t0 and steps >= 1");
    TimeGrid g;
    g.t.resize(static_cast<std::size_t>(steps) + 1);
    for (int k = 0; k <= steps; ++k) g.t[k] = t0 + (t1 - t0) * k / steps;
    return g;
  }
  static TimeGrid from_nodes(std::vector<double> nodes) {
    if (nodes.size() < 2) throw ParameterError("time grid needs at least two nodes");
    for (std::size_t k = 1; k < nodes.size(); ++k)
      if (!(nodes[k] > nodes[k - 1])) throw ParameterError("time nodes must increase strictly");
    return TimeGrid{std::move(nodes)};
  }
  int steps() const { return static_cast<int>(t.size()) - 1; }
};

enum class Scheme { bdf1, bdf2 };

struct NewtonOptions {
  double tol = 1e-10;
  int max_iterations = 25;
};

struct Trajectory {
  std::vector<double> t;
  DenseMatrix states;   // one column per node
  DenseMatrix inputs;
  DenseMatrix outputs;
  long newton_iterations = 0;
  double max_residual = 0.0;  // largest scaled residual at acceptance

  Index nodes() const { return static_cast<Index>(t.size()); }
};

namespace detail {

template <class M>
struct LinearSolver;

template <>
struct LinearSolver<SparseMatrix> {
  Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
  bool analyzed = false;
  void factor(const SparseMatrix& a) {
    if (!analyzed) {
      lu.analyzePattern(a);
      analyzed = true;
    }
    lu.factorize(a);
    if (lu.info() != Eigen::Success) {
      // Pattern may have changed; retry from scratch.
      lu.analyzePattern(a);
      lu.factorize(a);
      if (lu.info() != Eigen::Success) throw FactorizationError("sparse LU failed: " + lu.lastErrorMessage());
    }
  }
  Vector solve(const Vector& b) { return lu.solve(b); }
};

template <>
struct LinearSolver<DenseMatrix> {
  Eigen::PartialPivLU<DenseMatrix> lu;
  void factor(const DenseMatrix& a) {
    lu.compute(a);
    const Vector d = lu.matrixLU().diagonal().cwiseAbs();
    if (d.size() && !(d.minCoeff() > 1e-300)) throw FactorizationError("dense LU singular", d.minCoeff());
  }
  Vector solve(const Vector& b) { return lu.solve(b); }
};

}  // namespace detail

/// Projects x0 onto the algebraic constraints of E x' = f(x, u0). Returns x0
/// unchanged when f(x0, u0) = 0 or E is nonsingular.
template <class System>
Vector consistent_initial_state(const System& sys, const Vector& x0, const Vector& u0,
                                double tol = 1e-10) {
  const Vector f0 = sys.rhs(x0, u0);
  if (f0.norm() == 0.0) return x0;
  const DenseMatrix e = DenseMatrix(sys.mass());
  const OrthonormalBasis right = kernel_basis(e);
  if (right.dim() == 0) return x0;
  const OrthonormalBasis left = kernel_basis(DenseMatrix(e.transpose()));
  const DenseMatrix& p = left.matrix;
  const DenseMatrix& q = right.matrix;
  Vector x = x0;
  const double scale = 1.0 + x0.norm() + f0.norm();
  for (int it = 0; it < 50; ++it) {
    const Vector g = p.transpose() * sys.rhs(x, u0);
    if (g.norm() <= tol * scale) return x;
    const DenseMatrix jac = p.transpose() * DenseMatrix(sys.jacobian(x)) * q;
    Eigen::CompleteOrthogonalDecomposition<DenseMatrix> cod(jac);
    x -= q * cod.solve(g);
  }
  throw InitialConditionError("initial state could not be made consistent");
}

/// Integrates sys on grid from x0.
template <class System>
Trajectory integrate(const System& sys, const InputFunction& u, const TimeGrid& grid, Vector x0,
                     Scheme scheme = Scheme::bdf1, NewtonOptions opts = {}) {
  using Mat = std::decay_t<decltype(sys.jacobian(x0))>;
  const Index n = sys.dim();
  if (x0.size() != n) throw ParameterError("initial state has wrong dimension");
  const Index nodes = static_cast<Index>(grid.t.size());
  if (nodes < 2) throw ParameterError("time grid needs at least two nodes");

  Trajectory tr;
  tr.t = grid.t;
  const Vector u0 = u(grid.t[0]);
  x0 = consistent_initial_state(sys, x0, u0, opts.tol);
  const Vector y0 = sys.output(x0, u0);
  tr.states.resize(n, nodes);
  tr.inputs.resize(u0.size(), nodes);
  tr.outputs.resize(y0.size(), nodes);
  tr.states.col(0) = x0;
  tr.inputs.col(0) = u0;
  tr.outputs.col(0) = y0;

  const auto& e = sys.mass();
  detail::LinearSolver<Mat> solver;
  for (Index k = 0; k + 1 < nodes; ++k) {
    const double dt = grid.t[k + 1] - grid.t[k];
    const double tn = grid.t[k + 1];
    const Vector un = u(tn);
    double beta;
    Vector xhat;
    if (scheme == Scheme::bdf2 && k >= 1) {
      beta = 2.0 / 3.0;
      xhat = (4.0 / 3.0) * tr.states.col(k) - (1.0 / 3.0) * tr.states.col(k - 1);
    } else {
      beta = 1.0;
      xhat = tr.states.col(k);
    }
    const double h = beta * dt;
    auto residual = [&](const Vector& x) -> Vector {
      return Vector(e * (x - xhat)) / h - sys.rhs(x, un);
    };
    Vector x = tr.states.col(k);
    Vector g = residual(x);
    int it = 0;
    bool converged = false;
    double gnorm = g.norm();
    for (; it < opts.max_iterations; ++it) {
      const double scale = 1.0 + x.norm();
      if (gnorm <= opts.tol * scale) {
        converged = true;
        break;
      }
      Mat jac = sys.jacobian(x);
      Mat a = Mat(e) / h - jac;
      solver.factor(a);
      const Vector delta = solver.solve(-g);
      double lambda = 1.0;
      Vector xn = x + delta;
      Vector gn = residual(xn);
      // Backtrack while the residual grows; keep the full step if no halving helps.
      if (!gn.allFinite() || gn.norm() > gnorm) {
        const Vector x_full = xn, g_full = gn;
        double lam = 1.0;
        bool found = false;
        for (int ls = 0; ls < 30; ++ls) {
          lam *= 0.5;
          const Vector xt = x + lam * delta;
          const Vector gt = residual(xt);
          if (gt.allFinite() && gt.norm() < gnorm) {
            xn = xt;
            gn = gt;
            lambda = lam;
            found = true;
            break;
          }
        }
        if (!found) {
          xn = x_full;
          gn = g_full;
        }
      }
      x = xn;
      g = gn;
      gnorm = g.norm();
      if (!g.allFinite()) break;
      if (lambda == 1.0 && delta.norm() <= opts.tol * (1.0 + x.norm())) {
        ++it;
        converged = true;
        break;
      }
    }
    if (!converged) throw StepFailure(tn, it, gnorm);
    tr.newton_iterations += it;
    tr.max_residual = std::max(tr.max_residual, gnorm / (1.0 + x.norm()));
    tr.states.col(k + 1) = x;
    tr.inputs.col(k + 1) = un;
    tr.outputs.col(k + 1) = sys.output(x, un);
  }
  return tr;
}

/// Rows [first, first + count) of the state trajectory.
inline DenseMatrix snapshots(const Trajectory& tr, Index first, Index count) {
  if (tr.nodes() == 0) throw ParameterError("empty trajectory");
  if (first < 0 || count < 0 || first + count > tr.states.rows()) {
    throw ParameterError("snapshot selector outside the state");
  }
  return tr.states.middleRows(first, count);
}

/// Columns f(x_k) for a state-to-vector map, e.g. the f1 nonlinearity.
inline DenseMatrix snapshots(const Trajectory& tr, const std::function<Vector(const Vector&)>& f) {
  if (tr.nodes() == 0) throw ParameterError("empty trajectory");
  Vector first = f(tr.states.col(0));
  DenseMatrix out(first.size(), tr.nodes());
  out.col(0) = first;
  for (Index k = 1; k < tr.nodes(); ++k) out.col(k) = f(tr.states.col(k));
  return out;
}

/// CSV with header t,x_1..x_n,u_1..u_m,y_1..y_m and 17 significant digits.
inline void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& tr) {
  std::ofstream out(path);
  if (!out) throw IngestionError(IngestionError::Kind::io, "cannot write " + path.string());
  out << 't';
  for (Index i = 0; i < tr.states.rows(); ++i) out << ",x_" << i + 1;
  for (Index i = 0; i < tr.inputs.rows(); ++i) out << ",u_" << i + 1;
  for (Index i = 0; i < tr.outputs.rows(); ++i) out << ",y_" << i + 1;
  out << '\n';
  char buf[40];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    out << buf;
  };
  for (Index k = 0; k < tr.nodes(); ++k) {
    put(tr.t[k]);
    for (Index i = 0; i < tr.states.rows(); ++i) out << ',', put(tr.states(i, k));
    for (Index i = 0; i < tr.inputs.rows(); ++i) out << ',', put(tr.inputs(i, k));
    for (Index i = 0; i < tr.outputs.rows(); ++i) out << ',', put(tr.outputs(i, k));
    out << '\n';
  }
}

/// Reads a trajectory written by write_trajectory_csv.
inline Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  using K = IngestionError::Kind;
  std::ifstream in(path);
  if (!in) throw IngestionError(K::io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IngestionError(K::malformed_header, "empty file " + path.string());
  Index nx = 0, nu = 0, ny = 0;
  {
    std::istringstream hs(line);
    std::string col;
    std::getline(hs, col, ',');
    if (col != "t") throw IngestionError(K::malformed_header, "trajectory header must start with t");
    while (std::getline(hs, col, ',')) {
      if (col.rfind("x_", 0) == 0) ++nx;
      else if (col.rfind("u_", 0) == 0) ++nu;
      else if (col.rfind("y_", 0) == 0) ++ny;
      else throw IngestionError(K::malformed_header, "unknown trajectory column " + col);
    }
  }
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::logic_error&) {
        throw IngestionError(K::malformed_entry, "bad number '" + cell + "' in " + path.string());
      }
    }
    if (static_cast<Index>(v.size()) != 1 + nx + nu + ny) {
      throw IngestionError(K::malformed_entry, "wrong column count in " + path.string());
    }
    rows.push_back(std::move(v));
  }
  Trajectory tr;
  const Index n = static_cast<Index>(rows.size());
  tr.states.resize(nx, n);
  tr.inputs.resize(nu, n);
  tr.outputs.resize(ny, n);
  for (Index k = 0; k < n; ++k) {
    const auto& v = rows[k];
    tr.t.push_back(v[0]);
    for (Index i = 0; i < nx; ++i) tr.states(i, k) = v[1 + i];
    for (Index i = 0; i < nu; ++i) tr.inputs(i, k) = v[1 + nx + i];
    for (Index i = 0; i < ny; ++i) tr.outputs(i, k) = v[1 + nx + nu + i];
  }
  return tr;
}

/// Coupled field/circuit DAE with state [a; i] and output y = i.
class FullSystem {
 public:
  explicit FullSystem(std::shared_ptr<const MqsDae> dae) : dae_(std::move(dae)) {
    const FemProblem& p = dae_->problem();
    const Index n = p.n(), m = p.m;
    std::vector<Triplet> t;
    for (Index k = 0; k < p.M11.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(p.M11, k); it; ++it)
        t.emplace_back(it.row(), it.col(), it.value());
    for (Index k = 0; k < p.X.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(p.X, k); it; ++it)
        t.emplace_back(n + it.col(), it.row(), it.value());
    mass_ = make_sparse(n + m, n + m, t);
    std::vector<Triplet> c;
    for (Index k = 0; k < p.X.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(p.X, k); it; ++it)
        c.emplace_back(it.row(), n + it.col(), it.value());
    for (Index i = 0; i < m; ++i)
      for (Index j = 0; j < m; ++j)
        if (p.R(i, j) != 0.0) c.emplace_back(n + i, n + j, -p.R(i, j));
    coupling_ = make_sparse(n + m, n + m, c);
  }

  Index dim() const { return dae_->n() + dae_->m(); }
  const SparseMatrix& mass() const { return mass_; }

  Vector rhs(const Vector& x, const Vector& u) const {
    const Index n = dae_->n();
    auto [r1, r2] = dae_->eval_rhs(x.head(n), x.tail(dae_->m()), u);
    Vector out(dim());
    out << r1, r2;
    return out;
  }

  SparseMatrix jacobian(const Vector& x) const {
    const Index n = dae_->n();
    const SparseMatrix jk = dae_->jacobian_K(x.head(n));
    std::vector<Triplet> t;
    for (Index k = 0; k < jk.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(jk, k); it; ++it)
        t.emplace_back(it.row(), it.col(), -it.value());
    SparseMatrix j = make_sparse(dim(), dim(), t);
    return SparseMatrix(j + coupling_);
  }

  Vector output(const Vector& x, const Vector&) const { return x.tail(dae_->m()); }

  /// Potential vector a of a state.
  Vector lift(const Vector& x) const { return x.head(dae_->n()); }
  const MqsDae& dae() const { return *dae_; }

 private:
  std::shared_ptr<const MqsDae> dae_;
  SparseMatrix mass_, coupling_;
};

/// Generic system from callbacks, mainly for small test problems.
struct FunctionSystem {
  DenseMatrix E;
  std::function<Vector(const Vector&, const Vector&)> f;
  std::function<DenseMatrix(const Vector&)> jac;
  std::function<Vector(const Vector&, const Vector&)> out;

  Index dim() const { return E.rows(); }
  const DenseMatrix& mass() const { return E; }
  Vector rhs(const Vector& x, const Vector& u) const { return f(x, u); }
  DenseMatrix jacobian(const Vector& x) const { return jac(x); }
  Vector output(const Vector& x, const Vector& u) const { return out ? out(x, u) : x; }
};

}  // namespace mqsrom
