#pragma once
// Projection regularization of the current-eliminated DAE, index-one
// certificate, condensed form, constant output matrix and the ODE form.

#include <filesystem>
#include <random>

#include "mqsrom/bundle.hpp"
#include "mqsrom/mqs_system.hpp"

namespace mqsrom {

/// E_r x_r' = A_r(x_r) x_r + B_r u on x_r = [a1; a21], a = V1 x_r.
class RegularizedSystem {
 public:
  explicit RegularizedSystem(std::shared_ptr<const MqsDae> dae) : dae_(std::move(dae)) {
    const FemProblem& p = dae_->problem();
    const Index n1 = p.n1, n2 = p.n2, m = p.m;
    const SparseMatrix c2 = p.C2();
    if (p.k2 == 0) {
      y_hat_ = DenseMatrix::Identity(n2, n2);
      y_c2_ = DenseMatrix(n2, 0);
    } else {
      y_hat_ = row_space_basis(c2).matrix;
      y_c2_ = kernel_basis(c2).matrix;
    }
    const Index q = y_hat_.cols();
    nr_ = n1 + q;

    std::vector<Triplet> t;
    for (Index i = 0; i < n1; ++i) t.emplace_back(i, i, 1.0);
    for (Index j = 0; j < q; ++j)
      for (Index i = 0; i < n2; ++i)
        if (y_hat_(i, j) != 0.0) t.emplace_back(n1 + i, n1 + j, y_hat_(i, j));
    v1_ = make_sparse(p.n(), nr_, t);
    v1t_ = v1_.transpose();

    er_ = SparseMatrix(v1t_ * dae_->calE() * v1_);
    er_.makeCompressed();
    br_ = v1t_ * dae_->calB();

    // X2^T Yhat has full row rank m.
    const DenseMatrix x2y = DenseMatrix(p.X2()).transpose() * y_hat_;  // m x q
    const ThinSvd s = thin_svd(x2y);
    if (numerical_rank(s.sigma) < m) throw StructuralError("X2 rank deficient after projection");
    y_ = kernel_basis(x2y).matrix;
    const DenseMatrix gram = x2y * x2y.transpose();
    z_hat_ = x2y.transpose() * gram.llt().solve(DenseMatrix::Identity(m, m));
    z_ = x2y.transpose() * spd_inverse_sqrt(symmetrize(gram));
  }

  const MqsDae& dae() const { return *dae_; }
  std::shared_ptr<const MqsDae> dae_ptr() const { return dae_; }
  Index dim() const { return nr_; }
  Index inputs() const { return dae_->m(); }
  Index n1() const { return dae_->n1(); }

  const DenseMatrix& Y_hat() const { return y_hat_; }
  const DenseMatrix& Y_C2() const { return y_c2_; }
  /// Orthonormal basis of ker(X2^T Yhat).
  const DenseMatrix& Y() const { return y_; }
  const DenseMatrix& Z() const { return z_; }
  const DenseMatrix& Z_hat() const { return z_hat_; }
  const SparseMatrix& V1() const { return v1_; }
  const SparseMatrix& E_r() const { return er_; }
  const DenseMatrix& B_r() const { return br_; }

  Vector lift(const Vector& x) const { return v1_ * x; }

  /// A_r(x_r) as a dense matrix.
  DenseMatrix A_r(const Vector& x) const {
    return -DenseMatrix(v1t_ * dae_->assemble_K(lift(x)) * v1_);
  }
  /// Jacobian of x_r -> A_r(x_r) x_r.
  SparseMatrix J_h(const Vector& x) const {
    return SparseMatrix(-(v1t_ * dae_->jacobian_K(lift(x)) * v1_));
  }

  // Integrator interface.
  const SparseMatrix& mass() const { return er_; }
  Vector rhs(const Vector& x, const Vector& u) const {
    return -(v1t_ * dae_->apply_K(lift(x))) + br_ * u;
  }
  SparseMatrix jacobian(const Vector& x) const { return J_h(x); }
  Vector output(const Vector& x, const Vector&) const {
    if (c_r_.rows() == 0) throw ContractViolation("output matrix not attached");
    return c_r_ * x;
  }

  const DenseMatrix& C_r() const { return c_r_; }
  void set_output_matrix(DenseMatrix c) { c_r_ = std::move(c); }

  /// Random states scaled so that the largest element flux equals peak.
  std::vector<Vector> sample_states(int count, unsigned seed, double peak = 1.5) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd;
    std::vector<Vector> out;
    for (int k = 0; k < count; ++k) {
      Vector x(nr_);
      for (Index i = 0; i < nr_; ++i) x(i) = nd(rng);
      const double z = dae_->max_flux(lift(x));
      if (z > 0.0) x *= peak / z;
      out.push_back(std::move(x));
    }
    return out;
  }

 private:
  std::shared_ptr<const MqsDae> dae_;
  Index nr_ = 0;
  DenseMatrix y_hat_, y_c2_, y_, z_, z_hat_;
  SparseMatrix v1_, v1t_, er_;
  DenseMatrix br_, c_r_;
};

struct IndexOneCertificate {
  double sigma_min = 0.0;
  double norm_E_r = 0.0;
  double state_difference = 0.0;  // max pairwise relative difference of G1 over samples
  bool passed = false;
};

inline DenseMatrix index_one_projector(const RegularizedSystem& reg) {
  DenseMatrix q = DenseMatrix::Zero(reg.dim(), reg.dim());
  const Index n1 = reg.n1();
  q.bottomRightCorner(reg.dim() - n1, reg.dim() - n1) = reg.Y() * reg.Y().transpose();
  return q;
}

/// G1 = E_r - J_h(x_r) Q at the given states; passes iff G1 is nonsingular
/// relative to ||E_r|| and identical across the states.
inline IndexOneCertificate check_index_one(const RegularizedSystem& reg,
                                           const std::vector<Vector>& states, double tol = 1e-10) {
  if (states.empty()) throw ParameterError("check_index_one needs at least one state");
  const DenseMatrix q = index_one_projector(reg);
  const DenseMatrix er = DenseMatrix(reg.E_r());
  IndexOneCertificate c;
  c.norm_E_r = spectral_norm(er);
  c.sigma_min = std::numeric_limits<double>::infinity();
  std::vector<DenseMatrix> g;
  for (const auto& x : states) {
    g.push_back(er - DenseMatrix(reg.J_h(x)) * q);
    const ThinSvd s = thin_svd(g.back());
    c.sigma_min = std::min(c.sigma_min, s.sigma(s.sigma.size() - 1));
  }
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = i + 1; j < g.size(); ++j)
      c.state_difference = std::max(c.state_difference, (g[i] - g[j]).norm() / g[i].norm());
  c.passed = c.sigma_min > tol * c.norm_E_r && c.state_difference <= tol;
  return c;
}

struct CondensedForm {
  DenseMatrix W;
  Index ns = 0, n0 = 0, ninf = 0;
  DenseMatrix E11;
  DenseMatrix W1, Y_nu, Y_sigma;
  DenseMatrix E_r_minus;  // symmetric reflexive inverse of E_r
  DenseMatrix Pi_inf;     // projector onto the deflating subspace at infinity
  double e_block_residual = 0.0;
  double a_block_residual = 0.0;

  DenseMatrix A11(const RegularizedSystem& reg, const Vector& x) const {
    return W1.transpose() * reg.A_r(x) * W1;
  }
};

namespace detail {

// ||T - blockdiag(T11, d2 I, d3 I)||_F relative to the pattern norm.
inline double pattern_residual(const DenseMatrix& t, Index ns, Index n0, Index ninf, double d2,
                               double d3) {
  DenseMatrix ref = DenseMatrix::Zero(t.rows(), t.cols());
  ref.topLeftCorner(ns, ns) = t.topLeftCorner(ns, ns);
  ref.block(ns, ns, n0, n0) = d2 * DenseMatrix::Identity(n0, n0);
  ref.block(ns + n0, ns + n0, ninf, ninf) = d3 * DenseMatrix::Identity(ninf, ninf);
  const double on = ref.norm();
  return (t - ref).norm() / (on > 0.0 ? on : 1.0);
}

}  // namespace detail

/// W^T E_r W = diag(E11, I, 0), W^T A_r W = diag(A11, 0, -I).
inline CondensedForm condensed_form(const RegularizedSystem& reg, const std::vector<Vector>& states,
                                    double tol = 1e-10) {
  const FemProblem& p = reg.dae().problem();
  const Index nr = reg.dim(), n1 = reg.n1();
  CondensedForm cf;

  cf.Y_sigma = DenseMatrix::Zero(nr, reg.Y().cols());
  cf.Y_sigma.bottomRows(nr - n1) = reg.Y();
  const SparseMatrix fnu_t = SparseMatrix(p.Cd * reg.V1());
  cf.Y_nu = kernel_basis(fnu_t).matrix;
  cf.n0 = cf.Y_nu.cols();
  cf.ninf = cf.Y_sigma.cols();

  const DenseMatrix er = DenseMatrix(reg.E_r());
  const DenseMatrix a0 = reg.A_r(Vector::Zero(nr));
  const DenseMatrix a_ys = a0 * cf.Y_sigma;  // state independent
  DenseMatrix stacked(nr, cf.n0 + cf.ninf);
  stacked << er * cf.Y_nu, a_ys;
  cf.W1 = kernel_basis(DenseMatrix(stacked.transpose())).matrix;
  cf.ns = cf.W1.cols();
  if (cf.ns + cf.n0 + cf.ninf != nr) {
    throw ConstructionError("condensed form block sizes " + std::to_string(cf.ns) + " + " +
                            std::to_string(cf.n0) + " + " + std::to_string(cf.ninf) +
                            " do not add up to " + std::to_string(nr));
  }
  const DenseMatrix ynu_e = symmetrize(cf.Y_nu.transpose() * er * cf.Y_nu);
  const DenseMatrix ys_a = symmetrize(cf.Y_sigma.transpose() * a_ys);
  cf.W.resize(nr, nr);
  cf.W << cf.W1, cf.Y_nu * spd_inverse_sqrt(ynu_e), cf.Y_sigma * spd_inverse_sqrt(-ys_a);

  const DenseMatrix te = cf.W.transpose() * er * cf.W;
  cf.e_block_residual = detail::pattern_residual(te, cf.ns, cf.n0, cf.ninf, 1.0, 0.0);
  cf.E11 = symmetrize(te.topLeftCorner(cf.ns, cf.ns));
  std::vector<Vector> xs = states;
  xs.push_back(Vector::Zero(nr));
  for (const auto& x : xs) {
    const DenseMatrix ta = cf.W.transpose() * reg.A_r(x) * cf.W;
    cf.a_block_residual = std::max(
        cf.a_block_residual, detail::pattern_residual(ta, cf.ns, cf.n0, cf.ninf, 0.0, -1.0));
  }
  if (cf.e_block_residual > tol || cf.a_block_residual > tol) {
    throw ConstructionError("condensed form block residuals " +
                            std::to_string(cf.e_block_residual) + ", " +
                            std::to_string(cf.a_block_residual) + " exceed tolerance");
  }

  DenseMatrix mid = DenseMatrix::Zero(nr, nr);
  if (cf.ns > 0) {
    mid.topLeftCorner(cf.ns, cf.ns) =
        symmetrize(cf.E11.llt().solve(DenseMatrix::Identity(cf.ns, cf.ns)));
  }
  mid.block(cf.ns, cf.ns, cf.n0, cf.n0) = DenseMatrix::Identity(cf.n0, cf.n0);
  cf.E_r_minus = symmetrize(cf.W * mid * cf.W.transpose());
  if (cf.ninf > 0) {
    cf.Pi_inf = cf.Y_sigma * ys_a.ldlt().solve(a_ys.transpose());
  } else {
    cf.Pi_inf = DenseMatrix::Zero(nr, nr);
  }
  return cf;
}

struct OutputMatrixChecks {
  double state_difference = 0.0;  // max relative ||-B^T E^- A(x) - C_r||
  double r_inverse_residual = 0.0;
};

/// C_r = -[0 Zhat^T] A_r (I - Pi_inf); verified against -B_r^T E_r^- A_r(x).
inline DenseMatrix output_matrix(const RegularizedSystem& reg, const CondensedForm& cf,
                                 const std::vector<Vector>& states, OutputMatrixChecks* checks = nullptr,
                                 double tol = 1e-10) {
  const Index nr = reg.dim(), n1 = reg.n1(), m = reg.inputs();
  DenseMatrix sel = DenseMatrix::Zero(m, nr);
  sel.rightCols(nr - n1) = reg.Z_hat().transpose();
  const DenseMatrix c_r =
      -sel * reg.A_r(Vector::Zero(nr)) * (DenseMatrix::Identity(nr, nr) - cf.Pi_inf);
  OutputMatrixChecks ck;
  const DenseMatrix bte = reg.B_r().transpose() * cf.E_r_minus;
  const double cn = std::max(c_r.norm(), std::numeric_limits<double>::min());
  for (const auto& x : states) {
    const DenseMatrix cx = -bte * reg.A_r(x);
    ck.state_difference = std::max(ck.state_difference, (cx - c_r).norm() / cn);
  }
  const DenseMatrix rinv = reg.dae().R_inverse();
  ck.r_inverse_residual = (bte * reg.B_r() - rinv).norm() / rinv.norm();
  if (checks) *checks = ck;
  if (ck.state_difference > tol) {
    throw ConstructionError("output matrix depends on the state (relative difference " +
                            std::to_string(ck.state_difference) + ")");
  }
  if (ck.r_inverse_residual > tol) {
    throw ConstructionError("B_r^T E_r^- B_r differs from R^{-1} (relative " +
                            std::to_string(ck.r_inverse_residual) + ")");
  }
  return c_r;
}

/// Regularized system with condensed form and output matrix attached.
struct Regularization {
  std::shared_ptr<RegularizedSystem> system;
  CondensedForm condensed;
  OutputMatrixChecks output_checks;
};

inline Regularization regularize(std::shared_ptr<const MqsDae> dae, unsigned seed = 42) {
  Regularization out;
  out.system = std::make_shared<RegularizedSystem>(std::move(dae));
  const auto states = out.system->sample_states(3, seed);
  out.condensed = condensed_form(*out.system, states);
  out.system->set_output_matrix(output_matrix(*out.system, out.condensed, states, &out.output_checks));
  return out;
}

/// Writes W, Yhat_C2 and C_r as Matrix Market files.
inline void dump_transforms(const std::filesystem::path& dir, const Regularization& r) {
  std::filesystem::create_directories(dir);
  write_matrix_market(dir / "W.mtx", r.condensed.W);
  write_matrix_market(dir / "Y_hat_C2.mtx", r.system->Y_hat());
  write_matrix_market(dir / "C_r.mtx", r.system->C_r());
}

/// ODE form on x = [a1; Z^T a21] with a22 = 0.
/// A(x) = A_lin + blockdiag(-K_core(x1), 0): conducting elements only touch a1.
class OdeSystem {
 public:
  explicit OdeSystem(const RegularizedSystem& reg) : dae_(reg.dae_ptr()) {
    const FemProblem& p = dae_->problem();
    const Index n1 = p.n1, n2 = p.n2, m = p.m;
    z2_ = reg.Y_hat() * reg.Z();
    y2_ = reg.Y_hat() * reg.Y();
    const DenseMatrix k = DenseMatrix(dae_->K_linear());
    const DenseMatrix k21 = k.block(n1, 0, n2, n1);
    const DenseMatrix k22 = k.bottomRightCorner(n2, n2);
    // P = Y2 S^{-1} Y2^T with S = Y2^T K22 Y2 SPD.
    DenseMatrix pk = DenseMatrix::Zero(n2, n2);
    if (y2_.cols() > 0) {
      const DenseMatrix s = symmetrize(y2_.transpose() * k22 * y2_);
      Eigen::LLT<DenseMatrix> llt(s);
      if (llt.info() != Eigen::Success) {
        throw FactorizationError("Y2^T K22 Y2 is not positive definite");
      }
      schur_cond_ = 1.0;
      const auto ex = sym_eig_extreme(s);
      schur_cond_ = ex.max / ex.min;
      pk = y2_ * llt.solve(y2_.transpose());
    }
    u_full_ = DenseMatrix::Zero(n1 + n2, n1 + m);
    u_full_.topLeftCorner(n1, n1) = DenseMatrix::Identity(n1, n1);
    u_full_.bottomLeftCorner(n2, n1) = -pk * k21;
    u_full_.bottomRightCorner(n2, m) = z2_ - pk * (k22 * z2_);

    const DenseMatrix ecal = DenseMatrix(dae_->calE());
    e_ = symmetrize(u_full_.transpose() * ecal * u_full_);
    a_lin_ = symmetrize(-(u_full_.transpose() * k * u_full_));
    b_ = u_full_.transpose() * dae_->calB();
    const DenseMatrix core = DenseMatrix::Identity(n2, n2) - k22 * pk;
    DenseMatrix right(n2, n1 + m);
    right << k21, k22 * z2_;
    c_ = reg.Z_hat().transpose() * reg.Y_hat().transpose() * core * right;
  }

  Index dim() const { return e_.rows(); }
  Index n1() const { return dae_->n1(); }
  Index inputs() const { return dae_->m(); }
  const MqsDae& dae() const { return *dae_; }

  const DenseMatrix& E() const { return e_; }
  const DenseMatrix& A_lin() const { return a_lin_; }
  const DenseMatrix& B() const { return b_; }
  const DenseMatrix& C() const { return c_; }
  const DenseMatrix& U_full() const { return u_full_; }
  const DenseMatrix& Z2() const { return z2_; }
  const DenseMatrix& Y2() const { return y2_; }
  double schur_condition() const { return schur_cond_; }

  DenseMatrix A(const Vector& x) const {
    DenseMatrix a = a_lin_;
    a.topLeftCorner(n1(), n1()) -= DenseMatrix(dae_->assemble_K(lift(x)).topLeftCorner(n1(), n1())) -
                                   DenseMatrix(dae_->K_linear().topLeftCorner(n1(), n1()));
    return a;
  }

  /// Full potential a = U_full x (a22 = 0).
  Vector lift(const Vector& x) const { return u_full_ * x; }

  // Integrator interface.
  const DenseMatrix& mass() const { return e_; }
  Vector rhs(const Vector& x, const Vector& u) const {
    Vector r = a_lin_ * x + b_ * u;
    r.head(n1()) += dae_->f1(x.head(n1()));
    return r;
  }
  DenseMatrix jacobian(const Vector& x) const {
    DenseMatrix j = a_lin_;
    j.topLeftCorner(n1(), n1()) += DenseMatrix(dae_->f1_jacobian(x.head(n1())));
    return j;
  }
  Vector output(const Vector& x, const Vector&) const { return c_ * x; }

 private:
  std::shared_ptr<const MqsDae> dae_;
  DenseMatrix z2_, y2_, u_full_, e_, a_lin_, b_, c_;
  double schur_cond_ = 1.0;
};

}  // namespace mqsrom
