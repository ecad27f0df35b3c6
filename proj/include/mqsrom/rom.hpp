#pragma once
// POD and POD-DEIM reduced models of the ODE form.

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mqsrom/regularization.hpp"

namespace mqsrom {

/// Rank selection: a fixed r, or the smallest k with sigma_{k+1} / sigma_1 <= tol.
struct RankRule {
  enum class Kind { fixed, tolerance };
  Kind kind = Kind::tolerance;
  Index r = 0;
  double tol = 1e-7;

  static RankRule fixed(Index r) { return {Kind::fixed, r, 0.0}; }
  static RankRule tolerance(double tol) { return {Kind::tolerance, 0, tol}; }
};

struct PodBasis {
  DenseMatrix U;
  Vector sigma;
  Index rank = 0;  // numerical rank of the snapshot matrix
  std::vector<std::string> warnings;
  Index r() const { return U.cols(); }
};

inline PodBasis pod_basis(const DenseMatrix& x, const RankRule& rule) {
  if (x.size() == 0 || x.norm() == 0.0) throw ParameterError("pod_basis: snapshot matrix is zero");
  const ThinSvd s = thin_svd(x);
  PodBasis out;
  out.sigma = s.sigma;
  out.rank = numerical_rank(s.sigma);
  Index r = 0;
  if (rule.kind == RankRule::Kind::fixed) {
    if (rule.r < 1) throw ParameterError("pod_basis: r must be positive");
    r = rule.r;
  } else {
    if (!(rule.tol > 0.0)) throw ParameterError("pod_basis: tolerance must be positive");
    r = s.sigma.size();
    for (Index k = 1; k < s.sigma.size(); ++k) {
      if (s.sigma(k) / s.sigma(0) <= rule.tol) {
        r = k;
        break;
      }
    }
  }
  if (r > out.rank) {
    out.warnings.push_back("requested rank " + std::to_string(r) + " exceeds snapshot rank " +
                           std::to_string(out.rank) + "; clipped");
    r = out.rank;
  }
  out.U = s.U.leftCols(r);
  return out;
}

/// Greedy DEIM indices; ties go to the smallest row index.
inline std::vector<Index> deim_select(const DenseMatrix& uf) {
  const Index n = uf.rows(), l = uf.cols();
  if (l == 0) throw ParameterError("deim_select: empty basis");
  if (l > n) throw ParameterError("deim_select: more columns than rows");
  std::vector<Index> k;
  auto argmax = [&](const Vector& r) {
    Index best = 0;
    for (Index i = 1; i < r.size(); ++i)
      if (std::abs(r(i)) > std::abs(r(best))) best = i;
    return best;
  };
  for (Index i = 0; i < l; ++i) {
    Vector r = uf.col(i);
    if (i > 0) {
      DenseMatrix pu(i, i);
      Vector pv(i);
      for (Index a = 0; a < i; ++a) {
        pu.row(a) = uf.row(k[a]).head(i);
        pv(a) = uf(k[a], i);
      }
      r -= uf.leftCols(i) * pu.partialPivLu().solve(pv);
    }
    const Index j = argmax(r);
    if (!(std::abs(r(j)) > 0.0)) throw StructuralError("deim_select: degenerate basis column");
    k.push_back(j);
  }
  return k;
}

/// Galerkin projection of the ODE form with U = U_full blockdiag(U1, I_m).
class RomPod {
 public:
  RomPod(std::shared_ptr<const OdeSystem> ode, DenseMatrix u1) : ode_(std::move(ode)), u1_(std::move(u1)) {
    const Index n1 = ode_->n1(), m = ode_->inputs(), r = u1_.cols();
    if (u1_.rows() != n1) throw ParameterError("POD basis must have n1 rows");
    const double orth = (u1_.transpose() * u1_ - DenseMatrix::Identity(r, r)).norm();
    if (orth > 1e-12 * std::max<double>(1.0, std::sqrt(double(r)))) {
      throw ContractViolation("POD basis is not orthonormal (" + std::to_string(orth) + ")");
    }
    ut_ = DenseMatrix::Zero(n1 + m, r + m);
    ut_.topLeftCorner(n1, r) = u1_;
    ut_.bottomRightCorner(m, m) = DenseMatrix::Identity(m, m);
    u_ = ode_->U_full() * ut_;
    e_ = symmetrize(ut_.transpose() * ode_->E() * ut_);
    a_l_ = symmetrize(ut_.transpose() * ode_->A_lin() * ut_);
    b_ = ut_.transpose() * ode_->B();
    c_ = ode_->C() * ut_;

    const MqsDae& dae = ode_->dae();
    DenseMatrix alt = u_.transpose() * dae.calB() * dae.problem().R * dae.calB().transpose() * u_;
    alt.topLeftCorner(r, r) += u1_.transpose() * DenseMatrix(dae.problem().M11) * u1_;
    e_identity_residual_ = (alt - e_).norm() / e_.norm();
    if (e_identity_residual_ > 1e-10) {
      throw ConstructionError("reduced E differs from blockdiag(U1^T M11 U1, 0) + U^T B R B^T U");
    }
  }

  Index dim() const { return e_.rows(); }
  Index r() const { return u1_.cols(); }
  Index inputs() const { return ode_->inputs(); }
  const OdeSystem& ode() const { return *ode_; }
  std::shared_ptr<const OdeSystem> ode_ptr() const { return ode_; }
  const DenseMatrix& U1() const { return u1_; }
  const DenseMatrix& U_tilde() const { return ut_; }
  /// a = U x.
  const DenseMatrix& U() const { return u_; }
  const DenseMatrix& E() const { return e_; }
  const DenseMatrix& A_l() const { return a_l_; }
  const DenseMatrix& B() const { return b_; }
  const DenseMatrix& C() const { return c_; }
  double e_identity_residual() const { return e_identity_residual_; }

  Vector lift(const Vector& x) const { return u_ * x; }
  Vector to_ode(const Vector& x) const { return ut_ * x; }

  /// A(x) = -U^T K(U x) U.
  DenseMatrix A(const Vector& x) const {
    return symmetrize(-(u_.transpose() * DenseMatrix(ode_->dae().assemble_K(lift(x))) * u_));
  }

  /// -U^T K(Ux) Ux + B u evaluated without the split.
  Vector rhs_unsplit(const Vector& x, const Vector& u) const {
    return -(u_.transpose() * ode_->dae().apply_K(lift(x))) + b_ * u;
  }

  // Integrator interface.
  const DenseMatrix& mass() const { return e_; }
  Vector rhs(const Vector& x, const Vector& u) const {
    Vector out = a_l_ * x + b_ * u;
    out.head(r()) += u1_.transpose() * ode_->dae().f1(u1_ * x.head(r()));
    return out;
  }
  DenseMatrix jacobian(const Vector& x) const {
    DenseMatrix j = a_l_;
    j.topLeftCorner(r(), r()) += u1_.transpose() * (ode_->dae().f1_jacobian(u1_ * x.head(r())) * u1_);
    return j;
  }
  Vector output(const Vector& x, const Vector&) const { return c_ * x; }

 private:
  std::shared_ptr<const OdeSystem> ode_;
  DenseMatrix u1_, ut_, u_, e_, a_l_, b_, c_;
  double e_identity_residual_ = 0.0;
};

/// POD-DEIM model: the nonlinearity is evaluated only on the sampled rows.
class RomDeim {
 public:
  RomDeim(std::shared_ptr<const RomPod> pod, DenseMatrix uf, std::vector<Index> indices = {})
      : pod_(std::move(pod)), uf_(std::move(uf)) {
    const MqsDae& dae = pod_->ode().dae();
    const Index n1 = dae.n1(), l = uf_.cols();
    if (uf_.rows() != n1 || l == 0) throw ParameterError("DEIM basis must be n1 x l with l >= 1");
    k_ = indices.empty() ? deim_select(uf_) : std::move(indices);
    if (static_cast<Index>(k_.size()) != l) throw ParameterError("DEIM index count differs from l");
    std::vector<Index> sorted = k_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end() || sorted.front() < 0 ||
        sorted.back() >= n1) {
      throw ParameterError("DEIM indices must be distinct rows of f1");
    }
    DenseMatrix p(l, l);
    for (Index i = 0; i < l; ++i) p.row(i) = uf_.row(k_[i]);
    const ThinSvd s = thin_svd(p);
    if (!(s.sigma(l - 1) > 1e-14 * s.sigma(0))) {
      throw FactorizationError("S_K^T U_f1 is singular", s.sigma(l - 1));
    }
    cond_ = s.sigma(0) / s.sigma(l - 1);
    p_inv_norm_ = 1.0 / s.sigma(l - 1);
    m_deim_ = pod_->U1().transpose() * uf_ * p.partialPivLu().inverse();

    // Elements feeding the sampled rows and the a1 DOFs they read.
    std::vector<char> want(n1, 0);
    for (Index k : k_) want[k] = 1;
    row_pos_.assign(n1, -1);
    for (Index i = 0; i < l; ++i) row_pos_[k_[i]] = i;
    std::vector<Index> dof_pos(n1, -1);
    for (Index e : dae.core_elements()) {
      const auto& el = dae.elements()[e];
      bool hit = false;
      for (Index d : el.dofs) hit = hit || want[d];
      if (!hit) continue;
      elements_.push_back(e);
      for (Index d : el.dofs) {
        if (dof_pos[d] < 0) {
          dof_pos[d] = static_cast<Index>(dofs_.size());
          dofs_.push_back(d);
        }
      }
    }
    local_.resize(elements_.size());
    for (std::size_t i = 0; i < elements_.size(); ++i) {
      for (Index d : dae.elements()[elements_[i]].dofs) local_[i].push_back(dof_pos[d]);
    }
    u1_sub_.resize(static_cast<Index>(dofs_.size()), pod_->r());
    for (std::size_t i = 0; i < dofs_.size(); ++i) u1_sub_.row(i) = pod_->U1().row(dofs_[i]);
  }

  Index dim() const { return pod_->dim(); }
  Index l() const { return uf_.cols(); }
  Index r() const { return pod_->r(); }
  Index inputs() const { return pod_->inputs(); }
  const RomPod& pod() const { return *pod_; }
  const DenseMatrix& U_f1() const { return uf_; }
  const std::vector<Index>& indices() const { return k_; }
  const DenseMatrix& M_deim() const { return m_deim_; }
  double sampling_condition() const { return cond_; }
  /// ||(S_K^T U_f1)^{-1}||_2.
  double sampling_inverse_norm() const { return p_inv_norm_; }
  /// Number of conducting elements evaluated per nonlinearity call.
  Index sampled_elements() const { return static_cast<Index>(elements_.size()); }

  /// S_K^T f1(U1 a_hat) from the sampled elements only.
  Vector sampled_f1(const Vector& a_hat) const {
    const MqsDae& dae = pod_->ode().dae();
    const Vector a = u1_sub_ * a_hat;
    Vector out = Vector::Zero(l());
    for (std::size_t i = 0; i < elements_.size(); ++i) {
      const auto& el = dae.elements()[elements_[i]];
      Vector loc(static_cast<Index>(local_[i].size()));
      for (std::size_t k = 0; k < local_[i].size(); ++k) loc(k) = a(local_[i][k]);
      const Vector f = dae.element_force_nonlinear(el, loc);
      for (std::size_t k = 0; k < el.dofs.size(); ++k) {
        const Index pos = row_pos_[el.dofs[k]];
        if (pos >= 0) out(pos) -= f(k);
      }
    }
    return out;
  }

  /// d/d a_hat of S_K^T f1(U1 a_hat), l x r.
  DenseMatrix sampled_f1_jacobian(const Vector& a_hat) const {
    const MqsDae& dae = pod_->ode().dae();
    const Vector a = u1_sub_ * a_hat;
    DenseMatrix js = DenseMatrix::Zero(l(), static_cast<Index>(dofs_.size()));
    for (std::size_t i = 0; i < elements_.size(); ++i) {
      const auto& el = dae.elements()[elements_[i]];
      Vector loc(static_cast<Index>(local_[i].size()));
      for (std::size_t k = 0; k < local_[i].size(); ++k) loc(k) = a(local_[i][k]);
      const DenseMatrix je = dae.element_jacobian_nonlinear(el, loc);
      for (std::size_t p = 0; p < el.dofs.size(); ++p) {
        const Index pos = row_pos_[el.dofs[p]];
        if (pos < 0) continue;
        for (std::size_t q = 0; q < el.dofs.size(); ++q) js(pos, local_[i][q]) -= je(p, q);
      }
    }
    return js * u1_sub_;
  }

  /// Reduced nonlinearity M_DEIM S_K^T f1(U1 a_hat).
  Vector f1_hat(const Vector& a_hat) const { return m_deim_ * sampled_f1(a_hat); }

  Vector lift(const Vector& x) const { return pod_->lift(x); }

  // Integrator interface.
  const DenseMatrix& mass() const { return pod_->E(); }
  Vector rhs(const Vector& x, const Vector& u) const {
    Vector out = pod_->A_l() * x + pod_->B() * u;
    out.head(r()) += f1_hat(x.head(r()));
    return out;
  }
  DenseMatrix jacobian(const Vector& x) const {
    DenseMatrix j = pod_->A_l();
    j.topLeftCorner(r(), r()) += m_deim_ * sampled_f1_jacobian(x.head(r()));
    return j;
  }
  Vector output(const Vector& x, const Vector&) const { return pod_->C() * x; }

 private:
  std::shared_ptr<const RomPod> pod_;
  DenseMatrix uf_;
  std::vector<Index> k_;
  DenseMatrix m_deim_;
  double cond_ = 1.0, p_inv_norm_ = 1.0;
  std::vector<Index> elements_, dofs_, row_pos_;
  std::vector<std::vector<Index>> local_;
  DenseMatrix u1_sub_;
};

/// Writes U_a1, U_f1 and the DEIM index list (0-based, one per line).
inline void write_rom_bases(const std::filesystem::path& dir, const DenseMatrix& u1, const DenseMatrix& uf,
                            const std::vector<Index>& k) {
  std::filesystem::create_directories(dir);
  write_matrix_market(dir / "U_a1.mtx", u1);
  write_matrix_market(dir / "U_f1.mtx", uf);
  std::ofstream out(dir / "deim_indices.txt");
  if (!out) throw IngestionError(IngestionError::Kind::io, "cannot write deim_indices.txt");
  for (Index i : k) out << i << '\n';
}

struct RomBases {
  DenseMatrix U_a1, U_f1;
  std::vector<Index> indices;
};

inline RomBases read_rom_bases(const std::filesystem::path& dir) {
  RomBases b;
  b.U_a1 = DenseMatrix(read_matrix_market(dir / "U_a1.mtx"));
  b.U_f1 = DenseMatrix(read_matrix_market(dir / "U_f1.mtx"));
  std::ifstream in(dir / "deim_indices.txt");
  if (!in) throw IngestionError(IngestionError::Kind::io, "cannot open deim_indices.txt");
  long long v;
  while (in >> v) b.indices.push_back(static_cast<Index>(v));
  if (!in.eof()) throw IngestionError(IngestionError::Kind::malformed_entry, "bad DEIM index list");
  return b;
}

}  // namespace mqsrom
