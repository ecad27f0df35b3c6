#pragma once
// Semidiscrete quasilinear MQS DAE: K(a) = Cd^T M_nu(Cd a) Cd, its Jacobian,
// the coupled field/circuit residual and the current-eliminated matrices.

#include <algorithm>
#include <memory>
#include <utility>
#include <vector>

#include "mqsrom/problem.hpp"

namespace mqsrom {

class MqsDae {
 public:
  /// Local view of one element: the DOFs its Cd rows touch and the dense block.
  struct Element {
    std::vector<Index> dofs;
    DenseMatrix G;  // rows_per_element x dofs.size()
    double weight = 0.0;
    bool conducting = false;
  };

  explicit MqsDae(std::shared_ptr<const FemProblem> problem) : p_(std::move(problem)) {
    const FemProblem& p = *p_;
    validate_problem(p);
    Eigen::LLT<DenseMatrix> llt(symmetrize(p.R));
    if (llt.info() != Eigen::Success) throw AssumptionViolation("R is not SPD");
    r_inv_ = llt.solve(DenseMatrix::Identity(p.m, p.m));
    r_inv_ = symmetrize(r_inv_);

    const int rpe = p.elements.rows_per_element;
    Eigen::SparseMatrix<double, Eigen::RowMajor> cd = p.Cd;
    elements_.resize(p.elements.count());
    for (Index e = 0; e < p.elements.count(); ++e) {
      Element& el = elements_[e];
      el.weight = p.elements.weight(e);
      el.conducting = p.elements.conducting[e] != 0;
      std::vector<std::pair<Index, std::pair<int, double>>> entries;
      for (int r = 0; r < rpe; ++r) {
        for (decltype(cd)::InnerIterator it(cd, e * rpe + r); it; ++it) {
          entries.push_back({it.col(), {r, it.value()}});
        }
      }
      for (const auto& en : entries) {
        if (std::find(el.dofs.begin(), el.dofs.end(), en.first) == el.dofs.end()) {
          el.dofs.push_back(en.first);
        }
      }
      std::sort(el.dofs.begin(), el.dofs.end());
      el.G = DenseMatrix::Zero(rpe, static_cast<Index>(el.dofs.size()));
      for (const auto& en : entries) {
        const auto pos = std::lower_bound(el.dofs.begin(), el.dofs.end(), en.first) - el.dofs.begin();
        el.G(en.second.first, pos) += en.second.second;
      }
      if (el.conducting) {
        for (Index d : el.dofs) {
          if (d >= p.n1) {
            throw StructuralError("conducting element couples to a non-conducting DOF");
          }
        }
        core_elements_.push_back(e);
      } else {
        air_elements_.push_back(e);
      }
    }

    // Current-eliminated matrices.
    const SparseMatrix xr = SparseMatrix(p.X * to_sparse(r_inv_));
    calE_ = SparseMatrix(xr * SparseMatrix(p.X.transpose()));
    std::vector<Triplet> t;
    for (Index k = 0; k < p.M11.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(p.M11, k); it; ++it)
        t.emplace_back(it.row(), it.col(), it.value());
    calE_ += make_sparse(p.n(), p.n(), t);
    calE_.makeCompressed();
    calB_ = DenseMatrix(p.X) * r_inv_;

    KL_ = SparseMatrix(p.Cd.transpose() * p.Mf * p.Cd);
    const SparseMatrix c1 = p.C1();
    KL1_ = SparseMatrix(c1.transpose() * p.Mf1 * c1);
    K_lin_ = assemble_K(Vector::Zero(p.n()));
  }

  const FemProblem& problem() const { return *p_; }
  std::shared_ptr<const FemProblem> problem_ptr() const { return p_; }
  Index n() const { return p_->n(); }
  Index n1() const { return p_->n1; }
  Index m() const { return p_->m; }

  const std::vector<Element>& elements() const { return elements_; }
  const std::vector<Index>& core_elements() const { return core_elements_; }
  const std::vector<Index>& air_elements() const { return air_elements_; }

  /// Element flux density magnitude zeta_e.
  double flux(const Element& el, const Vector& a) const {
    return p_->elements.flux_scale * local_g(el, a).norm();
  }

  double element_nu(const Element& el, double zeta) const {
    return el.conducting ? p_->curve.nu(zeta) : p_->curve.nu_insulating();
  }

  /// Element contribution to K(a)a: weight nu G^T g.
  Vector element_force(const Element& el, const Vector& a_local) const {
    const Vector g = el.G * a_local;
    const double zeta = p_->elements.flux_scale * g.norm();
    return el.weight * element_nu(el, zeta) * (el.G.transpose() * g);
  }

  /// Element Jacobian of a -> K(a)a.
  DenseMatrix element_jacobian(const Element& el, const Vector& a_local) const {
    const Vector g = el.G * a_local;
    const double s = p_->elements.flux_scale;
    const double zeta = s * g.norm();
    DenseMatrix j = element_nu(el, zeta) * (el.G.transpose() * el.G);
    if (el.conducting) {
      const Vector gt = el.G.transpose() * g;
      j += (p_->curve.dnu_over_zeta(zeta) * s * s) * (gt * gt.transpose());
    }
    return el.weight * j;
  }

  /// Conducting-element part of K(a)a beyond the zero-flux reluctivity:
  /// weight (nu_C(zeta) - nu_C(0)) G^T g.
  Vector element_force_nonlinear(const Element& el, const Vector& a_local) const {
    const Vector g = el.G * a_local;
    const double zeta = p_->elements.flux_scale * g.norm();
    return el.weight * (p_->curve.nu(zeta) - p_->curve.nu(0.0)) * (el.G.transpose() * g);
  }

  DenseMatrix element_jacobian_nonlinear(const Element& el, const Vector& a_local) const {
    const Vector g = el.G * a_local;
    const double s = p_->elements.flux_scale;
    const double zeta = s * g.norm();
    const Vector gt = el.G.transpose() * g;
    return el.weight * ((p_->curve.nu(zeta) - p_->curve.nu(0.0)) * (el.G.transpose() * el.G) +
                        (p_->curve.dnu_over_zeta(zeta) * s * s) * (gt * gt.transpose()));
  }

  /// K(a) assembled elementwise.
  SparseMatrix assemble_K(const Vector& a) const {
    check_dim(a, n());
    std::vector<Index> all(elements_.size());
    for (std::size_t e = 0; e < all.size(); ++e) all[e] = static_cast<Index>(e);
    return assemble(all, a, false, n());
  }

  /// K(a)a without forming K.
  Vector apply_K(const Vector& a) const {
    check_dim(a, n());
    Vector out = Vector::Zero(n());
    for (const auto& el : elements_) scatter(el, element_force(el, gather(el, a)), out);
    return out;
  }

  /// Jacobian of a -> K(a)a.
  SparseMatrix jacobian_K(const Vector& a) const {
    check_dim(a, n());
    std::vector<Index> all(elements_.size());
    for (std::size_t e = 0; e < all.size(); ++e) all[e] = static_cast<Index>(e);
    return assemble(all, a, true, n());
  }

  /// Constant part K_l = K(0): insulating elements and conducting ones at nu_C(0).
  const SparseMatrix& K_linear() const { return K_lin_; }

  /// f1(a1) = -K11,n(a1) a1 with K11,n = K11(a1) - K11(0) (n1 vector).
  Vector f1(const Vector& a1) const {
    check_dim(a1, n1());
    Vector out = Vector::Zero(n1());
    for (Index e : core_elements_) {
      const Element& el = elements_[e];
      scatter(el, element_force_nonlinear(el, gather(el, a1)), out);
    }
    return -out;
  }

  /// Jacobian of f1 (n1 x n1).
  SparseMatrix f1_jacobian(const Vector& a1) const {
    check_dim(a1, n1());
    std::vector<Triplet> t;
    for (Index e : core_elements_) {
      const Element& el = elements_[e];
      const DenseMatrix je = element_jacobian_nonlinear(el, gather(el, a1));
      for (std::size_t i = 0; i < el.dofs.size(); ++i)
        for (std::size_t j = 0; j < el.dofs.size(); ++j)
          t.emplace_back(el.dofs[i], el.dofs[j], -je(i, j));
    }
    SparseMatrix k(n1(), n1());
    k.setFromTriplets(t.begin(), t.end());
    k.makeCompressed();
    return k;
  }

  /// Residual pair of the coupled DAE: (-K(a)a + X i, -R i + u).
  std::pair<Vector, Vector> eval_rhs(const Vector& a, const Vector& current, const Vector& u) const {
    check_dim(a, n());
    check_dim(current, m());
    check_dim(u, m());
    Vector r1 = -apply_K(a) + p_->X * current;
    Vector r2 = -p_->R * current + u;
    return {std::move(r1), std::move(r2)};
  }

  /// Calligraphic E = blockdiag(M11, 0) + X R^{-1} X^T.
  const SparseMatrix& calE() const { return calE_; }
  /// Calligraphic B = X R^{-1}.
  const DenseMatrix& calB() const { return calB_; }
  const DenseMatrix& R_inverse() const { return r_inv_; }
  /// Unit-reluctivity stiffness Cd^T Mf Cd.
  const SparseMatrix& K_L() const { return KL_; }
  /// Conducting-region stiffness C1^T Mf1 C1.
  const SparseMatrix& K_L1() const { return KL1_; }

  /// Magnetic energy sum_e V_e theta_e(zeta_e) of a full potential vector.
  double storage(const Vector& a) const {
    check_dim(a, n());
    double s = 0.0;
    for (Index e = 0; e < static_cast<Index>(elements_.size()); ++e) {
      const Element& el = elements_[e];
      const double zeta = flux(el, a);
      const double vol = p_->elements.volume(e);
      s += vol * (el.conducting ? p_->curve.energy_conducting(zeta)
                                : p_->curve.energy_insulating(zeta));
    }
    return s;
  }

  /// Largest element flux density of a potential vector.
  double max_flux(const Vector& a) const {
    double z = 0.0;
    for (const auto& el : elements_) z = std::max(z, flux(el, a));
    return z;
  }

  Vector gather(const Element& el, const Vector& a) const {
    Vector loc(static_cast<Index>(el.dofs.size()));
    for (std::size_t k = 0; k < el.dofs.size(); ++k) loc(k) = a(el.dofs[k]);
    return loc;
  }

  static void check_dim(const Vector& v, Index n) {
    if (v.size() != n) {
      throw ParameterError("dimension mismatch: got " + std::to_string(v.size()) + ", expected " +
                           std::to_string(n));
    }
  }

 private:
  Vector local_g(const Element& el, const Vector& a) const { return el.G * gather(el, a); }

  static void scatter(const Element& el, const Vector& loc, Vector& out) {
    for (std::size_t k = 0; k < el.dofs.size(); ++k) out(el.dofs[k]) += loc(k);
  }

  SparseMatrix assemble(const std::vector<Index>& which, const Vector& a, bool jacobian,
                        Index dim) const {
    std::vector<Triplet> t;
    for (Index e : which) {
      const Element& el = elements_[e];
      const Vector loc = gather(el, a);
      DenseMatrix ke;
      if (jacobian) {
        ke = element_jacobian(el, loc);
      } else {
        const double zeta = p_->elements.flux_scale * (el.G * loc).norm();
        ke = el.weight * element_nu(el, zeta) * (el.G.transpose() * el.G);
      }
      for (std::size_t i = 0; i < el.dofs.size(); ++i)
        for (std::size_t j = 0; j < el.dofs.size(); ++j)
          t.emplace_back(el.dofs[i], el.dofs[j], ke(i, j));
    }
    SparseMatrix k(dim, dim);
    k.setFromTriplets(t.begin(), t.end());
    k.makeCompressed();
    return k;
  }

  std::shared_ptr<const FemProblem> p_;
  DenseMatrix r_inv_;
  std::vector<Element> elements_;
  std::vector<Index> core_elements_, air_elements_;
  SparseMatrix calE_;
  DenseMatrix calB_;
  SparseMatrix KL_, KL1_, K_lin_;
};

}  // namespace mqsrom
