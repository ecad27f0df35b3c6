#pragma once
// Magnetic reluctivity of the conducting (nonlinear) and insulating (linear)
// regions, with numerically certified monotonicity/Lipschitz constants.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mqsrom/errors.hpp"

namespace mqsrom {

class ReluctivityCurve {
 public:
  enum class Kind { constant, brauer };

  static constexpr double kDefaultK1 = 0.3774;
  static constexpr double kDefaultK2 = 2.97;
  static constexpr double kDefaultK3 = 388.33;
  static constexpr double kDefaultNuI = 1.0;
  static constexpr double kDefaultZetaMax = 3.0;
  static constexpr int kGridPoints = 20001;

  /// nu_C(zeta) = k1 exp(k2 zeta^2) + k3. k1 == 0 or k2 == 0 degenerates to a constant.
  static ReluctivityCurve brauer(double k1 = kDefaultK1, double k2 = kDefaultK2,
                                 double k3 = kDefaultK3, double nu_insulating = kDefaultNuI,
                                 double zeta_max = kDefaultZetaMax) {
    return ReluctivityCurve(k1, k2, k3, nu_insulating, zeta_max);
  }

  static ReluctivityCurve constant(double nu_conducting, double nu_insulating = kDefaultNuI,
                                   double zeta_max = kDefaultZetaMax) {
    return ReluctivityCurve(0.0, 0.0, nu_conducting, nu_insulating, zeta_max);
  }

  Kind kind() const { return kind_; }
  bool is_linear() const { return kind_ == Kind::constant; }
  double k1() const { return k1_; }
  double k2() const { return k2_; }
  double k3() const { return k3_; }
  double nu_insulating() const { return nu_i_; }
  double zeta_max() const { return zeta_max_; }

  /// nu_C(zeta).
  double nu(double zeta) const {
    if (kind_ == Kind::constant) return k3_;
    return k1_ * std::exp(k2_ * zeta * zeta) + k3_;
  }

  /// nu_C'(zeta) / zeta, finite at zeta = 0.
  double dnu_over_zeta(double zeta) const {
    if (kind_ == Kind::constant) return 0.0;
    return 2.0 * k1_ * k2_ * std::exp(k2_ * zeta * zeta);
  }

  /// d/dzeta [nu_C(zeta) zeta].
  double dflux(double zeta) const { return nu(zeta) + dnu_over_zeta(zeta) * zeta * zeta; }

  /// Monotonicity constant m_{nu_C} of zeta -> nu_C(zeta) zeta on [0, zeta_max].
  double monotonicity_conducting() const { return m_c_; }
  /// Lipschitz constant L_{nu_C} on [0, zeta_max].
  double lipschitz_conducting() const { return l_c_; }
  /// m_nu = min(m_{nu_C}, nu_I).
  double monotonicity() const { return std::min(m_c_, nu_i_); }
  /// L_nu = max(L_{nu_C}, nu_I).
  double lipschitz() const { return std::max(l_c_, nu_i_); }

  /// Energy density int_0^zeta nu_C(s) s ds.
  double energy_conducting(double zeta) const {
    if (kind_ == Kind::constant || zeta == 0.0) return 0.5 * k3_ * zeta * zeta;
    auto integrand = [this](double s) { return nu(s) * s; };
    return adaptive_simpson(integrand, 0.0, zeta, 1e-10);
  }

  double energy_insulating(double zeta) const { return 0.5 * nu_i_ * zeta * zeta; }

  /// Same curve with the operating range extended; constants are recomputed.
  ReluctivityCurve with_zeta_max(double zeta_max) const {
    return ReluctivityCurve(k1_, k2_, k3_, nu_i_, zeta_max);
  }

  /// Adaptive Simpson quadrature with a relative tolerance on the total.
  template <class F>
  static double adaptive_simpson(F&& f, double a, double b, double rel_tol) {
    const double fa = f(a), fb = f(b), m = 0.5 * (a + b), fm = f(m);
    const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    const double tol = rel_tol * std::max(std::abs(whole), std::numeric_limits<double>::min());
    return simpson_step(f, a, b, fa, fm, fb, whole, tol, 50);
  }

 private:
  ReluctivityCurve(double k1, double k2, double k3, double nu_i, double zeta_max)
      : k1_(k1), k2_(k2), k3_(k3), nu_i_(nu_i), zeta_max_(zeta_max) {
    kind_ = (k1 == 0.0 || k2 == 0.0) ? Kind::constant : Kind::brauer;
    if (kind_ == Kind::constant) k1_ = k2_ = 0.0;
    if (kind_ == Kind::constant && k1 != 0.0) k3_ = k1 + k3;  // k2 == 0: nu = k1 + k3
    if (!(nu_i_ > 0.0) || !std::isfinite(nu_i_)) {
      throw AssumptionViolation("insulating reluctivity must be positive, got " +
                                std::to_string(nu_i_));
    }
    if (!(zeta_max_ > 0.0) || !std::isfinite(zeta_max_)) {
      throw ParameterError("zeta_max must be positive");
    }
    certify();
  }

  void certify() {
    if (kind_ == Kind::constant) {
      // nu * zeta is linear: m = L = nu exactly.
      if (!(k3_ > 0.0)) throw AssumptionViolation("constant reluctivity must be positive");
      m_c_ = l_c_ = k3_;
      return;
    }
    const int n = kGridPoints;
    const double h = zeta_max_ / (n - 1);
    double m = std::numeric_limits<double>::infinity();
    double l = 0.0;
    double prev = 0.0;  // nu(0) * 0
    for (int i = 0; i < n; ++i) {
      const double z = h * i;
      const double d = dflux(z);
      m = std::min(m, d);
      l = std::max(l, d);
      if (i > 0) {
        const double cur = nu(z) * z;
        const double q = (cur - prev) / h;
        m = std::min(m, q);
        l = std::max(l, q);
        prev = cur;
      }
    }
    if (!std::isfinite(m) || !std::isfinite(l)) {
      throw AssumptionViolation("reluctivity curve overflows on [0, " + std::to_string(zeta_max_) +
                                "]");
    }
    if (!(m > 0.0)) {
      throw AssumptionViolation("zeta -> nu_C(zeta) zeta is not strongly monotone (m = " +
                                std::to_string(m) + ")");
    }
    m_c_ = m;
    l_c_ = l;
  }

  template <class F>
  static double simpson_step(F& f, double a, double b, double fa, double fm, double fb,
                             double whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    const double diff = left + right - whole;
    if (depth <= 0 || std::abs(diff) <= 15.0 * tol) return left + right + diff / 15.0;
    return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
  }

  Kind kind_ = Kind::constant;
  double k1_ = 0.0, k2_ = 0.0, k3_ = 1.0;
  double nu_i_ = 1.0;
  double zeta_max_ = kDefaultZetaMax;
  double m_c_ = 0.0, l_c_ = 0.0;
};

}  // namespace mqsrom
