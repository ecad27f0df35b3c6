#pragma once
// Storage function, dissipation and io-passivity checks, DEIM error bounds
// and output perturbation for passivity enforcement.

#include <filesystem>
#include <fstream>
#include <functional>

#include "mqsrom/integrator.hpp"
#include "mqsrom/rom.hpp"

namespace mqsrom {

/// Magnetic energy of a state, evaluated on the lifted potential a = lift(x).
class StorageEvaluator {
 public:
  using Lift = std::function<Vector(const Vector&)>;
  StorageEvaluator(std::shared_ptr<const MqsDae> dae, Lift lift)
      : dae_(std::move(dae)), lift_(std::move(lift)) {}

  double operator()(const Vector& x) const { return dae_->storage(lift_(x)); }

 private:
  std::shared_ptr<const MqsDae> dae_;
  Lift lift_;
};

enum class Quadrature { trapezoid, right_endpoint };

struct PassivityReport {
  std::vector<double> storage;   // S(t_k)
  std::vector<double> slack;     // per interval, slack[0] = 0 at t_0
  std::vector<double> io;        // running integral of u^T y
  std::vector<double> allowed;   // per interval tolerance
  double max_power = 0.0;        // max |u^T y|
  double max_violation = 0.0;    // max(slack - allowed), <= 0 when passed
  Index worst_interval = -1;
  bool passed = true;
};

inline Vector supplied_power(const Trajectory& tr) {
  if (tr.inputs.rows() != tr.outputs.rows()) throw ParameterError("input and output sizes differ");
  return (tr.inputs.cwiseProduct(tr.outputs)).colwise().sum().transpose();
}

/// Running integral of u^T y over the trajectory nodes.
inline std::vector<double> running_integral(const std::vector<double>& t, const Vector& w,
                                            Quadrature q = Quadrature::trapezoid) {
  if (static_cast<Index>(t.size()) != w.size()) throw ParameterError("sample count mismatch");
  std::vector<double> out(t.size(), 0.0);
  for (std::size_t k = 1; k < t.size(); ++k) {
    const double dt = t[k] - t[k - 1];
    const double inc = q == Quadrature::trapezoid ? 0.5 * dt * (w(k - 1) + w(k)) : dt * w(k);
    out[k] = out[k - 1] + inc;
  }
  return out;
}

/// S(x_{k+1}) - S(x_k) <= int u^T y + rel_tol * max(1, max|u^T y|) * dt on every interval.
inline PassivityReport check_dissipation(const Trajectory& tr, const StorageEvaluator& s,
                                         double rel_tol = 1e-6,
                                         Quadrature q = Quadrature::trapezoid) {
  PassivityReport rep;
  const Vector w = supplied_power(tr);
  rep.max_power = w.size() ? w.cwiseAbs().maxCoeff() : 0.0;
  rep.io = running_integral(tr.t, w, q);
  const std::size_t n = tr.t.size();
  rep.storage.resize(n);
  rep.slack.assign(n, 0.0);
  rep.allowed.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) rep.storage[k] = s(tr.states.col(static_cast<Index>(k)));
  rep.max_violation = -std::numeric_limits<double>::infinity();
  const double scale = std::max(1.0, rep.max_power);
  for (std::size_t k = 1; k < n; ++k) {
    rep.slack[k] = rep.storage[k] - rep.storage[k - 1] - (rep.io[k] - rep.io[k - 1]);
    rep.allowed[k] = rel_tol * scale * (tr.t[k] - tr.t[k - 1]);
    const double v = rep.slack[k] - rep.allowed[k];
    if (v > rep.max_violation) {
      rep.max_violation = v;
      rep.worst_interval = static_cast<Index>(k);
    }
  }
  rep.passed = rep.max_violation <= 0.0;
  return rep;
}

struct IoPassivity {
  std::vector<double> integral;
  double minimum = 0.0;
  double max_power = 0.0;
};

inline IoPassivity io_passivity_integral(const std::vector<double>& t, const DenseMatrix& u,
                                         const DenseMatrix& y) {
  if (u.rows() != y.rows() || u.cols() != y.cols() || static_cast<Index>(t.size()) != u.cols()) {
    throw ParameterError("io_passivity_integral: sample shapes differ");
  }
  const Vector w = u.cwiseProduct(y).colwise().sum().transpose();
  IoPassivity out;
  out.integral = running_integral(t, w);
  out.minimum = *std::min_element(out.integral.begin(), out.integral.end());
  out.max_power = w.size() ? w.cwiseAbs().maxCoeff() : 0.0;
  return out;
}

struct LogLipschitz {
  double mu1 = 0.0, mu2 = 0.0;
  double lambda_max_KL = 0.0;   // lambda_max(U^T K_L U)
  double lambda_max_Al = 0.0;   // lambda_max(A_l)
  double lambda_max_KL1 = 0.0;  // lambda_max(U1^T K_L1 U1)
  double m_nu = 0.0, m_nu_c = 0.0;
  double mu() const { return std::min(mu1, mu2); }
};

/// mu1 = -m_nu lambda_max(U^T K_L U), mu2 = lambda_max(A_l) - m_nuC lambda_max(U1^T K_L1 U1).
inline LogLipschitz log_lipschitz_bounds(const RomPod& rom) {
  const MqsDae& dae = rom.ode().dae();
  const ReluctivityCurve& c = dae.problem().curve;
  LogLipschitz out;
  out.m_nu = c.monotonicity();
  out.m_nu_c = c.monotonicity_conducting();
  const DenseMatrix& u = rom.U();
  out.lambda_max_KL = sym_eig_extreme(symmetrize(u.transpose() * (dae.K_L() * u))).max;
  out.lambda_max_Al = sym_eig_extreme(rom.A_l()).max;
  out.lambda_max_KL1 = sym_eig_extreme(symmetrize(rom.U1().transpose() * (dae.K_L1() * rom.U1()))).max;
  out.mu1 = -out.m_nu * out.lambda_max_KL;
  out.mu2 = out.lambda_max_Al - out.m_nu_c * out.lambda_max_KL1;
  if (!(out.mu1 < 0.0) || !(out.mu2 < 0.0)) {
    throw AssumptionViolation("logarithmic Lipschitz estimates must be negative: mu1 = " +
                              std::to_string(out.mu1) + ", mu2 = " + std::to_string(out.mu2));
  }
  return out;
}

/// ||(S_K^T U_f1)^{-1}|| (sum_{j > l} sigma_j^2)^{1/2} over the numerically nonzero sigma_j.
inline double deim_error_constant(const Vector& sigma_f1, double sampling_inverse_norm, Index l) {
  if (l < 0) throw ParameterError("negative DEIM dimension");
  // Singular values below the rank tolerance are rounding noise.
  const double floor = sigma_f1.size() ? kRankTolerance * sigma_f1(0) : 0.0;
  double tail = 0.0;
  for (Index j = l; j < sigma_f1.size(); ++j)
    if (sigma_f1(j) > floor) tail += sigma_f1(j) * sigma_f1(j);
  return sampling_inverse_norm * std::sqrt(tail);
}

inline double deim_error_constant(const DenseMatrix& x_f1, const DenseMatrix& u_f1,
                                  const std::vector<Index>& k, Index l) {
  if (static_cast<Index>(k.size()) != u_f1.cols() || u_f1.cols() != l) {
    throw ParameterError("DEIM basis, indices and l disagree");
  }
  DenseMatrix p(l, l);
  for (Index i = 0; i < l; ++i) p.row(i) = u_f1.row(k[i]);
  const ThinSvd s = thin_svd(p);
  if (!(s.sigma(l - 1) > 0.0)) throw FactorizationError("S_K^T U_f1 is singular", s.sigma(l - 1));
  return deim_error_constant(thin_svd(x_f1).sigma, 1.0 / s.sigma(l - 1), l);
}

struct ErrorBound {
  double delta_deim = 0.0;
  double mu1 = 0.0, mu2 = 0.0;
  double lambda_min_E = 0.0;
  double c_norm = 0.0;

  double mu() const { return std::min(mu1, mu2); }

  /// (Delta / mu) (exp(mu t / lambda_min(E)) - 1).
  double theta(double t, double mu_value) const {
    if (!(mu_value < 0.0)) throw AssumptionViolation("error bound needs mu < 0");
    if (!(lambda_min_E > 0.0)) throw ContractViolation("error bound needs lambda_min(E) > 0");
    if (t < 0.0) throw ParameterError("error bound evaluated at negative time");
    return delta_deim / mu_value * std::expm1(mu_value * t / lambda_min_E);
  }
  double theta1(double t) const { return theta(t, mu1); }
  double theta2(double t) const { return theta(t, mu()); }
};

inline ErrorBound make_error_bound(const RomDeim& deim, const DenseMatrix& x_f1) {
  ErrorBound b;
  const LogLipschitz ll = log_lipschitz_bounds(deim.pod());
  b.mu1 = ll.mu1;
  b.mu2 = ll.mu2;
  b.delta_deim = deim_error_constant(thin_svd(x_f1).sigma, deim.sampling_inverse_norm(), deim.l());
  b.lambda_min_E = sym_eig_extreme(deim.pod().E()).min;
  b.c_norm = spectral_norm(deim.pod().C());
  return b;
}

struct Passified {
  Vector delta;       // one value per node
  DenseMatrix y;      // perturbed output y_delta
};

/// delta = ||C|| theta / ||u|| (0 where u = 0), y_delta = y + delta u.
inline Passified passify(const DenseMatrix& y, const DenseMatrix& u, double c_norm,
                         const std::vector<double>& theta) {
  if (y.rows() != u.rows() || y.cols() != u.cols() || static_cast<Index>(theta.size()) != u.cols()) {
    throw ParameterError("passify: sample shapes differ");
  }
  Passified out;
  out.delta = Vector::Zero(u.cols());
  out.y = y;
  for (Index k = 0; k < u.cols(); ++k) {
    const double un = u.col(k).norm();
    if (un == 0.0) continue;
    out.delta(k) = c_norm * theta[k] / un;
    out.y.col(k) += out.delta(k) * u.col(k);
  }
  return out;
}

/// sqrt(sum_i ((y_i - z_i) / max_t |y_i|)^2) per node.
inline Vector relative_output_error(const DenseMatrix& y, const DenseMatrix& z) {
  if (y.rows() != z.rows() || y.cols() != z.cols()) throw ParameterError("output shapes differ");
  Vector out = Vector::Zero(y.cols());
  for (Index i = 0; i < y.rows(); ++i) {
    const double scale = y.row(i).cwiseAbs().maxCoeff();
    if (!(scale > 0.0)) {
      throw ParameterError("reference output component " + std::to_string(i) + " is identically zero");
    }
    out += ((y.row(i) - z.row(i)) / scale).cwiseAbs2().transpose();
  }
  return out.cwiseSqrt();
}

/// Report CSV: t,S,diss_slack,io_integral,theta1,theta2,eps_norm,delta,y_delta_1..m.
struct ReportSeries {
  std::vector<double> t, storage, slack, io, theta1, theta2, eps_norm;
  Vector delta;
  DenseMatrix y_delta;
};

inline void write_report_csv(const std::filesystem::path& path, const ReportSeries& r) {
  std::ofstream out(path);
  if (!out) throw IngestionError(IngestionError::Kind::io, "cannot write " + path.string());
  out << "t,S,diss_slack,io_integral,theta1,theta2,eps_norm,delta";
  for (Index i = 0; i < r.y_delta.rows(); ++i) out << ",y_delta_" << i + 1;
  out << '\n';
  for (std::size_t k = 0; k < r.t.size(); ++k) {
    out << format_double(r.t[k]) << ',' << format_double(r.storage[k]) << ','
        << format_double(r.slack[k]) << ',' << format_double(r.io[k]) << ','
        << format_double(r.theta1[k]) << ',' << format_double(r.theta2[k]) << ','
        << format_double(r.eps_norm[k]) << ',' << format_double(r.delta(k));
    for (Index i = 0; i < r.y_delta.rows(); ++i) out << ',' << format_double(r.y_delta(i, k));
    out << '\n';
  }
}

}  // namespace mqsrom
