#include <gtest/gtest.h>

#include "support.hpp"

using namespace mqsrom;
namespace t = mqsrom::test;

namespace {

std::shared_ptr<const MqsDae> single_element() {
  DenseMatrix cd = DenseMatrix::Identity(2, 2);
  DenseMatrix ups(2, 1);
  ups << 0, 1;
  ElementTable el;
  el.weight = (Vector(2) << 0.8, 1.0).finished();
  el.flux_scale = 2.0;
  el.conducting = {1, 0};
  return std::make_shared<MqsDae>(std::make_shared<FemProblem>(
      make_problem("single", 2, 1, sparse_identity(1), to_sparse(cd), to_sparse(ups),
                   DenseMatrix::Identity(1, 1), ReluctivityCurve::brauer(), el)));
}

struct Models {
  std::shared_ptr<const MqsDae> dae;
  std::shared_ptr<const OdeSystem> ode;
  std::shared_ptr<const RomPod> pod;
  std::shared_ptr<const RomDeim> deim;
  Trajectory full;
  DenseMatrix xf1;
};

const Models& planar() {
  static const Models m = [] {
    Models out;
    out.dae = t::transformer_cached(8);
    const Regularization r = regularize(out.dae);
    out.ode = std::make_shared<const OdeSystem>(*r.system);
    FullSystem full(out.dae);
    out.full = integrate(full, training_input(), TimeGrid::uniform(0.0, 0.01, 400), Vector::Zero(full.dim()));
    const DenseMatrix xa1 = snapshots(out.full, 0, out.dae->n1());
    out.xf1 = snapshots(out.full, [&](const Vector& x) { return out.dae->f1(x.head(out.dae->n1())); });
    out.pod = std::make_shared<const RomPod>(out.ode, pod_basis(xa1, RankRule::tolerance(1e-7)).U);
    out.deim = std::make_shared<const RomDeim>(out.pod, pod_basis(out.xf1, RankRule::fixed(5)).U);
    return out;
  }();
  return m;
}

StorageEvaluator full_storage(const Models& m) {
  const Index n = m.dae->n();
  return StorageEvaluator(m.dae, [n](const Vector& x) { return Vector(x.head(n)); });
}

}  // namespace

TEST(StorageFunction, ZeroStateHasZeroEnergy) {
  const Models& m = planar();
  EXPECT_EQ(full_storage(m)(Vector::Zero(m.dae->n() + 2)), 0.0);
}

TEST(StorageFunction, SingleElementAgainstTrapezoid) {
  const auto dae = single_element();
  const double a = 0.6;
  const double zeta = 2.0 * a;
  const int n = 400000;
  double q = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double s = zeta * i / n;
    q += (i == 0 || i == n ? 0.5 : 1.0) * dae->problem().curve.nu(s) * s;
  }
  q *= zeta / n;
  const double expected = 0.8 / 4.0 * q;
  EXPECT_NEAR(dae->storage((Vector(2) << a, 0.0).finished()), expected, 1e-9 * expected);
}

TEST(Dissipation, ZeroInputHasNoSlack) {
  const Models& m = planar();
  FullSystem full(m.dae);
  const Trajectory tr = integrate(full, [](double) { return Vector::Zero(2); }, TimeGrid::uniform(0.0, 0.01, 20),
                                  Vector::Zero(full.dim()));
  const PassivityReport rep = check_dissipation(tr, full_storage(m));
  for (double s : rep.slack) EXPECT_LE(s, 1e-14);
  EXPECT_TRUE(rep.passed);
}

TEST(Dissipation, FullModelUnderTrainingInput) {
  const Models& m = planar();
  const PassivityReport rep = check_dissipation(m.full, full_storage(m), 1e-6, Quadrature::right_endpoint);
  EXPECT_TRUE(rep.passed) << rep.max_violation;
  EXPECT_EQ(rep.storage.size(), m.full.t.size());
}

TEST(Dissipation, PodModelUnderTrainingInput) {
  const Models& m = planar();
  const Trajectory tr = integrate(*m.pod, training_input(), TimeGrid::uniform(0.0, 0.01, 400),
                                  Vector::Zero(m.pod->dim()));
  const auto pod = m.pod;
  const PassivityReport rep = check_dissipation(
      tr, StorageEvaluator(m.dae, [pod](const Vector& x) { return pod->lift(x); }), 1e-6, Quadrature::right_endpoint);
  EXPECT_TRUE(rep.passed) << rep.max_violation;
}

TEST(Dissipation, ViolationDetected) {
  // Storage that grows without supplied power.
  Trajectory tr;
  tr.t = {0.0, 1.0, 2.0};
  tr.states = (DenseMatrix(1, 3) << 0.0, 0.5, 1.0).finished();
  tr.inputs = DenseMatrix::Zero(1, 3);
  tr.outputs = DenseMatrix::Zero(1, 3);
  const auto dae = single_element();
  const PassivityReport rep =
      check_dissipation(tr, StorageEvaluator(dae, [](const Vector& x) { return Vector((Vector(2) << x(0), 0.0).finished()); }));
  EXPECT_FALSE(rep.passed);
  EXPECT_EQ(rep.worst_interval, 2);
}

TEST(IoPassivity, IdentityAndNegatedOutput) {
  std::vector<double> tt;
  DenseMatrix u(1, 101);
  for (int k = 0; k <= 100; ++k) {
    tt.push_back(k * 0.01);
    u(0, k) = std::sin(7.0 * tt.back()) + 0.2;
  }
  const IoPassivity same = io_passivity_integral(tt, u, u);
  EXPECT_GE(same.minimum, 0.0);
  for (std::size_t k = 1; k < tt.size(); ++k) EXPECT_GT(same.integral[k], same.integral[k - 1]);
  const IoPassivity neg = io_passivity_integral(tt, u, -u);
  EXPECT_LT(neg.minimum, 0.0);
  EXPECT_THROW(io_passivity_integral(tt, u, DenseMatrix::Zero(2, 101)), ParameterError);
}

TEST(LogLipschitz, UnitReluctivityCollapses) {
  const auto dae = t::transformer(8, ReluctivityCurve::constant(1.0));
  const Regularization r = regularize(dae);
  auto ode = std::make_shared<const OdeSystem>(*r.system);
  const RomPod pod(ode, DenseMatrix::Identity(dae->n1(), dae->n1()));
  const LogLipschitz ll = log_lipschitz_bounds(pod);
  const double lk = sym_eig_extreme(symmetrize(pod.U().transpose() * (dae->K_L() * pod.U()))).max;
  EXPECT_DOUBLE_EQ(ll.m_nu, 1.0);
  EXPECT_NEAR(ll.mu1, -lk, 1e-12 * lk);
}

TEST(LogLipschitz, TransformerDefaultsNegative) {
  const LogLipschitz ll = log_lipschitz_bounds(*planar().pod);
  EXPECT_TRUE(std::isfinite(ll.mu1));
  EXPECT_TRUE(std::isfinite(ll.mu2));
  EXPECT_LT(ll.mu1, 0.0);
  EXPECT_LT(ll.mu2, 0.0);
}

TEST(DeimConstant, VanishesAtFullRank) {
  const Models& m = planar();
  const Index rank = numerical_rank(thin_svd(m.xf1).sigma);
  const DenseMatrix uf = pod_basis(m.xf1, RankRule::fixed(rank)).U;
  EXPECT_EQ(deim_error_constant(m.xf1, uf, deim_select(uf), rank), 0.0);
  const DenseMatrix uf5 = pod_basis(m.xf1, RankRule::fixed(5)).U;
  EXPECT_GT(deim_error_constant(m.xf1, uf5, deim_select(uf5), 5), 0.0);
}

TEST(DeimConstant, CanonicalBasisHasUnitSamplingNorm) {
  const DenseMatrix uf = DenseMatrix::Identity(6, 3);
  const std::vector<Index> k = deim_select(uf);
  DenseMatrix x = DenseMatrix::Zero(6, 4);
  x(0, 0) = 3.0;
  x(1, 1) = 2.0;
  x(2, 2) = 1.0;
  x(3, 3) = 0.5;
  EXPECT_NEAR(deim_error_constant(x, uf, k, 3), 0.5, 1e-15);
}

TEST(ErrorBoundFormula, StartAsymptoteAndOrdering) {
  ErrorBound b;
  b.delta_deim = 2.0;
  b.mu1 = -3.0;
  b.mu2 = -50.0;
  b.lambda_min_E = 1e-3;
  EXPECT_EQ(b.theta1(0.0), 0.0);
  const double tl = 1e3 * b.lambda_min_E / std::abs(b.mu1);
  EXPECT_NEAR(b.theta1(tl), -b.delta_deim / b.mu1, 1e-9);
  for (double tt : {1e-6, 1e-5, 1e-4, 1e-3, 1e-2}) {
    EXPECT_LE(b.theta2(tt), b.theta1(tt));
    for (double mua : {-100.0, -10.0, -1.0})
      for (double mub : {-10.0, -1.0, -0.1})
        if (mua <= mub) EXPECT_LE(b.theta(tt, mua), b.theta(tt, mub) * (1 + 1e-15));
  }
  EXPECT_THROW(b.theta(1.0, 0.0), AssumptionViolation);
}

TEST(ErrorBoundFormula, BoundsTransformerStateError) {
  const Models& m = planar();
  const ErrorBound eb = make_error_bound(*m.deim, m.xf1);
  const TimeGrid grid = TimeGrid::uniform(0.0, 0.01, 400);
  const Trajectory tp = integrate(*m.pod, test_input(), grid, Vector::Zero(m.pod->dim()));
  const Trajectory td = integrate(*m.deim, test_input(), grid, Vector::Zero(m.deim->dim()));
  for (Index k = 0; k < tp.nodes(); ++k) {
    const double eps = (tp.states.col(k) - td.states.col(k)).norm();
    EXPECT_GE(eb.theta1(tp.t[k]), eps) << "node " << k;
    EXPECT_GE(eb.theta2(tp.t[k]), eps) << "node " << k;
  }
}

TEST(Passify, ZeroInputLeavesOutput) {
  DenseMatrix y(2, 3), u = DenseMatrix::Zero(2, 3);
  y << 1, 2, 3, 4, 5, 6;
  u(0, 1) = 2.0;
  const Passified p = passify(y, u, 3.0, {0.5, 0.5, 0.5});
  EXPECT_EQ(p.delta(0), 0.0);
  EXPECT_EQ(p.y.col(0), y.col(0));
  EXPECT_EQ(p.y.col(2), y.col(2));
  EXPECT_DOUBLE_EQ(p.delta(1), 3.0 * 0.5 / 2.0);
  EXPECT_DOUBLE_EQ((p.y.col(1) - y.col(1)).norm(), 3.0 * 0.5);
}

TEST(Passify, ExactDeimLeavesOutput) {
  DenseMatrix y(1, 3), u(1, 3);
  y << 1, 2, 3;
  u << 1, -1, 2;
  const Passified p = passify(y, u, 3.0, {0.0, 0.0, 0.0});
  EXPECT_EQ(p.y, y);
}

TEST(Passify, TransformerTestInputIsIoPassive) {
  const Models& m = planar();
  const ErrorBound eb = make_error_bound(*m.deim, m.xf1);
  const Trajectory td = integrate(*m.deim, test_input(), TimeGrid::uniform(0.0, 0.01, 400), Vector::Zero(m.deim->dim()));
  std::vector<double> theta;
  for (double tt : td.t) theta.push_back(eb.theta2(tt));
  const Passified p = passify(td.outputs, td.inputs, eb.c_norm, theta);
  const IoPassivity io = io_passivity_integral(td.t, td.inputs, p.y);
  EXPECT_GE(io.minimum, -1e-8 * (1.0 + io.max_power) * 0.01);
  for (Index k = 0; k < td.nodes(); ++k) {
    if (td.inputs.col(k).norm() == 0.0) continue;
    const double want = eb.c_norm * theta[k];
    EXPECT_NEAR((td.outputs.col(k) - p.y.col(k)).norm(), want, 1e-12 * want);
  }
}

TEST(RelativeError, Identities) {
  DenseMatrix y(1, 3);
  y << 0.5, -1.0, 0.25;
  EXPECT_EQ(relative_output_error(y, y).norm(), 0.0);
  const Vector d = relative_output_error(y, 2.0 * y);
  for (Index k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(d(k), std::abs(y(0, k)));
  EXPECT_THROW(relative_output_error(DenseMatrix::Zero(1, 3), y), ParameterError);
}

TEST(RelativeError, TriangleInequalityOnTransformer) {
  const Models& m = planar();
  const ErrorBound eb = make_error_bound(*m.deim, m.xf1);
  const TimeGrid grid = TimeGrid::uniform(0.0, 0.01, 400);
  const Trajectory ty = integrate(*m.ode, test_input(), grid, Vector::Zero(m.ode->dim()));
  const Trajectory td = integrate(*m.deim, test_input(), grid, Vector::Zero(m.deim->dim()));
  std::vector<double> theta;
  for (double tt : td.t) theta.push_back(eb.theta2(tt));
  const Passified p = passify(td.outputs, td.inputs, eb.c_norm, theta);
  const Vector e_deim = relative_output_error(ty.outputs, td.outputs);
  const Vector e_delta = relative_output_error(ty.outputs, p.y);
  const double norm_min = ty.outputs.rowwise().lpNorm<Eigen::Infinity>().minCoeff();
  for (Index k = 0; k < td.nodes(); ++k)
    EXPECT_LE(e_delta(k), e_deim(k) + eb.c_norm * theta[k] / norm_min + 1e-12);
}

TEST(ReportCsv, HeaderLayout) {
  ReportSeries r;
  r.t = {0.0, 1.0};
  r.storage = r.slack = r.io = r.theta1 = r.theta2 = r.eps_norm = {0.0, 0.5};
  r.delta = Vector::Zero(2);
  r.y_delta = DenseMatrix::Ones(2, 2);
  const auto dir = t::fresh_dir("report_csv");
  write_report_csv(dir / "r.csv", r);
  std::ifstream in(dir / "r.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "t,S,diss_slack,io_integral,theta1,theta2,eps_norm,delta,y_delta_1,y_delta_2");
}
