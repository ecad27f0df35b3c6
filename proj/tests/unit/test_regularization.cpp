#include <gtest/gtest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include "support.hpp"

using namespace mqsrom;
namespace t = mqsrom::test;

namespace {

/// One conducting DOF, C2 = [1 0; 0 0], one port.
std::shared_ptr<const MqsDae> toy_kernel() {
  DenseMatrix cd(2, 3);
  cd << 0, 1, 0,  //
      1, 0, 0;
  DenseMatrix ups(2, 1);
  ups << 1, 0;
  ElementTable el;
  el.weight = Vector::Ones(2);
  el.conducting = {0, 1};
  return std::make_shared<MqsDae>(std::make_shared<FemProblem>(
      make_problem("toy_kernel", 3, 1, sparse_identity(1), to_sparse(cd), to_sparse(ups),
                   DenseMatrix::Identity(1, 1), ReluctivityCurve::constant(3.0), el)));
}

/// Linear 4-DOF toy with a nontrivial Y block.
std::shared_ptr<const MqsDae> toy_linear() {
  DenseMatrix cd(4, 4);
  cd << 1, 0, 0, 0,  //
      0, 1, 0, 0,    //
      1, 0, 1, 0,    //
      0, 1, -1, 1;
  DenseMatrix ups(4, 1);
  ups << 0, 0, 1, 1;
  DenseMatrix m11(2, 2);
  m11 << 2, 0.5, 0.5, 1;
  ElementTable el;
  el.weight = (Vector(4) << 1.0, 2.0, 1.5, 0.5).finished();
  el.conducting = {1, 1, 0, 0};
  return std::make_shared<MqsDae>(std::make_shared<FemProblem>(
      make_problem("toy_linear", 2, 2, to_sparse(m11), to_sparse(cd), to_sparse(ups),
                   DenseMatrix::Constant(1, 1, 2.0), ReluctivityCurve::constant(3.0), el)));
}

Index rank_of(const DenseMatrix& m) { return numerical_rank(thin_svd(m).sigma); }

}  // namespace

TEST(RegularizedSystemTest, PlanarProblemKeepsAllDofs) {
  const auto dae = t::transformer_cached(8);
  const RegularizedSystem reg(dae);
  EXPECT_EQ(reg.dim(), dae->n());
  EXPECT_EQ(reg.Y_hat(), DenseMatrix(DenseMatrix::Identity(dae->problem().n2, dae->problem().n2)));
  EXPECT_EQ(reg.Y_C2().cols(), 0);
}

TEST(RegularizedSystemTest, SyntheticProblemRemovesKernel) {
  const auto dae = t::synthetic();
  const RegularizedSystem reg(dae);
  const ThinSvd s = thin_svd(DenseMatrix(dae->problem().C2()));
  const Index k2 = dae->problem().n2 - numerical_rank(s.sigma);
  EXPECT_EQ(reg.dim(), dae->n() - k2);
  EXPECT_GE(sym_eig_extreme(DenseMatrix(reg.E_r())).min, -1e-12 * DenseMatrix(reg.E_r()).norm());
}

TEST(RegularizedSystemTest, ExplicitToyKernel) {
  const auto dae = toy_kernel();
  EXPECT_EQ(dae->problem().k2, 1);
  const RegularizedSystem reg(dae);
  ASSERT_EQ(reg.Y_hat().cols(), 1);
  EXPECT_NEAR(std::abs(reg.Y_hat()(0, 0)), 1.0, 1e-14);
  EXPECT_NEAR(std::abs(reg.Y_C2()(1, 0)), 1.0, 1e-14);
  EXPECT_EQ(reg.dim(), 2);
}

TEST(IndexOne, PlanarAndSyntheticPass) {
  for (auto dae : {t::transformer_cached(8), t::synthetic()}) {
    const RegularizedSystem reg(dae);
    const IndexOneCertificate c = check_index_one(reg, reg.sample_states(3, 42));
    EXPECT_TRUE(c.passed) << "sigma_min " << c.sigma_min << " diff " << c.state_difference;
    EXPECT_GT(c.sigma_min, 1e-10 * c.norm_E_r);
  }
}

TEST(IndexOne, ZeroResistanceRejected) {
  TransformerParams prm;
  prm.nx = prm.ny = 8;
  auto p = std::make_shared<FemProblem>(build_transformer_2d(prm));
  p->R.setZero();
  EXPECT_THROW(MqsDae{p}, AssumptionViolation);
}

TEST(Condensed, PlanarInfiniteBlockMatchesRank) {
  const auto dae = t::transformer_cached(8);
  const Regularization r = regularize(dae);
  const CondensedForm& cf = r.condensed;
  EXPECT_EQ(cf.n0, 0);
  EXPECT_EQ(rank_of(DenseMatrix(r.system->E_r())), r.system->dim() - cf.ninf);
  EXPECT_EQ(cf.ns + cf.n0 + cf.ninf, r.system->dim());
  EXPECT_LE(cf.e_block_residual, 1e-10);
  EXPECT_LE(cf.a_block_residual, 1e-10);
}

TEST(Condensed, SyntheticBlockSizesMatchSvd) {
  const auto dae = t::synthetic();
  const Regularization r = regularize(dae);
  const CondensedForm& cf = r.condensed;
  const DenseMatrix cdv = DenseMatrix(dae->problem().Cd) * DenseMatrix(r.system->V1());
  EXPECT_EQ(cf.n0, cdv.cols() - rank_of(cdv));
  EXPECT_EQ(cf.ninf, r.system->dim() - rank_of(DenseMatrix(r.system->E_r())));
  EXPECT_GT(cf.n0, 0);
  EXPECT_GT(sym_eig_extreme(cf.E11).min, 0.0);
  for (const auto& x : r.system->sample_states(3, 7))
    EXPECT_GT(sym_eig_extreme(-symmetrize(cf.A11(*r.system, x))).min, 0.0);
}

TEST(Condensed, LinearMaterialGivesConstantA11) {
  const auto dae = t::transformer(8, ReluctivityCurve::constant(100.0));
  const Regularization r = regularize(dae);
  const auto xs = r.system->sample_states(2, 3);
  const DenseMatrix a = r.condensed.A11(*r.system, xs[0]), b = r.condensed.A11(*r.system, xs[1]);
  EXPECT_LT((a - b).norm(), 1e-12 * a.norm());
}

TEST(Condensed, ReflexiveInverseProjectorCommutation) {
  for (auto dae : {t::transformer_cached(8), t::synthetic()}) {
    const Regularization r = regularize(dae);
    const DenseMatrix e = DenseMatrix(r.system->E_r());
    const DenseMatrix& em = r.condensed.E_r_minus;
    const DenseMatrix& pi = r.condensed.Pi_inf;
    const Index n = e.rows();
    EXPECT_LT((e * em * e - e).norm(), 1e-10 * e.norm());
    EXPECT_LT((em * e * em - em).norm(), 1e-10 * em.norm());
    EXPECT_LT((em - em.transpose()).norm(), 1e-10 * em.norm());
    EXPECT_LT((pi * pi - pi).norm(), 1e-10 * pi.norm());
    EXPECT_LT((em * e - (DenseMatrix::Identity(n, n) - pi)).norm(), 1e-10 * std::sqrt(double(n)));
    for (const auto& x : r.system->sample_states(3, 5)) {
      const DenseMatrix a = r.system->A_r(x);
      EXPECT_LT((e * em * a - a * em * e).norm(), 1e-10 * a.norm());
    }
  }
}

TEST(OutputMatrix, UnitResistanceToy) {
  const Regularization r = regularize(toy_kernel());
  const DenseMatrix& b = r.system->B_r();
  const DenseMatrix g = b.transpose() * r.condensed.E_r_minus * b;
  EXPECT_NEAR(g(0, 0), 1.0, 1e-12);
  EXPECT_LE(r.output_checks.r_inverse_residual, 1e-10);
}

TEST(OutputMatrix, TrajectoryMatchesCircuitOutput) {
  const auto dae = t::transformer_cached(8);
  const Regularization r = regularize(dae);
  FullSystem sys(dae);
  const TimeGrid grid = TimeGrid::uniform(0.0, 0.01, 200);
  const Trajectory tr = integrate(sys, training_input(), grid, Vector::Zero(sys.dim()));
  const Index n = dae->n();
  const double tol = 10.0 * 1e-10 * std::max(1.0, tr.outputs.cwiseAbs().maxCoeff());
  for (Index k = 1; k < tr.nodes(); ++k) {
    const double dt = tr.t[k] - tr.t[k - 1];
    const Vector a = tr.states.col(k).head(n), a_prev = tr.states.col(k - 1).head(n);
    const Vector y_circuit =
        -dae->calB().transpose() * (a - a_prev) / dt + dae->R_inverse() * tr.inputs.col(k);
    const Vector y_cr = r.system->C_r() * (r.system->V1().transpose() * a);
    EXPECT_LT((y_cr - y_circuit).norm(), tol) << "node " << k;
  }
}

TEST(OutputMatrix, ZeroInputGivesZeroOutput) {
  const Regularization r = regularize(t::synthetic());
  const Trajectory tr = integrate(*r.system, [](double) { return Vector::Zero(2); },
                                  TimeGrid::uniform(0.0, 0.01, 20), Vector::Zero(r.system->dim()));
  EXPECT_EQ(tr.outputs.norm(), 0.0);
}

TEST(OdeForm, EmptyKernelBlockIsPlainProjection) {
  const Regularization r = regularize(toy_kernel());
  ASSERT_EQ(r.system->Y().cols(), 0);
  const OdeSystem ode(*r.system);
  const DenseMatrix& u = ode.U_full();
  DenseMatrix plain = DenseMatrix::Zero(u.rows(), u.cols());
  plain(0, 0) = 1.0;
  plain.bottomRightCorner(u.rows() - 1, 1) = ode.Z2();
  EXPECT_LT((u - plain).norm(), 1e-14);
  const DenseMatrix a = -plain.transpose() * DenseMatrix(r.system->dae().K_linear()) * plain;
  EXPECT_LT((ode.A_lin() - a).norm(), 1e-12 * a.norm());
}

TEST(OdeForm, LinearToyMatchesMatrixExponential) {
  const auto dae = toy_linear();
  const Regularization r = regularize(dae);
  ASSERT_EQ(r.system->Y().cols(), 1);
  const OdeSystem ode(*r.system);
  const DenseMatrix m = ode.E().inverse() * ode.A_lin();
  const Vector g = ode.E().inverse() * ode.B();
  const double u0 = 1.5;
  FullSystem full(dae);
  const TimeGrid grid = TimeGrid::uniform(0.0, 1.0, 4000);
  const Trajectory tr = integrate(full, [u0](double) { return Vector::Constant(1, u0); }, grid,
                                  Vector::Zero(full.dim()), Scheme::bdf2);
  double worst = 0.0, scale = 0.0;
  for (Index k = 0; k < tr.nodes(); k += 400) {
    const double tk = tr.t[k];
    const Vector x = (DenseMatrix(m * tk).exp() - DenseMatrix::Identity(m.rows(), m.cols())) *
                     m.partialPivLu().solve(g * u0);
    const double y = (ode.C() * x)(0);
    worst = std::max(worst, std::abs(y - tr.outputs(0, k)));
    scale = std::max(scale, std::abs(y));
  }
  EXPECT_GT(scale, 0.0);
  EXPECT_LT(worst, 1e-5 * scale);
}

TEST(OdeForm, PlanarTrajectoriesAgree) {
  const auto dae = t::transformer_cached(8);
  const Regularization r = regularize(dae);
  const OdeSystem ode(*r.system);
  FullSystem full(dae);
  const TimeGrid grid = TimeGrid::uniform(0.0, 0.01, 200);
  const Trajectory yf = integrate(full, training_input(), grid, Vector::Zero(full.dim()));
  const Trajectory yr = integrate(*r.system, training_input(), grid, Vector::Zero(r.system->dim()));
  const Trajectory yo = integrate(ode, training_input(), grid, Vector::Zero(ode.dim()));
  const double tol = 10.0 * 1e-10 * std::max(1.0, yf.outputs.cwiseAbs().maxCoeff());
  EXPECT_LT((yf.outputs - yr.outputs).cwiseAbs().maxCoeff(), tol);
  EXPECT_LT((yr.outputs - yo.outputs).cwiseAbs().maxCoeff(), tol);
}

TEST(OdeForm, SyntheticTrajectoriesAgree) {
  const auto dae = t::synthetic();
  const Regularization r = regularize(dae);
  const OdeSystem ode(*r.system);
  FullSystem full(dae);
  const TimeGrid grid = TimeGrid::uniform(0.0, 0.01, 100);
  const Trajectory yf = integrate(full, training_input(), grid, Vector::Zero(full.dim()));
  const Trajectory yo = integrate(ode, training_input(), grid, Vector::Zero(ode.dim()));
  const double tol = 10.0 * 1e-10 * std::max(1.0, yf.outputs.cwiseAbs().maxCoeff());
  EXPECT_LT((yf.outputs - yo.outputs).cwiseAbs().maxCoeff(), tol);
}

TEST(Transforms, DumpWritesMatrices) {
  const Regularization r = regularize(t::synthetic());
  const auto dir = t::fresh_dir("dump_transforms");
  dump_transforms(dir, r);
  for (const char* f : {"W.mtx", "Y_hat_C2.mtx", "C_r.mtx"}) EXPECT_TRUE(fs::exists(dir / f)) << f;
  EXPECT_EQ(DenseMatrix(read_matrix_market(dir / "W.mtx")).rows(), r.system->dim());
}
