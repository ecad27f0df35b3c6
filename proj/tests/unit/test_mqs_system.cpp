#include <gtest/gtest.h>

#include "support.hpp"

using namespace mqsrom;
namespace t = mqsrom::test;

namespace {

/// K(a) = Cd^T diag(w_e nu_e(zeta_e)) Cd with zeta_e read from the rows of Cd a.
DenseMatrix dense_K(const MqsDae& dae, const Vector& a) {
  const FemProblem& p = dae.problem();
  const DenseMatrix cd = DenseMatrix(p.Cd);
  const Vector b = cd * a;
  const int rpe = p.elements.rows_per_element;
  Vector diag(p.nf());
  for (Index e = 0; e < p.elements.count(); ++e) {
    const double zeta = p.elements.flux_scale * b.segment(e * rpe, rpe).norm();
    const double nu = p.elements.conducting[e] ? p.curve.nu(zeta) : p.curve.nu_insulating();
    for (int r = 0; r < rpe; ++r) diag(e * rpe + r) = p.elements.weight(e) * nu;
  }
  return cd.transpose() * diag.asDiagonal() * cd;
}

}  // namespace

TEST(StiffnessAssembly, ConstantMaterialIndependentOfState) {
  const auto dae = t::transformer(8, ReluctivityCurve::constant(50.0));
  std::mt19937_64 rng(1);
  const Vector a = t::random_vector(dae->n(), rng);
  EXPECT_EQ(DenseMatrix(dae->assemble_K(a)), DenseMatrix(dae->assemble_K(2.0 * a)));
}

TEST(StiffnessAssembly, ZeroStateUsesCurveAtZero) {
  const auto dae = t::transformer_cached(8);
  const DenseMatrix k0 = DenseMatrix(dae->assemble_K(Vector::Zero(dae->n())));
  EXPECT_LT((k0 - dense_K(*dae, Vector::Zero(dae->n()))).norm(), 1e-12 * k0.norm());
  // Same matrix when the core reluctivity is replaced by the constant k1 + k3.
  const auto lin = t::transformer(8, ReluctivityCurve::constant(ReluctivityCurve::kDefaultK1 +
                                                                ReluctivityCurve::kDefaultK3));
  EXPECT_LT((k0 - DenseMatrix(lin->assemble_K(Vector::Zero(lin->n())))).norm(), 1e-12 * k0.norm());
  EXPECT_LT((k0 - DenseMatrix(dae->K_linear())).norm(), 1e-14 * k0.norm());
}

TEST(StiffnessAssembly, RandomStateMatchesDenseLoop) {
  for (auto dae : {t::transformer_cached(8), t::synthetic()}) {
    std::mt19937_64 rng(2);
    for (int k = 0; k < 3; ++k) {
      const Vector a = t::random_potential(*dae, rng, 1.2);
      const DenseMatrix ref = dense_K(*dae, a);
      const DenseMatrix got = DenseMatrix(dae->assemble_K(a));
      EXPECT_LT((got - ref).norm(), 1e-12 * ref.norm());
      EXPECT_EQ((got - got.transpose()).norm(), 0.0);
      EXPECT_LT((dae->apply_K(a) - ref * a).norm(), 1e-12 * (ref * a).norm());
    }
  }
}

TEST(CoupledResidual, ZeroStateGivesZero) {
  const auto dae = t::transformer_cached(8);
  const auto [r1, r2] = dae->eval_rhs(Vector::Zero(dae->n()), Vector::Zero(2), Vector::Zero(2));
  EXPECT_EQ(r1.norm(), 0.0);
  EXPECT_EQ(r2.norm(), 0.0);
}

TEST(CoupledResidual, LinearSteadyState) {
  const auto dae = t::transformer(8, ReluctivityCurve::constant(100.0));
  Vector u(2);
  u << 3.0, -2.0;
  const Vector i = dae->R_inverse() * u;
  const DenseMatrix k = DenseMatrix(dae->K_linear());
  const Vector a = k.ldlt().solve(DenseMatrix(dae->problem().X) * i);
  const auto [r1, r2] = dae->eval_rhs(a, i, u);
  EXPECT_LT(r1.norm(), 1e-10 * (k * a).norm());
  EXPECT_LT(r2.norm(), 1e-14);
}

TEST(CoupledResidual, ZeroInputZeroCurrent) {
  const auto dae = t::transformer_cached(8);
  std::mt19937_64 rng(3);
  const auto [r1, r2] = dae->eval_rhs(t::random_vector(dae->n(), rng), Vector::Zero(2), Vector::Zero(2));
  EXPECT_EQ(r2.norm(), 0.0);
  EXPECT_THROW(dae->eval_rhs(Vector::Zero(3), Vector::Zero(2), Vector::Zero(2)), ParameterError);
}

TEST(Jacobian, ConstantMaterialEqualsStiffness) {
  const auto dae = t::transformer(8, ReluctivityCurve::constant(50.0));
  std::mt19937_64 rng(4);
  const Vector a = t::random_vector(dae->n(), rng);
  EXPECT_LT((DenseMatrix(dae->jacobian_K(a)) - DenseMatrix(dae->assemble_K(a))).norm(), 1e-12);
}

TEST(Jacobian, CentralDifferences) {
  for (auto dae : {t::transformer_cached(8), t::synthetic()}) {
    std::mt19937_64 rng(5);
    for (int k = 0; k < 5; ++k) {
      const Vector a = t::random_potential(*dae, rng, 1.4);
      const Vector v = t::random_vector(dae->n(), rng).normalized() * a.norm();
      const double h = 1e-6;
      const Vector fd = (dae->apply_K(a + h * v) - dae->apply_K(a - h * v)) / (2 * h);
      const Vector jv = dae->jacobian_K(a) * v;
      EXPECT_LT((fd - jv).norm(), 1e-6 * jv.norm());
    }
  }
}

TEST(Jacobian, ZeroStateEqualsStiffness) {
  const auto dae = t::transformer_cached(8);
  const Vector z = Vector::Zero(dae->n());
  EXPECT_LT((DenseMatrix(dae->jacobian_K(z)) - DenseMatrix(dae->assemble_K(z))).norm(), 1e-12);
}

TEST(NonlinearSplit, LinearPartPlusF1ReproducesK) {
  const auto dae = t::transformer_cached(8);
  std::mt19937_64 rng(6);
  const Index n1 = dae->n1();
  EXPECT_EQ(dae->f1(Vector::Zero(n1)).norm(), 0.0);
  for (int k = 0; k < 3; ++k) {
    const Vector a = t::random_potential(*dae, rng);
    Vector split = dae->K_linear() * a;
    split.head(n1) -= dae->f1(a.head(n1));
    EXPECT_LT((split - dae->apply_K(a)).norm(), 1e-12 * split.norm());
    // f1 Jacobian against central differences.
    const Vector v = t::random_vector(n1, rng).normalized() * a.head(n1).norm();
    const double h = 1e-6;
    const Vector fd = (dae->f1(a.head(n1) + h * v) - dae->f1(a.head(n1) - h * v)) / (2 * h);
    const Vector jv = dae->f1_jacobian(a.head(n1)) * v;
    EXPECT_LT((fd - jv).norm(), 1e-6 * std::max(1.0, jv.norm()));
  }
}

TEST(Monotonicity, DiscreteStrongMonotonicity) {
  const auto dae = t::transformer_cached(8);
  const double m = dae->problem().curve.monotonicity();
  std::mt19937_64 rng(7);
  for (int k = 0; k < 20; ++k) {
    const Vector a = t::random_potential(*dae, rng), b = t::random_potential(*dae, rng);
    const Vector d = a - b;
    const double lhs = (dae->apply_K(a) - dae->apply_K(b)).dot(d);
    const double rhs = m * d.dot(dae->K_L() * d);
    EXPECT_GE(lhs, rhs - 1e-10);
  }
}

TEST(Storage, QuadraticForConstantMaterial) {
  const auto dae = t::transformer(8, ReluctivityCurve::constant(20.0));
  std::mt19937_64 rng(8);
  const Vector a = t::random_vector(dae->n(), rng);
  EXPECT_EQ(dae->storage(Vector::Zero(dae->n())), 0.0);
  const double q = 0.5 * a.dot(dae->K_linear() * a);
  EXPECT_NEAR(dae->storage(a), q, 1e-12 * q);
}
