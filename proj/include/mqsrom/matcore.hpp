#pragma once
// Dense and sparse linear-algebra kernels shared by every other module.
//
// All rank decisions go through one relative singular-value threshold
// (kRankTolerance * sigma_max). Symmetric inputs are checked with a relative
// Frobenius asymmetry bound and symmetrized before eigen-solves.

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseQR>
#include <Eigen/OrderingMethods>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "mqsrom/errors.hpp"

namespace mqsrom {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;  // compressed column storage
using Triplet = Eigen::Triplet<double>;

inline constexpr double kRankTolerance = 1e-10;
inline constexpr double kSymmetryTolerance = 1e-12;

/// Orthonormal columns spanning a kernel or image, plus the tolerance that
/// decided the rank.
struct OrthonormalBasis {
  DenseMatrix matrix;
  double tolerance = kRankTolerance;

  Index dim() const { return matrix.cols(); }
  Index ambient_dim() const { return matrix.rows(); }
};

/// Builds a finalized sparse matrix; duplicate (row, col) pairs are summed.
inline SparseMatrix make_sparse(Index rows, Index cols, const std::vector<Triplet>& entries) {
  for (const auto& t : entries) {
    if (t.row() < 0 || t.row() >= rows || t.col() < 0 || t.col() >= cols) {
      throw ParameterError("sparse entry (" + std::to_string(t.row()) + ", " +
                           std::to_string(t.col()) + ") outside " + std::to_string(rows) + "x" +
                           std::to_string(cols));
    }
  }
  SparseMatrix m(rows, cols);
  m.setFromTriplets(entries.begin(), entries.end());
  m.makeCompressed();
  return m;
}

inline SparseMatrix sparse_identity(Index n) {
  SparseMatrix m(n, n);
  m.setIdentity();
  m.makeCompressed();
  return m;
}

inline SparseMatrix to_sparse(const DenseMatrix& d, double drop = 0.0) {
  SparseMatrix s = d.sparseView(1.0, drop);
  s.makeCompressed();
  return s;
}

/// ||M - M^T||_F / ||M||_F (0 for the zero matrix).
template <class Derived>
double relative_asymmetry(const Eigen::MatrixBase<Derived>& m) {
  if (m.rows() != m.cols()) return std::numeric_limits<double>::infinity();
  const double norm = m.norm();
  if (norm == 0.0) return 0.0;
  return (m - m.transpose()).norm() / norm;
}

inline double relative_asymmetry(const SparseMatrix& m) {
  if (m.rows() != m.cols()) return std::numeric_limits<double>::infinity();
  const double norm = m.norm();
  if (norm == 0.0) return 0.0;
  SparseMatrix t = m.transpose();
  return SparseMatrix(m - t).norm() / norm;
}

struct ThinSvd {
  DenseMatrix U;
  Vector sigma;  // non-increasing, non-negative
  DenseMatrix V;
};

inline ThinSvd thin_svd(const DenseMatrix& m) {
  ThinSvd out;
  if (m.rows() == 0 || m.cols() == 0) {
    out.U = DenseMatrix(m.rows(), 0);
    out.sigma = Vector(0);
    out.V = DenseMatrix(m.cols(), 0);
    return out;
  }
  Eigen::BDCSVD<DenseMatrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.U = svd.matrixU();
  out.sigma = svd.singularValues();
  out.V = svd.matrixV();
  return out;
}

inline double spectral_norm(const DenseMatrix& m) {
  if (m.size() == 0) return 0.0;
  return Eigen::BDCSVD<DenseMatrix>(m).singularValues()(0);
}

/// Number of singular values above tol * sigma_max.
inline Index numerical_rank(const Vector& sigma, double tol = kRankTolerance) {
  if (sigma.size() == 0 || sigma(0) == 0.0) return 0;
  const double cut = tol * sigma(0);
  Index r = 0;
  while (r < sigma.size() && sigma(r) > cut) ++r;
  return r;
}

/// Orthonormal basis of the orthogonal complement of span(Q), Q orthonormal.
inline DenseMatrix orthogonal_complement(const DenseMatrix& q, Index n) {
  if (q.cols() == 0) return DenseMatrix::Identity(n, n);
  if (q.cols() >= n) return DenseMatrix(n, 0);
  Eigen::HouseholderQR<DenseMatrix> qr(q);
  DenseMatrix full = qr.householderQ() * DenseMatrix::Identity(n, n);
  return full.rightCols(n - q.cols());
}

namespace detail {

inline void check_tolerance(double tol) {
  if (!(tol > 0.0 && tol < 1.0)) {
    throw ParameterError("rank tolerance must lie in (0, 1), got " + std::to_string(tol));
  }
}

// Row-space basis and kernel basis of a dense matrix from one SVD.
struct SubspacePair {
  DenseMatrix row_space;
  DenseMatrix kernel;
};

inline SubspacePair dense_subspaces(const DenseMatrix& m, double tol) {
  const Index n = m.cols();
  SubspacePair out;
  if (n == 0) {
    out.row_space = DenseMatrix(0, 0);
    out.kernel = DenseMatrix(0, 0);
    return out;
  }
  if (m.rows() == 0 || m.norm() == 0.0) {
    out.row_space = DenseMatrix(n, 0);
    out.kernel = DenseMatrix::Identity(n, n);
    return out;
  }
  const ThinSvd svd = thin_svd(m);
  const Index r = numerical_rank(svd.sigma, tol);
  out.row_space = svd.V.leftCols(r);
  if (svd.V.cols() == n) {
    out.kernel = svd.V.rightCols(n - r);
  } else {
    out.kernel = orthogonal_complement(out.row_space, n);
  }
  return out;
}

// Tall sparse input: column-pivoted sparse QR first, then a dense SVD of the
// (cols x cols) triangular factor. Q is orthogonal, so singular values and
// right singular vectors are those of the input.
inline SubspacePair sparse_subspaces(const SparseMatrix& m, double tol) {
  Eigen::SparseQR<SparseMatrix, Eigen::COLAMDOrdering<int>> qr;
  qr.setPivotThreshold(0.0);
  qr.compute(m);
  if (qr.info() != Eigen::Success) throw FactorizationError("sparse QR failed");
  const Index n = m.cols();
  const Index k = std::min(m.rows(), n);
  DenseMatrix r = DenseMatrix(SparseMatrix(qr.matrixR())).topRows(k);
  SubspacePair local = dense_subspaces(r, tol);
  const auto& perm = qr.colsPermutation();
  SubspacePair out;
  out.row_space = perm * local.row_space;
  out.kernel = perm * local.kernel;
  return out;
}

inline SubspacePair subspaces(const SparseMatrix& m, double tol) {
  constexpr Index kDenseLimit = 400;
  if (m.cols() > kDenseLimit && m.rows() > m.cols()) return sparse_subspaces(m, tol);
  return dense_subspaces(DenseMatrix(m), tol);
}

}  // namespace detail

/// Orthonormal basis of ker(M) at relative tolerance tol.
inline OrthonormalBasis kernel_basis(const DenseMatrix& m, double tol = kRankTolerance) {
  detail::check_tolerance(tol);
  return {detail::dense_subspaces(m, tol).kernel, tol};
}

inline OrthonormalBasis kernel_basis(const SparseMatrix& m, double tol = kRankTolerance) {
  detail::check_tolerance(tol);
  return {detail::subspaces(m, tol).kernel, tol};
}

/// Orthonormal basis of im(M^T) = ker(M)^perp.
inline OrthonormalBasis row_space_basis(const SparseMatrix& m, double tol = kRankTolerance) {
  detail::check_tolerance(tol);
  const auto sub = detail::subspaces(m, tol);
  // The complement of the kernel is returned exactly as I when the kernel is trivial.
  if (sub.kernel.cols() == 0) return {DenseMatrix::Identity(m.cols(), m.cols()), tol};
  return {sub.row_space, tol};
}

/// Orthonormal basis of the column space im(M).
inline OrthonormalBasis image_basis(const DenseMatrix& m, double tol = kRankTolerance) {
  detail::check_tolerance(tol);
  if (m.rows() == 0 || m.cols() == 0 || m.norm() == 0.0) return {DenseMatrix(m.rows(), 0), tol};
  const ThinSvd svd = thin_svd(m);
  return {svd.U.leftCols(numerical_rank(svd.sigma, tol)), tol};
}

inline OrthonormalBasis image_basis(const SparseMatrix& m, double tol = kRankTolerance) {
  SparseMatrix t = m.transpose();
  return row_space_basis(t, tol);
}

struct ExtremeEigenpairs {
  double min = 0.0;
  double max = 0.0;
  Vector min_vector;
  Vector max_vector;
};

inline void require_symmetric(const DenseMatrix& m, const char* what) {
  if (m.rows() != m.cols()) {
    throw ContractViolation(std::string(what) + ": matrix is not square");
  }
  const double asym = relative_asymmetry(m);
  if (asym > kSymmetryTolerance) {
    throw ContractViolation(std::string(what) + ": relative asymmetry " + std::to_string(asym) +
                            " exceeds 1e-12");
  }
}

/// Smallest and largest eigenvalue of a symmetric matrix, with eigenvectors.
inline ExtremeEigenpairs sym_eig_extreme(const DenseMatrix& m) {
  require_symmetric(m, "sym_eig_extreme");
  if (m.rows() == 0) throw ParameterError("sym_eig_extreme: empty matrix");
  const DenseMatrix sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(sym);
  if (es.info() != Eigen::Success) throw FactorizationError("symmetric eigensolver failed");
  const Index n = sym.rows();
  return {es.eigenvalues()(0), es.eigenvalues()(n - 1), es.eigenvectors().col(0),
          es.eigenvectors().col(n - 1)};
}

/// M^{-1/2} of a symmetric positive definite matrix via eigendecomposition.
inline DenseMatrix spd_inverse_sqrt(const DenseMatrix& m) {
  if (m.rows() == 0) return DenseMatrix(0, 0);
  require_symmetric(m, "spd_inverse_sqrt");
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(0.5 * (m + m.transpose()));
  const Vector& lambda = es.eigenvalues();
  if (!(lambda(0) > 0.0)) throw FactorizationError("spd_inverse_sqrt: matrix not SPD", lambda(0));
  return es.eigenvectors() * lambda.cwiseSqrt().cwiseInverse().asDiagonal() *
         es.eigenvectors().transpose();
}

/// Solve M x = b for symmetric positive definite M.
inline Vector solve_spd(const DenseMatrix& m, const Vector& b) {
  require_symmetric(m, "solve_spd");
  Eigen::LLT<DenseMatrix> llt(0.5 * (m + m.transpose()));
  if (llt.info() != Eigen::Success) {
    Eigen::LDLT<DenseMatrix> ldlt(m);
    const double pivot = ldlt.vectorD().size() ? ldlt.vectorD().minCoeff() : 0.0;
    throw FactorizationError("solve_spd: matrix is not positive definite", pivot);
  }
  return llt.solve(b);
}

/// Solve M x = b for square nonsingular M (partial pivoting).
inline Vector solve_lu(const DenseMatrix& m, const Vector& b) {
  if (m.rows() != m.cols()) throw ParameterError("solve_lu: matrix is not square");
  Eigen::PartialPivLU<DenseMatrix> lu(m);
  const Vector diag = lu.matrixLU().diagonal().cwiseAbs();
  const double scale = diag.size() ? diag.maxCoeff() : 0.0;
  const double pivot = diag.size() ? diag.minCoeff() : 0.0;
  if (scale == 0.0 || pivot <= 1e-14 * scale) {
    throw FactorizationError("solve_lu: matrix is numerically singular", pivot);
  }
  return lu.solve(b);
}

inline DenseMatrix symmetrize(const DenseMatrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace mqsrom
