#pragma once
// Block-structured FEM problems: generic assembly from raw matrices, a 2D
// two-coil transformer on a uniform triangulation, and a synthetic 3D-type
// edge/face incidence problem with a nontrivial ker(C2).

#include <array>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mqsrom/matcore.hpp"
#include "mqsrom/reluctivity.hpp"

namespace mqsrom {

/// Per-element data. Element e owns rows [e*rows_per_element, (e+1)*rows_per_element)
/// of C_d; its flux density is flux_scale * ||(C_d a)_e|| and its reluctivity
/// matrix block is weight * nu(flux) * I.
struct ElementTable {
  int rows_per_element = 1;
  double flux_scale = 1.0;
  Vector weight;                  // one per element
  std::vector<char> conducting;   // one per element

  Index count() const { return weight.size(); }
  /// Region volume attached to element e (weight / flux_scale^2).
  double volume(Index e) const { return weight(e) / (flux_scale * flux_scale); }
};

struct FemProblem {
  std::string name;
  int dimension = 2;
  Index n1 = 0, n2 = 0, m = 0, k2 = 0;
  SparseMatrix M11;      // n1 x n1, SPD
  SparseMatrix Cd;       // n_f x (n1 + n2)
  SparseMatrix Upsilon;  // n_f x m
  SparseMatrix X;        // (n1 + n2) x m, equals Cd^T Upsilon
  DenseMatrix R;         // m x m, SPD
  ReluctivityCurve curve = ReluctivityCurve::brauer();
  ElementTable elements;
  SparseMatrix Mf;   // n_f x n_f diagonal
  SparseMatrix Mf1;  // n_f x n_f diagonal, zero outside the conducting region

  Index n() const { return n1 + n2; }
  Index nf() const { return Cd.rows(); }
  SparseMatrix C1() const { return SparseMatrix(Cd.leftCols(n1)); }
  SparseMatrix C2() const { return SparseMatrix(Cd.rightCols(n2)); }
  SparseMatrix X1() const { return SparseMatrix(X.topRows(n1)); }
  SparseMatrix X2() const { return SparseMatrix(X.bottomRows(n2)); }
};

struct ProblemChecks {
  double m11_lambda_min = 0.0;
  double r_lambda_min = 0.0;
  double x2_sigma_min = 0.0;
  Index kernel_c2 = 0;
};

/// Re-checks every FemProblem invariant; throws on violation.
inline ProblemChecks validate_problem(const FemProblem& p) {
  ProblemChecks out;
  const Index n = p.n();
  if (p.n1 <= 0 || p.n2 < 0 || p.m <= 0) throw StructuralError("invalid block sizes");
  if (p.M11.rows() != p.n1 || p.M11.cols() != p.n1) throw StructuralError("M11 has wrong shape");
  if (p.Cd.cols() != n) throw StructuralError("Cd column count differs from n1 + n2");
  if (p.Upsilon.rows() != p.Cd.rows() || p.Upsilon.cols() != p.m) {
    throw StructuralError("Upsilon has wrong shape");
  }
  if (p.R.rows() != p.m || p.R.cols() != p.m) throw StructuralError("R has wrong shape");
  if (p.elements.rows_per_element < 1 ||
      p.elements.count() * p.elements.rows_per_element != p.Cd.rows() ||
      static_cast<Index>(p.elements.conducting.size()) != p.elements.count()) {
    throw StructuralError("element table does not match Cd rows");
  }
  if (!(p.elements.flux_scale > 0.0) || (p.elements.weight.array() <= 0.0).any()) {
    throw ContractViolation("element weights and flux scale must be positive");
  }

  const DenseMatrix m11 = DenseMatrix(p.M11);
  if (relative_asymmetry(m11) > kSymmetryTolerance) throw ContractViolation("M11 not symmetric");
  out.m11_lambda_min = sym_eig_extreme(m11).min;
  if (!(out.m11_lambda_min > 0.0)) throw ContractViolation("M11 not SPD");
  if (relative_asymmetry(p.R) > kSymmetryTolerance) throw ContractViolation("R not symmetric");
  out.r_lambda_min = sym_eig_extreme(p.R).min;
  if (!(out.r_lambda_min > 0.0)) throw AssumptionViolation("R not SPD");

  for (int pass = 0; pass < 2; ++pass) {
    const SparseMatrix& mf = pass == 0 ? p.Mf : p.Mf1;
    if (mf.rows() != p.nf() || mf.cols() != p.nf()) throw StructuralError("Mf has wrong shape");
  }
  const Vector mf = DenseMatrix(p.Mf).diagonal();
  const Vector mf1 = DenseMatrix(p.Mf1).diagonal();
  if ((mf.array() <= 0.0).any()) throw ContractViolation("Mf not SPD");
  if ((mf1.array() < 0.0).any()) throw ContractViolation("Mf1 not positive semidefinite");

  const DenseMatrix x_ref = DenseMatrix(SparseMatrix(p.Cd.transpose() * p.Upsilon));
  const DenseMatrix x = DenseMatrix(p.X);
  if ((x - x_ref).norm() > 1e-12 * std::max(1.0, x_ref.norm())) {
    throw StructuralError("X differs from Cd^T Upsilon");
  }
  const ThinSvd svd2 = thin_svd(x.bottomRows(p.n2));
  out.x2_sigma_min = svd2.sigma.size() == p.m ? svd2.sigma(p.m - 1) : 0.0;
  if (p.n2 < p.m || numerical_rank(svd2.sigma) < p.m) {
    throw StructuralError("X2 rank deficient: rank " + std::to_string(numerical_rank(svd2.sigma)) +
                          " < m = " + std::to_string(p.m));
  }
  out.kernel_c2 = p.n2 == 0 ? 0 : kernel_basis(p.C2()).dim();
  if (out.kernel_c2 != p.k2) {
    throw StructuralError("declared k2 = " + std::to_string(p.k2) +
                          " differs from dim ker(C2) = " + std::to_string(out.kernel_c2));
  }
  return out;
}

/// Assemble a FemProblem from raw matrices; X, Mf, Mf1 and k2 are derived.
inline FemProblem make_problem(std::string name, int dimension, Index n1, SparseMatrix M11,
                               SparseMatrix Cd, SparseMatrix Upsilon, DenseMatrix R,
                               ReluctivityCurve curve, ElementTable elements) {
  FemProblem p;
  p.name = std::move(name);
  p.dimension = dimension;
  p.n1 = n1;
  p.n2 = Cd.cols() - n1;
  p.m = Upsilon.cols();
  p.M11 = std::move(M11);
  p.Cd = std::move(Cd);
  p.Upsilon = std::move(Upsilon);
  p.R = std::move(R);
  p.curve = std::move(curve);
  p.elements = std::move(elements);
  p.X = SparseMatrix(p.Cd.transpose() * p.Upsilon);
  // Drop cancellation noise from the product.
  const double xmax = p.X.nonZeros() ? DenseMatrix(p.X).cwiseAbs().maxCoeff() : 0.0;
  p.X.prune(1e-14 * xmax, 1.0);
  p.X.makeCompressed();
  const Index nf = p.Cd.rows();
  const int rpe = p.elements.rows_per_element;
  if (p.elements.count() * rpe != nf) throw StructuralError("element table does not match Cd rows");
  std::vector<Triplet> mf, mf1;
  for (Index row = 0; row < nf; ++row) {
    const Index e = row / rpe;
    mf.emplace_back(row, row, p.elements.weight(e));
    if (p.elements.conducting[e]) mf1.emplace_back(row, row, p.elements.weight(e));
  }
  p.Mf = make_sparse(nf, nf, mf);
  p.Mf1 = make_sparse(nf, nf, mf1);
  p.k2 = p.n2 == 0 ? 0 : kernel_basis(p.C2()).dim();
  validate_problem(p);
  return p;
}

// ---------------------------------------------------------------------------
// 2D transformer

struct Box2 {
  double x0, x1, y0, y1;
  bool contains(double x, double y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  double area() const { return (x1 - x0) * (y1 - y0); }
};

inline bool boxes_overlap(const Box2& a, const Box2& b) {
  return std::min(a.x1, b.x1) > std::max(a.x0, b.x0) && std::min(a.y1, b.y1) > std::max(a.y0, b.y0);
}

struct CoilSpec {
  Box2 go;
  Box2 ret;
  double turns = 1.0;
};

/// Geometry and material data on the unit square.
struct TransformerParams {
  int nx = 16, ny = 16;
  Box2 core_outer{0.25, 0.75, 0.25, 0.75};
  Box2 core_window{0.375, 0.625, 0.375, 0.625};
  std::vector<CoilSpec> coils{
      {{0.375, 0.5, 0.375, 0.625}, {0.125, 0.25, 0.375, 0.625}, 1.0},
      {{0.5, 0.625, 0.375, 0.625}, {0.75, 0.875, 0.375, 0.625}, 1.0}};
  double sigma_c = 1.0;
  std::vector<double> resistance{1.0, 1.0};
  ReluctivityCurve curve = ReluctivityCurve::brauer();
};

/// Node coordinates and DOF map of a generated 2D mesh (for diagnostics and tests).
struct TransformerMesh {
  int nx = 0, ny = 0;
  std::vector<Index> dof_of_node;  // -1 for Dirichlet nodes
  std::vector<std::array<Index, 3>> triangles;
  std::vector<int> region;  // 0 air, 1 core, 2 + 2c coil c go side, 3 + 2c return side
};

inline FemProblem build_transformer_2d(const TransformerParams& prm,
                                       TransformerMesh* mesh_out = nullptr) {
  const int nx = prm.nx, ny = prm.ny;
  if (nx < 4 || ny < 4) throw ParameterError("transformer mesh needs nx, ny >= 4");
  const Index m = static_cast<Index>(prm.coils.size());
  if (m == 0) throw ParameterError("at least one coil is required");
  if (static_cast<Index>(prm.resistance.size()) != m) {
    throw ParameterError("one resistance value per coil is required");
  }
  if (!(prm.sigma_c > 0.0)) throw AssumptionViolation("conductivity must be positive");

  // Coil supports must be pairwise disjoint and must not overlap the core.
  std::vector<Box2> sides;
  for (const auto& c : prm.coils) {
    sides.push_back(c.go);
    sides.push_back(c.ret);
  }
  for (std::size_t i = 0; i < sides.size(); ++i) {
    for (std::size_t j = i + 1; j < sides.size(); ++j) {
      if (boxes_overlap(sides[i], sides[j])) throw GeometryError("coil supports overlap");
    }
  }

  const double hx = 1.0 / nx, hy = 1.0 / ny;
  auto node = [nx](int i, int j) { return static_cast<Index>(j) * (nx + 1) + i; };

  // Classify cells by their centers.
  std::vector<int> cell_region(static_cast<std::size_t>(nx) * ny, 0);
  std::vector<double> side_area(sides.size(), 0.0);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const double cx = (i + 0.5) * hx, cy = (j + 0.5) * hy;
      int reg = 0;
      if (prm.core_outer.contains(cx, cy) && !prm.core_window.contains(cx, cy)) reg = 1;
      for (std::size_t s = 0; s < sides.size(); ++s) {
        if (sides[s].contains(cx, cy)) {
          if (reg != 0) throw GeometryError("coil side overlaps the core or another coil");
          reg = 2 + static_cast<int>(s);
          side_area[s] += hx * hy;
        }
      }
      cell_region[static_cast<std::size_t>(j) * nx + i] = reg;
    }
  }
  for (std::size_t s = 0; s < sides.size(); ++s) {
    if (side_area[s] == 0.0) throw GeometryError("coil side covers no mesh cell");
  }

  // Triangles.
  std::vector<std::array<Index, 3>> tris;
  std::vector<int> tri_region;
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int reg = cell_region[static_cast<std::size_t>(j) * nx + i];
      tris.push_back({node(i, j), node(i + 1, j), node(i + 1, j + 1)});
      tris.push_back({node(i, j), node(i + 1, j + 1), node(i, j + 1)});
      tri_region.push_back(reg);
      tri_region.push_back(reg);
    }
  }
  bool any_core = false;
  for (int r : tri_region) any_core = any_core || r == 1;
  if (!any_core) throw GeometryError("core covers no mesh cell");

  // DOF numbering: interior nodes touching a core triangle first.
  const Index nnodes = static_cast<Index>(nx + 1) * (ny + 1);
  std::vector<char> interior(nnodes, 0), touches_core(nnodes, 0);
  for (int j = 1; j < ny; ++j)
    for (int i = 1; i < nx; ++i) interior[node(i, j)] = 1;
  for (std::size_t t = 0; t < tris.size(); ++t) {
    if (tri_region[t] == 1)
      for (Index v : tris[t]) touches_core[v] = 1;
  }
  std::vector<Index> dof(nnodes, -1);
  Index next = 0;
  for (Index v = 0; v < nnodes; ++v)
    if (interior[v] && touches_core[v]) dof[v] = next++;
  const Index n1 = next;
  for (Index v = 0; v < nnodes; ++v)
    if (interior[v] && !touches_core[v]) dof[v] = next++;
  const Index n = next;

  auto coord = [&](Index v) {
    return std::array<double, 2>{(v % (nx + 1)) * hx, (v / (nx + 1)) * hy};
  };

  const Index ne = static_cast<Index>(tris.size());
  std::vector<Triplet> cd, m11, xs;
  ElementTable elements;
  elements.rows_per_element = 2;
  elements.flux_scale = 1.0;
  elements.weight = Vector::Constant(ne, 0.5 * hx * hy);
  elements.conducting.assign(ne, 0);
  for (Index e = 0; e < ne; ++e) {
    const auto& t = tris[e];
    const auto p0 = coord(t[0]), p1 = coord(t[1]), p2 = coord(t[2]);
    const double det = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]);
    const double area = 0.5 * std::abs(det);
    // Gradients of the barycentric coordinates.
    const double gx[3] = {(p1[1] - p2[1]) / det, (p2[1] - p0[1]) / det, (p0[1] - p1[1]) / det};
    const double gy[3] = {(p2[0] - p1[0]) / det, (p0[0] - p2[0]) / det, (p1[0] - p0[0]) / det};
    const int reg = tri_region[e];
    elements.conducting[e] = reg == 1;
    for (int k = 0; k < 3; ++k) {
      const Index dk = dof[t[k]];
      if (dk < 0) continue;
      cd.emplace_back(2 * e, dk, gx[k]);
      cd.emplace_back(2 * e + 1, dk, gy[k]);
      if (reg == 1) {
        for (int l = 0; l < 3; ++l) {
          const Index dl = dof[t[l]];
          if (dl < 0) continue;
          m11.emplace_back(dk, dl, prm.sigma_c * area / 12.0 * (k == l ? 2.0 : 1.0));
        }
      }
      if (reg >= 2) {
        const int s = reg - 2;
        const Index coil = s / 2;
        const double sign = (s % 2 == 0) ? 1.0 : -1.0;
        const double chi = sign * prm.coils[coil].turns / side_area[s];
        xs.emplace_back(dk, coil, chi * area / 3.0);
      }
    }
  }
  SparseMatrix Cd = make_sparse(2 * ne, n, cd);
  SparseMatrix M11 = make_sparse(n1, n1, m11);
  SparseMatrix X = make_sparse(n, m, xs);

  // Upsilon with Cd^T Upsilon = X: Upsilon = Mf Cd K_L^{-1} X.
  std::vector<Triplet> mfw;
  for (Index r = 0; r < 2 * ne; ++r) mfw.emplace_back(r, r, elements.weight(r / 2));
  const SparseMatrix Mf = make_sparse(2 * ne, 2 * ne, mfw);
  const SparseMatrix KL = SparseMatrix(Cd.transpose() * Mf * Cd);
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(KL);
  if (ldlt.info() != Eigen::Success) throw FactorizationError("K_L factorization failed");
  const DenseMatrix w = ldlt.solve(DenseMatrix(X));
  const DenseMatrix ups = DenseMatrix(Mf * Cd) * w;
  SparseMatrix Upsilon = to_sparse(ups);

  DenseMatrix R = DenseMatrix::Zero(m, m);
  for (Index c = 0; c < m; ++c) R(c, c) = prm.resistance[c];

  if (mesh_out) {
    mesh_out->nx = nx;
    mesh_out->ny = ny;
    mesh_out->dof_of_node = dof;
    mesh_out->triangles = tris;
    mesh_out->region = tri_region;
  }
  FemProblem p = make_problem("transformer2d", 2, n1, std::move(M11), std::move(Cd),
                              std::move(Upsilon), std::move(R), prm.curve, std::move(elements));
  if (p.k2 != 0) throw StructuralError("2D problem with nontrivial ker(C2)");
  return p;
}

// ---------------------------------------------------------------------------
// Synthetic 3D-type problem

struct Synthetic3dParams {
  int nx = 3, ny = 3, nz = 3;
  double h = 1.0;
  // Conducting box in cell indices, half-open [b0, b1).
  std::array<int, 3> box_lo{1, 1, 1};
  std::array<int, 3> box_hi{2, 2, 2};
  double sigma_c = 1.0;
  std::vector<double> resistance{1.0, 1.0};
  ReluctivityCurve curve = ReluctivityCurve::brauer();
};

inline FemProblem build_synthetic_3d(const Synthetic3dParams& prm) {
  const std::array<int, 3> nc{prm.nx, prm.ny, prm.nz};
  for (int d = 0; d < 3; ++d) {
    if (nc[d] < 3) throw ParameterError("synthetic grid needs at least 3 cells per axis");
    if (prm.box_lo[d] < 1 || prm.box_hi[d] > nc[d] - 1 || prm.box_lo[d] >= prm.box_hi[d]) {
      throw GeometryError("conducting box must be nonempty and strictly interior");
    }
  }
  if (prm.resistance.size() != 2) throw ParameterError("synthetic problem has exactly 2 ports");
  if (!(prm.sigma_c > 0.0) || !(prm.h > 0.0)) throw ParameterError("sigma and h must be positive");

  using Key = std::array<int, 4>;  // direction, i, j, k
  auto in_box_cell = [&](int i, int j, int k) {
    return i >= prm.box_lo[0] && i < prm.box_hi[0] && j >= prm.box_lo[1] && j < prm.box_hi[1] &&
           k >= prm.box_lo[2] && k < prm.box_hi[2];
  };
  auto in_box_closure = [&](int d, int i, int j, int k) {
    // Edge of direction d starting at node (i,j,k) lies in the closed box.
    const std::array<int, 3> lo{i, j, k};
    for (int a = 0; a < 3; ++a) {
      const int hi_a = lo[a] + (a == d ? 1 : 0);
      if (lo[a] < prm.box_lo[a] || hi_a > prm.box_hi[a]) return false;
    }
    return true;
  };
  auto edge_interior = [&](int d, int i, int j, int k) {
    const std::array<int, 3> p{i, j, k};
    for (int a = 0; a < 3; ++a) {
      if (a == d) {
        if (p[a] < 0 || p[a] >= nc[a]) return false;
      } else if (p[a] <= 0 || p[a] >= nc[a]) {
        return false;
      }
    }
    return true;
  };

  // Edge numbering: conducting edges first.
  std::map<Key, Index> edge_id;
  std::vector<Key> edges;
  for (int d = 0; d < 3; ++d)
    for (int k = 0; k <= nc[2]; ++k)
      for (int j = 0; j <= nc[1]; ++j)
        for (int i = 0; i <= nc[0]; ++i)
          if (edge_interior(d, i, j, k)) edges.push_back({d, i, j, k});
  Index next = 0;
  for (const auto& e : edges)
    if (in_box_closure(e[0], e[1], e[2], e[3])) edge_id[e] = next++;
  const Index n1 = next;
  for (const auto& e : edges)
    if (!in_box_closure(e[0], e[1], e[2], e[3])) edge_id[e] = next++;
  const Index n = next;

  auto eid = [&](int d, int i, int j, int k) -> Index {
    auto it = edge_id.find({d, i, j, k});
    return it == edge_id.end() ? -1 : it->second;
  };

  // Interior faces (normal direction d at plane index p[d] in 1..nc[d]-1).
  std::vector<Triplet> cd;
  std::vector<char> face_conducting;
  std::map<Key, Index> face_id;
  Index nf = 0;
  for (int d = 0; d < 3; ++d) {
    const int a = (d + 1) % 3, b = (d + 2) % 3;  // right-handed tangents
    for (int k = 0; k < nc[2] + (d == 2 ? 1 : 0); ++k)
      for (int j = 0; j < nc[1] + (d == 1 ? 1 : 0); ++j)
        for (int i = 0; i < nc[0] + (d == 0 ? 1 : 0); ++i) {
          const std::array<int, 3> p{i, j, k};
          if (p[d] < 1 || p[d] > nc[d] - 1) continue;
          std::array<int, 3> pa = p, pb = p;
          pa[b] += 1;  // edge along a shifted in b
          pb[a] += 1;  // edge along b shifted in a
          const Index e1 = eid(a, p[0], p[1], p[2]);
          const Index e2 = eid(b, pb[0], pb[1], pb[2]);
          const Index e3 = eid(a, pa[0], pa[1], pa[2]);
          const Index e4 = eid(b, p[0], p[1], p[2]);
          if (e1 >= 0) cd.emplace_back(nf, e1, 1.0);
          if (e2 >= 0) cd.emplace_back(nf, e2, 1.0);
          if (e3 >= 0) cd.emplace_back(nf, e3, -1.0);
          if (e4 >= 0) cd.emplace_back(nf, e4, -1.0);
          const bool cond = in_box_closure(a, p[0], p[1], p[2]) &&
                            in_box_closure(b, pb[0], pb[1], pb[2]) &&
                            in_box_closure(a, pa[0], pa[1], pa[2]) &&
                            in_box_closure(b, p[0], p[1], p[2]);
          face_conducting.push_back(cond ? 1 : 0);
          face_id[{d, i, j, k}] = nf;
          ++nf;
        }
  }
  SparseMatrix Cd = make_sparse(nf, n, cd);

  // Lumped edge mass on conducting edges: sigma h (adjacent box cells) / 4.
  std::vector<Triplet> m11;
  for (const auto& e : edges) {
    const Index id = edge_id[e];
    if (id >= n1) continue;
    const int d = e[0];
    const int a = (d + 1) % 3, b = (d + 2) % 3;
    int count = 0;
    for (int sa = -1; sa <= 0; ++sa)
      for (int sb = -1; sb <= 0; ++sb) {
        std::array<int, 3> c{e[1], e[2], e[3]};
        c[a] += sa;
        c[b] += sb;
        if (in_box_cell(c[0], c[1], c[2])) ++count;
      }
    m11.emplace_back(id, id, prm.sigma_c * prm.h * count / 4.0);
  }
  SparseMatrix M11 = make_sparse(n1, n1, m11);

  // Two single-face winding patches next to the box.
  const int bx0 = prm.box_lo[0], by0 = prm.box_lo[1], bz0 = prm.box_lo[2], bz1 = prm.box_hi[2];
  auto face = [&](int d, int i, int j, int k) -> Index {
    auto it = face_id.find({d, i, j, k});
    if (it == face_id.end()) throw GeometryError("winding face outside the grid");
    return it->second;
  };
  std::vector<Triplet> ups{Triplet(face(0, bx0, by0, bz0 - 1), 0, 1.0), Triplet(face(1, bx0, by0, bz1), 1, 1.0)};
  SparseMatrix Upsilon = make_sparse(nf, 2, ups);

  ElementTable elements;
  elements.rows_per_element = 1;
  elements.flux_scale = 1.0 / (prm.h * prm.h);
  elements.weight = Vector::Constant(nf, 1.0 / prm.h);
  elements.conducting = face_conducting;

  DenseMatrix R = DenseMatrix::Zero(2, 2);
  R(0, 0) = prm.resistance[0];
  R(1, 1) = prm.resistance[1];
  FemProblem p = make_problem("synthetic3d", 3, n1, std::move(M11), std::move(Cd),
                              std::move(Upsilon), std::move(R), prm.curve, std::move(elements));
  if (p.k2 < 1) throw StructuralError("synthetic problem has trivial ker(C2)");
  return p;
}

}  // namespace mqsrom
