#pragma once
// Matrix Market coordinate I/O and on-disk problem bundles.

#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mqsrom/problem.hpp"

namespace mqsrom {

namespace fs = std::filesystem;

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes a coordinate real general file with 1-based indices.
inline void write_matrix_market(const fs::path& path, const SparseMatrix& m) {
  std::ofstream out(path);
  if (!out) throw IngestionError(IngestionError::Kind::io, "cannot write " + path.string());
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << m.rows() << ' ' << m.cols() << ' ' << m.nonZeros() << '\n';
  // Row-major order so files diff cleanly.
  Eigen::SparseMatrix<double, Eigen::RowMajor> rm = m;
  for (Index r = 0; r < rm.outerSize(); ++r) {
    for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(rm, r); it; ++it) {
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << format_double(it.value()) << '\n';
    }
  }
  if (!out) throw IngestionError(IngestionError::Kind::io, "write failed for " + path.string());
}

inline void write_matrix_market(const fs::path& path, const DenseMatrix& m) {
  std::vector<Triplet> t;
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i)
      if (m(i, j) != 0.0) t.emplace_back(i, j, m(i, j));
  write_matrix_market(path, make_sparse(m.rows(), m.cols(), t));
}

/// Reads a coordinate real (general or symmetric) file into 0-based storage.
inline SparseMatrix read_matrix_market(const fs::path& path) {
  using K = IngestionError::Kind;
  std::ifstream in(path);
  if (!in) throw IngestionError(K::io, "cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IngestionError(K::malformed_header, "empty file " + path.string());
  std::istringstream hs(line);
  std::string banner, object, format, field, symmetry;
  hs >> banner >> object >> format >> field >> symmetry;
  auto lower = [](std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };
  if (banner != "%%MatrixMarket" || lower(object) != "matrix" || lower(format) != "coordinate" ||
      (lower(field) != "real" && lower(field) != "integer") ||
      (lower(symmetry) != "general" && lower(symmetry) != "symmetric")) {
    throw IngestionError(K::malformed_header, "unsupported Matrix Market header in " + path.string());
  }
  const bool symmetric = lower(symmetry) == "symmetric";
  do {
    if (!std::getline(in, line)) throw IngestionError(K::malformed_header, "missing size line");
  } while (line.empty() || line[0] == '%');
  std::istringstream ss(line);
  long long rows = -1, cols = -1, nnz = -1;
  if (!(ss >> rows >> cols >> nnz) || rows < 0 || cols < 0 || nnz < 0) {
    throw IngestionError(K::malformed_header, "bad size line in " + path.string());
  }
  std::vector<Triplet> t;
  t.reserve(static_cast<std::size_t>(symmetric ? 2 * nnz : nnz));
  long long read = 0;
  while (read < nnz && std::getline(in, line)) {
    if (line.empty() || line[0] == '%') continue;
    std::istringstream es(line);
    long long i, j;
    double v;
    if (!(es >> i >> j >> v)) {
      throw IngestionError(K::malformed_entry, "bad entry '" + line + "' in " + path.string());
    }
    if (i < 1 || i > rows || j < 1 || j > cols) {
      throw IngestionError(K::index_out_of_bounds,
                           "entry (" + std::to_string(i) + ", " + std::to_string(j) +
                               ") out of bounds in " + path.string());
    }
    t.emplace_back(i - 1, j - 1, v);
    if (symmetric && i != j) t.emplace_back(j - 1, i - 1, v);
    ++read;
  }
  if (read != nnz) throw IngestionError(K::malformed_entry, "truncated entry list in " + path.string());
  SparseMatrix m(rows, cols);
  m.setFromTriplets(t.begin(), t.end());
  m.makeCompressed();
  return m;
}

/// key = value text file, '#' comments.
inline std::map<std::string, std::string> read_key_values(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError(IngestionError::Kind::io, "cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw IngestionError(IngestionError::Kind::malformed_entry, "expected key = value: " + line);
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline void write_problem_bundle(const fs::path& dir, const FemProblem& p) {
  fs::create_directories(dir);
  std::ofstream meta(dir / "meta");
  if (!meta) throw IngestionError(IngestionError::Kind::io, "cannot write bundle meta");
  meta << "name = " << p.name << '\n'
       << "dimension = " << p.dimension << '\n'
       << "n1 = " << p.n1 << '\n'
       << "n2 = " << p.n2 << '\n'
       << "m = " << p.m << '\n'
       << "k2 = " << p.k2 << '\n'
       << "rows_per_element = " << p.elements.rows_per_element << '\n'
       << "flux_scale = " << format_double(p.elements.flux_scale) << '\n'
       << "curve = " << (p.curve.is_linear() ? "constant" : "brauer") << '\n'
       << "nu_k1 = " << format_double(p.curve.k1()) << '\n'
       << "nu_k2 = " << format_double(p.curve.k2()) << '\n'
       << "nu_k3 = " << format_double(p.curve.k3()) << '\n'
       << "nu_I = " << format_double(p.curve.nu_insulating()) << '\n'
       << "zeta_max = " << format_double(p.curve.zeta_max()) << '\n';
  write_matrix_market(dir / "M11.mtx", p.M11);
  write_matrix_market(dir / "Cd.mtx", p.Cd);
  write_matrix_market(dir / "Upsilon.mtx", p.Upsilon);
  write_matrix_market(dir / "R.mtx", p.R);
  write_matrix_market(dir / "Mf.mtx", p.Mf);
  write_matrix_market(dir / "Mf1.mtx", p.Mf1);
}

inline FemProblem read_problem_bundle(const fs::path& dir) {
  using K = IngestionError::Kind;
  if (!fs::is_directory(dir)) throw IngestionError(K::io, "bundle directory missing: " + dir.string());
  const auto kv = read_key_values(dir / "meta");
  auto get = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw IngestionError(K::malformed_header, "bundle meta lacks '" + key + "'");
    return it->second;
  };
  auto num = [&](const std::string& key) {
    try {
      return std::stod(get(key));
    } catch (const std::logic_error&) {
      throw IngestionError(K::malformed_entry, "bundle meta key '" + key + "' is not numeric");
    }
  };
  const int dimension = static_cast<int>(num("dimension"));
  const Index n1 = static_cast<Index>(num("n1"));
  const Index n2 = static_cast<Index>(num("n2"));
  const Index m = static_cast<Index>(num("m"));
  const Index k2 = static_cast<Index>(num("k2"));
  const int rpe = static_cast<int>(num("rows_per_element"));

  SparseMatrix M11 = read_matrix_market(dir / "M11.mtx");
  SparseMatrix Cd = read_matrix_market(dir / "Cd.mtx");
  SparseMatrix Ups = read_matrix_market(dir / "Upsilon.mtx");
  DenseMatrix R = DenseMatrix(read_matrix_market(dir / "R.mtx"));
  SparseMatrix Mf = read_matrix_market(dir / "Mf.mtx");
  SparseMatrix Mf1 = read_matrix_market(dir / "Mf1.mtx");
  if (Cd.cols() != n1 + n2 || M11.rows() != n1 || Ups.cols() != m || R.rows() != m) {
    throw IngestionError(K::invariant, "bundle matrix shapes disagree with meta");
  }
  if (rpe < 1 || Cd.rows() % rpe != 0 || Mf.rows() != Cd.rows() || Mf1.rows() != Cd.rows()) {
    throw IngestionError(K::invariant, "bundle element layout disagrees with Cd");
  }
  const Index ne = Cd.rows() / rpe;
  ElementTable el;
  el.rows_per_element = rpe;
  el.flux_scale = num("flux_scale");
  el.weight = Vector(ne);
  el.conducting.assign(ne, 0);
  const Vector mf = DenseMatrix(Mf).diagonal();
  const Vector mf1 = DenseMatrix(Mf1).diagonal();
  for (Index e = 0; e < ne; ++e) {
    el.weight(e) = mf(e * rpe);
    el.conducting[e] = mf1(e * rpe) != 0.0;
  }
  ReluctivityCurve curve = get("curve") == "constant"
                               ? ReluctivityCurve::constant(num("nu_k3"), num("nu_I"), num("zeta_max"))
                               : ReluctivityCurve::brauer(num("nu_k1"), num("nu_k2"), num("nu_k3"),
                                                          num("nu_I"), num("zeta_max"));
  FemProblem p;
  try {
    p = make_problem(kv.count("name") ? kv.at("name") : std::string("bundle"), dimension, n1,
                     std::move(M11), std::move(Cd), std::move(Ups), std::move(R), curve,
                     std::move(el));
  } catch (const Error& e) {
    throw IngestionError(K::invariant, std::string("bundle invariant violated: ") + e.what());
  }
  if ((DenseMatrix(p.Mf) - DenseMatrix(Mf)).norm() > 1e-12 * DenseMatrix(Mf).norm() ||
      (DenseMatrix(p.Mf1) - DenseMatrix(Mf1)).norm() > 1e-12 * std::max(1.0, DenseMatrix(Mf1).norm())) {
    throw IngestionError(K::invariant, "Mf/Mf1 are not consistent element-diagonal matrices");
  }
  if (p.k2 != k2) {
    throw IngestionError(K::invariant, "meta k2 = " + std::to_string(k2) +
                                           " differs from dim ker(C2) = " + std::to_string(p.k2));
  }
  return p;
}

}  // namespace mqsrom
