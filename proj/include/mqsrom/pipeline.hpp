#pragma once
// Config-driven stages: generate -> simulate -> reduce -> verify -> report.
// Every stage reads its inputs from the output directory, so stages can be
// rerun independently.

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "mqsrom/passivity.hpp"

namespace mqsrom::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* kVersion = "1.0.0";

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A stage ran before the artifacts it consumes exist.
class StageDependencyError : public Error {
 public:
  using Error::Error;
};

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("SHA-256 computation failed");
  }
  EVP_MD_CTX_free(ctx);
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return os.str();
}

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IngestionError(IngestionError::Kind::io, "cannot open " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// ---------------------------------------------------------------------------
// Configuration: "[section]" headers, "key = value" lines, '#' comments.
// Keys are addressed as section.key.

class Config {
 public:
  static Config parse(const std::string& text) {
    Config c;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
      }
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
      c.values_[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
    }
    return c;
  }

  static Config load(const fs::path& path) {
    if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
    return parse(read_file(path));
  }

  /// Applies "section.key=value".
  void set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects section.key=value");
    values_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string str(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }

  double num(const std::string& key, double def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    try {
      std::size_t pos = 0;
      const double v = std::stod(it->second, &pos);
      if (pos != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::logic_error&) {
      throw ConfigError(key + ": expected a number, got '" + it->second + "'");
    }
  }

  long integer(const std::string& key, long def) const {
    const double v = num(key, static_cast<double>(def));
    if (v != std::floor(v)) throw ConfigError(key + ": expected an integer");
    return static_cast<long>(v);
  }

  std::vector<double> list(const std::string& key, std::vector<double> def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::vector<double> out;
    std::istringstream ss(it->second);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        out.push_back(std::stod(trim(item)));
      } catch (const std::logic_error&) {
        throw ConfigError(key + ": bad list entry '" + item + "'");
      }
    }
    return out;
  }

  /// Sorted key = value lines; hashed into the manifest.
  std::string canonical() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
    return os.str();
  }

  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  }

 private:
  std::map<std::string, std::string> values_;
};

/// "amp:omega + amp:omega" -> sum of amp sin(omega pi t).
inline std::vector<SinusoidInput::Term> parse_sinusoid(const std::string& key, const std::string& text) {
  std::vector<SinusoidInput::Term> terms;
  std::istringstream ss(text);
  std::string item;
  while (std::getline(ss, item, '+')) {
    item = Config::trim(item);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError(key + ": expected amp:omega terms");
    try {
      terms.push_back({std::stod(item.substr(0, colon)), std::stod(item.substr(colon + 1))});
    } catch (const std::logic_error&) {
      throw ConfigError(key + ": bad term '" + item + "'");
    }
  }
  return terms;
}

struct PipelineConfig {
  std::string problem_kind = "transformer2d";
  TransformerParams transformer;
  Synthetic3dParams synthetic;
  fs::path bundle_path;
  double t0 = 0.0, t_end = 0.01;
  int steps = 2000;
  Scheme scheme = Scheme::bdf1;
  NewtonOptions newton;
  SinusoidInput training = training_input();
  SinusoidInput test = test_input();
  RankRule pod = RankRule::tolerance(1e-7);
  RankRule deim = RankRule::fixed(9);
  unsigned seed = 42;
  double dissipation_tol = 1e-6;
  Quadrature quadrature = Quadrature::right_endpoint;
  double io_tol = 1e-8;
  fs::path out_dir = "mqs_out";
  std::string hash;

  TimeGrid grid() const { return TimeGrid::uniform(t0, t_end, steps); }
};

inline RankRule parse_rank_rule(const Config& c, const std::string& section, const std::string& rkey,
                                RankRule def) {
  const bool has_r = c.has(section + "." + rkey), has_tol = c.has(section + ".tol");
  if (has_r && has_tol) throw ConfigError(section + ": give either " + rkey + " or tol, not both");
  if (has_r) {
    const long r = c.integer(section + "." + rkey, 0);
    if (r < 1) throw ConfigError(section + "." + rkey + " must be positive");
    return RankRule::fixed(r);
  }
  if (has_tol) {
    const double tol = c.num(section + ".tol", 0.0);
    if (!(tol > 0.0 && tol < 1.0)) throw ConfigError(section + ".tol must lie in (0, 1)");
    return RankRule::tolerance(tol);
  }
  return def;
}

inline ReluctivityCurve parse_curve(const Config& c) {
  const std::string kind = c.str("material.curve", "brauer");
  const double nu_i = c.num("material.nu_I", ReluctivityCurve::kDefaultNuI);
  const double zmax = c.num("material.zeta_max", ReluctivityCurve::kDefaultZetaMax);
  if (kind == "brauer") {
    return ReluctivityCurve::brauer(c.num("material.k1", ReluctivityCurve::kDefaultK1),
                                    c.num("material.k2", ReluctivityCurve::kDefaultK2),
                                    c.num("material.k3", ReluctivityCurve::kDefaultK3), nu_i, zmax);
  }
  if (kind == "constant") return ReluctivityCurve::constant(c.num("material.nu_C", 388.33), nu_i, zmax);
  throw ConfigError("material.curve must be brauer or constant");
}

inline PipelineConfig make_config(const Config& c) {
  PipelineConfig p;
  p.problem_kind = c.str("problem.kind", p.problem_kind);
  const ReluctivityCurve curve = parse_curve(c);
  if (p.problem_kind == "transformer2d") {
    auto& t = p.transformer;
    t.nx = static_cast<int>(c.integer("problem.nx", t.nx));
    t.ny = static_cast<int>(c.integer("problem.ny", t.ny));
    t.sigma_c = c.num("problem.sigma_c", t.sigma_c);
    t.resistance = c.list("problem.resistance", t.resistance);
    const auto turns = c.list("problem.turns", {});
    if (!turns.empty()) {
      if (turns.size() != t.coils.size()) throw ConfigError("problem.turns needs one value per coil");
      for (std::size_t i = 0; i < turns.size(); ++i) t.coils[i].turns = turns[i];
    }
    t.curve = curve;
  } else if (p.problem_kind == "synthetic3d") {
    auto& s = p.synthetic;
    s.nx = static_cast<int>(c.integer("problem.nx", s.nx));
    s.ny = static_cast<int>(c.integer("problem.ny", s.ny));
    s.nz = static_cast<int>(c.integer("problem.nz", s.nz));
    s.sigma_c = c.num("problem.sigma_c", s.sigma_c);
    s.resistance = c.list("problem.resistance", s.resistance);
    s.curve = curve;
  } else if (p.problem_kind == "bundle") {
    if (!c.has("problem.bundle")) throw ConfigError("problem.kind = bundle needs problem.bundle");
    p.bundle_path = c.str("problem.bundle", "");
    if (!fs::is_directory(p.bundle_path)) {
      throw StageDependencyError("problem bundle not found: " + p.bundle_path.string());
    }
  } else {
    throw ConfigError("problem.kind must be transformer2d, synthetic3d or bundle");
  }

  p.t0 = c.num("time.t0", p.t0);
  p.t_end = c.num("time.t_end", p.t_end);
  p.steps = static_cast<int>(c.integer("time.steps", p.steps));
  if (!(p.t_end > p.t0) || p.steps < 1) throw ConfigError("time grid needs t_end > t0 and steps >= 1");
  const std::string scheme = c.str("time.scheme", "bdf1");
  if (scheme == "bdf1") p.scheme = Scheme::bdf1;
  else if (scheme == "bdf2") p.scheme = Scheme::bdf2;
  else throw ConfigError("time.scheme must be bdf1 or bdf2");
  p.newton.tol = c.num("time.newton_tol", p.newton.tol);
  p.newton.max_iterations = static_cast<int>(c.integer("time.newton_max_iter", p.newton.max_iterations));
  if (!(p.newton.tol > 0.0) || p.newton.max_iterations < 1) throw ConfigError("bad Newton settings");

  for (int which = 0; which < 2; ++which) {
    const std::string sec = which == 0 ? "training" : "test";
    SinusoidInput& in = which == 0 ? p.training : p.test;
    std::vector<std::vector<SinusoidInput::Term>> ch;
    for (int i = 1; c.has(sec + ".u" + std::to_string(i)); ++i) {
      ch.push_back(parse_sinusoid(sec + ".u" + std::to_string(i), c.str(sec + ".u" + std::to_string(i), "")));
    }
    if (!ch.empty()) in.channels = std::move(ch);
  }

  p.pod = parse_rank_rule(c, "pod", "r", p.pod);
  p.deim = parse_rank_rule(c, "deim", "l", p.deim);
  p.seed = static_cast<unsigned>(c.integer("checks.seed", p.seed));
  p.dissipation_tol = c.num("checks.dissipation_tol", p.dissipation_tol);
  p.io_tol = c.num("checks.io_tol", p.io_tol);
  const std::string quad = c.str("checks.quadrature", "right_endpoint");
  if (quad == "trapezoid") p.quadrature = Quadrature::trapezoid;
  else if (quad == "right_endpoint") p.quadrature = Quadrature::right_endpoint;
  else throw ConfigError("checks.quadrature must be trapezoid or right_endpoint");
  p.out_dir = c.str("output.dir", p.out_dir.string());
  p.hash = sha256_hex(c.canonical());
  return p;
}

// ---------------------------------------------------------------------------
// Artifacts

struct Paths {
  fs::path root;
  fs::path problem() const { return root / "problem"; }
  fs::path sim() const { return root / "sim"; }
  fs::path rom() const { return root / "rom"; }
  fs::path verify() const { return root / "verify"; }
  fs::path report() const { return root / "report"; }
  fs::path transforms() const { return root / "transforms"; }
  fs::path manifest() const { return root / "manifest.txt"; }
};

inline void require(const fs::path& p, const std::string& stage) {
  if (!fs::exists(p)) {
    throw StageDependencyError("missing artifact " + p.string() + " (run '" + stage + "' first)");
  }
}

inline void write_key_values(const fs::path& path, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::ofstream out(path);
  if (!out) throw IngestionError(IngestionError::Kind::io, "cannot write " + path.string());
  for (const auto& [k, v] : kv) out << k << " = " << v << '\n';
}

/// Lists every artifact with its SHA-256 digest and the verification summary.
inline void write_manifest(const PipelineConfig& cfg, const std::string& stage) {
  const Paths paths{cfg.out_dir};
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(paths.root)) {
    if (e.is_regular_file() && e.path() != paths.manifest()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  std::vector<std::pair<std::string, std::string>> kv{
      {"config_sha256", cfg.hash}, {"timestamp", stamp}, {"version", kVersion}, {"last_stage", stage},
      {"file_count", std::to_string(files.size())}};
  for (const auto& f : files) {
    kv.emplace_back("file." + fs::relative(f, paths.root).generic_string(), sha256_hex(read_file(f)));
  }
  const fs::path summary = paths.verify() / "summary.txt";
  if (fs::exists(summary)) {
    for (const auto& [k, v] : read_key_values(summary)) {
      if (k.rfind("pass.", 0) == 0) kv.emplace_back("summary." + k.substr(5), v);
    }
  }
  write_key_values(paths.manifest(), kv);
}

inline FemProblem build_problem(const PipelineConfig& cfg) {
  if (cfg.problem_kind == "transformer2d") return build_transformer_2d(cfg.transformer);
  if (cfg.problem_kind == "synthetic3d") return build_synthetic_3d(cfg.synthetic);
  return read_problem_bundle(cfg.bundle_path);
}

inline std::shared_ptr<const MqsDae> load_dae(const PipelineConfig& cfg) {
  const Paths paths{cfg.out_dir};
  require(paths.problem() / "meta", "generate");
  auto p = std::make_shared<FemProblem>(read_problem_bundle(paths.problem()));
  return std::make_shared<MqsDae>(p);
}

/// Largest conducting-element flux density along a potential trajectory.
inline double max_core_flux(const MqsDae& dae, const DenseMatrix& potentials) {
  double z = 0.0;
  for (Index k = 0; k < potentials.cols(); ++k) {
    const Vector a = potentials.col(k);
    for (Index e : dae.core_elements()) z = std::max(z, dae.flux(dae.elements()[e], a));
  }
  return z;
}

// ---------------------------------------------------------------------------
// Stages

inline void cmd_generate(const PipelineConfig& cfg) {
  const Paths paths{cfg.out_dir};
  const FemProblem p = build_problem(cfg);
  write_problem_bundle(paths.problem(), p);
  write_manifest(cfg, "generate");
}

inline void cmd_simulate(const PipelineConfig& cfg, const std::set<std::string>& which, bool dump) {
  const Paths paths{cfg.out_dir};
  auto dae = load_dae(cfg);
  fs::create_directories(paths.sim());
  const TimeGrid grid = cfg.grid();
  const InputFunction u = cfg.training;
  if (cfg.training.size() != dae->m()) throw ConfigError("training input needs one channel per port");

  const Regularization reg = regularize(dae, cfg.seed);
  if (dump) dump_transforms(paths.transforms(), reg);
  std::optional<Trajectory> full, ode_tr;
  if (which.count("full")) {
    FullSystem fs_sys(dae);
    full = integrate(fs_sys, u, grid, Vector::Zero(fs_sys.dim()), cfg.scheme, cfg.newton);
    write_trajectory_csv(paths.sim() / "traj_full.csv", *full);
  }
  if (which.count("regularized")) {
    const Trajectory tr =
        integrate(*reg.system, u, grid, Vector::Zero(reg.system->dim()), cfg.scheme, cfg.newton);
    write_trajectory_csv(paths.sim() / "traj_regularized.csv", tr);
  }
  if (which.count("ode")) {
    OdeSystem ode(*reg.system);
    ode_tr = integrate(ode, u, grid, Vector::Zero(ode.dim()), cfg.scheme, cfg.newton);
    write_trajectory_csv(paths.sim() / "traj_ode.csv", *ode_tr);
  }
  const Index n1 = dae->n1();
  DenseMatrix xa1;
  if (ode_tr) xa1 = snapshots(*ode_tr, 0, n1);
  else if (full) xa1 = snapshots(*full, 0, n1);
  if (xa1.size()) write_matrix_market(paths.sim() / "X_a1.mtx", xa1);

  // Operating range of the reluctivity curve.
  DenseMatrix pot = DenseMatrix::Zero(dae->n(), xa1.cols());
  pot.topRows(n1) = xa1;
  const double zeta = max_core_flux(*dae, pot);
  const double zmax = dae->problem().curve.zeta_max();
  std::vector<std::pair<std::string, std::string>> kv{{"max_core_flux", format_double(zeta)},
                                                       {"zeta_max", format_double(zmax)}};
  if (zeta > zmax) {
    FemProblem p = dae->problem();
    p.curve = p.curve.with_zeta_max(1.5 * zeta);
    write_problem_bundle(paths.problem(), p);
    kv.emplace_back("zeta_max_updated", format_double(p.curve.zeta_max()));
    std::cerr << "note: operating range exceeded, zeta_max raised to " << p.curve.zeta_max() << '\n';
  }
  write_key_values(paths.sim() / "summary.txt", kv);
  write_manifest(cfg, "simulate");
}

struct RomArtifacts {
  std::shared_ptr<const MqsDae> dae;
  std::shared_ptr<const OdeSystem> ode;
  std::shared_ptr<const RomPod> pod;
  std::shared_ptr<const RomDeim> deim;
  DenseMatrix x_f1;
};

/// f1 snapshots X_f1 = [f1(a1(t_k))].
inline DenseMatrix f1_snapshots(const MqsDae& dae, const DenseMatrix& xa1) {
  DenseMatrix out(xa1.rows(), xa1.cols());
  for (Index k = 0; k < xa1.cols(); ++k) out.col(k) = dae.f1(xa1.col(k));
  return out;
}

inline void cmd_reduce(const PipelineConfig& cfg) {
  const Paths paths{cfg.out_dir};
  auto dae = load_dae(cfg);
  require(paths.sim() / "X_a1.mtx", "simulate");
  const DenseMatrix xa1 = DenseMatrix(read_matrix_market(paths.sim() / "X_a1.mtx"));
  if (xa1.rows() != dae->n1()) throw IngestionError(IngestionError::Kind::invariant, "X_a1 has wrong row count");
  const Regularization reg = regularize(dae, cfg.seed);
  auto ode = std::make_shared<const OdeSystem>(*reg.system);
  const PodBasis pb = pod_basis(xa1, cfg.pod);
  const DenseMatrix xf1 = f1_snapshots(*dae, xa1);
  const PodBasis fb = pod_basis(xf1, cfg.deim);
  auto pod = std::make_shared<const RomPod>(ode, pb.U);
  RomDeim deim(pod, fb.U);
  for (const auto& w : pb.warnings) std::cerr << "warning: POD " << w << '\n';
  for (const auto& w : fb.warnings) std::cerr << "warning: DEIM " << w << '\n';

  fs::create_directories(paths.rom());
  write_rom_bases(paths.rom(), pb.U, fb.U, deim.indices());
  write_matrix_market(paths.rom() / "X_f1.mtx", xf1);
  write_matrix_market(paths.rom() / "E.mtx", pod->E());
  write_matrix_market(paths.rom() / "A_l.mtx", pod->A_l());
  write_matrix_market(paths.rom() / "B.mtx", pod->B());
  write_matrix_market(paths.rom() / "C.mtx", pod->C());
  std::vector<std::pair<std::string, std::string>> kv{
      {"r", std::to_string(pb.r())},
      {"rank_X_a1", std::to_string(pb.rank)},
      {"l", std::to_string(deim.l())},
      {"rank_X_f1", std::to_string(fb.rank)},
      {"sampling_condition", format_double(deim.sampling_condition())},
      {"sampled_elements", std::to_string(deim.sampled_elements())},
      {"reduced_dimension", std::to_string(pod->dim())}};
  for (std::size_t i = 0; i < pb.warnings.size(); ++i) kv.emplace_back("warning_pod", pb.warnings[i]);
  for (std::size_t i = 0; i < fb.warnings.size(); ++i) kv.emplace_back("warning_deim", fb.warnings[i]);
  write_key_values(paths.rom() / "meta", kv);
  write_manifest(cfg, "reduce");
}

inline RomArtifacts load_rom(const PipelineConfig& cfg) {
  const Paths paths{cfg.out_dir};
  RomArtifacts a;
  a.dae = load_dae(cfg);
  require(paths.rom() / "U_a1.mtx", "reduce");
  require(paths.rom() / "X_f1.mtx", "reduce");
  const RomBases b = read_rom_bases(paths.rom());
  a.x_f1 = DenseMatrix(read_matrix_market(paths.rom() / "X_f1.mtx"));
  const Regularization reg = regularize(a.dae, cfg.seed);
  a.ode = std::make_shared<const OdeSystem>(*reg.system);
  a.pod = std::make_shared<const RomPod>(a.ode, b.U_a1);
  a.deim = std::make_shared<const RomDeim>(a.pod, b.U_f1, b.indices);
  return a;
}

struct CheckRow {
  std::string name;
  bool passed;
  std::string detail;
};

struct VerifySummary {
  std::vector<CheckRow> checks;
  bool all_passed() const {
    for (const auto& c : checks)
      if (!c.passed) return false;
    return true;
  }
};

inline void write_passivity_csv(const fs::path& path, const std::vector<double>& t, const PassivityReport& r) {
  std::ofstream out(path);
  if (!out) throw IngestionError(IngestionError::Kind::io, "cannot write " + path.string());
  out << "t,S,diss_slack,allowed,io_integral\n";
  for (std::size_t k = 0; k < t.size(); ++k) {
    out << format_double(t[k]) << ',' << format_double(r.storage[k]) << ',' << format_double(r.slack[k])
        << ',' << format_double(r.allowed[k]) << ',' << format_double(r.io[k]) << '\n';
  }
}

inline std::string sci(double v) {
  std::ostringstream os;
  os << std::setprecision(3) << std::scientific << v;
  return os.str();
}

inline VerifySummary cmd_verify(const PipelineConfig& cfg) {
  const Paths paths{cfg.out_dir};
  require(paths.sim() / "traj_full.csv", "simulate");
  const RomArtifacts art = load_rom(cfg);
  const MqsDae& dae = *art.dae;
  fs::create_directories(paths.verify());
  VerifySummary sum;
  auto add = [&](std::string name, bool ok, std::string detail) {
    std::cerr << (ok ? "PASS " : "FAIL ") << name << "  " << detail << '\n';
    sum.checks.push_back({std::move(name), ok, std::move(detail)});
  };

  // Regularization: index one, condensed form, output identities.
  const Regularization reg = regularize(art.dae, cfg.seed);
  const RegularizedSystem& rs = *reg.system;
  const auto states = rs.sample_states(3, cfg.seed + 1);
  const IndexOneCertificate cert = check_index_one(rs, states);
  add("index_one", cert.passed,
      "sigma_min=" + sci(cert.sigma_min) + " norm_Er=" + sci(cert.norm_E_r) +
          " state_diff=" + sci(cert.state_difference));
  double e11_min = sym_eig_extreme(reg.condensed.E11).min, a11_min = 1e300;
  for (const auto& x : states) a11_min = std::min(a11_min, sym_eig_extreme(-symmetrize(reg.condensed.A11(rs, x))).min);
  add("condensed_form",
      reg.condensed.e_block_residual <= 1e-10 && reg.condensed.a_block_residual <= 1e-10 && e11_min > 0 &&
          a11_min > 0,
      "E_res=" + sci(reg.condensed.e_block_residual) + " A_res=" + sci(reg.condensed.a_block_residual) +
          " lmin(E11)=" + sci(e11_min) + " lmin(-A11)=" + sci(a11_min));

  const Trajectory full = read_trajectory_csv(paths.sim() / "traj_full.csv");
  const Index n = dae.n();
  const double ytol = 10.0 * cfg.newton.tol * std::max(1.0, full.outputs.cwiseAbs().maxCoeff());
  {
    const DenseMatrix xr = DenseMatrix(rs.V1().transpose()) * full.states.topRows(n);
    const DenseMatrix y = rs.C_r() * xr;
    const double d = (y - full.outputs).rightCols(full.nodes() - 1).cwiseAbs().maxCoeff();
    add("output_matrix",
        reg.output_checks.state_difference <= 1e-10 && reg.output_checks.r_inverse_residual <= 1e-10 && d <= ytol,
        "state_diff=" + sci(reg.output_checks.state_difference) +
            " BtEB-Rinv=" + sci(reg.output_checks.r_inverse_residual) + " traj_diff=" + sci(d));
  }
  for (const std::string other : {"regularized", "ode"}) {
    const fs::path p = paths.sim() / ("traj_" + other + ".csv");
    if (!fs::exists(p)) continue;
    const Trajectory tr = read_trajectory_csv(p);
    const double d = (tr.outputs - full.outputs).cwiseAbs().maxCoeff();
    add("equivalence_full_" + other, d <= ytol, "max|dy|=" + sci(d) + " tol=" + sci(ytol));
  }

  // Passivity of the full and POD models under the training input.
  const TimeGrid grid = cfg.grid();
  {
    FullSystem fs_sys(art.dae);
    const PassivityReport rep = check_dissipation(
        full, StorageEvaluator(art.dae, [&](const Vector& x) { return Vector(x.head(n)); }),
        cfg.dissipation_tol, cfg.quadrature);
    write_passivity_csv(paths.verify() / "passivity_full.csv", full.t, rep);
    add("dissipation_full", rep.passed, "max_violation=" + sci(rep.max_violation));
  }
  const RomPod& pod = *art.pod;
  const RomDeim& deim = *art.deim;
  {
    const Trajectory tp =
        integrate(pod, cfg.training, grid, Vector::Zero(pod.dim()), cfg.scheme, cfg.newton);
    const PassivityReport rep = check_dissipation(
        tp, StorageEvaluator(art.dae, [&](const Vector& x) { return pod.lift(x); }), cfg.dissipation_tol,
        cfg.quadrature);
    write_passivity_csv(paths.verify() / "passivity_pod.csv", tp.t, rep);
    add("dissipation_pod", rep.passed, "max_violation=" + sci(rep.max_violation));
  }

  // Error bound and passivity enforcement under the test input.
  if (cfg.test.size() != dae.m()) throw ConfigError("test input needs one channel per port");
  const Trajectory tode =
      integrate(*art.ode, cfg.test, grid, Vector::Zero(art.ode->dim()), cfg.scheme, cfg.newton);
  const Trajectory tp = integrate(pod, cfg.test, grid, Vector::Zero(pod.dim()), cfg.scheme, cfg.newton);
  const Trajectory td = integrate(deim, cfg.test, grid, Vector::Zero(deim.dim()), cfg.scheme, cfg.newton);
  write_trajectory_csv(paths.verify() / "traj_ode_test.csv", tode);
  write_trajectory_csv(paths.verify() / "traj_pod_test.csv", tp);
  write_trajectory_csv(paths.verify() / "traj_deim_test.csv", td);
  const ErrorBound eb = make_error_bound(deim, art.x_f1);
  const LogLipschitz ll = log_lipschitz_bounds(pod);
  write_key_values(paths.verify() / "bounds.txt",
                   {{"delta_deim", format_double(eb.delta_deim)},
                    {"mu1", format_double(eb.mu1)},
                    {"mu2", format_double(eb.mu2)},
                    {"lambda_min_E", format_double(eb.lambda_min_E)},
                    {"c_norm", format_double(eb.c_norm)},
                    {"m_nu", format_double(ll.m_nu)},
                    {"m_nu_C", format_double(ll.m_nu_c)},
                    {"lambda_max_UtKLU", format_double(ll.lambda_max_KL)},
                    {"lambda_max_Al", format_double(ll.lambda_max_Al)},
                    {"lambda_max_U1tKL1U1", format_double(ll.lambda_max_KL1)},
                    {"sampling_condition", format_double(deim.sampling_condition())}});
  bool bound1 = true, bound2 = true, order = true;
  double worst1 = 0.0, worst2 = 0.0;
  std::vector<double> theta(tp.t.size());
  for (Index k = 0; k < tp.nodes(); ++k) {
    const double eps = (tp.states.col(k) - td.states.col(k)).norm();
    const double t1 = eb.theta1(tp.t[k]), t2 = eb.theta2(tp.t[k]);
    theta[k] = t2;
    bound1 = bound1 && t1 >= eps;
    bound2 = bound2 && t2 >= eps;
    order = order && t2 <= t1;
    worst1 = std::max(worst1, eps - t1);
    worst2 = std::max(worst2, eps - t2);
  }
  add("error_bound", bound1 && bound2 && order,
      "max(eps-theta1)=" + sci(worst1) + " max(eps-theta2)=" + sci(worst2) +
          " mu1=" + sci(eb.mu1) + " mu2=" + sci(eb.mu2) + " Delta=" + sci(eb.delta_deim));
  const Passified pf = passify(td.outputs, td.inputs, eb.c_norm, theta);
  const IoPassivity io = io_passivity_integral(td.t, td.inputs, pf.y);
  const double io_allowed = -cfg.io_tol * (1.0 + io.max_power) * (td.t.back() - td.t.front());
  double pert = 0.0;
  for (Index k = 0; k < td.nodes(); ++k) {
    if (td.inputs.col(k).norm() == 0.0) continue;
    const double want = eb.c_norm * theta[k];
    const double got = (td.outputs.col(k) - pf.y.col(k)).norm();
    pert = std::max(pert, std::abs(got - want) / std::max(want, std::numeric_limits<double>::min()));
  }
  add("passivity_enforcement", io.minimum >= io_allowed && pert <= 1e-12,
      "min_io=" + sci(io.minimum) + " allowed=" + sci(io_allowed) + " perturbation_rel=" + sci(pert));

  std::vector<std::pair<std::string, std::string>> kv;
  for (const auto& c : sum.checks) kv.emplace_back("pass." + c.name, c.passed ? "pass" : "fail");
  for (const auto& c : sum.checks) kv.emplace_back("detail." + c.name, c.detail);
  kv.emplace_back("all", sum.all_passed() ? "pass" : "fail");
  write_key_values(paths.verify() / "summary.txt", kv);
  write_manifest(cfg, "verify");
  return sum;
}

inline void cmd_report(const PipelineConfig& cfg) {
  const Paths paths{cfg.out_dir};
  for (const char* f : {"traj_ode_test.csv", "traj_pod_test.csv", "traj_deim_test.csv", "bounds.txt"}) {
    require(paths.verify() / f, "verify");
  }
  const RomArtifacts art = load_rom(cfg);
  const Trajectory ty = read_trajectory_csv(paths.verify() / "traj_ode_test.csv");
  const Trajectory tp = read_trajectory_csv(paths.verify() / "traj_pod_test.csv");
  const Trajectory td = read_trajectory_csv(paths.verify() / "traj_deim_test.csv");
  const auto kv = read_key_values(paths.verify() / "bounds.txt");
  ErrorBound eb;
  eb.delta_deim = std::stod(kv.at("delta_deim"));
  eb.mu1 = std::stod(kv.at("mu1"));
  eb.mu2 = std::stod(kv.at("mu2"));
  eb.lambda_min_E = std::stod(kv.at("lambda_min_E"));
  eb.c_norm = std::stod(kv.at("c_norm"));

  ReportSeries r;
  r.t = td.t;
  for (double t : r.t) {
    r.theta1.push_back(eb.theta1(t));
    r.theta2.push_back(eb.theta2(t));
  }
  for (Index k = 0; k < td.nodes(); ++k) r.eps_norm.push_back((tp.states.col(k) - td.states.col(k)).norm());
  const Passified pf = passify(td.outputs, td.inputs, eb.c_norm, r.theta2);
  r.delta = pf.delta;
  r.y_delta = pf.y;
  const PassivityReport diss = check_dissipation(
      tp, StorageEvaluator(art.dae, [&](const Vector& x) { return art.pod->lift(x); }), cfg.dissipation_tol,
      cfg.quadrature);
  r.storage = diss.storage;
  r.slack = diss.slack;
  r.io = io_passivity_integral(td.t, td.inputs, pf.y).integral;

  fs::create_directories(paths.report());
  write_report_csv(paths.report() / "report.csv", r);
  auto series = [&](const std::string& name, const std::vector<std::string>& cols,
                    const std::function<std::vector<double>(Index)>& row) {
    std::ofstream out(paths.report() / name);
    out << 't';
    for (const auto& c : cols) out << ',' << c;
    out << '\n';
    for (Index k = 0; k < td.nodes(); ++k) {
      out << format_double(td.t[k]);
      for (double v : row(k)) out << ',' << format_double(v);
      out << '\n';
    }
  };
  series("fig1_state_error.csv", {"eps_norm", "theta1", "theta2"},
         [&](Index k) { return std::vector<double>{r.eps_norm[k], r.theta1[k], r.theta2[k]}; });
  series("fig2_output_error.csv", {"output_error", "c_norm_theta1", "c_norm_theta2"}, [&](Index k) {
    return std::vector<double>{(tp.outputs.col(k) - td.outputs.col(k)).norm(), eb.c_norm * r.theta1[k],
                               eb.c_norm * r.theta2[k]};
  });
  const Index m = td.outputs.rows();
  std::vector<std::string> du, yy;
  for (Index i = 0; i < m; ++i) du.push_back("delta_u_" + std::to_string(i + 1));
  for (Index i = 0; i < m; ++i) yy.push_back("y_" + std::to_string(i + 1));
  for (Index i = 0; i < m; ++i) yy.push_back("y_delta_" + std::to_string(i + 1));
  series("fig3_perturbation.csv", du, [&](Index k) {
    std::vector<double> v;
    for (Index i = 0; i < m; ++i) v.push_back(r.delta(k) * td.inputs(i, k));
    return v;
  });
  series("fig4_outputs.csv", yy, [&](Index k) {
    std::vector<double> v;
    for (Index i = 0; i < m; ++i) v.push_back(ty.outputs(i, k));
    for (Index i = 0; i < m; ++i) v.push_back(r.y_delta(i, k));
    return v;
  });
  const Vector e_deim = relative_output_error(ty.outputs, td.outputs);
  const Vector e_delta = relative_output_error(ty.outputs, r.y_delta);
  series("fig5_relative_errors.csv", {"rel_error_deim", "rel_error_delta"},
         [&](Index k) { return std::vector<double>{e_deim(k), e_delta(k)}; });

  std::vector<std::pair<std::string, std::string>> out{
      {"r", std::to_string(art.pod->r())},
      {"l", std::to_string(art.deim->l())},
      {"reduced_dimension", std::to_string(art.pod->dim())},
      {"delta_deim", format_double(eb.delta_deim)},
      {"mu1", format_double(eb.mu1)},
      {"mu2", format_double(eb.mu2)},
      {"lambda_min_E", format_double(eb.lambda_min_E)},
      {"c_norm", format_double(eb.c_norm)},
      {"max_rel_error_deim", format_double(e_deim.maxCoeff())},
      {"max_rel_error_delta", format_double(e_delta.maxCoeff())},
      {"min_io_integral_delta", format_double(*std::min_element(r.io.begin(), r.io.end()))}};
  const fs::path vs = paths.verify() / "summary.txt";
  if (fs::exists(vs)) {
    for (const auto& [k, v] : read_key_values(vs))
      if (k.rfind("pass.", 0) == 0 || k == "all") out.emplace_back(k, v);
  }
  write_key_values(paths.report() / "summary.txt", out);
  write_manifest(cfg, "report");
}

}  // namespace mqsrom::pipeline
