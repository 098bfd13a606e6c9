#pragma once

// Run configuration: one JSON document with sections game, com, solver, output and
// verification. Parsing checks the schema (unknown keys are errors) and expands the
// compact matrix shorthands into a canonical dense form; emit_config writes that
// canonical form back, so parse(emit(c)) == c.

#include "sgne/com.hpp"
#include "sgne/com_model.hpp"
#include "sgne/common.hpp"
#include "sgne/game.hpp"
#include "sgne/microgrid.hpp"
#include "sgne/solver.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace sgne {

using json = nlohmann::json;
using DenseMatrix = std::vector<std::vector<double>>;

/// Schema or invariant violations, one message per entry.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> errors)
      : std::runtime_error(join(errors)), errors_(std::move(errors)) {}
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  static std::string join(const std::vector<std::string>& errs) {
    std::string s = "invalid configuration";
    for (const auto& e : errs) s += "\n  " + e;
    return s;
  }
  std::vector<std::string> errors_;
};

// Player cost 1/2 u_i' R u_i + u_i' C u + c' u_i + 1/2 s' Q s + q' s, with C zero on the own block.
struct LqPlayerConfig {
  int inputDim = 1;
  DenseMatrix R;  // T n_i x T n_i
  DenseMatrix C;  // T n_i x stacked dim
  std::vector<double> c;
  DenseMatrix Q;  // (T+1) n_s square
  std::vector<double> q;
  std::vector<double> lower;
  std::vector<double> upper;
  bool operator==(const LqPlayerConfig&) const = default;
};

// xi_hat = state' s + input' u + constant.
struct LqConstraintConfig {
  std::vector<double> state;
  std::vector<double> input;
  double constant = 0.0;
  /// Lipschitz constant w.r.t. the standardized disturbance; derived from the std when absent.
  std::optional<double> comScale;
  bool operator==(const LqConstraintConfig&) const = default;
};

struct LqGameConfig {
  int horizon = 1;
  int stateDim = 1;
  std::vector<DenseMatrix> A;               // [t]
  std::vector<std::vector<DenseMatrix>> B;  // [j][t]
  std::vector<double> s0;
  std::vector<LqPlayerConfig> players;
  std::vector<LqConstraintConfig> constraints;
  std::vector<double> disturbanceMean;  // length T n_s
  std::vector<double> disturbanceStd;
  bool operator==(const LqGameConfig&) const = default;
};

enum class GameType { microgrid, linear_quadratic };

struct ComConfig {
  ComKind kind = ComKind::gaussian_standard;
  std::vector<double> tableTheta;
  std::vector<double> tableH;
  std::vector<double> gamma;  // per constraint (linear-quadratic games)
  std::vector<double> beta;   // per constraint; empty means zeros
  bool operator==(const ComConfig&) const = default;
};

struct OutputConfig {
  std::string trace = "trace.csv";
  std::string summary = "summary.json";
  std::string strategies = "strategies.csv";
  std::string snapshots = "strategy_snapshots.csv";
  std::string checkpoint = "checkpoint.txt";
  long snapshotEvery = 0;
  bool recordWallTime = true;
  bool operator==(const OutputConfig&) const = default;
};

struct ProbeConfig {
  int player = 0;
  std::vector<double> strategy;
  bool operator==(const ProbeConfig&) const = default;
};

struct VerificationConfig {
  long constraintSamples = 10000;
  long epsilonGapCandidates = 0;
  long epsilonGapSamples = 10000;
  std::vector<ProbeConfig> epsilonGapProbes;
  long lipschitzPairs = 20;
  long lipschitzBatch = 500;
  double lipschitzLambdaScale = 1.0;
  std::vector<double> referenceStrategy;
  bool operator==(const VerificationConfig&) const = default;
};

struct RunConfig {
  GameType type = GameType::microgrid;
  MicrogridParams microgrid;
  LqGameConfig lq;
  ComConfig com;
  SolverConfig solver;
  OutputConfig output;
  VerificationConfig verification;
  bool operator==(const RunConfig&) const = default;
};

namespace detail {

class Errors {
 public:
  void add(const std::string& ptr, const std::string& msg) { list.push_back(ptr + ": " + msg); }
  std::vector<std::string> list;
};

class ObjectReader {
 public:
  ObjectReader(const json* node, std::string ptr, Errors& errs) : node_(node), ptr_(std::move(ptr)), errs_(errs) {
    if (node_ && !node_->is_object()) {
      errs_.add(ptr_.empty() ? "/" : ptr_, "expected an object");
      node_ = nullptr;
    }
  }
  ObjectReader(const ObjectReader&) = delete;
  ~ObjectReader() {
    if (!node_) return;
    for (const auto& [key, _] : node_->items()) {
      if (!used_.count(key)) errs_.add(path(key), "unknown key");
    }
  }

  bool present() const { return node_ != nullptr; }
  std::string path(const std::string& key) const { return ptr_ + "/" + key; }
  Errors& errors() { return errs_; }

  const json* get(const std::string& key) {
    used_.insert(key);
    if (!node_) return nullptr;
    const auto it = node_->find(key);
    return it == node_->end() ? nullptr : &*it;
  }

  const json* require(const std::string& key) {
    const json* n = get(key);
    if (!n && node_) errs_.add(path(key), "required key is missing");
    return n;
  }

  double number(const std::string& key, double def) {
    const json* n = get(key);
    if (!n) return def;
    if (!n->is_number()) {
      errs_.add(path(key), "expected a number");
      return def;
    }
    return n->get<double>();
  }

  long integer(const std::string& key, long def) {
    const json* n = get(key);
    if (!n) return def;
    if (!n->is_number_integer()) {
      errs_.add(path(key), "expected an integer");
      return def;
    }
    return n->get<long>();
  }

  std::uint64_t unsigned64(const std::string& key, std::uint64_t def) {
    const json* n = get(key);
    if (!n) return def;
    if (!n->is_number_unsigned()) {
      errs_.add(path(key), "expected a nonnegative integer");
      return def;
    }
    return n->get<std::uint64_t>();
  }

  bool boolean(const std::string& key, bool def) {
    const json* n = get(key);
    if (!n) return def;
    if (!n->is_boolean()) {
      errs_.add(path(key), "expected true or false");
      return def;
    }
    return n->get<bool>();
  }

  std::string string(const std::string& key, const std::string& def) {
    const json* n = get(key);
    if (!n) return def;
    if (!n->is_string()) {
      errs_.add(path(key), "expected a string");
      return def;
    }
    return n->get<std::string>();
  }

  void check(bool ok, const std::string& key, const std::string& msg) {
    if (!ok) errs_.add(path(key), msg);
  }

 private:
  const json* node_;
  std::string ptr_;
  Errors& errs_;
  std::set<std::string> used_;
};

inline bool is_number_array(const json& j) {
  if (!j.is_array()) return false;
  for (const auto& x : j) {
    if (!x.is_number()) return false;
  }
  return true;
}

inline bool is_matrix(const json& j) {
  if (!j.is_array() || j.empty()) return false;
  for (const auto& row : j) {
    if (!is_number_array(row)) return false;
  }
  return true;
}

inline bool is_matrix_list(const json& j) {
  if (!j.is_array() || j.empty()) return false;
  for (const auto& m : j) {
    if (!is_matrix(m)) return false;
  }
  return true;
}

// Vector: a number (filled) or an array of exactly n numbers.
inline std::vector<double> read_vector(const json& j, std::size_t n, const std::string& ptr, Errors& errs) {
  if (j.is_number()) return std::vector<double>(n, j.get<double>());
  if (!is_number_array(j)) {
    errs.add(ptr, "expected a number or an array of numbers");
    return std::vector<double>(n, 0.0);
  }
  if (j.size() != n) {
    errs.add(ptr, "expected " + std::to_string(n) + " entries, got " + std::to_string(j.size()));
    return std::vector<double>(n, 0.0);
  }
  return j.get<std::vector<double>>();
}

// Free-length array of numbers.
inline std::vector<double> read_array(const json& j, const std::string& ptr, Errors& errs) {
  if (!is_number_array(j)) {
    errs.add(ptr, "expected an array of numbers");
    return {};
  }
  return j.get<std::vector<double>>();
}

inline DenseMatrix diagonal(std::size_t rows, std::size_t cols, double x) {
  DenseMatrix m(rows, std::vector<double>(cols, 0.0));
  for (std::size_t k = 0; k < std::min(rows, cols); ++k) m[k][k] = x;
  return m;
}

// Matrix: a number x (x on the main diagonal) or a rows x cols array of arrays.
inline DenseMatrix read_matrix(const json& j, std::size_t rows, std::size_t cols, const std::string& ptr, Errors& errs) {
  if (j.is_number()) return diagonal(rows, cols, j.get<double>());
  if (!is_matrix(j)) {
    errs.add(ptr, "expected a number or an array of rows");
    return diagonal(rows, cols, 0.0);
  }
  if (j.size() != rows) {
    errs.add(ptr, "expected " + std::to_string(rows) + " rows, got " + std::to_string(j.size()));
    return diagonal(rows, cols, 0.0);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols) {
      errs.add(ptr + "/" + std::to_string(r), "expected " + std::to_string(cols) + " columns");
      return diagonal(rows, cols, 0.0);
    }
  }
  return j.get<DenseMatrix>();
}

// Time-varying matrix: a single matrix (or number) repeated T times, or a list of T matrices.
inline std::vector<DenseMatrix> read_matrix_sequence(const json& j, int T, std::size_t rows, std::size_t cols,
                                                     const std::string& ptr, Errors& errs) {
  if (is_matrix_list(j)) {
    if (j.size() != static_cast<std::size_t>(T)) {
      errs.add(ptr, "expected " + std::to_string(T) + " matrices, got " + std::to_string(j.size()));
      return std::vector<DenseMatrix>(static_cast<std::size_t>(T), diagonal(rows, cols, 0.0));
    }
    std::vector<DenseMatrix> out;
    for (std::size_t t = 0; t < j.size(); ++t) out.push_back(read_matrix(j[t], rows, cols, ptr + "/" + std::to_string(t), errs));
    return out;
  }
  return std::vector<DenseMatrix>(static_cast<std::size_t>(T), read_matrix(j, rows, cols, ptr, errs));
}

inline Matrix to_eigen(const DenseMatrix& m) {
  const auto rows = static_cast<Eigen::Index>(m.size());
  const auto cols = rows ? static_cast<Eigen::Index>(m[0].size()) : 0;
  Matrix out(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = m[r][c];
  }
  return out;
}

inline Vector to_eigen(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

// ---- sections -----------------------------------------------------------------------

inline void parse_microgrid(ObjectReader& g, MicrogridParams& p) {
  auto& errs = g.errors();
  p.households = static_cast<int>(g.integer("households", p.households));
  p.horizon = static_cast<int>(g.integer("horizon", p.horizon));
  g.check(p.households >= 1, "households", "must be at least 1");
  g.check(p.horizon >= 1, "horizon", "must be at least 1");
  p.dt = g.number("dt", p.dt);
  p.eta = g.number("eta", p.eta);
  p.socInitial = g.number("soc_initial", p.socInitial);
  p.socMin = g.number("soc_min", p.socMin);
  p.socMax = g.number("soc_max", p.socMax);
  p.socDesired = g.number("soc_desired", p.socDesired);
  p.terminalBand = g.number("terminal_band", p.terminalBand);
  p.gammaHat = g.number("gamma_hat", p.gammaHat);
  p.gammaTilde = g.number("gamma_tilde", p.gammaTilde);
  g.check(p.gammaHat > 0.0 && p.gammaHat < 1.0, "gamma_hat", "must lie in (0, 1)");
  g.check(p.gammaTilde > 0.0 && p.gammaTilde < 1.0, "gamma_tilde", "must lie in (0, 1)");
  p.kc = g.number("k_c", p.kc);
  p.alphaDch = g.number("alpha_dch", p.alphaDch);
  p.betaDch = g.number("beta_dch", p.betaDch);
  p.alphaUtil = g.number("alpha_util", p.alphaUtil);
  p.alphaBat = g.number("alpha_bat", p.alphaBat);
  p.renewablePeakPerHousehold = g.number("renewable_peak_per_household", p.renewablePeakPerHousehold);
  p.renewableStdDefault = g.number("renewable_std_default", p.renewableStdDefault);
  if (p.households < 1 || p.horizon < 1) return;
  const auto T = static_cast<std::size_t>(p.horizon);
  if (const json* n = g.get("tariff_tou")) p.tariffToU = read_vector(*n, T, g.path("tariff_tou"), errs);
  if (const json* n = g.get("renewable_mean")) p.renewableMean = read_vector(*n, T, g.path("renewable_mean"), errs);
  if (const json* n = g.get("renewable_std")) p.renewableStd = read_vector(*n, T, g.path("renewable_std"), errs);
  if (const json* n = g.get("demand")) {
    if (!n->is_array() || n->size() != static_cast<std::size_t>(p.households)) {
      errs.add(g.path("demand"), "expected one row per household");
    } else {
      for (std::size_t i = 0; i < n->size(); ++i) {
        p.demand.push_back(read_vector((*n)[i], T, g.path("demand") + "/" + std::to_string(i), errs));
      }
    }
  }
}

inline void parse_lq(ObjectReader& g, LqGameConfig& lq) {
  auto& errs = g.errors();
  lq.horizon = static_cast<int>(g.integer("horizon", 0));
  lq.stateDim = static_cast<int>(g.integer("state_dim", 1));
  g.check(lq.horizon >= 1, "horizon", "must be at least 1");
  g.check(lq.stateDim >= 1, "state_dim", "must be at least 1");
  const json* playersNode = g.require("players");
  const json* aNode = g.require("A");
  const json* bNode = g.require("B");
  const json* s0Node = g.require("s0");
  const json* consNode = g.get("constraints");
  const json* distNode = g.get("disturbance");
  if (lq.horizon < 1 || lq.stateDim < 1 || !playersNode) return;
  if (!playersNode->is_array() || playersNode->empty()) {
    errs.add(g.path("players"), "expected a nonempty array");
    return;
  }
  const int T = lq.horizon;
  const auto ns = static_cast<std::size_t>(lq.stateDim);
  const std::size_t N = playersNode->size();
  const std::size_t sLen = static_cast<std::size_t>(T + 1) * ns;

  // Input dimensions come first; every other shape depends on them.
  std::vector<int> dims;
  for (std::size_t i = 0; i < N; ++i) {
    const auto& pn = (*playersNode)[i];
    int d = 1;
    if (pn.is_object() && pn.contains("input_dim")) {
      if (pn["input_dim"].is_number_integer() && pn["input_dim"].get<long>() >= 1) {
        d = pn["input_dim"].get<int>();
      } else {
        errs.add(g.path("players") + "/" + std::to_string(i) + "/input_dim", "must be a positive integer");
      }
    }
    dims.push_back(d);
  }
  std::size_t uLen = 0;
  std::vector<std::size_t> offsets;
  for (int d : dims) {
    offsets.push_back(uLen);
    uLen += static_cast<std::size_t>(T * d);
  }

  if (aNode) lq.A = read_matrix_sequence(*aNode, T, ns, ns, g.path("A"), errs);
  if (bNode) {
    if (!bNode->is_array() || bNode->size() != N) {
      errs.add(g.path("B"), "expected one entry per player");
    } else {
      for (std::size_t j = 0; j < N; ++j) {
        lq.B.push_back(read_matrix_sequence((*bNode)[j], T, ns, static_cast<std::size_t>(dims[j]),
                                            g.path("B") + "/" + std::to_string(j), errs));
      }
    }
  }
  if (s0Node) lq.s0 = read_vector(*s0Node, ns, g.path("s0"), errs);

  for (std::size_t i = 0; i < N; ++i) {
    ObjectReader p(&(*playersNode)[i], g.path("players") + "/" + std::to_string(i), errs);
    if (!p.present()) continue;
    LqPlayerConfig pc;
    pc.inputDim = dims[i];
    p.get("input_dim");
    const auto len = static_cast<std::size_t>(T * dims[i]);
    pc.R = p.get("R") ? read_matrix(*p.get("R"), len, len, p.path("R"), errs) : diagonal(len, len, 0.0);
    pc.C = DenseMatrix(len, std::vector<double>(uLen, 0.0));
    if (const json* cn = p.get("C")) {
      if (cn->is_number()) {
        // Uniform coupling rho * I against every other player's block.
        const double rho = cn->get<double>();
        for (std::size_t j = 0; j < N; ++j) {
          if (j == i) continue;
          if (dims[j] != dims[i]) {
            errs.add(p.path("C"), "scalar coupling needs equal input dimensions");
            break;
          }
          for (std::size_t k = 0; k < len; ++k) pc.C[k][offsets[j] + k] = rho;
        }
      } else {
        pc.C = read_matrix(*cn, len, uLen, p.path("C"), errs);
        for (std::size_t r = 0; r < len && r < pc.C.size(); ++r) {
          for (std::size_t k = 0; k < len; ++k) {
            if (pc.C[r][offsets[i] + k] != 0.0) {
              errs.add(p.path("C"), "own block must be zero (put it in R)");
              r = len;
              break;
            }
          }
        }
      }
    }
    pc.c = p.get("c") ? read_vector(*p.get("c"), len, p.path("c"), errs) : std::vector<double>(len, 0.0);
    pc.Q = p.get("Q") ? read_matrix(*p.get("Q"), sLen, sLen, p.path("Q"), errs) : diagonal(sLen, sLen, 0.0);
    pc.q = p.get("q") ? read_vector(*p.get("q"), sLen, p.path("q"), errs) : std::vector<double>(sLen, 0.0);
    if (const json* n = p.require("lower")) pc.lower = read_vector(*n, len, p.path("lower"), errs);
    if (const json* n = p.require("upper")) pc.upper = read_vector(*n, len, p.path("upper"), errs);
    for (std::size_t k = 0; k < pc.lower.size() && k < pc.upper.size(); ++k) {
      if (!(pc.lower[k] <= pc.upper[k])) {
        errs.add(p.path("lower"), "lower bound exceeds upper bound at entry " + std::to_string(k));
        break;
      }
    }
    lq.players.push_back(std::move(pc));
  }

  if (consNode) {
    if (!consNode->is_array()) {
      errs.add(g.path("constraints"), "expected an array");
    } else {
      for (std::size_t j = 0; j < consNode->size(); ++j) {
        ObjectReader c(&(*consNode)[j], g.path("constraints") + "/" + std::to_string(j), errs);
        if (!c.present()) continue;
        LqConstraintConfig cc;
        cc.state = c.get("state") ? read_vector(*c.get("state"), sLen, c.path("state"), errs) : std::vector<double>(sLen, 0.0);
        cc.input = c.get("input") ? read_vector(*c.get("input"), uLen, c.path("input"), errs) : std::vector<double>(uLen, 0.0);
        cc.constant = c.number("constant", 0.0);
        if (c.get("com_scale")) {
          cc.comScale = c.number("com_scale", 1.0);
          c.check(*cc.comScale >= 0.0, "com_scale", "must be nonnegative");
        }
        lq.constraints.push_back(std::move(cc));
      }
    }
  }

  const std::size_t wLen = static_cast<std::size_t>(T) * ns;
  ObjectReader d(distNode, g.path("disturbance"), errs);
  lq.disturbanceMean = d.get("mean") ? read_vector(*d.get("mean"), wLen, d.path("mean"), errs) : std::vector<double>(wLen, 0.0);
  lq.disturbanceStd = d.get("std") ? read_vector(*d.get("std"), wLen, d.path("std"), errs) : std::vector<double>(wLen, 0.0);
  for (double s : lq.disturbanceStd) {
    if (!(s >= 0.0)) {
      errs.add(d.path("std"), "must be nonnegative");
      break;
    }
  }
}

inline int constraint_count(const RunConfig& c) {
  return c.type == GameType::microgrid ? 2 * c.microgrid.horizon + 1 : static_cast<int>(c.lq.constraints.size());
}

inline void parse_com(ObjectReader& r, RunConfig& cfg) {
  auto& errs = r.errors();
  const std::string kind = r.string("kind", "gaussian-standard");
  if (kind == "gaussian-standard") {
    cfg.com.kind = ComKind::gaussian_standard;
  } else if (kind == "user-tabulated") {
    cfg.com.kind = ComKind::user_tabulated;
  } else {
    errs.add(r.path("kind"), "must be 'gaussian-standard' or 'user-tabulated'");
  }
  {
    ObjectReader t(r.get("table"), r.path("table"), errs);
    if (t.present()) {
      if (const json* n = t.require("theta")) cfg.com.tableTheta = read_array(*n, t.path("theta"), errs);
      if (const json* n = t.require("h")) cfg.com.tableH = read_array(*n, t.path("h"), errs);
    }
  }
  if (cfg.com.kind == ComKind::user_tabulated) {
    try {
      (void)ComModel::tabulated(cfg.com.tableTheta, cfg.com.tableH);
    } catch (const ArgumentError& e) {
      errs.add(r.path("table"), e.what());
    }
  } else if (!cfg.com.tableTheta.empty() || !cfg.com.tableH.empty()) {
    errs.add(r.path("table"), "only used with kind 'user-tabulated'");
  }

  const auto m = static_cast<std::size_t>(std::max(0, constraint_count(cfg)));
  if (const json* n = r.get("gamma")) {
    if (cfg.type == GameType::microgrid) {
      errs.add(r.path("gamma"), "microgrid tolerances are set by game/gamma_hat and game/gamma_tilde");
    } else {
      cfg.com.gamma = read_vector(*n, m, r.path("gamma"), errs);
      for (std::size_t j = 0; j < cfg.com.gamma.size(); ++j) {
        const double g = cfg.com.gamma[j];
        if (!(g > 0.0 && g < 1.0)) errs.add(r.path("gamma") + "/" + std::to_string(j), "must lie in (0, 1)");
      }
    }
  } else if (cfg.type == GameType::linear_quadratic && m > 0) {
    errs.add(r.path("gamma"), "required key is missing");
  }
  if (const json* n = r.get("beta")) {
    cfg.com.beta = read_vector(*n, m, r.path("beta"), errs);
    for (std::size_t j = 0; j < cfg.com.beta.size(); ++j) {
      if (!(cfg.com.beta[j] >= 0.0)) errs.add(r.path("beta") + "/" + std::to_string(j), "must be nonnegative");
    }
  }
}

inline void parse_solver(ObjectReader& r, SolverConfig& s) {
  auto& errs = r.errors();
  s.delta = r.number("delta", s.delta);
  r.check(s.delta > 0.0 && s.delta < 1.0, "delta", "must lie in (0, 1)");
  {
    ObjectReader st(r.get("step"), r.path("step"), errs);
    s.step.alpha0 = st.number("alpha0", s.step.alpha0);
    s.step.offset = st.number("offset", s.step.offset);
    s.step.exponent = st.number("exponent", s.step.exponent);
    st.check(s.step.alpha0 > 0.0, "alpha0", "must be positive");
    st.check(s.step.offset > 0.0, "offset", "must be positive");
    st.check(s.step.exponent >= 0.0 && s.step.exponent <= 1.0, "exponent", "must lie in [0, 1]");
  }
  {
    ObjectReader b(r.get("batch"), r.path("batch"), errs);
    s.batch.scale = b.number("scale", s.batch.scale);
    s.batch.shift = b.number("shift", s.batch.shift);
    s.batch.growth = b.number("growth", s.batch.growth);
    b.check(s.batch.scale > 0.0, "scale", "must be positive");
    b.check(s.batch.shift >= 0.0, "shift", "must be nonnegative");
    b.check(s.batch.growth >= 0.0, "growth", "must be nonnegative");
  }
  s.maxIterations = r.integer("max_iterations", s.maxIterations);
  r.check(s.maxIterations >= 0, "max_iterations", "must be nonnegative");
  s.residualTolerance = r.number("residual_tolerance", s.residualTolerance);
  r.check(s.residualTolerance >= 0.0, "residual_tolerance", "must be nonnegative");
  s.residualBatch = r.integer("residual_batch", s.residualBatch);
  r.check(s.residualBatch >= 1, "residual_batch", "must be positive");
  s.seed = r.unsigned64("seed", s.seed);
  s.checkpointEvery = r.integer("checkpoint_every", s.checkpointEvery);
  r.check(s.checkpointEvery >= 0, "checkpoint_every", "must be nonnegative");
  s.divergenceFactor = r.number("divergence_factor", s.divergenceFactor);
  r.check(s.divergenceFactor > 0.0, "divergence_factor", "must be positive");
  s.useUpdatedMultiplier = r.boolean("use_updated_multiplier", s.useUpdatedMultiplier);
}

inline void parse_output(ObjectReader& r, OutputConfig& o) {
  o.trace = r.string("trace", o.trace);
  o.summary = r.string("summary", o.summary);
  o.strategies = r.string("strategies", o.strategies);
  o.snapshots = r.string("snapshots", o.snapshots);
  o.checkpoint = r.string("checkpoint", o.checkpoint);
  o.snapshotEvery = r.integer("snapshot_every", o.snapshotEvery);
  r.check(o.snapshotEvery >= 0, "snapshot_every", "must be nonnegative");
  o.recordWallTime = r.boolean("record_wall_time", o.recordWallTime);
}

inline std::size_t stacked_dim(const RunConfig& c) {
  if (c.type == GameType::microgrid) return static_cast<std::size_t>(std::max(0, c.microgrid.households * c.microgrid.horizon));
  std::size_t n = 0;
  for (const auto& p : c.lq.players) n += static_cast<std::size_t>(c.lq.horizon * p.inputDim);
  return n;
}

inline void parse_verification(ObjectReader& r, RunConfig& cfg) {
  auto& errs = r.errors();
  auto& v = cfg.verification;
  v.constraintSamples = r.integer("constraint_samples", v.constraintSamples);
  r.check(v.constraintSamples >= 1, "constraint_samples", "must be positive");
  v.epsilonGapCandidates = r.integer("epsilon_gap_candidates", v.epsilonGapCandidates);
  r.check(v.epsilonGapCandidates >= 0, "epsilon_gap_candidates", "must be nonnegative");
  v.epsilonGapSamples = r.integer("epsilon_gap_samples", v.epsilonGapSamples);
  r.check(v.epsilonGapSamples >= 1, "epsilon_gap_samples", "must be positive");
  v.lipschitzPairs = r.integer("lipschitz_pairs", v.lipschitzPairs);
  r.check(v.lipschitzPairs >= 1, "lipschitz_pairs", "must be positive");
  v.lipschitzBatch = r.integer("lipschitz_batch", v.lipschitzBatch);
  r.check(v.lipschitzBatch >= 1, "lipschitz_batch", "must be positive");
  v.lipschitzLambdaScale = r.number("lipschitz_lambda_scale", v.lipschitzLambdaScale);
  r.check(v.lipschitzLambdaScale >= 0.0, "lipschitz_lambda_scale", "must be nonnegative");
  if (const json* n = r.get("reference_strategy")) {
    v.referenceStrategy = read_vector(*n, stacked_dim(cfg), r.path("reference_strategy"), errs);
  }
  if (const json* n = r.get("epsilon_gap_probes")) {
    if (!n->is_array()) {
      errs.add(r.path("epsilon_gap_probes"), "expected an array");
      return;
    }
    for (std::size_t k = 0; k < n->size(); ++k) {
      ObjectReader p(&(*n)[k], r.path("epsilon_gap_probes") + "/" + std::to_string(k), errs);
      if (!p.present()) continue;
      ProbeConfig pc;
      pc.player = static_cast<int>(p.integer("player", 0));
      if (const json* s = p.require("strategy")) pc.strategy = read_array(*s, p.path("strategy"), errs);
      v.epsilonGapProbes.push_back(std::move(pc));
    }
  }
}

// Best-effort line of the last key of a JSON pointer, found by scanning for the keys in order.
inline long locate_line(const std::string& text, const std::string& pointer) {
  std::size_t pos = 0;
  std::size_t start = 1;
  bool any = false;
  while (start <= pointer.size()) {
    auto end = pointer.find('/', start);
    if (end == std::string::npos) end = pointer.size();
    const std::string seg = pointer.substr(start, end - start);
    start = end + 1;
    if (seg.empty() || seg.find_first_not_of("0123456789") == std::string::npos) continue;
    const auto hit = text.find("\"" + seg + "\"", pos);
    if (hit == std::string::npos) break;
    pos = hit;
    any = true;
  }
  if (!any) return 0;
  return 1 + static_cast<long>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
}

}  // namespace detail

/// Parses and validates a configuration document. Throws ConfigError listing every problem.
inline RunConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    const auto upto = std::min<std::size_t>(e.byte ? e.byte - 1 : 0, text.size());
    const long line = 1 + static_cast<long>(std::count(text.begin(), text.begin() + static_cast<long>(upto), '\n'));
    const auto nl = text.rfind('\n', upto ? upto - 1 : 0);
    const long col = static_cast<long>(upto - (nl == std::string::npos || upto == 0 ? 0 : nl + 1)) + 1;
    throw ConfigError({"line " + std::to_string(line) + ", column " + std::to_string(col) + ": JSON syntax error"});
  }

  detail::Errors errs;
  RunConfig cfg;
  {
    detail::ObjectReader top(&root, "", errs);
    {
      detail::ObjectReader g(top.require("game"), "/game", errs);
      if (g.present()) {
        const std::string type = g.string("type", "");
        if (type == "microgrid") {
          cfg.type = GameType::microgrid;
          detail::parse_microgrid(g, cfg.microgrid);
        } else if (type == "linear_quadratic") {
          cfg.type = GameType::linear_quadratic;
          detail::parse_lq(g, cfg.lq);
        } else {
          errs.add("/game/type", "must be 'microgrid' or 'linear_quadratic'");
        }
      }
    }
    {
      detail::ObjectReader c(top.get("com"), "/com", errs);
      detail::parse_com(c, cfg);
    }
    {
      detail::ObjectReader s(top.get("solver"), "/solver", errs);
      detail::parse_solver(s, cfg.solver);
    }
    {
      detail::ObjectReader o(top.get("output"), "/output", errs);
      detail::parse_output(o, cfg.output);
    }
    {
      detail::ObjectReader v(top.get("verification"), "/verification", errs);
      detail::parse_verification(v, cfg);
    }
  }

  if (errs.list.empty() && cfg.type == GameType::microgrid) {
    try {
      validate_params(resolve_defaults(cfg.microgrid));
    } catch (const ConstructionError& e) {
      errs.add("/game", e.what());
    }
  }

  if (!errs.list.empty()) {
    std::vector<std::string> out;
    for (const auto& e : errs.list) {
      const auto ptr = e.substr(0, e.find(": "));
      const long line = detail::locate_line(text, ptr);
      out.push_back(line > 0 ? "line " + std::to_string(line) + ": " + e : e);
    }
    throw ConfigError(std::move(out));
  }
  return cfg;
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({path + ": cannot open configuration file"});
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Canonical JSON for a configuration.
inline json emit_config(const RunConfig& c) {
  json game;
  if (c.type == GameType::microgrid) {
    const auto& p = c.microgrid;
    game = {{"type", "microgrid"},
            {"households", p.households},
            {"horizon", p.horizon},
            {"dt", p.dt},
            {"eta", p.eta},
            {"soc_initial", p.socInitial},
            {"soc_min", p.socMin},
            {"soc_max", p.socMax},
            {"soc_desired", p.socDesired},
            {"terminal_band", p.terminalBand},
            {"gamma_hat", p.gammaHat},
            {"gamma_tilde", p.gammaTilde},
            {"k_c", p.kc},
            {"alpha_dch", p.alphaDch},
            {"beta_dch", p.betaDch},
            {"alpha_util", p.alphaUtil},
            {"alpha_bat", p.alphaBat},
            {"renewable_peak_per_household", p.renewablePeakPerHousehold},
            {"renewable_std_default", p.renewableStdDefault}};
    if (!p.tariffToU.empty()) game["tariff_tou"] = p.tariffToU;
    if (!p.demand.empty()) game["demand"] = p.demand;
    if (!p.renewableMean.empty()) game["renewable_mean"] = p.renewableMean;
    if (!p.renewableStd.empty()) game["renewable_std"] = p.renewableStd;
  } else {
    const auto& g = c.lq;
    game = {{"type", "linear_quadratic"}, {"horizon", g.horizon}, {"state_dim", g.stateDim},
            {"A", g.A},                   {"B", g.B},             {"s0", g.s0}};
    json players = json::array();
    for (const auto& p : g.players) {
      players.push_back({{"input_dim", p.inputDim}, {"R", p.R}, {"C", p.C}, {"c", p.c}, {"Q", p.Q},
                         {"q", p.q}, {"lower", p.lower}, {"upper", p.upper}});
    }
    game["players"] = players;
    json cons = json::array();
    for (const auto& k : g.constraints) {
      json e = {{"state", k.state}, {"input", k.input}, {"constant", k.constant}};
      if (k.comScale) e["com_scale"] = *k.comScale;
      cons.push_back(e);
    }
    game["constraints"] = cons;
    game["disturbance"] = {{"mean", g.disturbanceMean}, {"std", g.disturbanceStd}};
  }

  json com = {{"kind", to_string(c.com.kind)}};
  if (c.com.kind == ComKind::user_tabulated) com["table"] = {{"theta", c.com.tableTheta}, {"h", c.com.tableH}};
  if (!c.com.gamma.empty()) com["gamma"] = c.com.gamma;
  if (!c.com.beta.empty()) com["beta"] = c.com.beta;

  const auto& s = c.solver;
  json solver = {{"delta", s.delta},
                 {"step", {{"alpha0", s.step.alpha0}, {"offset", s.step.offset}, {"exponent", s.step.exponent}}},
                 {"batch", {{"scale", s.batch.scale}, {"shift", s.batch.shift}, {"growth", s.batch.growth}}},
                 {"max_iterations", s.maxIterations},
                 {"residual_tolerance", s.residualTolerance},
                 {"residual_batch", s.residualBatch},
                 {"seed", s.seed},
                 {"checkpoint_every", s.checkpointEvery},
                 {"divergence_factor", s.divergenceFactor},
                 {"use_updated_multiplier", s.useUpdatedMultiplier}};

  const auto& o = c.output;
  json output = {{"trace", o.trace},           {"summary", o.summary},
                 {"strategies", o.strategies}, {"snapshots", o.snapshots},
                 {"checkpoint", o.checkpoint}, {"snapshot_every", o.snapshotEvery},
                 {"record_wall_time", o.recordWallTime}};

  const auto& v = c.verification;
  json verification = {{"constraint_samples", v.constraintSamples},
                       {"epsilon_gap_candidates", v.epsilonGapCandidates},
                       {"epsilon_gap_samples", v.epsilonGapSamples},
                       {"lipschitz_pairs", v.lipschitzPairs},
                       {"lipschitz_batch", v.lipschitzBatch},
                       {"lipschitz_lambda_scale", v.lipschitzLambdaScale}};
  if (!v.referenceStrategy.empty()) verification["reference_strategy"] = v.referenceStrategy;
  if (!v.epsilonGapProbes.empty()) {
    json probes = json::array();
    for (const auto& p : v.epsilonGapProbes) probes.push_back({{"player", p.player}, {"strategy", p.strategy}});
    verification["epsilon_gap_probes"] = probes;
  }

  return {{"game", game}, {"com", com}, {"solver", solver}, {"output", output}, {"verification", verification}};
}

// ---- game construction -------------------------------------------------------------------

inline ComModel build_com_model(const ComConfig& c) {
  return c.kind == ComKind::gaussian_standard ? ComModel::gaussian_standard()
                                              : ComModel::tabulated(c.tableTheta, c.tableH);
}

/// Linear-quadratic game with box local sets and affine coupling constraints.
inline GameSpec build_lq_game(const LqGameConfig& g, const ComModel& com, const std::vector<double>& gamma,
                              const std::vector<double>& beta) {
  const int T = g.horizon;
  const int N = static_cast<int>(g.players.size());
  detail::require(gamma.size() == g.constraints.size(), "build_lq_game: one gamma per constraint is required");
  detail::require(beta.empty() || beta.size() == g.constraints.size(), "build_lq_game: beta must have one entry per constraint");

  TimeVaryingLinearDynamics dyn;
  dyn.horizon = T;
  dyn.stateDim = g.stateDim;
  for (const auto& a : g.A) dyn.A.push_back(detail::to_eigen(a));
  dyn.B.resize(static_cast<std::size_t>(N));
  for (int j = 0; j < N && j < static_cast<int>(g.B.size()); ++j) {
    for (const auto& b : g.B[j]) dyn.B[j].push_back(detail::to_eigen(b));
  }
  dyn.s0 = detail::to_eigen(g.s0);
  const CompactLift lift = build_compact_lift(dyn);

  std::vector<PlayerSpec> players;
  for (int i = 0; i < N; ++i) {
    const auto& pc = g.players[i];
    PlayerSpec ps;
    ps.inputDim = pc.inputDim;
    ps.lower = detail::to_eigen(pc.lower);
    ps.upper = detail::to_eigen(pc.upper);
    ps.name = "player " + std::to_string(i);
    const int off = lift.offsets[i];
    const int len = T * pc.inputDim;
    const Matrix R = detail::to_eigen(pc.R), C = detail::to_eigen(pc.C), Q = detail::to_eigen(pc.Q);
    const Vector c = detail::to_eigen(pc.c), q = detail::to_eigen(pc.q);
    ps.costInputGrad = [R, C, c, off, len](ConstVectorRef u, VectorRef grad) {
      grad.noalias() = R * u.segment(off, len);
      grad.noalias() += C * u;
      grad += c;
    };
    if (!Q.isZero(0.0) || !q.isZero(0.0)) {
      ps.costStateGrad = [Q, q](ConstVectorRef s, VectorRef grad) {
        grad.noalias() = Q * s;
        grad += q;
      };
      ps.costStateGradAffine = true;
    }
    ps.costValue = [R, C, c, Q, q, off, len](ConstVectorRef s, ConstVectorRef u) {
      const auto ui = u.segment(off, len);
      return 0.5 * ui.dot(R * ui) + ui.dot(C * u) + c.dot(ui) + 0.5 * s.dot(Q * s) + q.dot(s);
    };
    players.push_back(std::move(ps));
  }

  const Vector sd = detail::to_eigen(g.disturbanceStd);
  std::vector<CouplingConstraintSpec> constraints;
  for (std::size_t j = 0; j < g.constraints.size(); ++j) {
    const auto& cc = g.constraints[j];
    const Vector a = detail::to_eigen(cc.state), e = detail::to_eigen(cc.input);
    CouplingConstraintSpec spec;
    if (!a.isZero(0.0)) {
      spec.stateFn = [a](ConstVectorRef s) { return a.dot(s); };
      spec.stateGrad = [a](ConstVectorRef, VectorRef grad) { grad = a; };
      spec.stateAffine = true;
    }
    spec.inputFn = [e, k = cc.constant](ConstVectorRef u) { return e.dot(u) + k; };
    spec.inputGrad = [e](ConstVectorRef, VectorRef grad) { grad = e; };
    spec.gamma = gamma[j];
    spec.beta = beta.empty() ? 0.0 : beta[j];
    // a' Upsilon (mu + diag(sd) z) is ||diag(sd) Upsilon' a||-Lipschitz in the standard normal z.
    spec.comScale = cc.comScale ? *cc.comScale : (sd.asDiagonal() * (lift.Upsilon.transpose() * a)).norm();
    spec.name = "constraint " + std::to_string(j);
    constraints.push_back(std::move(spec));
  }

  DisturbanceModel dist;
  dist.dim = T * g.stateDim;
  dist.com = com;
  dist.deterministic = sd.isZero(0.0);
  dist.sampler = [mean = detail::to_eigen(g.disturbanceMean), sd, det = dist.deterministic](RngStream& rng, VectorRef w) {
    w = mean;
    if (det) return;
    for (Eigen::Index k = 0; k < w.size(); ++k) w[k] += sd[k] * rng.normal();
  };
  return GameSpec(std::move(dyn), std::move(players), std::move(constraints), std::move(dist));
}

struct BuiltGame {
  GameSpec game;
  UnderApproxOffsets offsets;
  std::optional<MicrogridParams> microgrid;  // resolved, for microgrid configs
};

inline BuiltGame build_game(const RunConfig& cfg) {
  const ComModel com = build_com_model(cfg.com);
  if (cfg.type == GameType::microgrid) {
    MicrogridParams p = cfg.microgrid;
    p.beta = cfg.com.beta;
    auto mg = build_microgrid_game(p, com);
    return {std::move(mg.game), std::move(mg.offsets), std::move(mg.params)};
  }
  GameSpec game = build_lq_game(cfg.lq, com, cfg.com.gamma, cfg.com.beta);
  auto offsets = build_offsets(game);
  return {std::move(game), std::move(offsets), std::nullopt};
}

}  // namespace sgne
