#pragma once

// Text formats: per-iteration trace CSV, strategy CSV, strategy snapshots and
// solver checkpoints. Numbers are written in shortest round-trip form.

#include "sgne/common.hpp"
#include "sgne/game.hpp"
#include "sgne/solver.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace sgne {

/// Malformed or unreadable file.
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string format_number(double x) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline double parse_number(std::string_view text, const std::string& where) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  if (!text.empty() && text.front() == '+') text.remove_prefix(1);
  double x = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), x);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw FormatError(where + ": '" + std::string(text) + "' is not a number");
  }
  return x;
}

inline long parse_integer(std::string_view text, const std::string& where) {
  const double x = parse_number(text, where);
  if (x != std::floor(x)) throw FormatError(where + ": '" + std::string(text) + "' is not an integer");
  return static_cast<long>(x);
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

// ---- trace ------------------------------------------------------------------

inline std::string trace_header(int constraints) {
  std::string h = "k,residual,g_hat_max,g_hat_norm";
  for (int j = 0; j < constraints; ++j) h += ",lambda_" + std::to_string(j);
  h += ",alpha,batch,wall_ms";
  return h;
}

inline void write_trace_csv(std::ostream& os, const std::vector<IterationRecord>& records, int constraints) {
  os << trace_header(constraints) << '\n';
  for (const auto& r : records) {
    detail::require_length(r.lambda.size(), constraints, "write_trace_csv: lambda");
    os << r.k << ',' << format_number(r.residual) << ',' << format_number(r.gHatMax) << ',' << format_number(r.gHatNorm);
    for (int j = 0; j < constraints; ++j) os << ',' << format_number(r.lambda[j]);
    os << ',' << format_number(r.alpha) << ',' << r.batch << ',' << format_number(r.wallMs) << '\n';
  }
}

/// Parses a trace written by write_trace_csv. Strategy snapshots are not part of the trace.
inline std::vector<IterationRecord> read_trace_csv(std::istream& is, const std::string& name = "trace") {
  std::string line;
  if (!std::getline(is, line)) throw FormatError(name + ": empty file");
  const auto head = split_csv_line(line);
  if (head.size() < 7 || head[0] != "k" || head[1] != "residual" || head[2] != "g_hat_max" || head[3] != "g_hat_norm" ||
      head[head.size() - 3] != "alpha" || head[head.size() - 2] != "batch" || head.back() != "wall_ms") {
    throw FormatError(name + ": unexpected header");
  }
  const int m = static_cast<int>(head.size()) - 7;
  for (int j = 0; j < m; ++j) {
    if (head[4 + j] != "lambda_" + std::to_string(j)) throw FormatError(name + ": unexpected header column " + std::string(head[4 + j]));
  }
  std::vector<IterationRecord> out;
  long lineNo = 1;
  while (std::getline(is, line)) {
    ++lineNo;
    if (line.empty() || line == "\r") continue;
    const auto f = split_csv_line(line);
    const std::string where = name + ":" + std::to_string(lineNo);
    if (f.size() != head.size()) throw FormatError(where + ": expected " + std::to_string(head.size()) + " fields");
    IterationRecord r;
    r.k = parse_integer(f[0], where);
    r.residual = parse_number(f[1], where);
    r.gHatMax = parse_number(f[2], where);
    r.gHatNorm = parse_number(f[3], where);
    r.lambda.resize(m);
    for (int j = 0; j < m; ++j) r.lambda[j] = parse_number(f[4 + j], where);
    r.alpha = parse_number(f[4 + m], where);
    r.batch = static_cast<std::size_t>(parse_integer(f[5 + m], where));
    r.wallMs = parse_number(f[6 + m], where);
    out.push_back(std::move(r));
  }
  return out;
}

// ---- strategies ---------------------------------------------------------------

inline void write_strategy_rows(std::ostream& os, const GameSpec& game, const Vector& u, const std::string& prefix = {}) {
  for (int i = 0; i < game.numPlayers(); ++i) {
    const int ni = game.players()[i].inputDim;
    for (int t = 0; t < game.horizon(); ++t) {
      for (int c = 0; c < ni; ++c) {
        os << prefix << i << ',' << t << ',' << c << ',' << format_number(u[game.playerOffset(i) + t * ni + c]) << '\n';
      }
    }
  }
}

/// Columns player,t,component,value.
inline void write_strategy_csv(std::ostream& os, const GameSpec& game, const Vector& u) {
  detail::require_length(u.size(), game.stackedDim(), "write_strategy_csv: u");
  os << "player,t,component,value\n";
  write_strategy_rows(os, game, u);
}

/// Reads a strategy CSV and checks it covers every (player, t, component) of the game exactly once.
inline Vector read_strategy_csv(std::istream& is, const GameSpec& game, const std::string& name = "strategies") {
  std::string line;
  if (!std::getline(is, line)) throw FormatError(name + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "player,t,component,value") throw FormatError(name + ": expected header player,t,component,value");
  Vector u = Vector::Zero(game.stackedDim());
  std::vector<char> seen(static_cast<std::size_t>(game.stackedDim()), 0);
  long lineNo = 1;
  while (std::getline(is, line)) {
    ++lineNo;
    if (line.empty() || line == "\r") continue;
    const std::string where = name + ":" + std::to_string(lineNo);
    const auto f = split_csv_line(line);
    if (f.size() != 4) throw FormatError(where + ": expected 4 fields");
    const long i = parse_integer(f[0], where), t = parse_integer(f[1], where), c = parse_integer(f[2], where);
    if (i < 0 || i >= game.numPlayers()) throw FormatError(where + ": player index out of range");
    const int ni = game.players()[i].inputDim;
    if (t < 0 || t >= game.horizon() || c < 0 || c >= ni) throw FormatError(where + ": (t, component) out of range");
    const auto idx = static_cast<std::size_t>(game.playerOffset(static_cast<int>(i)) + t * ni + c);
    if (seen[idx]) throw FormatError(where + ": duplicate entry");
    seen[idx] = 1;
    u[static_cast<Eigen::Index>(idx)] = parse_number(f[3], where);
  }
  for (char s : seen) {
    if (!s) throw FormatError(name + ": strategy does not match the game dimensions (missing entries)");
  }
  return u;
}

/// Columns k,player,t,component,value for every record that carries a strategy.
inline void write_snapshot_csv(std::ostream& os, const GameSpec& game, const std::vector<IterationRecord>& records) {
  os << "k,player,t,component,value\n";
  for (const auto& r : records) {
    if (r.strategies) write_strategy_rows(os, game, *r.strategies, std::to_string(r.k) + ",");
  }
}

struct SnapshotRow {
  long k = 0;
  int player = 0;
  int t = 0;
  int component = 0;
  double value = 0.0;
};

inline std::vector<SnapshotRow> read_snapshot_csv(std::istream& is, const std::string& name = "snapshots") {
  std::string line;
  if (!std::getline(is, line)) throw FormatError(name + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "k,player,t,component,value") throw FormatError(name + ": expected header k,player,t,component,value");
  std::vector<SnapshotRow> out;
  long lineNo = 1;
  while (std::getline(is, line)) {
    ++lineNo;
    if (line.empty() || line == "\r") continue;
    const std::string where = name + ":" + std::to_string(lineNo);
    const auto f = split_csv_line(line);
    if (f.size() != 5) throw FormatError(where + ": expected 5 fields");
    out.push_back({parse_integer(f[0], where), static_cast<int>(parse_integer(f[1], where)),
                   static_cast<int>(parse_integer(f[2], where)), static_cast<int>(parse_integer(f[3], where)),
                   parse_number(f[4], where)});
  }
  return out;
}

// ---- checkpoint -----------------------------------------------------------------

inline constexpr std::string_view checkpoint_magic = "sgne-checkpoint 1";

inline void write_checkpoint(std::ostream& os, const SolverState& s, std::uint64_t seed) {
  auto vec = [&os](const char* key, const Vector& v) {
    os << key;
    for (double x : v) os << ' ' << format_number(x);
    os << '\n';
  };
  os << checkpoint_magic << '\n';
  os << "seed " << seed << '\n';
  os << "k " << s.k << '\n';
  os << "dims " << s.u.size() << ' ' << s.lambdaBar.size() << '\n';
  vec("u", s.u);
  vec("u_tilde", s.uTildePrev);
  vec("lambda_bar", s.lambdaBar);
  vec("lambda_tilde", s.lambdaTildePrev);
}

struct Checkpoint {
  SolverState state;
  std::uint64_t seed = 0;
};

inline Checkpoint read_checkpoint(std::istream& is, const std::string& name = "checkpoint") {
  std::string line;
  if (!std::getline(is, line) || line != checkpoint_magic) throw FormatError(name + ": not a checkpoint file");
  std::map<std::string, std::vector<std::string>> fields;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key, tok;
    ls >> key;
    auto& vals = fields[key];
    while (ls >> tok) vals.push_back(tok);
  }
  auto get = [&](const std::string& key) -> const std::vector<std::string>& {
    const auto it = fields.find(key);
    if (it == fields.end()) throw FormatError(name + ": missing '" + key + "'");
    return it->second;
  };
  auto vec = [&](const std::string& key, long n) {
    const auto& v = get(key);
    if (static_cast<long>(v.size()) != n) throw FormatError(name + ": '" + key + "' has the wrong length");
    Vector out(n);
    for (long i = 0; i < n; ++i) out[i] = parse_number(v[static_cast<std::size_t>(i)], name + ": " + key);
    return out;
  };
  const auto& dims = get("dims");
  if (dims.size() != 2) throw FormatError(name + ": malformed 'dims'");
  const long n = parse_integer(dims[0], name), m = parse_integer(dims[1], name);
  if (get("seed").size() != 1 || get("k").size() != 1) throw FormatError(name + ": malformed 'seed' or 'k'");
  Checkpoint c;
  try {
    c.seed = std::stoull(get("seed")[0]);
  } catch (const std::exception&) {
    throw FormatError(name + ": malformed seed");
  }
  c.state.k = parse_integer(get("k")[0], name);
  c.state.u = vec("u", n);
  c.state.uTildePrev = vec("u_tilde", n);
  c.state.lambdaBar = vec("lambda_bar", m);
  c.state.lambdaTildePrev = vec("lambda_tilde", m);
  return c;
}

}  // namespace sgne
