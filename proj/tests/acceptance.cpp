// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero if any fails.

#include "oracles.hpp"

#include <boost/math/distributions/normal.hpp>

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

using namespace sgne;

namespace {

std::string config_path(const std::string& name) { return std::string(SGNE_SOURCE_DIR) + "/configs/" + name; }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

int failures = 0;

void report(int id, const std::string& title, const std::function<Outcome()>& body) {
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!o.pass) ++failures;
  std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << title << "  [" << o.detail << "; "
            << fmt(secs) << " s]" << std::endl;
}

Outcome lift_correctness() {
  std::mt19937_64 gen(20240601);
  std::uniform_int_distribution<int> ns(1, 4), np(1, 4), nt(1, 10);
  std::normal_distribution<double> nd;
  double worst = 0.0, worstClosed = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = oracle::random_dynamics(gen, ns(gen), np(gen), nt(gen));
    Vector u(d.stackedInputDim()), w(d.stackedDisturbanceDim());
    for (auto& x : u) x = nd(gen);
    for (auto& x : w) x = nd(gen);
    const Vector sim = simulate_state(d, u, w);
    const Vector lifted = lift_state(build_compact_lift(d), d.s0, u, w);
    const Vector closed = oracle::closed_form_state(d, u, w);
    worst = std::max(worst, (lifted - sim).norm() / std::max(1.0, sim.norm()));
    worstClosed = std::max(worstClosed, (lifted - closed).norm() / std::max(1.0, closed.norm()));
  }
  return {worst <= 1e-10 && worstClosed <= 1e-10,
          "100 systems, max rel err vs recursion " + fmt(worst) + ", vs closed form " + fmt(worstClosed)};
}

Outcome gradient_fidelity() {
  std::mt19937_64 gen(77);
  double worstCost = 0.0, worstCons = 0.0;
  // Random LQ games with state costs and affine constraints.
  for (int point = 0; point < 20; ++point) {
    const auto cfg = oracle::random_lq_config(gen, 1 + point % 3, 1 + point % 4, 2 + point % 4, 2);
    const auto game = build_lq_game(cfg, ComModel::gaussian_standard(), {0.1, 0.1}, {});
    const Vector u = oracle::random_feasible(game, gen);
    RngStream rng(static_cast<std::uint64_t>(point));
    Vector w(game.disturbance().dim);
    game.disturbance().sampler(rng, w);
    const Vector F = pseudo_gradient_sample(game, u, w);
    for (int i = 0; i < game.numPlayers(); ++i) {
      const auto off = game.playerOffset(i), len = game.playerLength(i);
      auto cost = [&](const Vector& ui) {
        Vector full = u;
        full.segment(off, len) = ui;
        return game.players()[i].costValue(oracle::closed_form_state(game.dynamics(), full, w), full);
      };
      worstCost = std::max(worstCost, oracle::relative_error(F.segment(off, len), oracle::fd_gradient(cost, u.segment(off, len))));
    }
    auto xi = [&](const Vector& x) {
      const Vector s = oracle::closed_form_state(game.dynamics(), x, w);
      Vector out(2);
      for (int j = 0; j < 2; ++j) {
        out[j] = oracle::to_eigen_vec(cfg.constraints[j].state).dot(s) + oracle::to_eigen_vec(cfg.constraints[j].input).dot(x) +
                 cfg.constraints[j].constant;
      }
      return out;
    };
    const Matrix J = constraint_gradient_sample(game, u, w);
    const Matrix Jfd = oracle::fd_jacobian(xi, u);
    for (int j = 0; j < 2; ++j) worstCons = std::max(worstCons, oracle::relative_error(J.col(j), Jfd.row(j).transpose()));
  }
  // The full-size microgrid: three-term household costs and all 49 constraints.
  const auto mg = build_microgrid_game(MicrogridParams{});
  const auto& game = mg.game;
  const int T = game.horizon();
  for (int point = 0; point < 20; ++point) {
    const Vector u = oracle::random_feasible(game, gen);
    RngStream rng(1000 + static_cast<std::uint64_t>(point));
    Vector w(T);
    game.disturbance().sampler(rng, w);
    const Vector F = pseudo_gradient_sample(game, u, w);
    for (int i = 0; i < game.numPlayers(); ++i) {
      auto cost = [&](const Vector& ui) {
        Vector full = u;
        full.segment(i * T, T) = ui;
        return household_cost_value(i, full, w, mg.params);
      };
      worstCost = std::max(worstCost, oracle::relative_error(F.segment(i * T, T), oracle::fd_gradient(cost, u.segment(i * T, T))));
    }
    auto xi = [&](const Vector& x) {
      const Vector s = oracle::closed_form_state(game.dynamics(), x, w);
      Vector out(2 * T + 1);
      for (int t = 1; t <= T; ++t) {
        out[2 * (t - 1)] = s[t] - mg.params.socMax;
        out[2 * (t - 1) + 1] = mg.params.socMin - s[t];
      }
      out[2 * T] = std::abs(s[T] - mg.params.socDesired) - mg.params.terminalBand;
      return out;
    };
    const Matrix J = constraint_gradient_sample(game, u, w);
    const Matrix Jfd = oracle::fd_jacobian(xi, u);
    for (int j = 0; j < game.numConstraints(); ++j) {
      worstCons = std::max(worstCons, oracle::relative_error(J.col(j), Jfd.row(j).transpose()));
    }
  }
  return {worstCost <= 1e-4 && worstCons <= 1e-4,
          "20 LQ + 20 microgrid points, max rel err cost " + fmt(worstCost) + ", constraint " + fmt(worstCons)};
}

struct OracleRun {
  RunTrace trace;
  oracle::KktSolution kkt;
  long firstWithin = -1;
};

OracleRun oracle_run() {
  const auto cfg = parse_config(config_path("quadratic_oracle.json"));
  const auto built = build_game(cfg);
  OracleRun out;
  out.kkt = oracle::solve_lq_kkt(cfg.lq, cfg.com.gamma, build_com_model(cfg.com));
  SolverConfig solver = cfg.solver;
  solver.maxIterations = 50000;
  RunOptions ro;
  ro.recordWallTime = false;
  ro.observer = [&](const SolverState&, const SolverState& after, const IterationRecord&) {
    if (out.firstWithin < 0 && (after.u - out.kkt.u).norm() <= 1e-2) out.firstWithin = after.k;
  };
  out.trace = run(built.game, built.offsets, solver, ro);
  return out;
}

Outcome oracle_convergence(const OracleRun& r) {
  const double dist = (r.trace.finalState.u - r.kkt.u).norm();
  const bool oracleValid = r.kkt.dualFeasible && r.kkt.boxesInactive && r.kkt.lambda[0] > 0.0;
  std::ostringstream d;
  d << "KKT lambda* " << fmt(r.kkt.lambda[0]) << (oracleValid ? "" : " (oracle assumptions violated)") << ", within 1e-2 at k="
    << r.firstWithin << ", final ||u-u*|| " << fmt(dist) << " after " << r.trace.finalState.k << " iterations ("
    << to_string(r.trace.reason) << ")";
  return {oracleValid && r.firstWithin >= 0 && r.firstWithin <= 50000 && dist <= 1e-2, d.str()};
}

struct Monotone {
  bool ok = true;
  long firstViolation = -1;
  double finalMean = 0.0;
  double firstMean = 0.0;
};

Monotone trailing_check(const std::vector<IterationRecord>& records) {
  std::vector<double> res;
  for (const auto& r : records) res.push_back(r.residual);
  const auto m = oracle::trailing_means(res, 50);
  Monotone out;
  if (res.size() < 551) {
    out.ok = false;
    return out;
  }
  out.firstMean = m[49];
  out.finalMean = m.back();
  for (std::size_t k = 501; k < m.size(); ++k) {
    if (m[k] > m[k - 1]) {
      out.ok = false;
      out.firstViolation = static_cast<long>(k);
      break;
    }
  }
  return out;
}

struct MicrogridRun {
  MicrogridGame mg;
  RunTrace trace;
  SolverConfig cfg;
  bool lambdaNonneg = true, inBoxes = true, scheduleExact = true, averagingExact = true;
  double worstAveraging = 0.0;
  long checked = 0;
};

MicrogridRun microgrid_run() {
  auto rc = parse_config(config_path("microgrid_reduced.json"));
  MicrogridRun out{build_microgrid_game(rc.microgrid), {}, rc.solver};
  out.cfg.maxIterations = 10000;
  out.cfg.residualTolerance = 0.0;  // run the full budget
  const auto& game = out.mg.game;
  const double delta = out.cfg.delta;

  auto check_iterate = [&](const SolverState& s, const IterationRecord& r) {
    out.lambdaNonneg = out.lambdaNonneg && (s.lambdaBar.array() >= 0.0).all();
    for (int i = 0; i < game.numPlayers(); ++i) {
      const auto& p = game.players()[i];
      const auto blk = s.u.segment(game.playerOffset(i), game.playerLength(i));
      out.inBoxes = out.inBoxes && (blk.array() >= p.lower.array()).all() && (blk.array() <= p.upper.array()).all();
    }
    const double k = static_cast<double>(r.k);
    out.scheduleExact = out.scheduleExact && r.alpha == 1.4e-4 / (k + 2.0) &&
                        r.batch == static_cast<std::size_t>(std::ceil(std::pow(k + 2.0, 1.1)));
    ++out.checked;
  };
  RunOptions ro;
  ro.recordWallTime = false;
  ro.observer = [&](const SolverState& before, const SolverState& after, const IterationRecord& r) {
    check_iterate(after, r);
    auto gap = [&](const Vector& tilde, const Vector& z, const Vector& prev) {
      const Vector expect = (1.0 - delta) * z + delta * prev;
      const double eps = std::numeric_limits<double>::epsilon();
      double worst = 0.0;
      for (Eigen::Index l = 0; l < expect.size(); ++l) {
        const double scale = std::abs(z[l]) + std::abs(prev[l]);
        const double err = std::abs(tilde[l] - expect[l]);
        if (err > 2.0 * eps * scale) out.averagingExact = false;
        worst = std::max(worst, scale > 0.0 ? err / scale : err);
      }
      return worst;
    };
    out.worstAveraging = std::max(out.worstAveraging, gap(after.uTildePrev, before.u, before.uTildePrev));
    out.worstAveraging = std::max(out.worstAveraging, gap(after.lambdaTildePrev, before.lambdaBar, before.lambdaTildePrev));
  };
  out.trace = run(game, out.mg.offsets, out.cfg, ro);
  check_iterate(initial_state(game), out.trace.records.front());
  return out;
}

Outcome soundness(const MicrogridRun& r) {
  auto rng = RngStream::keyed(r.cfg.seed, StreamPurpose::verification, 0, 0);
  const auto& game = r.mg.game;
  const auto sat = estimate_constraint_satisfaction(game, r.trace.finalState.u, 10000, rng);
  bool ok = true;
  double worstLower = 1.0;
  std::string worstName;
  for (std::size_t j = 0; j < sat.size(); ++j) {
    ok = ok && sat[j].probability >= sat[j].target && sat[j].meetsTarget();
    if (sat[j].lower - sat[j].target < worstLower) {
      worstLower = sat[j].lower - sat[j].target;
      worstName = game.constraints()[j].name;
    }
  }
  const auto& term = sat.back();
  ok = ok && term.probability >= 0.9;
  return {ok, std::to_string(sat.size()) + " constraints, 10^4 draws; terminal frequency " + fmt(term.probability) +
                  " (Wilson lower " + fmt(term.lower) + "); tightest margin " + fmt(worstLower) + " at " + worstName};
}

Outcome com_conservativeness() {
  boost::math::normal_distribution<double> normal;
  bool ok = true;
  std::ostringstream d;
  for (double g : {0.01, 0.05, 0.1, 0.2}) {
    const double h = h_inverse(ComModel::gaussian_standard(), g);
    const double q = boost::math::quantile(normal, 1.0 - g);
    ok = ok && h >= q;
    d << "gamma " << g << ": " << fmt(h) << " >= " << fmt(q) << "; ";
  }
  return {ok, d.str().substr(0, d.str().size() - 2)};
}

Outcome estimator_scaling() {
  const auto rc = parse_config(config_path("microgrid_full.json"));
  const auto built = build_game(rc);
  auto rng = RngStream::keyed(rc.solver.seed, StreamPurpose::diagnostics, 0, 0);
  const Vector u = detail::random_profile(built.game, rng);
  const Vector lambda = Vector::Ones(built.game.numConstraints());
  const auto diag = estimator_diagnostics(built.game, built.offsets, u, lambda, {8, 32, 128, 512}, 200, rng);
  std::ostringstream d;
  d << "slope " << fmt(diag.fittedExponent) << " over M = 8..512 (200 repetitions, reference batch " << diag.referenceBatch << ")";
  return {diag.fittedExponent >= -1.3 && diag.fittedExponent <= -0.7, d.str()};
}

Outcome invariants(const MicrogridRun& r) {
  const bool ok = r.lambdaNonneg && r.inBoxes && r.scheduleExact && r.averagingExact && r.checked == 10001;
  std::ostringstream d;
  d << r.checked << " iterates; lambda>=0 " << r.lambdaNonneg << ", u in D " << r.inBoxes << ", schedules exact "
    << r.scheduleExact << ", averaging identity " << r.averagingExact << " (worst rel err " << fmt(r.worstAveraging) << ")";
  return {ok, d.str()};
}

Outcome config_gate() {
  const auto rc = parse_config(config_path("microgrid_full.json"));
  const auto built = build_game(rc);
  const auto shipped = validate_run_config(rc, built);

  auto smallDelta = rc;
  smallDelta.solver.delta = 0.5;
  const auto rDelta = validate_run_config(smallDelta, built);
  bool deltaFlagged = false;
  for (const auto& v : rDelta.violations) deltaFlagged = deltaFlagged || v.find("delta") == 0;

  auto bigStep = rc;
  bigStep.solver.step.alpha0 = 1.01 * shipped.stepBound * std::pow(rc.solver.step.offset, rc.solver.step.exponent);
  const auto rStep = validate_run_config(bigStep, built);
  bool stepFlagged = false;
  for (const auto& v : rStep.violations) stepFlagged = stepFlagged || v.find("alpha_0") == 0;

  std::ostringstream d;
  d << "l_hat " << fmt(shipped.lipschitzEstimate) << ", bound " << fmt(shipped.stepBound) << "; shipped accepted " << shipped.ok()
    << ", delta 0.5 rejected " << (!rDelta.ok() && deltaFlagged) << ", alpha_0 = 1.01 bound rejected " << (!rStep.ok() && stepFlagged);
  return {shipped.ok() && !rDelta.ok() && deltaFlagged && !rStep.ok() && stepFlagged, d.str()};
}

}  // namespace

int main() {
  report(1, "lift correctness", lift_correctness);
  report(2, "gradient fidelity", gradient_fidelity);

  OracleRun oracleRun;
  report(3, "closed-form oracle convergence", [&] {
    oracleRun = oracle_run();
    return oracle_convergence(oracleRun);
  });

  std::optional<MicrogridRun> mgRun;
  report(4, "residual decay", [&] {
    const auto o = trailing_check(oracleRun.trace.records);
    mgRun = microgrid_run();
    const auto g = trailing_check(mgRun->trace.records);
    const bool ok = o.ok && o.finalMean < 1e-3 && g.ok && g.finalMean < 0.1 * g.firstMean;
    std::ostringstream d;
    d << "oracle: " << oracleRun.trace.records.size() << " records, monotone " << o.ok << " (first violation " << o.firstViolation
      << "), final mean " << fmt(o.finalMean) << "; microgrid N=5 T=12: " << mgRun->trace.records.size() << " records, monotone "
      << g.ok << " (first violation " << g.firstViolation << "), mean " << fmt(g.firstMean) << " -> " << fmt(g.finalMean);
    return Outcome{ok, d.str()};
  });

  report(5, "chance-constraint soundness", [&] { return mgRun ? soundness(*mgRun) : Outcome{false, "no microgrid run"}; });
  report(6, "concentration-of-measure conservativeness", com_conservativeness);
  report(7, "estimator scaling", estimator_scaling);
  report(8, "schedule and feasibility invariants", [&] { return mgRun ? invariants(*mgRun) : Outcome{false, "no microgrid run"}; });
  report(9, "configuration gate", config_gate);

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
