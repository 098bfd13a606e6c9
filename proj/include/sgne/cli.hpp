#pragma once

// Subcommands behind the command-line front end. Each returns a process exit code
// and reports through the supplied streams; nothing here calls exit().

#include "sgne/com.hpp"
#include "sgne/config.hpp"
#include "sgne/microgrid.hpp"
#include "sgne/solver.hpp"
#include "sgne/trace_io.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace sgne {

namespace exit_code {
inline constexpr int ok = 0;          // tolerance reached / checks passed
inline constexpr int error = 1;       // I/O, configuration or argument error
inline constexpr int budget = 2;      // iteration budget exhausted / targets not met
inline constexpr int divergence = 3;  // divergence guard tripped
inline constexpr int gate = 4;        // validation gate failed
}  // namespace exit_code

struct CliOptions {
  std::string outDir = ".";
  bool force = false;
  std::optional<std::uint64_t> seed;
  std::string strategies;  // strategy CSV input (check-constraints, epsilon-gap, plot-data)
  std::string trace;       // trace CSV input (plot-data, epsilon-gap)
  std::string resume;      // checkpoint to resume from (run)
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::filesystem::path resolve_path(const std::string& dir, const std::string& name) {
  const std::filesystem::path p(name);
  return p.is_absolute() ? p : std::filesystem::path(dir) / p;
}

inline std::ofstream open_output(const std::filesystem::path& p) {
  std::ofstream os(p, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + p.string());
  return os;
}

inline std::ifstream open_input(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw IoError("cannot read " + p.string());
  return is;
}

inline void finish_output(std::ofstream& os, const std::filesystem::path& p) {
  os.flush();
  if (!os) throw IoError("write failed for " + p.string());
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) throw IoError("cannot create output directory " + dir);
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << e.what() << '\n';
  } catch (const ConstructionError& e) {
    err << "model error: " << e.what() << '\n';
  } catch (const ArgumentError& e) {
    err << "argument error: " << e.what() << '\n';
  } catch (const EvaluationError& e) {
    err << "evaluation error: " << e.what() << '\n';
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
  }
  return exit_code::error;
}

inline Vector read_strategies(const CliOptions& opt, const RunConfig& cfg, const GameSpec& game) {
  const auto path = opt.strategies.empty() ? resolve_path(opt.outDir, cfg.output.strategies) : std::filesystem::path(opt.strategies);
  auto is = open_input(path);
  return read_strategy_csv(is, game, path.string());
}

inline json satisfaction_json(const GameSpec& game, const std::vector<SatisfactionEstimate>& est) {
  json arr = json::array();
  for (std::size_t j = 0; j < est.size(); ++j) {
    const auto& e = est[j];
    arr.push_back({{"constraint", game.constraints()[j].name},
                   {"probability", e.probability},
                   {"ci_lower", e.lower},
                   {"ci_upper", e.upper},
                   {"target", e.target},
                   {"meets_target", e.meetsTarget()}});
  }
  return arr;
}

inline std::vector<StrategyProbe> collect_probes(const RunConfig& cfg, const GameSpec& game, const Vector& uStar) {
  std::vector<StrategyProbe> probes;
  for (std::size_t k = 0; k < cfg.verification.epsilonGapProbes.size(); ++k) {
    const auto& p = cfg.verification.epsilonGapProbes[k];
    const std::string where = "verification/epsilon_gap_probes/" + std::to_string(k);
    if (p.player < 0 || p.player >= game.numPlayers()) throw ArgumentError(where + ": player index out of range");
    detail::require_length(static_cast<Eigen::Index>(p.strategy.size()), game.playerLength(p.player), where.c_str());
    probes.push_back({p.player, to_eigen(p.strategy)});
  }
  auto rng = RngStream::keyed(cfg.solver.seed, StreamPurpose::probes, 0, 0);
  for (auto& p : random_probes(game, uStar, cfg.verification.epsilonGapCandidates, rng)) probes.push_back(std::move(p));
  return probes;
}

inline EpsilonGapEstimate run_epsilon_gap(const RunConfig& cfg, const BuiltGame& built, const Vector& uStar) {
  const auto probes = collect_probes(cfg, built.game, uStar);
  auto rng = RngStream::keyed(cfg.solver.seed, StreamPurpose::verification, 1, 0);
  return estimate_epsilon_gap(built.game, built.offsets, uStar, probes, cfg.verification.epsilonGapSamples, rng);
}

}  // namespace detail

inline void apply_overrides(RunConfig& cfg, const CliOptions& opt) {
  if (opt.seed) cfg.solver.seed = *opt.seed;
}

/// Empirical Lipschitz estimate and the convergence-condition report.
inline ValidationReport validate_run_config(const RunConfig& cfg, const BuiltGame& built) {
  auto rng = RngStream::keyed(cfg.solver.seed, StreamPurpose::lipschitz, 0, 0);
  const double l = estimate_lipschitz(built.game, built.offsets, cfg.verification.lipschitzPairs,
                                      cfg.verification.lipschitzBatch, rng, cfg.verification.lipschitzLambdaScale);
  return validate_config(cfg.solver, l);
}

inline void print_report(std::ostream& out, const SolverConfig& s, const ValidationReport& r) {
  out << "lipschitz estimate: " << format_number(r.lipschitzEstimate) << '\n';
  out << "step bound 1/(4 delta (2 l + 1)): " << format_number(r.stepBound) << '\n';
  out << "alpha_0: " << format_number(step_size(s, 0)) << '\n';
  for (const auto& v : r.violations) out << "violation: " << v << '\n';
  out << (r.ok() ? "configuration satisfies the convergence conditions" : "configuration violates the convergence conditions")
      << '\n';
}

inline int cmd_validate(const RunConfig& cfg, const CliOptions&, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto built = build_game(cfg);
    const auto report = validate_run_config(cfg, built);
    out << "players: " << built.game.numPlayers() << ", horizon: " << built.game.horizon()
        << ", coupling constraints: " << built.game.numConstraints() << '\n';
    print_report(out, cfg.solver, report);
    return report.ok() ? exit_code::ok : exit_code::gate;
  });
}

inline int cmd_run(const RunConfig& cfg, const CliOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&]() -> int {
    const auto built = build_game(cfg);
    const auto& game = built.game;

    const auto report = validate_run_config(cfg, built);
    if (!report.ok()) {
      print_report(err, cfg.solver, report);
      if (!opt.force) {
        err << "refusing to run; pass --force to override\n";
        return exit_code::gate;
      }
      err << "--force given; running anyway\n";
    }

    detail::ensure_dir(opt.outDir);
    const auto tracePath = detail::resolve_path(opt.outDir, cfg.output.trace);
    const auto summaryPath = detail::resolve_path(opt.outDir, cfg.output.summary);
    const auto strategyPath = detail::resolve_path(opt.outDir, cfg.output.strategies);
    const auto snapshotPath = detail::resolve_path(opt.outDir, cfg.output.snapshots);
    const auto checkpointPath = detail::resolve_path(opt.outDir, cfg.output.checkpoint);
    // Fail on unwritable outputs before spending time on the run.
    auto traceOut = detail::open_output(tracePath);

    SolverConfig solver = cfg.solver;
    RunOptions ro;
    ro.recordWallTime = cfg.output.recordWallTime;
    ro.strategyEvery = cfg.output.snapshotEvery;
    if (!opt.resume.empty()) {
      auto is = detail::open_input(opt.resume);
      auto cp = read_checkpoint(is, opt.resume);
      if (cp.seed != solver.seed) throw ArgumentError("checkpoint seed differs from the configured seed");
      check_state(game, cp.state);
      solver.maxIterations = std::max(0L, cfg.solver.maxIterations - cp.state.k);
      ro.initial = cp.state;
    }
    if (solver.checkpointEvery > 0) {
      ro.observer = [&](const SolverState&, const SolverState& after, const IterationRecord&) {
        if (after.k % solver.checkpointEvery != 0) return;
        auto os = detail::open_output(checkpointPath);
        write_checkpoint(os, after, solver.seed);
        detail::finish_output(os, checkpointPath);
      };
    }

    const RunTrace trace = run(game, built.offsets, solver, ro);

    write_trace_csv(traceOut, trace.records, game.numConstraints());
    detail::finish_output(traceOut, tracePath);
    {
      auto os = detail::open_output(strategyPath);
      write_strategy_csv(os, game, trace.finalState.u);
      detail::finish_output(os, strategyPath);
    }
    if (cfg.output.snapshotEvery > 0) {
      auto os = detail::open_output(snapshotPath);
      write_snapshot_csv(os, game, trace.records);
      detail::finish_output(os, snapshotPath);
    }
    {
      auto os = detail::open_output(checkpointPath);
      write_checkpoint(os, trace.finalState, solver.seed);
      detail::finish_output(os, checkpointPath);
    }

    const auto& last = trace.records.back();
    json summary = {{"termination", to_string(trace.reason)},
                    {"iterations", trace.finalState.k},
                    {"final_residual", last.residual},
                    {"final_lambda", std::vector<double>(last.lambda.begin(), last.lambda.end())},
                    {"g_hat_max", last.gHatMax},
                    {"lipschitz_estimate", report.lipschitzEstimate},
                    {"step_bound", report.stepBound},
                    {"validation_ok", report.ok()},
                    {"seed", solver.seed}};
    {
      auto rng = RngStream::keyed(solver.seed, StreamPurpose::verification, 0, 0);
      const auto sat = estimate_constraint_satisfaction(game, trace.finalState.u, cfg.verification.constraintSamples, rng);
      bool all = true;
      for (const auto& e : sat) all = all && e.meetsTarget();
      summary["constraint_satisfaction"] = detail::satisfaction_json(game, sat);
      summary["all_constraints_met"] = all;
    }
    if (cfg.verification.epsilonGapCandidates > 0 || !cfg.verification.epsilonGapProbes.empty()) {
      const auto gap = detail::run_epsilon_gap(cfg, built, trace.finalState.u);
      summary["epsilon_gap"] = {{"m_hat", std::vector<double>(gap.mHat.begin(), gap.mHat.end())},
                                {"candidates", gap.candidatesEvaluated},
                                {"samples", gap.samplesUsed},
                                {"bound_kind", "max over probes; lower bound on the supremum"}};
    }
    if (!cfg.verification.referenceStrategy.empty()) {
      summary["distance_to_reference"] = (trace.finalState.u - detail::to_eigen(cfg.verification.referenceStrategy)).norm();
    }
    {
      auto os = detail::open_output(summaryPath);
      os << summary.dump(2) << '\n';
      detail::finish_output(os, summaryPath);
    }

    out << "termination: " << to_string(trace.reason) << " after " << trace.finalState.k << " iterations, residual "
        << format_number(last.residual) << '\n';
    out << "wrote " << tracePath.string() << ", " << strategyPath.string() << ", " << summaryPath.string() << '\n';
    switch (trace.reason) {
      case TerminationReason::tolerance: return exit_code::ok;
      case TerminationReason::budget: return exit_code::budget;
      case TerminationReason::divergence: return exit_code::divergence;
    }
    return exit_code::error;
  });
}

inline int cmd_check_constraints(const RunConfig& cfg, const CliOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto built = build_game(cfg);
    const Vector u = detail::read_strategies(opt, cfg, built.game);
    if (!in_local_sets(built.game, u, 1e-9)) out << "warning: strategy lies outside the local sets\n";
    auto rng = RngStream::keyed(cfg.solver.seed, StreamPurpose::verification, 0, 0);
    const auto sat = estimate_constraint_satisfaction(built.game, u, cfg.verification.constraintSamples, rng);
    bool all = true;
    out << "constraint,probability,ci_lower,ci_upper,target,status\n";
    for (std::size_t j = 0; j < sat.size(); ++j) {
      const auto& e = sat[j];
      all = all && e.meetsTarget();
      out << built.game.constraints()[j].name << ',' << format_number(e.probability) << ',' << format_number(e.lower) << ','
          << format_number(e.upper) << ',' << format_number(e.target) << ',' << (e.meetsTarget() ? "pass" : "FAIL") << '\n';
    }
    out << (all ? "all chance constraints met" : "some chance constraints not met") << " (" << cfg.verification.constraintSamples
        << " samples)\n";
    return all ? exit_code::ok : exit_code::budget;
  });
}

inline int cmd_epsilon_gap(const RunConfig& cfg, const CliOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto built = build_game(cfg);
    const Vector u = detail::read_strategies(opt, cfg, built.game);
    const auto gap = detail::run_epsilon_gap(cfg, built, u);
    std::optional<Vector> lambda;
    if (!opt.trace.empty()) {
      auto is = detail::open_input(opt.trace);
      const auto records = read_trace_csv(is, opt.trace);
      if (records.empty()) throw FormatError(opt.trace + ": trace has no rows");
      lambda = records.back().lambda;
      detail::require_length(lambda->size(), built.game.numConstraints(), "trace multipliers");
    }
    out << "constraint,m_hat,probe\n";
    for (int j = 0; j < built.game.numConstraints(); ++j) {
      out << built.game.constraints()[j].name << ',' << format_number(gap.mHat[j]) << ',' << gap.argmaxProbe[j] << '\n';
    }
    out << "m_hat is a max over " << gap.candidatesEvaluated << " unilateral probes (" << gap.samplesUsed
        << " samples each), a lower estimate of the supremum\n";
    out << "certificate: u is an epsilon-equilibrium of the chance-constrained game with epsilon <= sum_j lambda_j * M_j\n";
    if (lambda) out << "with the trace multipliers: sum_j lambda_j * m_hat_j = " << format_number(lambda->dot(gap.mHat)) << '\n';
    return exit_code::ok;
  });
}

inline int cmd_plotdata(const RunConfig& cfg, const CliOptions& opt, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto built = build_game(cfg);
    const auto& game = built.game;
    const auto tracePath = opt.trace.empty() ? detail::resolve_path(opt.outDir, cfg.output.trace) : std::filesystem::path(opt.trace);
    std::vector<IterationRecord> records;
    {
      auto is = detail::open_input(tracePath);
      records = read_trace_csv(is, tracePath.string());
    }
    if (records.empty()) throw FormatError(tracePath.string() + ": trace has no rows");
    if (records.front().lambda.size() != game.numConstraints()) throw FormatError(tracePath.string() + ": multiplier count differs from the game");
    detail::ensure_dir(opt.outDir);
    std::vector<std::string> written;

    {
      const auto p = detail::resolve_path(opt.outDir, "plot_residual.csv");
      auto os = detail::open_output(p);
      os << "k,residual\n";
      for (const auto& r : records) os << r.k << ',' << format_number(r.residual) << '\n';
      detail::finish_output(os, p);
      written.push_back(p.string());
    }

    const auto snapshotPath = detail::resolve_path(opt.outDir, cfg.output.snapshots);
    if (std::filesystem::exists(snapshotPath)) {
      auto is = detail::open_input(snapshotPath);
      const auto rows = read_snapshot_csv(is, snapshotPath.string());
      const auto p = detail::resolve_path(opt.outDir, "plot_strategy_components.csv");
      auto os = detail::open_output(p);
      os << "k,player,t,component,value\n";
      const int lastPlayer = game.numPlayers() - 1;
      for (const auto& r : rows) {
        if (r.player != 0 && r.player != lastPlayer) continue;
        os << r.k << ',' << r.player << ',' << r.t << ',' << r.component << ',' << format_number(r.value) << '\n';
      }
      detail::finish_output(os, p);
      written.push_back(p.string());
    }

    if (built.microgrid) {
      const auto& mp = *built.microgrid;
      const Vector u = detail::read_strategies(opt, cfg, game);
      const int N = mp.households, T = mp.horizon;
      std::vector<double> demand(T, 0.0), supply(T, 0.0);
      for (int t = 0; t < T; ++t) {
        for (int i = 0; i < N; ++i) {
          demand[t] += mp.demand[i][t];
          supply[t] += u[i * T + t];
        }
      }
      const Vector meanState = game.baseState(u) + game.lift().Upsilon *
                                                       (Eigen::Map<const Vector>(mp.renewableMean.data(), T) * (mp.eta * mp.dt));
      const auto hour = [&](int t) { return format_number(t * mp.dt); };
      {
        const auto p = detail::resolve_path(opt.outDir, "plot_exchange_profile.csv");
        auto os = detail::open_output(p);
        os << "t,hour,series,value\n";
        for (int t = 0; t < T; ++t) {
          os << t << ',' << hour(t) << ",aggregate_demand," << format_number(demand[t]) << '\n';
          os << t << ',' << hour(t) << ",battery_supply," << format_number(supply[t]) << '\n';
          os << t << ',' << hour(t) << ",grid_exchange," << format_number(demand[t] - supply[t]) << '\n';
        }
        detail::finish_output(os, p);
        written.push_back(p.string());
      }
      {
        const auto p = detail::resolve_path(opt.outDir, "plot_battery_renewable.csv");
        auto os = detail::open_output(p);
        os << "t,hour,series,value\n";
        for (int t = 0; t < T; ++t) {
          os << t << ',' << hour(t) << ",battery_exchange," << format_number(supply[t]) << '\n';
          os << t << ',' << hour(t) << ",renewable_mean," << format_number(mp.renewableMean[t]) << '\n';
          os << t << ',' << hour(t) << ",expected_soc," << format_number(meanState[t + 1]) << '\n';
        }
        detail::finish_output(os, p);
        written.push_back(p.string());
      }
    }

    for (const auto& w : written) out << "wrote " << w << '\n';
    return exit_code::ok;
  });
}

}  // namespace sgne
