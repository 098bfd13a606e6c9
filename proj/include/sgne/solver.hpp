#pragma once

// Semi-decentralized, sampling-based forward-backward iteration with golden-ratio
// averaging for variational stochastic generalized Nash equilibria.
//
// Per iteration k, with z = col(u, lambda_bar) and z_tilde = col(u_tilde, lambda_tilde):
//
//   coordinator:  G_hat        = mean_l g(u_k, w0_l)                       (M_k fresh draws)
//                 lambda_tilde = (1 - delta) lambda_bar_k + delta lambda_tilde_{k-1}
//                 lambda_bar'  = max(0, lambda_tilde + alpha_k G_hat)
//   player i:     F_hat^i, Lambda_hat^i from its own M_k fresh draws
//                 u_tilde^i    = (1 - delta) u^i_k + delta u_tilde^i_{k-1}
//                 u^i'         = proj_{D^i}[u_tilde^i - alpha_k (F_hat^i + Lambda_hat^i lambda_bar_k)]

#include "sgne/com.hpp"
#include "sgne/common.hpp"
#include "sgne/game.hpp"
#include "sgne/rng.hpp"

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

namespace sgne {

inline constexpr double golden_ratio = std::numbers::phi;

/// alpha_k = alpha0 / (k + offset)^exponent. exponent 1 is the harmonic rule, 0 a constant step.
struct StepSchedule {
  double alpha0 = 1.4e-4;
  double offset = 2.0;
  double exponent = 1.0;
  bool operator==(const StepSchedule&) const = default;
};

/// M_k = ceil(scale * (k + shift)^(1 + growth)).
struct BatchSchedule {
  double scale = 1.0;
  double shift = 2.0;
  double growth = 0.1;
  bool operator==(const BatchSchedule&) const = default;
};

struct SolverConfig {
  double delta = 0.9;
  StepSchedule step;
  BatchSchedule batch;
  long maxIterations = 10000;
  double residualTolerance = 1e-6;
  long residualBatch = 2000;
  std::uint64_t seed = 1;
  long checkpointEvery = 0;
  /// Divergence guard trips when ||z|| > divergenceFactor * (1 + ||z_0||).
  double divergenceFactor = 1e6;
  /// Experimental: players consume lambda_bar_{k+1} instead of lambda_bar_k.
  bool useUpdatedMultiplier = false;
  bool operator==(const SolverConfig&) const = default;
};

inline double step_size(const SolverConfig& cfg, long k) {
  detail::require(k >= 0, "step_size: k must be nonnegative");
  const auto& s = cfg.step;
  const double base = static_cast<double>(k) + s.offset;
  if (s.exponent == 0.0) return s.alpha0;
  if (s.exponent == 1.0) return s.alpha0 / base;
  return s.alpha0 / std::pow(base, s.exponent);
}

inline std::size_t batch_size(const SolverConfig& cfg, long k) {
  detail::require(k >= 0, "batch_size: k must be nonnegative");
  const auto& b = cfg.batch;
  const double m = std::ceil(b.scale * std::pow(static_cast<double>(k) + b.shift, 1.0 + b.growth));
  return m < 1.0 ? std::size_t{1} : static_cast<std::size_t>(m);
}

struct ValidationReport {
  std::vector<std::string> violations;
  double lipschitzEstimate = 0.0;
  double stepBound = 0.0;  // 1 / (4 delta (2 l + 1))
  bool ok() const { return violations.empty(); }
};

/// Checks the averaging, step-size and batch-size conditions the convergence result relies on.
inline ValidationReport validate_config(const SolverConfig& cfg, double lipschitzEstimate) {
  ValidationReport r;
  r.lipschitzEstimate = lipschitzEstimate;
  auto bad = [&r](std::string msg) { r.violations.push_back(std::move(msg)); };

  const double inv_phi = 1.0 / golden_ratio;
  if (!(cfg.delta >= inv_phi && cfg.delta < 1.0)) {
    bad("delta = " + std::to_string(cfg.delta) + " must satisfy 1/phi (" + std::to_string(inv_phi) + ") <= delta < 1");
  }
  const auto& s = cfg.step;
  if (!(s.alpha0 > 0.0)) bad("step alpha0 must be positive");
  if (!(s.offset > 0.0)) bad("step offset must be positive so alpha_0 is finite");
  if (!(s.exponent >= 0.0 && s.exponent <= 1.0)) {
    bad("step exponent must lie in [0, 1] (nonincreasing steps with a divergent sum)");
  }
  if (!(lipschitzEstimate > 0.0) || !std::isfinite(lipschitzEstimate)) {
    bad("Lipschitz estimate must be positive and finite");
  } else if (cfg.delta > 0.0) {
    r.stepBound = 1.0 / (4.0 * cfg.delta * (2.0 * lipschitzEstimate + 1.0));
    if (s.alpha0 > 0.0 && s.offset > 0.0) {
      const double first = step_size(cfg, 0);
      if (first > r.stepBound) {
        bad("alpha_0 = " + std::to_string(first) + " exceeds 1/(4 delta (2 l + 1)) = " + std::to_string(r.stepBound));
      }
    }
  }
  const auto& b = cfg.batch;
  if (!(b.scale > 0.0)) bad("batch scale c must be positive");
  if (!(b.growth > 0.0)) bad("batch growth exponent a must be positive");
  if (!(b.shift > 1.0)) bad("batch shift k0 must exceed 1");
  if (cfg.residualBatch < 1) bad("residual batch must be positive");
  if (cfg.maxIterations < 0) bad("maxIterations must be nonnegative");
  return r;
}

struct SolverState {
  long k = 0;
  Vector u;
  Vector uTildePrev;
  Vector lambdaBar;
  Vector lambdaTildePrev;
  bool operator==(const SolverState&) const = default;
};

/// u_0 = proj_D(0), lambda_0 = 0, and the averaged companions start equal to z_0.
inline SolverState initial_state(const GameSpec& game) {
  SolverState s;
  s.u = project_local(game, Vector::Zero(game.stackedDim()));
  s.uTildePrev = s.u;
  s.lambdaBar = Vector::Zero(game.numConstraints());
  s.lambdaTildePrev = s.lambdaBar;
  return s;
}

inline void check_state(const GameSpec& game, const SolverState& s) {
  detail::require_length(s.u.size(), game.stackedDim(), "solver state u");
  detail::require_length(s.uTildePrev.size(), game.stackedDim(), "solver state u_tilde");
  detail::require_length(s.lambdaBar.size(), game.numConstraints(), "solver state lambda_bar");
  detail::require_length(s.lambdaTildePrev.size(), game.numConstraints(), "solver state lambda_tilde");
  detail::require(s.k >= 0, "solver state: negative iteration counter");
}

struct CoordinatorUpdate {
  Vector lambdaTilde;
  Vector lambdaNext;
  Vector gHat;
};

inline CoordinatorUpdate coordinator_step(const SolverState& state, const GameSpec& game,
                                          const UnderApproxOffsets& offsets, const SolverConfig& cfg, RngStream& rng) {
  const double alpha = step_size(cfg, state.k);
  const Matrix W = draw_batch(game.disturbance(), batch_size(cfg, state.k), rng);
  CoordinatorUpdate out;
  out.gHat = BatchEvaluator(game, state.u, W).meanConstraint() + offsets.offsets;
  out.lambdaTilde = (1.0 - cfg.delta) * state.lambdaBar + cfg.delta * state.lambdaTildePrev;
  out.lambdaNext = (out.lambdaTilde + alpha * out.gHat).cwiseMax(0.0);
  return out;
}

struct PlayerUpdate {
  Vector uTilde;
  Vector uNext;
};

inline PlayerUpdate player_step(int i, const SolverState& state, const Vector& lambda, const GameSpec& game,
                                const SolverConfig& cfg, RngStream& rng) {
  detail::require(i >= 0 && i < game.numPlayers(), "player_step: bad player index");
  const double alpha = step_size(cfg, state.k);
  const Matrix W = draw_batch(game.disturbance(), batch_size(cfg, state.k), rng);
  const BatchEvaluator ev(game, state.u, W);
  Vector direction = ev.meanPseudoGradientBlock(i);
  direction += ev.meanMultiplierTermBlock(i, lambda);

  const auto off = game.playerOffset(i);
  const auto len = game.playerLength(i);
  PlayerUpdate out;
  out.uTilde = (1.0 - cfg.delta) * state.u.segment(off, len) + cfg.delta * state.uTildePrev.segment(off, len);
  out.uNext = out.uTilde - alpha * direction;
  project_player_inplace(game, i, out.uNext);
  return out;
}

/// Sample estimate of A(z) = col(F(u) + Lambda(u) lambda, -E[g(u)]) from a single batch.
struct OperatorEstimate {
  Vector primal;  // F_hat + Lambda_hat lambda
  Vector gHat;    // G_hat, including offsets
};

inline OperatorEstimate estimate_operator(const GameSpec& game, const UnderApproxOffsets& offsets, const Vector& u,
                                          const Vector& lambda, const Matrix& W) {
  const BatchEvaluator ev(game, u, W);
  OperatorEstimate out;
  out.primal = ev.meanPseudoGradient() + ev.meanMultiplierTerm(lambda);
  out.gHat = ev.meanConstraint() + offsets.offsets;
  return out;
}

namespace detail {

struct ResidualParts {
  double residual = 0.0;
  Vector gHat;
};

inline ResidualParts residual_parts(const SolverState& state, const GameSpec& game, const UnderApproxOffsets& offsets,
                                    const SolverConfig& cfg, RngStream& rng) {
  const double alpha = step_size(cfg, state.k);
  const Matrix W = draw_batch(game.disturbance(), static_cast<std::size_t>(cfg.residualBatch), rng);
  const auto a = estimate_operator(game, offsets, state.u, state.lambdaBar, W);
  const Vector du = state.u - project_local(game, state.u - alpha * a.primal);
  const Vector dl = state.lambdaBar - (state.lambdaBar + alpha * a.gHat).cwiseMax(0.0);
  return {std::sqrt(du.squaredNorm() + dl.squaredNorm()), a.gHat};
}

}  // namespace detail

/// res(z_k) = || z_k - (Id + alpha_k B)^{-1}(z_k - alpha_k A(z_k)) ||, with A estimated
/// from cfg.residualBatch draws.
inline double residual_estimate(const SolverState& state, const GameSpec& game, const UnderApproxOffsets& offsets,
                                const SolverConfig& cfg, RngStream& rng) {
  return detail::residual_parts(state, game, offsets, cfg, rng).residual;
}

struct IterationRecord {
  long k = 0;
  double residual = 0.0;
  double gHatMax = 0.0;   // from the residual's reference batch at z_k
  double gHatNorm = 0.0;
  Vector lambda;          // lambda_bar_k
  double alpha = 0.0;     // alpha_k
  std::size_t batch = 0;  // M_k
  double wallMs = 0.0;    // since the start of the run
  std::optional<Vector> strategies;
};

enum class TerminationReason { tolerance, budget, divergence };

inline std::string to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::tolerance: return "tolerance";
    case TerminationReason::budget: return "budget";
    case TerminationReason::divergence: return "divergence-guard";
  }
  return "unknown";
}

struct RunTrace {
  SolverConfig config;
  std::vector<IterationRecord> records;
  TerminationReason reason = TerminationReason::budget;
  SolverState finalState;
};

/// Diagnostics of z_k drawn from a substream reserved for the residual.
inline IterationRecord make_record(const SolverState& state, const GameSpec& game, const UnderApproxOffsets& offsets,
                                   const SolverConfig& cfg) {
  auto rng = RngStream::keyed(cfg.seed, StreamPurpose::residual, static_cast<std::uint64_t>(state.k), 0);
  const auto parts = detail::residual_parts(state, game, offsets, cfg, rng);
  IterationRecord r;
  r.k = state.k;
  r.residual = parts.residual;
  r.gHatMax = parts.gHat.size() ? parts.gHat.maxCoeff() : 0.0;
  r.gHatNorm = parts.gHat.norm();
  r.lambda = state.lambdaBar;
  r.alpha = step_size(cfg, state.k);
  r.batch = batch_size(cfg, state.k);
  return r;
}

struct IterationOutcome {
  SolverState state;
  IterationRecord record;
};

/// One full iteration. Batches come from substreams keyed by (seed, k, entity), so the
/// result does not depend on the order in which the entities are evaluated.
inline IterationOutcome iterate(const SolverState& state, const GameSpec& game, const UnderApproxOffsets& offsets,
                                const SolverConfig& cfg) {
  check_state(game, state);
  const auto k = static_cast<std::uint64_t>(state.k);
  auto coordRng = RngStream::keyed(cfg.seed, StreamPurpose::iterate, k, 0);
  const auto coord = coordinator_step(state, game, offsets, cfg, coordRng);
  const Vector& broadcast = cfg.useUpdatedMultiplier ? coord.lambdaNext : state.lambdaBar;

  SolverState next;
  next.k = state.k + 1;
  next.u.resize(game.stackedDim());
  next.uTildePrev.resize(game.stackedDim());
  for (int i = 0; i < game.numPlayers(); ++i) {
    auto rng = RngStream::keyed(cfg.seed, StreamPurpose::iterate, k, static_cast<std::uint64_t>(i) + 1);
    const auto p = player_step(i, state, broadcast, game, cfg, rng);
    next.u.segment(game.playerOffset(i), game.playerLength(i)) = p.uNext;
    next.uTildePrev.segment(game.playerOffset(i), game.playerLength(i)) = p.uTilde;
  }
  next.lambdaBar = coord.lambdaNext;
  next.lambdaTildePrev = coord.lambdaTilde;
  return {next, make_record(next, game, offsets, cfg)};
}

struct RunOptions {
  std::optional<SolverState> initial;
  /// Called after every iteration with (z_k, z_{k+1}, record of z_{k+1}).
  std::function<void(const SolverState&, const SolverState&, const IterationRecord&)> observer;
  /// Attach u_k to every n-th record (0: never). The final record always carries it when n > 0.
  long strategyEvery = 0;
  bool recordWallTime = true;
};

inline double state_norm(const SolverState& s) { return std::sqrt(s.u.squaredNorm() + s.lambdaBar.squaredNorm()); }

inline RunTrace run(const GameSpec& game, const UnderApproxOffsets& offsets, const SolverConfig& cfg,
                    const RunOptions& options = {}) {
  using Clock = std::chrono::steady_clock;
  const auto start = Clock::now();
  auto elapsed = [&] {
    return options.recordWallTime ? std::chrono::duration<double, std::milli>(Clock::now() - start).count() : 0.0;
  };
  auto snapshot = [&](IterationRecord& r, const SolverState& s, bool force) {
    if (options.strategyEvery > 0 && (force || s.k % options.strategyEvery == 0)) r.strategies = s.u;
  };

  RunTrace trace;
  trace.config = cfg;
  SolverState state = options.initial ? *options.initial : initial_state(game);
  check_state(game, state);
  const double bound = cfg.divergenceFactor * (1.0 + state_norm(state));

  auto first = make_record(state, game, offsets, cfg);
  first.wallMs = elapsed();
  snapshot(first, state, cfg.maxIterations == 0);
  trace.records.push_back(std::move(first));

  trace.reason = TerminationReason::budget;
  for (long it = 0; it < cfg.maxIterations; ++it) {
    auto out = iterate(state, game, offsets, cfg);
    out.record.wallMs = elapsed();
    if (options.observer) options.observer(state, out.state, out.record);
    state = std::move(out.state);
    const double norm = state_norm(state);
    const bool diverged = !std::isfinite(norm) || norm > bound;
    const bool converged = out.record.residual <= cfg.residualTolerance;
    snapshot(out.record, state, diverged || converged || it + 1 == cfg.maxIterations);
    trace.records.push_back(std::move(out.record));
    if (diverged) {
      trace.reason = TerminationReason::divergence;
      break;
    }
    if (converged) {
      trace.reason = TerminationReason::tolerance;
      break;
    }
  }
  trace.finalState = std::move(state);
  return trace;
}

namespace detail {

inline Vector random_profile(const GameSpec& game, RngStream& rng) {
  Vector u(game.stackedDim());
  for (int i = 0; i < game.numPlayers(); ++i) {
    const auto& p = game.players()[i];
    auto block = u.segment(game.playerOffset(i), game.playerLength(i));
    if (p.projector) {
      for (auto& x : block) x = rng.normal();
      p.projector(block);
    } else {
      for (Eigen::Index k = 0; k < block.size(); ++k) block[k] = rng.uniform(p.lower[k], p.upper[k]);
    }
  }
  return u;
}

}  // namespace detail

/// Largest observed ||A_hat(z1) - A_hat(z2)|| / ||z1 - z2|| over random feasible pairs, with
/// both points evaluated on the same batch. Multipliers are drawn in [0, lambdaScale]^m.
inline double estimate_lipschitz(const GameSpec& game, const UnderApproxOffsets& offsets, long pairs, long batch,
                                 RngStream& rng, double lambdaScale = 1.0) {
  detail::require(pairs >= 1 && batch >= 1, "estimate_lipschitz: pairs and batch must be positive");
  const int m = game.numConstraints();
  double best = 0.0;
  for (long p = 0; p < pairs; ++p) {
    const Vector u1 = detail::random_profile(game, rng);
    const Vector u2 = detail::random_profile(game, rng);
    Vector l1(m), l2(m);
    for (int j = 0; j < m; ++j) {
      l1[j] = rng.uniform(0.0, lambdaScale);
      l2[j] = rng.uniform(0.0, lambdaScale);
    }
    const Matrix W = draw_batch(game.disturbance(), static_cast<std::size_t>(batch), rng);
    const auto a1 = estimate_operator(game, offsets, u1, l1, W);
    const auto a2 = estimate_operator(game, offsets, u2, l2, W);
    const double num = std::sqrt((a1.primal - a2.primal).squaredNorm() + (a1.gHat - a2.gHat).squaredNorm());
    const double den = std::sqrt((u1 - u2).squaredNorm() + (l1 - l2).squaredNorm());
    if (den > 0.0) best = std::max(best, num / den);
  }
  return best;
}

struct EstimatorVariance {
  std::size_t batch = 0;
  double varF = 0.0;       // E||F_hat - F_ref||^2
  double varLambda = 0.0;  // E||Lambda_hat lambda - (Lambda lambda)_ref||^2
  double varG = 0.0;       // E||G_hat - G_ref||^2
  double total() const { return varF + varLambda + varG; }
};

struct EstimatorDiagnostics {
  std::vector<EstimatorVariance> entries;
  std::size_t referenceBatch = 0;
  long repetitions = 0;
  /// Least-squares slope of log(total variance) against log(M); NaN when any variance is zero.
  double fittedExponent = std::numeric_limits<double>::quiet_NaN();
};

/// Empirical mean-square error of the sample estimators F_hat, Lambda_hat lambda and G_hat
/// against a reference batch ten times the largest requested size.
inline EstimatorDiagnostics estimator_diagnostics(const GameSpec& game, const UnderApproxOffsets& offsets,
                                                  const Vector& u, const Vector& lambda,
                                                  const std::vector<std::size_t>& batchSizes, long repetitions,
                                                  RngStream& rng) {
  detail::require(!batchSizes.empty(), "estimator_diagnostics: batch sizes are required");
  detail::require(repetitions >= 1, "estimator_diagnostics: repetitions must be positive");
  detail::require_length(lambda.size(), game.numConstraints(), "estimator_diagnostics: lambda");
  std::size_t largest = 0;
  for (auto m : batchSizes) {
    detail::require(m >= 1, "estimator_diagnostics: batch sizes must be positive");
    largest = std::max(largest, m);
  }

  EstimatorDiagnostics out;
  out.referenceBatch = 10 * largest;
  out.repetitions = repetitions;
  const Matrix Wref = draw_batch(game.disturbance(), out.referenceBatch, rng);
  const BatchEvaluator ref(game, u, Wref);
  const Vector fRef = ref.meanPseudoGradient();
  const Vector lRef = ref.meanMultiplierTerm(lambda);
  const Vector gRef = ref.meanConstraint() + offsets.offsets;

  for (auto m : batchSizes) {
    EstimatorVariance v;
    v.batch = m;
    for (long r = 0; r < repetitions; ++r) {
      const Matrix W = draw_batch(game.disturbance(), m, rng);
      const BatchEvaluator ev(game, u, W);
      v.varF += (ev.meanPseudoGradient() - fRef).squaredNorm();
      v.varLambda += (ev.meanMultiplierTerm(lambda) - lRef).squaredNorm();
      v.varG += (ev.meanConstraint() + offsets.offsets - gRef).squaredNorm();
    }
    const double reps = static_cast<double>(repetitions);
    v.varF /= reps;
    v.varLambda /= reps;
    v.varG /= reps;
    out.entries.push_back(v);
  }

  bool positive = out.entries.size() >= 2;
  for (const auto& e : out.entries) positive = positive && e.total() > 0.0;
  if (positive) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(out.entries.size());
    for (const auto& e : out.entries) {
      const double x = std::log(static_cast<double>(e.batch));
      const double y = std::log(e.total());
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    const double den = n * sxx - sx * sx;
    if (den > 0.0) out.fittedExponent = (n * sxy - sx * sy) / den;
  }
  return out;
}

}  // namespace sgne
