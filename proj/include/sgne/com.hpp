#pragma once

// Convex under-approximation of the coupled chance constraints
//   P{ xi_bar^j(s0, u, w) <= 0 } >= 1 - gamma^j
// by the expected constraint E[g^j] <= 0 with g = xi_bar + h^{-1}(gamma) + beta,
// plus Monte Carlo tools that check the chance constraints and bound the
// equilibrium gap the tightening induces.

#include "sgne/com_model.hpp"
#include "sgne/common.hpp"
#include "sgne/game.hpp"
#include "sgne/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace sgne {

struct UnderApproxOffsets {
  Vector offsets;  // entry j: comScale^j * h^{-1}(gamma^j) + beta^j
};

inline UnderApproxOffsets build_offsets(const GameSpec& game) {
  UnderApproxOffsets out{Vector(game.numConstraints())};
  const auto& model = game.disturbance().com;
  for (int j = 0; j < game.numConstraints(); ++j) {
    const auto& c = game.constraints()[j];
    out.offsets[j] = c.comScale * h_inverse(model, c.gamma) + c.beta;
  }
  return out;
}

/// g(s0, u, w) = xi_bar(s0, u, w) + offsets.
inline Vector g_sample(const GameSpec& game, const UnderApproxOffsets& offsets, const Vector& u, const Vector& w) {
  detail::require_length(offsets.offsets.size(), game.numConstraints(), "g_sample: offsets");
  return constraint_sample(game, u, w) + offsets.offsets;
}

struct SatisfactionEstimate {
  double probability = 0.0;  // fraction of draws with xi_bar^j <= 0
  double lower = 0.0;        // 95% Wilson interval
  double upper = 0.0;
  double target = 0.0;       // 1 - gamma^j
  long samples = 0;

  bool meetsTarget() const { return lower >= target; }
};

/// Wilson score interval for a binomial proportion at the given z.
inline std::pair<double, double> wilson_interval(long successes, long n, double z = 1.959963984540054) {
  detail::require(n > 0, "wilson_interval: n must be positive");
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(successes) / nn;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double center = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / denom;
  return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

namespace detail {

// Runs f on the lifted states of `count` draws, in chunks to bound memory.
template <class F>
void for_each_state(const GameSpec& game, const Vector& u, long count, RngStream& rng, F&& f) {
  constexpr long chunk = 4096;
  const Vector base = game.baseState(u);
  for (long done = 0; done < count; done += chunk) {
    const long n = std::min(chunk, count - done);
    Matrix W(game.disturbance().dim, n);
    for (long l = 0; l < n; ++l) game.disturbance().sampler(rng, W.col(l));
    Matrix S = game.lift().Upsilon * W;
    S.colwise() += base;
    for (long l = 0; l < n; ++l) f(S.col(l));
  }
}

inline double constraint_at(const CouplingConstraintSpec& c, ConstVectorRef s, double inputPart) {
  return (c.stateFn ? c.stateFn(s) : 0.0) + inputPart;
}

inline Vector input_parts(const GameSpec& game, const Vector& u) {
  Vector out(game.numConstraints());
  for (int j = 0; j < game.numConstraints(); ++j) {
    const auto& c = game.constraints()[j];
    out[j] = c.inputFn ? c.inputFn(u) : 0.0;
  }
  return out;
}

}  // namespace detail

/// Empirical P{xi_bar^j <= 0} over i.i.d. draws, with 95% Wilson intervals.
inline std::vector<SatisfactionEstimate> estimate_constraint_satisfaction(const GameSpec& game, const Vector& u,
                                                                          long nSamples, RngStream& rng) {
  detail::require(nSamples >= 1, "estimate_constraint_satisfaction: need at least one sample");
  detail::check_profile(game, u, nullptr, "estimate_constraint_satisfaction");
  const int m = game.numConstraints();
  const Vector inputs = detail::input_parts(game, u);
  std::vector<long> hits(static_cast<std::size_t>(m), 0);
  detail::for_each_state(game, u, nSamples, rng, [&](ConstVectorRef s) {
    for (int j = 0; j < m; ++j) {
      if (detail::constraint_at(game.constraints()[j], s, inputs[j]) <= 0.0) ++hits[j];
    }
  });
  std::vector<SatisfactionEstimate> out(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    auto& e = out[j];
    e.samples = nSamples;
    e.probability = static_cast<double>(hits[j]) / static_cast<double>(nSamples);
    std::tie(e.lower, e.upper) = wilson_interval(hits[j], nSamples);
    e.target = 1.0 - game.constraints()[j].gamma;
  }
  return out;
}

/// A unilateral deviation: player `player` plays `strategy` against u_star^{-i}.
struct StrategyProbe {
  int player = 0;
  Vector strategy;  // length T * n_i
};

struct EpsilonGapEstimate {
  Vector mHat;                   // per constraint, max over probes of |1 - gamma - P_hat - E_hat[g]|
  std::vector<int> argmaxProbe;  // probe index attaining mHat^j
  long samplesUsed = 0;
  long candidatesEvaluated = 0;
};

/// Lower estimate of M^j = sup |1 - gamma^j - P{xi_bar^j <= 0} - E[g^j]| over the
/// supplied unilateral deviations. Probability and expectation share one sample set,
/// and every probe sees the same draws.
inline EpsilonGapEstimate estimate_epsilon_gap(const GameSpec& game, const UnderApproxOffsets& offsets,
                                               const Vector& uStar, const std::vector<StrategyProbe>& candidates,
                                               long nSamples, RngStream& rng) {
  if (candidates.empty()) throw ArgumentError("estimate_epsilon_gap: candidate list is empty");
  detail::require(nSamples >= 1, "estimate_epsilon_gap: need at least one sample");
  detail::check_profile(game, uStar, nullptr, "estimate_epsilon_gap");
  detail::require_length(offsets.offsets.size(), game.numConstraints(), "estimate_epsilon_gap: offsets");
  const int m = game.numConstraints();
  const auto W = draw_batch(game.disturbance(), static_cast<std::size_t>(nSamples), rng);

  EpsilonGapEstimate est;
  est.mHat = Vector::Zero(m);
  est.argmaxProbe.assign(static_cast<std::size_t>(m), -1);
  est.samplesUsed = nSamples;

  for (std::size_t c = 0; c < candidates.size(); ++c) {
    const auto& probe = candidates[c];
    detail::require(probe.player >= 0 && probe.player < game.numPlayers(), "estimate_epsilon_gap: bad player index");
    detail::require_length(probe.strategy.size(), game.playerLength(probe.player), "estimate_epsilon_gap: probe");
    Vector u = uStar;
    u.segment(game.playerOffset(probe.player), game.playerLength(probe.player)) = probe.strategy;
    if (!in_local_sets(game, u, 1e-9)) throw ArgumentError("estimate_epsilon_gap: probe lies outside the local set");

    Matrix S = game.lift().Upsilon * W;
    S.colwise() += game.baseState(u);
    const Vector inputs = detail::input_parts(game, u);
    for (int j = 0; j < m; ++j) {
      const auto& con = game.constraints()[j];
      long hits = 0;
      double sum = 0.0;
      for (Eigen::Index l = 0; l < S.cols(); ++l) {
        const double xi = detail::constraint_at(con, S.col(l), inputs[j]);
        if (xi <= 0.0) ++hits;
        sum += xi;
      }
      const double cols = static_cast<double>(S.cols());
      const double p = static_cast<double>(hits) / cols;
      const double eg = sum / cols + offsets.offsets[j];
      const double val = std::abs(1.0 - con.gamma - p - eg);
      if (est.argmaxProbe[j] < 0 || val > est.mHat[j]) {
        est.mHat[j] = val;
        est.argmaxProbe[j] = static_cast<int>(c);
      }
    }
    ++est.candidatesEvaluated;
  }
  return est;
}

/// Uniform probes in each player's box (or Gaussian perturbations of u_star projected onto a
/// generic local set), cycling over players.
inline std::vector<StrategyProbe> random_probes(const GameSpec& game, const Vector& uStar, long count, RngStream& rng) {
  std::vector<StrategyProbe> out;
  out.reserve(static_cast<std::size_t>(std::max(0L, count)));
  for (long c = 0; c < count; ++c) {
    const int i = static_cast<int>(c % game.numPlayers());
    const auto& p = game.players()[i];
    StrategyProbe probe{i, Vector(game.playerLength(i))};
    if (p.projector) {
      probe.strategy = uStar.segment(game.playerOffset(i), game.playerLength(i));
      for (auto& x : probe.strategy) x += rng.normal();
      p.projector(probe.strategy);
    } else {
      for (Eigen::Index k = 0; k < probe.strategy.size(); ++k) probe.strategy[k] = rng.uniform(p.lower[k], p.upper[k]);
    }
    out.push_back(std::move(probe));
  }
  return out;
}

}  // namespace sgne
