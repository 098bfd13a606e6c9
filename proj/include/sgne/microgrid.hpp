#pragma once

// Demand-side management in a community microgrid with a shared battery.
//
//   SoC_{t+1} = SoC_t + eta dt (r_t - sum_i u^i_t),   r_t ~ N(mu_t, sigma_t^2) independent
//   g^i_t     = d^i_t - u^i_t,                        0 <= u^i_t <= d^i_t
//   pi_t      = K_t + (k_c / N) sum_i g^i_t
//
//   J^i = sum_t [ pi_t g^i_t + sum_j (a_dch (u^j_t)^2 + b_dch u^j_t) ]
//         - a_util ln(1 + sum_t g^i_t) + 1/2 a_bat (SoC_T - SoC_des)^2
//
// Coupled chance constraints, per t = 1..T: SoC_t <= SoC_max and SoC_min <= SoC_t, each
// with tolerance gamma_hat / 2, plus |SoC_T - SoC_des| <= c with tolerance gamma_tilde.

#include "sgne/com.hpp"
#include "sgne/com_model.hpp"
#include "sgne/common.hpp"
#include "sgne/game.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace sgne {

struct MicrogridParams {
  int households = 20;
  int horizon = 24;
  double dt = 1.0;
  double eta = 5e-5;
  double socInitial = 0.5;
  double socMin = 0.1;
  double socMax = 0.9;
  double socDesired = 0.5;
  double terminalBand = 0.05;
  double gammaHat = 0.1;
  double gammaTilde = 0.1;
  double kc = 1.0;
  double alphaDch = 80.0;
  double betaDch = 10.0;
  double alphaUtil = 50.0;
  double alphaBat = 1.0;
  /// K^ToU per step. Empty: the hourly time-of-use table at hour floor(t dt).
  std::vector<double> tariffToU;
  /// Demand d^i_t, indexed [i][t]. Empty: synthetic double-peak profile.
  std::vector<std::vector<double>> demand;
  /// Renewable mean and standard deviation per step. Empty: synthetic midday profile / constant std.
  std::vector<double> renewableMean;
  std::vector<double> renewableStd;
  /// Peak of the synthetic renewable mean, per household.
  double renewablePeakPerHousehold = 3.5;
  double renewableStdDefault = 10.0;
  /// Tightening beta per coupling constraint (length 2T+1). Empty: zeros.
  std::vector<double> beta;

  bool operator==(const MicrogridParams&) const = default;
};

/// Hourly time-of-use tariff for hours 0..24.
inline double tou_table(int hour) {
  if (hour < 0 || hour > 24) throw ArgumentError("tou_table: hour must lie in [0, 24], got " + std::to_string(hour));
  if (hour <= 4) return 15.3;
  if (hour <= 14) return 35.6;
  if (hour <= 16) return 23.3;
  if (hour <= 21) return 45.6;
  return 27.6;
}

namespace detail {

inline double step_hour(const MicrogridParams& p, int t) { return static_cast<double>(t) * p.dt; }

// Synthetic load, roughly 200 at night with a morning and a larger evening peak.
inline double synthetic_demand(double hour, int i, int n) {
  const double base = 200.0 + 120.0 * std::exp(-0.5 * std::pow((hour - 8.0) / 1.5, 2)) +
                      180.0 * std::exp(-0.5 * std::pow((hour - 19.0) / 2.0, 2));
  const double factor = n > 1 ? 0.85 + 0.3 * static_cast<double>(i) / static_cast<double>(n - 1) : 1.0;
  return factor * base;
}

inline double synthetic_renewable_mean(double hour, double peak) {
  if (hour <= 6.0 || hour >= 18.0) return 0.0;
  return peak * std::sin(std::numbers::pi * (hour - 6.0) / 12.0);
}

}  // namespace detail

/// Fills every defaulted profile so that the result is self-contained.
inline MicrogridParams resolve_defaults(MicrogridParams p) {
  const int T = p.horizon;
  if (T <= 0 || p.households <= 0) throw ConstructionError("microgrid: households and horizon must be positive");
  if (p.tariffToU.empty()) {
    for (int t = 0; t < T; ++t) {
      const double h = std::floor(detail::step_hour(p, t));
      if (h > 24.0) throw ConstructionError("microgrid: step " + std::to_string(t) + " falls past hour 24; supply tariff_tou");
      p.tariffToU.push_back(tou_table(static_cast<int>(h)));
    }
  }
  if (p.demand.empty()) {
    p.demand.assign(static_cast<std::size_t>(p.households), std::vector<double>(static_cast<std::size_t>(T)));
    for (int i = 0; i < p.households; ++i) {
      for (int t = 0; t < T; ++t) p.demand[i][t] = detail::synthetic_demand(detail::step_hour(p, t), i, p.households);
    }
  }
  if (p.renewableMean.empty()) {
    for (int t = 0; t < T; ++t) {
      p.renewableMean.push_back(detail::synthetic_renewable_mean(detail::step_hour(p, t),
                                                                p.households * p.renewablePeakPerHousehold));
    }
  }
  if (p.renewableStd.empty()) p.renewableStd.assign(static_cast<std::size_t>(T), p.renewableStdDefault);
  if (p.beta.empty()) p.beta.assign(static_cast<std::size_t>(2 * T + 1), 0.0);
  return p;
}

/// Throws ConstructionError naming the first violated invariant. Expects resolved params.
inline void validate_params(const MicrogridParams& p) {
  auto fail = [](const std::string& msg) { throw ConstructionError("microgrid: " + msg); };
  const auto T = static_cast<std::size_t>(p.horizon);
  if (p.households <= 0) fail("households must be positive");
  if (p.horizon <= 0) fail("horizon must be positive");
  if (!(p.dt > 0.0)) fail("dt must be positive");
  if (!(p.eta > 0.0)) fail("eta must be positive");
  if (!(p.socMin <= p.socDesired && p.socDesired <= p.socMax)) fail("need soc_min <= soc_desired <= soc_max");
  const double room = std::min(p.socDesired - p.socMin, p.socMax - p.socDesired);
  if (!(p.terminalBand > 0.0 && p.terminalBand < room)) fail("terminal band c must lie in (0, min(des - min, max - des))");
  if (!(p.gammaHat > 0.0 && p.gammaHat < 1.0)) fail("gamma_hat must lie in (0, 1)");
  if (!(p.gammaTilde > 0.0 && p.gammaTilde < 1.0)) fail("gamma_tilde must lie in (0, 1)");
  if (!(p.kc > 0.0 && p.alphaDch > 0.0 && p.betaDch > 0.0 && p.alphaUtil > 0.0 && p.alphaBat > 0.0)) {
    fail("k_c, alpha_dch, beta_dch, alpha_util and alpha_bat must be positive");
  }
  if (p.tariffToU.size() != T) fail("tariff_tou must have T entries");
  if (p.demand.size() != static_cast<std::size_t>(p.households)) fail("demand must have one row per household");
  for (const auto& row : p.demand) {
    if (row.size() != T) fail("every demand row must have T entries");
    for (double d : row) {
      if (!(d >= 0.0) || !std::isfinite(d)) fail("demand must be finite and nonnegative");
    }
  }
  if (p.renewableMean.size() != T || p.renewableStd.size() != T) fail("renewable mean and std must have T entries");
  for (double s : p.renewableStd) {
    if (!(s >= 0.0)) fail("renewable std must be nonnegative");
  }
  if (p.beta.size() != 2 * T + 1) fail("beta must have 2T+1 entries");
  for (double b : p.beta) {
    if (!(b >= 0.0)) fail("beta must be nonnegative");
  }
}

/// pi_t = K_t + (k_c / N) * aggregateExchange.
inline double tariff(int t, double aggregateExchange, const MicrogridParams& p) {
  if (t < 0 || t >= p.horizon) throw ArgumentError("tariff: step " + std::to_string(t) + " is outside [0, T)");
  const double k = p.tariffToU.empty() ? tou_table(static_cast<int>(std::floor(detail::step_hour(p, t))))
                                       : p.tariffToU.at(static_cast<std::size_t>(t));
  return k + p.kc / static_cast<double>(p.households) * aggregateExchange;
}

namespace detail {

// Terms 1 and 2 of household i's cost.
inline double household_input_cost(int i, ConstVectorRef u, const MicrogridParams& p) {
  const int N = p.households, T = p.horizon;
  double term1 = 0.0, exchange = 0.0;
  for (int t = 0; t < T; ++t) {
    double total = 0.0, degradation = 0.0;
    for (int j = 0; j < N; ++j) {
      const double uj = u[j * T + t];
      total += p.demand[j][t] - uj;
      degradation += p.alphaDch * uj * uj + p.betaDch * uj;
    }
    const double gi = p.demand[i][t] - u[i * T + t];
    term1 += tariff(t, total, p) * gi + degradation;
    exchange += gi;
  }
  if (!(1.0 + exchange > 0.0)) {
    throw EvaluationError("household " + std::to_string(i) + ": utility log argument 1 + sum_t g_t = " +
                          std::to_string(1.0 + exchange) + " is not positive");
  }
  return term1 - p.alphaUtil * std::log(1.0 + exchange);
}

}  // namespace detail

/// Realized cost of household i under disturbance w (stacked w_t = eta dt r_t), with the
/// state obtained by direct recursion.
inline double household_cost_value(int i, const Vector& u, const Vector& w, const MicrogridParams& params) {
  const auto p = resolve_defaults(params);
  detail::require(i >= 0 && i < p.households, "household_cost_value: bad household index");
  detail::require_length(u.size(), p.households * p.horizon, "household_cost_value: u");
  detail::require_length(w.size(), p.horizon, "household_cost_value: w");
  double soc = p.socInitial;
  for (int t = 0; t < p.horizon; ++t) {
    double total = 0.0;
    for (int j = 0; j < p.households; ++j) total += u[j * p.horizon + t];
    soc += w[t] - p.eta * p.dt * total;
  }
  const double dev = soc - p.socDesired;
  return detail::household_input_cost(i, u, p) + 0.5 * p.alphaBat * dev * dev;
}

struct MicrogridGame {
  MicrogridParams params;  // with every default resolved
  GameSpec game;
  UnderApproxOffsets offsets;
};

inline MicrogridGame build_microgrid_game(const MicrogridParams& input, const ComModel& com = ComModel::gaussian_standard()) {
  const MicrogridParams p = resolve_defaults(input);
  validate_params(p);
  const int N = p.households, T = p.horizon;
  const double gain = p.eta * p.dt;

  TimeVaryingLinearDynamics dyn;
  dyn.horizon = T;
  dyn.stateDim = 1;
  dyn.A.assign(static_cast<std::size_t>(T), Matrix::Ones(1, 1));
  dyn.B.assign(static_cast<std::size_t>(N), std::vector<Matrix>(static_cast<std::size_t>(T), Matrix::Constant(1, 1, -gain)));
  dyn.s0 = Vector::Constant(1, p.socInitial);

  std::vector<PlayerSpec> players;
  for (int i = 0; i < N; ++i) {
    PlayerSpec ps;
    ps.inputDim = 1;
    ps.lower = Vector::Zero(T);
    ps.upper = Eigen::Map<const Vector>(p.demand[i].data(), T);
    ps.name = "household " + std::to_string(i);
    ps.costStateGrad = [p, T](ConstVectorRef s, VectorRef grad) { grad[T] = p.alphaBat * (s[T] - p.socDesired); };
    ps.costStateGradAffine = true;
    ps.costInputGrad = [p, i, N, T](ConstVectorRef u, VectorRef grad) {
      const double share = p.kc / static_cast<double>(N);
      double exchange = 0.0;
      for (int t = 0; t < T; ++t) exchange += p.demand[i][t] - u[i * T + t];
      if (!(1.0 + exchange > 0.0)) {
        throw EvaluationError("household " + std::to_string(i) + ": utility log argument is not positive");
      }
      const double util = p.alphaUtil / (1.0 + exchange);
      for (int t = 0; t < T; ++t) {
        double total = 0.0;
        for (int j = 0; j < N; ++j) total += p.demand[j][t] - u[j * T + t];
        const double ui = u[i * T + t];
        const double gi = p.demand[i][t] - ui;
        grad[t] = -tariff(t, total, p) - share * gi + 2.0 * p.alphaDch * ui + p.betaDch + util;
      }
    };
    ps.costValue = [p, i, T](ConstVectorRef s, ConstVectorRef u) {
      const double dev = s[T] - p.socDesired;
      return detail::household_input_cost(i, u, p) + 0.5 * p.alphaBat * dev * dev;
    };
    players.push_back(std::move(ps));
  }

  // Lipschitz constant of SoC_t in the standardized renewable draws.
  std::vector<double> scale(static_cast<std::size_t>(T + 1), 0.0);
  double var = 0.0;
  for (int t = 1; t <= T; ++t) {
    var += p.renewableStd[t - 1] * p.renewableStd[t - 1];
    scale[t] = gain * std::sqrt(var);
  }

  std::vector<CouplingConstraintSpec> constraints;
  for (int t = 1; t <= T; ++t) {
    CouplingConstraintSpec upper;
    upper.stateFn = [t, hi = p.socMax](ConstVectorRef s) { return s[t] - hi; };
    upper.stateGrad = [t](ConstVectorRef, VectorRef grad) { grad[t] = 1.0; };
    upper.stateAffine = true;
    upper.gamma = p.gammaHat / 2.0;
    upper.beta = p.beta[2 * (t - 1)];
    upper.comScale = scale[t];
    upper.name = "soc_max[" + std::to_string(t) + "]";
    constraints.push_back(std::move(upper));

    CouplingConstraintSpec lower;
    lower.stateFn = [t, lo = p.socMin](ConstVectorRef s) { return lo - s[t]; };
    lower.stateGrad = [t](ConstVectorRef, VectorRef grad) { grad[t] = -1.0; };
    lower.stateAffine = true;
    lower.gamma = p.gammaHat / 2.0;
    lower.beta = p.beta[2 * (t - 1) + 1];
    lower.comScale = scale[t];
    lower.name = "soc_min[" + std::to_string(t) + "]";
    constraints.push_back(std::move(lower));
  }
  CouplingConstraintSpec terminal;
  terminal.stateFn = [T, des = p.socDesired, c = p.terminalBand](ConstVectorRef s) { return std::abs(s[T] - des) - c; };
  terminal.stateGrad = [T, des = p.socDesired](ConstVectorRef s, VectorRef grad) {
    const double d = s[T] - des;
    grad[T] = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
  };
  terminal.gamma = p.gammaTilde;
  terminal.beta = p.beta[2 * T];
  terminal.comScale = scale[T];
  terminal.name = "terminal";
  constraints.push_back(std::move(terminal));

  DisturbanceModel dist;
  dist.dim = T;
  dist.com = com;
  bool noiseFree = true;
  for (double s : p.renewableStd) noiseFree = noiseFree && s == 0.0;
  dist.deterministic = noiseFree;
  dist.sampler = [mean = p.renewableMean, sd = p.renewableStd, gain](RngStream& rng, VectorRef w) {
    for (Eigen::Index t = 0; t < w.size(); ++t) w[t] = gain * (mean[t] + sd[t] * rng.normal());
  };

  GameSpec game(std::move(dyn), std::move(players), std::move(constraints), std::move(dist));
  auto offsets = build_offsets(game);
  return {p, std::move(game), std::move(offsets)};
}

}  // namespace sgne
