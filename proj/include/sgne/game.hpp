#pragma once

// Game description: players with private cost oracles and local sets, coupled
// constraints evaluated through the lifted state, and the disturbance model.
// Only gradients are needed by the solver; cost values are for reporting.

#include "sgne/com_model.hpp"
#include "sgne/common.hpp"
#include "sgne/dynamics.hpp"
#include "sgne/rng.hpp"

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace sgne {

/// Writes a gradient into a zero-initialized output of the right length.
using GradientOracle = std::function<void(ConstVectorRef x, VectorRef grad)>;
using ScalarOracle = std::function<double(ConstVectorRef x)>;
using Projector = std::function<void(VectorRef x)>;

struct PlayerSpec {
  int inputDim = 1;
  /// Box local set, stacked over time (length T * inputDim). Ignored when `projector` is set.
  Vector lower;
  Vector upper;
  /// Euclidean projector onto a generic closed convex local set.
  Projector projector;
  /// s -> grad_s of the state cost. Empty means the state cost is zero.
  GradientOracle costStateGrad;
  /// The state-cost gradient is affine in s, so its batch mean is its value at the mean state.
  bool costStateGradAffine = false;
  /// full u -> grad_{u^i} of the input cost (length T * inputDim). Empty means zero.
  GradientOracle costInputGrad;
  /// Optional (s, u) -> cost value, for reporting only.
  std::function<double(ConstVectorRef s, ConstVectorRef u)> costValue;
  std::string name;
};

struct CouplingConstraintSpec {
  ScalarOracle stateFn;     // s -> xi_hat(s); empty means 0
  GradientOracle stateGrad; // s -> grad_s xi_hat(s)
  /// xi_hat is affine in s (constant gradient), so its batch mean is its value at the mean state.
  bool stateAffine = false;
  ScalarOracle inputFn;      // u -> xi_tilde(u); empty means 0
  GradientOracle inputGrad;  // u -> grad_u xi_tilde(u), full stacked length
  double gamma = 0.1;        // violation tolerance in (0, 1)
  double beta = 0.0;         // tightening offset >= 0
  /// Lipschitz constant of xi_bar(s0, u, .) w.r.t. the standardized disturbance; the
  /// concentration bound is applied to theta / comScale.
  double comScale = 1.0;
  std::string name;
};

struct DisturbanceModel {
  int dim = 0;
  /// Writes one stacked draw w (length T * n_s).
  std::function<void(RngStream&, VectorRef w)> sampler;
  /// Every draw is identical; batch means collapse to a single evaluation.
  bool deterministic = false;
  ComModel com;
};

class GameSpec {
 public:
  GameSpec(TimeVaryingLinearDynamics dynamics, std::vector<PlayerSpec> players,
           std::vector<CouplingConstraintSpec> constraints, DisturbanceModel disturbance)
      : dynamics_(std::move(dynamics)),
        players_(std::move(players)),
        constraints_(std::move(constraints)),
        disturbance_(std::move(disturbance)),
        lift_(build_compact_lift(dynamics_)) {
    validate();
  }

  const TimeVaryingLinearDynamics& dynamics() const { return dynamics_; }
  const CompactLift& lift() const { return lift_; }
  const std::vector<PlayerSpec>& players() const { return players_; }
  const std::vector<CouplingConstraintSpec>& constraints() const { return constraints_; }
  const DisturbanceModel& disturbance() const { return disturbance_; }

  int numPlayers() const { return static_cast<int>(players_.size()); }
  int numConstraints() const { return static_cast<int>(constraints_.size()); }
  int horizon() const { return dynamics_.horizon; }
  int stackedDim() const { return dynamics_.stackedInputDim(); }
  int stateLength() const { return dynamics_.stackedStateDim(); }
  int playerOffset(int i) const { return lift_.offsets.at(static_cast<std::size_t>(i)); }
  int playerLength(int i) const { return horizon() * players_.at(static_cast<std::size_t>(i)).inputDim; }

  /// Deterministic part of the lifted state, Theta s0 + Gamma u.
  Vector baseState(const Vector& u) const {
    Vector s = lift_.Theta * dynamics_.s0;
    s.noalias() += lift_.GammaAll * u;
    return s;
  }

 private:
  void validate() const {
    auto fail = [](const std::string& msg) { throw ConstructionError("game: " + msg); };
    const int T = horizon();
    if (numPlayers() != dynamics_.players()) fail("player count differs from the dynamics");
    for (int i = 0; i < numPlayers(); ++i) {
      const auto& p = players_[i];
      const std::string who = "player " + std::to_string(i);
      if (p.inputDim != dynamics_.inputDim(i)) fail(who + ": input dimension differs from B");
      if (!p.projector) {
        if (p.lower.size() != T * p.inputDim || p.upper.size() != T * p.inputDim) {
          fail(who + ": box bounds must have length T * n_i");
        }
        if ((p.lower.array() > p.upper.array()).any()) fail(who + ": empty box (lower > upper)");
        if (!p.lower.allFinite() || !p.upper.allFinite()) fail(who + ": box bounds must be finite");
      }
    }
    for (int j = 0; j < numConstraints(); ++j) {
      const auto& c = constraints_[j];
      const std::string which = "constraint " + std::to_string(j);
      if (!(c.gamma > 0.0 && c.gamma < 1.0)) fail(which + ": gamma must lie in (0, 1)");
      if (!(c.beta >= 0.0)) fail(which + ": beta must be nonnegative");
      if (!(c.comScale >= 0.0)) fail(which + ": comScale must be nonnegative");
      if (static_cast<bool>(c.stateFn) != static_cast<bool>(c.stateGrad)) fail(which + ": state value and gradient come in pairs");
      if (static_cast<bool>(c.inputFn) != static_cast<bool>(c.inputGrad)) fail(which + ": input value and gradient come in pairs");
    }
    if (disturbance_.dim != dynamics_.stackedDisturbanceDim()) fail("disturbance length must be T * n_s");
    if (!disturbance_.sampler) fail("disturbance sampler is required");

    // The cached lift must reproduce the recursion.
    RngStream rng(substream_seed(0x5eed, StreamPurpose::lift_check, 0, 0));
    Vector u(stackedDim()), w(disturbance_.dim);
    for (auto& x : u) x = rng.normal();
    for (auto& x : w) x = rng.normal();
    const Vector a = simulate_state(dynamics_, u, w);
    const Vector b = lift_state(lift_, dynamics_.s0, u, w);
    if ((a - b).norm() > 1e-9 * (1.0 + a.norm())) fail("compact lift does not reproduce the dynamics");
  }

  TimeVaryingLinearDynamics dynamics_;
  std::vector<PlayerSpec> players_;
  std::vector<CouplingConstraintSpec> constraints_;
  DisturbanceModel disturbance_;
  CompactLift lift_;
};

namespace detail {

inline Vector eval_grad(const GradientOracle& f, ConstVectorRef x, Eigen::Index n) {
  Vector g = Vector::Zero(n);
  if (f) f(x, g);
  return g;
}

inline void check_profile(const GameSpec& game, const Vector& u, const Vector* w, const char* op) {
  require_length(u.size(), game.stackedDim(), op);
  if (w) require_length(w->size(), game.disturbance().dim, op);
}

}  // namespace detail

/// Single-sample pseudo-gradient: block i is (Gamma^i)^T grad_s J_hat^i(s) + grad_{u^i} J_tilde^i(u).
inline Vector pseudo_gradient_sample(const GameSpec& game, const Vector& u, const Vector& w) {
  detail::check_profile(game, u, &w, "pseudo_gradient_sample");
  const Vector s = lift_state(game.lift(), game.dynamics().s0, u, w);
  Vector out(game.stackedDim());
  for (int i = 0; i < game.numPlayers(); ++i) {
    const auto& p = game.players()[i];
    auto block = out.segment(game.playerOffset(i), game.playerLength(i));
    block = game.lift().Gamma[i].transpose() * detail::eval_grad(p.costStateGrad, s, s.size());
    block += detail::eval_grad(p.costInputGrad, u, game.playerLength(i));
  }
  return out;
}

/// xi_bar^j(s0, u, w) = xi_hat^j(s(u, w)) + xi_tilde^j(u) for every coupling constraint.
inline Vector constraint_sample(const GameSpec& game, const Vector& u, const Vector& w) {
  detail::check_profile(game, u, &w, "constraint_sample");
  const Vector s = lift_state(game.lift(), game.dynamics().s0, u, w);
  Vector out(game.numConstraints());
  for (int j = 0; j < game.numConstraints(); ++j) {
    const auto& c = game.constraints()[j];
    out[j] = (c.stateFn ? c.stateFn(s) : 0.0) + (c.inputFn ? c.inputFn(u) : 0.0);
  }
  return out;
}

/// Column j is grad_u xi_bar^j; player i's row block is grad_{u^i}.
inline Matrix constraint_gradient_sample(const GameSpec& game, const Vector& u, const Vector& w) {
  detail::check_profile(game, u, &w, "constraint_gradient_sample");
  const Vector s = lift_state(game.lift(), game.dynamics().s0, u, w);
  Matrix out(game.stackedDim(), game.numConstraints());
  for (int j = 0; j < game.numConstraints(); ++j) {
    const auto& c = game.constraints()[j];
    out.col(j) = game.lift().GammaAll.transpose() * detail::eval_grad(c.stateGrad, s, s.size());
    out.col(j) += detail::eval_grad(c.inputGrad, u, u.size());
  }
  return out;
}

inline void project_player_inplace(const GameSpec& game, int i, VectorRef block) {
  const auto& p = game.players()[i];
  if (p.projector) {
    p.projector(block);
  } else {
    block = block.cwiseMax(p.lower).cwiseMin(p.upper);
  }
}

/// Blockwise Euclidean projection onto the local sets D^1 x ... x D^N.
inline Vector project_local(const GameSpec& game, const Vector& u) {
  detail::require_length(u.size(), game.stackedDim(), "project_local");
  Vector out = u;
  for (int i = 0; i < game.numPlayers(); ++i) {
    project_player_inplace(game, i, out.segment(game.playerOffset(i), game.playerLength(i)));
  }
  return out;
}

inline bool in_local_sets(const GameSpec& game, const Vector& u, double tol = 1e-12) {
  if (u.size() != game.stackedDim()) return false;
  return (project_local(game, u) - u).lpNorm<Eigen::Infinity>() <= tol * (1.0 + u.lpNorm<Eigen::Infinity>());
}

/// M independent draws, one per column. A deterministic model yields one column.
inline Matrix draw_batch(const DisturbanceModel& model, std::size_t count, RngStream& rng) {
  if (count == 0) throw ArgumentError("draw_batch: batch size must be positive");
  const auto cols = model.deterministic ? Eigen::Index{1} : static_cast<Eigen::Index>(count);
  Matrix W(model.dim, cols);
  for (Eigen::Index l = 0; l < cols; ++l) model.sampler(rng, W.col(l));
  return W;
}

/// Sample means over a batch of disturbances at a fixed profile u. The lifted
/// states are formed with one matrix product, and per-sample oracle calls are
/// skipped wherever an oracle is declared affine in s.
class BatchEvaluator {
 public:
  BatchEvaluator(const GameSpec& game, const Vector& u, const Matrix& W)
      : game_(game), u_(u), W_(W) {
    detail::require_length(u.size(), game.stackedDim(), "BatchEvaluator: u");
    detail::require(W.rows() == game.disturbance().dim && W.cols() > 0, "BatchEvaluator: bad disturbance batch");
    base_ = game.baseState(u);
    meanState_ = base_ + game.lift().Upsilon * W.rowwise().mean();
  }

  Eigen::Index size() const { return W_.cols(); }
  const Vector& meanState() const { return meanState_; }

  const Matrix& states() const {
    if (!states_) {
      Matrix S = game_.lift().Upsilon * W_;
      S.colwise() += base_;
      states_ = std::move(S);
    }
    return *states_;
  }

  /// Batch mean of xi_bar.
  Vector meanConstraint() const {
    Vector out(game_.numConstraints());
    for (int j = 0; j < game_.numConstraints(); ++j) {
      const auto& c = game_.constraints()[j];
      double v = c.inputFn ? c.inputFn(u_) : 0.0;
      if (c.stateFn) v += meanOver(c.stateAffine, [&](ConstVectorRef s) { return c.stateFn(s); });
      out[j] = v;
    }
    return out;
  }

  /// Batch mean of block i of the pseudo-gradient.
  Vector meanPseudoGradientBlock(int i) const {
    const auto& p = game_.players()[i];
    Vector out = Vector::Zero(game_.playerLength(i));
    if (p.costStateGrad) out.noalias() += game_.lift().Gamma[i].transpose() * meanStateGrad(p.costStateGrad, p.costStateGradAffine);
    if (p.costInputGrad) out += detail::eval_grad(p.costInputGrad, u_, out.size());
    return out;
  }

  Vector meanPseudoGradient() const {
    Vector out(game_.stackedDim());
    for (int i = 0; i < game_.numPlayers(); ++i) out.segment(game_.playerOffset(i), game_.playerLength(i)) = meanPseudoGradientBlock(i);
    return out;
  }

  /// Batch mean of grad_{u^i} g(u, w) lambda. Zero multipliers are skipped.
  Vector meanMultiplierTermBlock(int i, const Vector& lambda) const {
    detail::require_length(lambda.size(), game_.numConstraints(), "multiplier");
    Vector out = Vector::Zero(game_.playerLength(i));
    Vector sGrad = Vector::Zero(game_.stateLength());
    Vector uGrad = Vector::Zero(game_.stackedDim());
    bool anyState = false, anyInput = false;
    for (int j = 0; j < game_.numConstraints(); ++j) {
      if (lambda[j] == 0.0) continue;
      const auto& c = game_.constraints()[j];
      if (c.stateGrad) {
        sGrad += lambda[j] * meanStateGrad(c.stateGrad, c.stateAffine);
        anyState = true;
      }
      if (c.inputGrad) {
        uGrad += lambda[j] * detail::eval_grad(c.inputGrad, u_, uGrad.size());
        anyInput = true;
      }
    }
    if (anyState) out.noalias() += game_.lift().Gamma[i].transpose() * sGrad;
    if (anyInput) out += uGrad.segment(game_.playerOffset(i), game_.playerLength(i));
    return out;
  }

  Vector meanMultiplierTerm(const Vector& lambda) const {
    Vector out(game_.stackedDim());
    for (int i = 0; i < game_.numPlayers(); ++i) out.segment(game_.playerOffset(i), game_.playerLength(i)) = meanMultiplierTermBlock(i, lambda);
    return out;
  }

  /// Batch mean of the full constraint Jacobian (stacked dim x m).
  Matrix meanConstraintGradient() const {
    Matrix out(game_.stackedDim(), game_.numConstraints());
    for (int j = 0; j < game_.numConstraints(); ++j) {
      const auto& c = game_.constraints()[j];
      out.col(j).setZero();
      if (c.stateGrad) out.col(j).noalias() += game_.lift().GammaAll.transpose() * meanStateGrad(c.stateGrad, c.stateAffine);
      if (c.inputGrad) out.col(j) += detail::eval_grad(c.inputGrad, u_, out.rows());
    }
    return out;
  }

 private:
  template <class F>
  double meanOver(bool affine, F&& f) const {
    if (affine || W_.cols() == 1) return f(affine ? meanState_ : Vector(states().col(0)));
    const Matrix& S = states();
    double sum = 0.0;
    for (Eigen::Index l = 0; l < S.cols(); ++l) sum += f(S.col(l));
    return sum / static_cast<double>(S.cols());
  }

  Vector meanStateGrad(const GradientOracle& f, bool affine) const {
    const auto n = game_.stateLength();
    if (affine) return detail::eval_grad(f, meanState_, n);
    const Matrix& S = states();
    Vector sum = Vector::Zero(n);
    Vector g(n);
    for (Eigen::Index l = 0; l < S.cols(); ++l) {
      g.setZero();
      f(S.col(l), g);
      sum += g;
    }
    return sum / static_cast<double>(S.cols());
  }

  const GameSpec& game_;
  const Vector& u_;
  const Matrix& W_;
  Vector base_;
  Vector meanState_;
  mutable std::optional<Matrix> states_;
};

}  // namespace sgne
