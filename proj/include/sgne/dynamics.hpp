#pragma once

// Shared linear time-varying dynamics
//
//   s_{t+1} = A_t s_t + sum_j B^j_t u^j_t + w_t,   t = 0..T-1,
//
// and their lift into the affine map s = Theta s0 + sum_j Gamma^j u^j + Upsilon w.
//
// Stacking conventions used throughout the library:
//   s   = col(s_0, ..., s_T)                 length (T+1) n_s
//   u^j = col(u^j_0, ..., u^j_{T-1})         length T n_j
//   u   = col(u^1, ..., u^N)                 length T sum_j n_j
//   w   = col(w_0, ..., w_{T-1})             length T n_s

#include "sgne/common.hpp"

#include <numeric>
#include <vector>

namespace sgne {

struct TimeVaryingLinearDynamics {
  int horizon = 0;
  int stateDim = 0;
  std::vector<Matrix> A;               // A[t]
  std::vector<std::vector<Matrix>> B;  // B[j][t]
  Vector s0;

  int players() const { return static_cast<int>(B.size()); }

  int inputDim(int j) const { return B.at(static_cast<std::size_t>(j)).empty() ? 0 : static_cast<int>(B[j][0].cols()); }

  /// Length of the stacked strategy profile u.
  int stackedInputDim() const {
    int total = 0;
    for (int j = 0; j < players(); ++j) total += inputDim(j);
    return horizon * total;
  }

  int stackedStateDim() const { return (horizon + 1) * stateDim; }
  int stackedDisturbanceDim() const { return horizon * stateDim; }

  /// Offset of player j's block inside the stacked u.
  int playerOffset(int j) const {
    int off = 0;
    for (int l = 0; l < j; ++l) off += horizon * inputDim(l);
    return off;
  }

  /// Throws ConstructionError when shapes disagree.
  void validate() const {
    auto fail = [](const std::string& msg) { throw ConstructionError("dynamics: " + msg); };
    if (horizon <= 0) fail("horizon must be positive");
    if (stateDim <= 0) fail("state dimension must be positive");
    if (static_cast<int>(A.size()) != horizon) fail("expected " + std::to_string(horizon) + " A matrices");
    for (int t = 0; t < horizon; ++t) {
      if (A[t].rows() != stateDim || A[t].cols() != stateDim) fail("A[" + std::to_string(t) + "] is not n_s x n_s");
    }
    if (B.empty()) fail("at least one player is required");
    for (int j = 0; j < players(); ++j) {
      if (static_cast<int>(B[j].size()) != horizon) fail("player " + std::to_string(j) + ": expected T input matrices");
      const auto nj = B[j][0].cols();
      if (nj <= 0) fail("player " + std::to_string(j) + ": input dimension must be positive");
      for (int t = 0; t < horizon; ++t) {
        if (B[j][t].rows() != stateDim || B[j][t].cols() != nj) {
          fail("B[" + std::to_string(j) + "][" + std::to_string(t) + "] has inconsistent shape");
        }
      }
    }
    if (s0.size() != stateDim) fail("s0 must have length n_s");
  }
};

/// Phi(t1, t2) = A_{t1-1} ... A_{t2} for t1 > t2, identity for t1 == t2.
inline Matrix transition_matrix(const TimeVaryingLinearDynamics& dyn, int t1, int t2) {
  if (t2 < 0 || t1 > dyn.horizon || t1 < t2) {
    throw ArgumentError("transition_matrix: need 0 <= t2 <= t1 <= T, got t1=" + std::to_string(t1) +
                        ", t2=" + std::to_string(t2));
  }
  Matrix phi = Matrix::Identity(dyn.stateDim, dyn.stateDim);
  for (int t = t2; t < t1; ++t) phi = dyn.A[t] * phi;
  return phi;
}

struct CompactLift {
  int horizon = 0;
  int stateDim = 0;
  Matrix Theta;                // (T+1)n_s x n_s
  std::vector<Matrix> Gamma;   // per player, (T+1)n_s x T n_j
  Matrix Upsilon;              // (T+1)n_s x T n_s
  Matrix GammaAll;             // [Gamma^1 ... Gamma^N]
  std::vector<int> offsets;    // player block offsets in u
};

/// Eagerly builds Theta, Gamma^j, Upsilon by running the recursion on the block rows.
inline CompactLift build_compact_lift(const TimeVaryingLinearDynamics& dyn) {
  dyn.validate();
  const int T = dyn.horizon;
  const int ns = dyn.stateDim;
  const int N = dyn.players();

  CompactLift lift;
  lift.horizon = T;
  lift.stateDim = ns;
  lift.Theta = Matrix::Zero((T + 1) * ns, ns);
  lift.Upsilon = Matrix::Zero((T + 1) * ns, T * ns);
  lift.Gamma.reserve(N);
  for (int j = 0; j < N; ++j) {
    lift.Gamma.push_back(Matrix::Zero((T + 1) * ns, T * dyn.inputDim(j)));
    lift.offsets.push_back(dyn.playerOffset(j));
  }

  // Row block t+1 = A_t * (row block t) + [0 .. B_t at column block t .. 0].
  lift.Theta.topRows(ns).setIdentity();
  for (int t = 0; t < T; ++t) {
    const auto cur = t * ns;
    const auto next = (t + 1) * ns;
    lift.Theta.middleRows(next, ns).noalias() = dyn.A[t] * lift.Theta.middleRows(cur, ns);
    lift.Upsilon.middleRows(next, ns).noalias() = dyn.A[t] * lift.Upsilon.middleRows(cur, ns);
    lift.Upsilon.block(next, t * ns, ns, ns) += Matrix::Identity(ns, ns);
    for (int j = 0; j < N; ++j) {
      const int nj = dyn.inputDim(j);
      lift.Gamma[j].middleRows(next, ns).noalias() = dyn.A[t] * lift.Gamma[j].middleRows(cur, ns);
      lift.Gamma[j].block(next, t * nj, ns, nj) += dyn.B[j][t];
    }
  }

  lift.GammaAll = Matrix::Zero((T + 1) * ns, dyn.stackedInputDim());
  for (int j = 0; j < N; ++j) lift.GammaAll.middleCols(lift.offsets[j], lift.Gamma[j].cols()) = lift.Gamma[j];
  return lift;
}

/// Forward recursion of the dynamics; the reference the lift is checked against.
inline Vector simulate_state(const TimeVaryingLinearDynamics& dyn, const Vector& u, const Vector& w) {
  detail::require_length(u.size(), dyn.stackedInputDim(), "simulate_state: u");
  detail::require_length(w.size(), dyn.stackedDisturbanceDim(), "simulate_state: w");
  const int T = dyn.horizon;
  const int ns = dyn.stateDim;
  Vector s(dyn.stackedStateDim());
  s.head(ns) = dyn.s0;
  for (int t = 0; t < T; ++t) {
    Vector next = dyn.A[t] * s.segment(t * ns, ns) + w.segment(t * ns, ns);
    for (int j = 0; j < dyn.players(); ++j) {
      const int nj = dyn.inputDim(j);
      next.noalias() += dyn.B[j][t] * u.segment(dyn.playerOffset(j) + t * nj, nj);
    }
    s.segment((t + 1) * ns, ns) = next;
  }
  return s;
}

/// s = Theta s0 + sum_j Gamma^j u^j + Upsilon w.
inline Vector lift_state(const CompactLift& lift, const Vector& s0, const Vector& u, const Vector& w) {
  detail::require_length(s0.size(), lift.stateDim, "lift_state: s0");
  detail::require_length(u.size(), lift.GammaAll.cols(), "lift_state: u");
  detail::require_length(w.size(), lift.Upsilon.cols(), "lift_state: w");
  Vector s = lift.Theta * s0;
  s.noalias() += lift.GammaAll * u;
  s.noalias() += lift.Upsilon * w;
  return s;
}

}  // namespace sgne
