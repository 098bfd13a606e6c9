#pragma once

// Independent reference computations used only by the tests: finite differences,
// a closed-form state formula, a direct KKT solve for linear-quadratic games and
// random model generators.

#include "sgne/sgne.hpp"

#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace sgne::oracle {

inline Vector to_eigen_vec(const std::vector<double>& v) {
  Vector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t k = 0; k < v.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[k];
  return out;
}

inline Matrix to_eigen_mat(const DenseMatrix& m) {
  Matrix out(static_cast<Eigen::Index>(m.size()), m.empty() ? 0 : static_cast<Eigen::Index>(m[0].size()));
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) = m[r][c];
  }
  return out;
}

/// Central finite-difference gradient.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h = 1e-6) {
  Vector g(x.size());
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double step = h * std::max(1.0, std::abs(x[k]));
    Vector xp = x, xm = x;
    xp[k] += step;
    xm[k] -= step;
    g[k] = (f(xp) - f(xm)) / (2.0 * step);
  }
  return g;
}

inline double relative_error(const Vector& approx, const Vector& exact) {
  return (approx - exact).norm() / std::max(1.0, exact.norm());
}

/// s_t = Phi(t,0) s0 + sum_{k<t} Phi(t,k+1) (sum_j B^j_k u^j_k + w_k), with Phi formed by explicit products.
inline Vector closed_form_state(const TimeVaryingLinearDynamics& d, const Vector& u, const Vector& w) {
  const int T = d.horizon, ns = d.stateDim;
  auto phi = [&](int t1, int t2) {
    Matrix p = Matrix::Identity(ns, ns);
    for (int t = t2; t < t1; ++t) p = d.A[t] * p;
    return p;
  };
  Vector s(d.stackedStateDim());
  for (int t = 0; t <= T; ++t) {
    Vector st = phi(t, 0) * d.s0;
    for (int k = 0; k < t; ++k) {
      Vector drive = w.segment(k * ns, ns);
      int off = 0;
      for (int j = 0; j < d.players(); ++j) {
        const int nj = static_cast<int>(d.B[j][0].cols());
        drive += d.B[j][k] * u.segment(off + k * nj, nj);
        off += T * nj;
      }
      st += phi(t, k + 1) * drive;
    }
    s.segment(t * ns, ns) = st;
  }
  return s;
}

inline TimeVaryingLinearDynamics random_dynamics(std::mt19937_64& gen, int ns, int N, int T, int maxInput = 3) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_int_distribution<int> dimDist(1, maxInput);
  TimeVaryingLinearDynamics d;
  d.horizon = T;
  d.stateDim = ns;
  for (int t = 0; t < T; ++t) {
    Matrix A(ns, ns);
    for (auto& x : A.reshaped()) x = 0.5 * nd(gen);
    d.A.push_back(A);
  }
  d.B.resize(static_cast<std::size_t>(N));
  for (int j = 0; j < N; ++j) {
    const int nj = dimDist(gen);
    for (int t = 0; t < T; ++t) {
      Matrix B(ns, nj);
      for (auto& x : B.reshaped()) x = nd(gen);
      d.B[j].push_back(B);
    }
  }
  d.s0 = Vector(ns);
  for (auto& x : d.s0) x = nd(gen);
  return d;
}

struct KktSolution {
  Vector u;
  Vector lambda;
  bool boxesInactive = false;
  bool dualFeasible = false;
};

/// Variational equilibrium of an LQ game whose local boxes are inactive, with every coupling
/// constraint treated as active: solves [M G'; G 0][u; lambda] = [-q; -h] directly.
/// Built from the configuration data; the lift is formed from closed_form_state columns.
/// Constraint scales must be given explicitly (com_scale) since the disturbance is taken at its mean.
inline KktSolution solve_lq_kkt(const LqGameConfig& g, const std::vector<double>& gamma, const ComModel& com) {
  TimeVaryingLinearDynamics d;
  d.horizon = g.horizon;
  d.stateDim = g.stateDim;
  for (const auto& a : g.A) d.A.push_back(to_eigen_mat(a));
  for (const auto& bj : g.B) {
    d.B.emplace_back();
    for (const auto& b : bj) d.B.back().push_back(to_eigen_mat(b));
  }
  d.s0 = to_eigen_vec(g.s0);
  const int n = d.stackedInputDim();
  const Vector w = to_eigen_vec(g.disturbanceMean);
  const Vector sFree = closed_form_state(d, Vector::Zero(n), w);
  Matrix Gam(d.stackedStateDim(), n);
  for (int k = 0; k < n; ++k) Gam.col(k) = closed_form_state(d, Vector::Unit(n, k), w) - sFree;

  Matrix M = Matrix::Zero(n, n);
  Vector q = Vector::Zero(n);
  int off = 0;
  for (const auto& p : g.players) {
    const int len = g.horizon * p.inputDim;
    const Matrix R = to_eigen_mat(p.R), C = to_eigen_mat(p.C), Q = to_eigen_mat(p.Q);
    const Matrix Gi = Gam.middleCols(off, len);
    M.block(off, off, len, len) += R;
    M.middleRows(off, len) += C + Gi.transpose() * Q * Gam;
    q.segment(off, len) += to_eigen_vec(p.c) + Gi.transpose() * (Q * sFree + to_eigen_vec(p.q));
    off += len;
  }
  const int m = static_cast<int>(g.constraints.size());
  Matrix G(m, n);
  Vector h(m);
  for (int j = 0; j < m; ++j) {
    const auto& c = g.constraints[j];
    const Vector a = to_eigen_vec(c.state);
    const double scale = c.comScale.value_or(0.0);
    G.row(j) = (Gam.transpose() * a + to_eigen_vec(c.input)).transpose();
    h[j] = a.dot(sFree) + c.constant + scale * h_inverse(com, gamma[j]);
  }
  Matrix K = Matrix::Zero(n + m, n + m);
  K.topLeftCorner(n, n) = M;
  K.topRightCorner(n, m) = G.transpose();
  K.bottomLeftCorner(m, n) = G;
  Vector rhs(n + m);
  rhs << -q, -h;
  const Vector sol = K.fullPivLu().solve(rhs);
  KktSolution out;
  out.u = sol.head(n);
  out.lambda = sol.tail(m);
  out.dualFeasible = (out.lambda.array() >= 0.0).all();
  out.boxesInactive = true;
  off = 0;
  for (const auto& p : g.players) {
    const int len = g.horizon * p.inputDim;
    for (int k = 0; k < len; ++k) {
      const double x = out.u[off + k];
      if (!(x > p.lower[k] && x < p.upper[k])) out.boxesInactive = false;
    }
    off += len;
  }
  return out;
}

inline DenseMatrix to_dense(const Matrix& m) {
  DenseMatrix out(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  }
  return out;
}

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

/// Random LQ game with state costs, couplings, m affine constraints and Gaussian noise.
inline LqGameConfig random_lq_config(std::mt19937_64& gen, int ns, int N, int T, int m) {
  std::normal_distribution<double> nd;
  auto randm = [&](Eigen::Index r, Eigen::Index c) {
    Matrix x(r, c);
    for (auto& v : x.reshaped()) v = nd(gen);
    return x;
  };
  auto randv = [&](Eigen::Index n) {
    Vector x(n);
    for (auto& v : x) v = nd(gen);
    return x;
  };
  const auto d = random_dynamics(gen, ns, N, T, 2);
  LqGameConfig g;
  g.horizon = T;
  g.stateDim = ns;
  for (const auto& a : d.A) g.A.push_back(to_dense(a));
  for (const auto& bj : d.B) {
    g.B.emplace_back();
    for (const auto& b : bj) g.B.back().push_back(to_dense(b));
  }
  g.s0 = to_std(d.s0);
  const int n = d.stackedInputDim(), sLen = d.stackedStateDim();
  for (int i = 0; i < N; ++i) {
    LqPlayerConfig p;
    p.inputDim = d.inputDim(i);
    const int len = T * p.inputDim, off = d.playerOffset(i);
    const Matrix r = randm(len, len);
    p.R = to_dense(r * r.transpose() + Matrix::Identity(len, len));
    Matrix C = 0.3 * randm(len, n);
    C.middleCols(off, len).setZero();
    p.C = to_dense(C);
    p.c = to_std(randv(len));
    const Matrix q = randm(sLen, sLen);
    p.Q = to_dense(0.2 * q * q.transpose());
    p.q = to_std(randv(sLen));
    p.lower = std::vector<double>(static_cast<std::size_t>(len), -3.0);
    p.upper = std::vector<double>(static_cast<std::size_t>(len), 3.0);
    g.players.push_back(std::move(p));
  }
  for (int j = 0; j < m; ++j) {
    LqConstraintConfig c;
    c.state = to_std(randv(sLen));
    c.input = to_std(randv(n));
    c.constant = nd(gen);
    g.constraints.push_back(std::move(c));
  }
  g.disturbanceMean = to_std(0.1 * randv(T * ns));
  g.disturbanceStd = std::vector<double>(static_cast<std::size_t>(T * ns), 0.5);
  return g;
}

/// Uniform point in each player's box.
inline Vector random_feasible(const GameSpec& game, std::mt19937_64& gen) {
  Vector u(game.stackedDim());
  for (int i = 0; i < game.numPlayers(); ++i) {
    const auto& p = game.players()[i];
    for (int k = 0; k < game.playerLength(i); ++k) {
      u[game.playerOffset(i) + k] = std::uniform_real_distribution<double>(p.lower[k], p.upper[k])(gen);
    }
  }
  return u;
}

/// Trailing means of a series; entry k averages x[k - window + 1 .. k] (NaN while the window is
/// incomplete). Each window is summed afresh: a running sum would carry rounding from the large
/// early values into the tiny late ones.
inline std::vector<double> trailing_means(const std::vector<double>& x, std::size_t window = 50) {
  std::vector<double> out(x.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = window - 1; k < x.size(); ++k) {
    double sum = 0.0;
    for (std::size_t l = k + 1 - window; l <= k; ++l) sum += x[l];
    out[k] = sum / static_cast<double>(window);
  }
  return out;
}

/// Central-difference Jacobian of a vector function, one column per coordinate.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double h = 1e-6) {
  Matrix J;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double step = h * std::max(1.0, std::abs(x[k]));
    Vector xp = x, xm = x;
    xp[k] += step;
    xm[k] -= step;
    const Vector d = (f(xp) - f(xm)) / (2.0 * step);
    if (k == 0) J.resize(d.size(), x.size());
    J.col(k) = d;
  }
  return J;
}

}  // namespace sgne::oracle
