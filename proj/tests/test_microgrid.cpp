#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace sgne;

namespace {

MicrogridParams small_params() {
  MicrogridParams p;
  p.households = 4;
  p.horizon = 6;
  p.dt = 4.0;
  return p;
}

Vector sample_w(const GameSpec& g, std::uint64_t seed) {
  RngStream rng(seed);
  Vector w(g.disturbance().dim);
  g.disturbance().sampler(rng, w);
  return w;
}

}  // namespace

TEST(Microgrid, FullInstanceShape) {
  const auto mg = build_microgrid_game(MicrogridParams{});
  EXPECT_EQ(mg.game.numPlayers(), 20);
  EXPECT_EQ(mg.game.horizon(), 24);
  EXPECT_EQ(mg.game.numConstraints(), 49);
  EXPECT_EQ(mg.game.constraints()[0].name, "soc_max[1]");
  EXPECT_EQ(mg.game.constraints()[1].name, "soc_min[1]");
  EXPECT_EQ(mg.game.constraints()[48].name, "terminal");
  EXPECT_DOUBLE_EQ(mg.game.constraints()[0].gamma, 0.05);
  EXPECT_DOUBLE_EQ(mg.game.constraints()[48].gamma, 0.1);
  for (int i = 0; i < 20; ++i) {
    const auto& p = mg.game.players()[i];
    EXPECT_EQ(p.lower, Vector::Zero(24));
    EXPECT_EQ(p.upper, oracle::to_eigen_vec(mg.params.demand[i]));
  }
}

TEST(Microgrid, TariffValues) {
  const auto p = resolve_defaults(MicrogridParams{});
  EXPECT_DOUBLE_EQ(tariff(3, 0.0, p), 15.3);
  EXPECT_DOUBLE_EQ(tariff(18, 0.0, p), 45.6);
  EXPECT_DOUBLE_EQ(tariff(3, 20.0, p), 16.3);  // k_c / N * sum g = 1
  EXPECT_DOUBLE_EQ(tariff(10, 0.0, p), 35.6);
  EXPECT_DOUBLE_EQ(tariff(15, 0.0, p), 23.3);
  EXPECT_DOUBLE_EQ(tariff(23, 0.0, p), 27.6);
  EXPECT_THROW(tariff(24, 0.0, p), ArgumentError);
  EXPECT_THROW(tou_table(25), ArgumentError);
}

TEST(Microgrid, TariffUsesHourOfStep) {
  auto p = resolve_defaults(small_params());  // dt = 4: hours 0, 4, 8, 12, 16, 20
  EXPECT_DOUBLE_EQ(p.tariffToU[1], 15.3);
  EXPECT_DOUBLE_EQ(p.tariffToU[4], 23.3);
  EXPECT_DOUBLE_EQ(p.tariffToU[5], 45.6);
}

TEST(Microgrid, SyntheticProfiles) {
  const auto p = resolve_defaults(MicrogridParams{});
  for (int t = 0; t < 24; ++t) {
    EXPECT_GT(p.demand[0][t], 0.0);
    EXPECT_GE(p.demand[19][t], p.demand[0][t]);
    EXPECT_DOUBLE_EQ(p.renewableStd[t], 10.0);
  }
  EXPECT_EQ(p.renewableMean[3], 0.0);
  EXPECT_EQ(p.renewableMean[20], 0.0);
  EXPECT_NEAR(p.renewableMean[12], 20 * 3.5, 1e-12);
  EXPECT_GT(p.demand[0][19], p.demand[0][3]);
}

TEST(Microgrid, ZeroFlowKeepsInitialCharge) {
  auto params = small_params();
  params.renewableMean.assign(6, 0.0);
  params.renewableStd.assign(6, 0.0);
  const auto mg = build_microgrid_game(params);
  EXPECT_TRUE(mg.game.disturbance().deterministic);
  const Vector u = Vector::Zero(mg.game.stackedDim());
  const Vector s = simulate_state(mg.game.dynamics(), u, sample_w(mg.game, 1));
  EXPECT_EQ(s, Vector::Constant(7, 0.5));
  EXPECT_EQ(mg.game.baseState(u), Vector::Constant(7, 0.5));
}

TEST(Microgrid, DischargeLowersCharge) {
  const auto mg = build_microgrid_game(small_params());
  const Vector u = Vector::Constant(mg.game.stackedDim(), 1.0);
  const Vector s = mg.game.baseState(u);
  const double g = mg.params.eta * mg.params.dt;
  for (int t = 0; t <= 6; ++t) EXPECT_NEAR(s[t], 0.5 - t * 4 * g, 1e-15);
}

TEST(Microgrid, HandComputedSingleStep) {
  MicrogridParams p;
  p.households = 1;
  p.horizon = 1;
  p.demand = {{10.0}};
  p.renewableMean = {0.0};
  p.renewableStd = {0.0};
  const auto mg = build_microgrid_game(p);
  const Vector u = Vector::Constant(1, 2.0), w = Vector::Zero(1);
  // g = 8, pi = 15.3 + 8 = 23.3, SoC_T = 0.5 - 5e-5 * 2.
  const double expected = 23.3 * 8 + 80 * 4 + 10 * 2 - 50 * std::log(9.0) + 0.5 * 1e-4 * 1e-4;
  EXPECT_NEAR(household_cost_value(0, u, w, p), expected, 1e-9);
  const double grad = -23.3 - 8 + 2 * 80 * 2 + 10 + 50.0 / 9.0 + (-5e-5) * (-1e-4);
  EXPECT_NEAR(pseudo_gradient_sample(mg.game, u, w)[0], grad, 1e-10);
}

TEST(Microgrid, UtilityVanishesWithoutGridExchange) {
  auto params = small_params();
  const auto p = resolve_defaults(params);
  Vector u(24);
  for (int i = 0; i < 4; ++i) {
    for (int t = 0; t < 6; ++t) u[i * 6 + t] = p.demand[i][t];
  }
  Vector w = Vector::Zero(6);
  w[0] = p.eta * p.dt * u.sum();  // refill so that SoC_T = SoC_des
  double degradation = 0.0;
  for (int k = 0; k < 24; ++k) degradation += p.alphaDch * u[k] * u[k] + p.betaDch * u[k];
  EXPECT_NEAR(household_cost_value(2, u, w, params), degradation, 1e-6 * degradation);
}

TEST(Microgrid, TerminalTermGradient) {
  // Only the battery term depends on alpha_bat; its gradient is alpha_bat (SoC_T - des) (Gamma^i_T)'.
  auto params = small_params();
  const auto a = build_microgrid_game(params);
  params.alphaBat = 3.0;
  const auto b = build_microgrid_game(params);
  std::mt19937_64 gen(4);
  const Vector u = oracle::random_feasible(a.game, gen);
  const Vector w = sample_w(a.game, 2);
  const Vector diff = pseudo_gradient_sample(b.game, u, w) - pseudo_gradient_sample(a.game, u, w);
  const double socT = oracle::closed_form_state(a.game.dynamics(), u, w)[6];
  const double gain = a.params.eta * a.params.dt;
  for (int k = 0; k < u.size(); ++k) EXPECT_NEAR(diff[k], 2.0 * (socT - 0.5) * (-gain), 1e-10);
}

TEST(Microgrid, GradientsMatchFiniteDifferences) {
  const auto mg = build_microgrid_game(small_params());
  const auto& game = mg.game;
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector u = oracle::random_feasible(game, gen);
    const Vector w = sample_w(game, trial);
    const Vector F = pseudo_gradient_sample(game, u, w);
    for (int i = 0; i < game.numPlayers(); ++i) {
      auto cost = [&](const Vector& ui) {
        Vector full = u;
        full.segment(i * 6, 6) = ui;
        return household_cost_value(i, full, w, mg.params);
      };
      const Vector fd = oracle::fd_gradient(cost, u.segment(i * 6, 6));
      EXPECT_LE(oracle::relative_error(F.segment(i * 6, 6), fd), 1e-6);
    }
    const Matrix J = constraint_gradient_sample(game, u, w);
    for (int j = 0; j < game.numConstraints(); ++j) {
      auto xi = [&](const Vector& x) { return constraint_sample(game, x, w)[j]; };
      EXPECT_LE(oracle::relative_error(J.col(j), oracle::fd_gradient(xi, u)), 1e-6) << j;
    }
  }
}

TEST(Microgrid, ConstraintValues) {
  const auto mg = build_microgrid_game(small_params());
  const Vector u = Vector::Zero(24);
  const Vector w = sample_w(mg.game, 3);
  const Vector s = oracle::closed_form_state(mg.game.dynamics(), u, w);
  const Vector xi = constraint_sample(mg.game, u, w);
  for (int t = 1; t <= 6; ++t) {
    EXPECT_NEAR(xi[2 * (t - 1)], s[t] - 0.9, 1e-15);
    EXPECT_NEAR(xi[2 * (t - 1) + 1], 0.1 - s[t], 1e-15);
  }
  EXPECT_NEAR(xi[12], std::abs(s[6] - 0.5) - 0.05, 1e-15);
}

TEST(Microgrid, OffsetsUseChargeSpread) {
  const auto mg = build_microgrid_game(small_params());
  const double g = mg.params.eta * mg.params.dt;
  const double hHat = h_inverse(ComModel::gaussian_standard(), 0.05);
  const double hTilde = h_inverse(ComModel::gaussian_standard(), 0.1);
  for (int t = 1; t <= 6; ++t) {
    EXPECT_NEAR(mg.offsets.offsets[2 * (t - 1)], g * 10.0 * std::sqrt(t) * hHat, 1e-15);
    EXPECT_NEAR(mg.offsets.offsets[2 * (t - 1) + 1], g * 10.0 * std::sqrt(t) * hHat, 1e-15);
  }
  EXPECT_NEAR(mg.offsets.offsets[12], g * 10.0 * std::sqrt(6.0) * hTilde, 1e-15);
}

TEST(Microgrid, RejectsInvalidParameters) {
  auto p = small_params();
  p.terminalBand = 0.5;
  EXPECT_THROW(build_microgrid_game(p), ConstructionError);
  p = small_params();
  p.gammaHat = 1.5;
  EXPECT_THROW(build_microgrid_game(p), ConstructionError);
  p = small_params();
  p.demand = {{1.0}};
  EXPECT_THROW(build_microgrid_game(p), ConstructionError);
  p = small_params();
  p.beta = {0.1};
  EXPECT_THROW(build_microgrid_game(p), ConstructionError);
  p = small_params();
  p.dt = 5.0;  // step 5 falls at hour 25
  EXPECT_THROW(build_microgrid_game(p), ConstructionError);
}

TEST(Microgrid, UtilityDomainError) {
  const auto mg = build_microgrid_game(small_params());
  Vector u(24);
  for (int i = 0; i < 4; ++i) {
    for (int t = 0; t < 6; ++t) u[i * 6 + t] = mg.params.demand[i][t] + 1.0;
  }
  EXPECT_THROW(pseudo_gradient_sample(mg.game, u, Vector::Zero(6)), EvaluationError);
  EXPECT_THROW(household_cost_value(0, u, Vector::Zero(6), mg.params), EvaluationError);
}
