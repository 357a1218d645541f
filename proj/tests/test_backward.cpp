// Copyright 2026 The jumpbsde Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cmath>
#include <optional>
#include <vector>

#include "jumpbsde/backward.hpp"
#include "jumpbsde/errors.hpp"
#include "jumpbsde/forward.hpp"
#include "jumpbsde/model.hpp"
#include "jumpbsde/oracle.hpp"

namespace jumpbsde {
namespace {

constexpr double kLinY0 = 1.1896362;

PathBundle simulated(const ModelSpec& model, std::size_t n, std::size_t paths, std::uint64_t seed) {
  PathBundle b = simulate_increments(uniform_grid(n, model.horizon), paths, seed, model.density);
  euler_x0(model, b);
  return b;
}

BackwardConfig lsmc(int degree) {
  BackwardConfig cfg;
  cfg.degree = degree;
  return cfg;
}

void expect_same_layers(std::span<const RegressionLayer> a, std::span<const RegressionLayer> b) {
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t k = 0; k < a.size(); ++k) {
    const auto ca = a[k].expectation.coeffs();
    const auto cb = b[k].expectation.coeffs();
    const auto za = a[k].gradient.coeffs();
    const auto zb = b[k].gradient.coeffs();
    ASSERT_EQ(ca.size(), cb.size());
    for (std::size_t q = 0; q < ca.size(); ++q) {
      ASSERT_EQ(ca[q], cb[q]) << "layer " << k;
      ASSERT_EQ(za[q], zb[q]) << "layer " << k;
    }
  }
}

TEST(ImplicitStep, ZeroGeneratorReturnsExpectation) {
  EXPECT_EQ(implicit_step([](double) { return 0.0; }, 1.25, 0.1, 1.0), 1.25);
}

TEST(ImplicitStep, ConstantGeneratorIsOneEulerStep) {
  EXPECT_DOUBLE_EQ(implicit_step([](double) { return 3.0; }, 1.0, 0.1, 1.0), 1.3);
}

TEST(ImplicitStep, LinearGeneratorSolvedExactly) {
  EXPECT_NEAR(implicit_step([](double y) { return -y; }, 1.0, 0.1, 1.0), 1.0 / 1.1, 1e-12);
}

TEST(ImplicitStep, CoarseGridIsAdmissibilityError) {
  try {
    implicit_step([](double y) { return y; }, 1.0, 0.5, 2.0);
    FAIL() << "expected an admissibility error";
  } catch (const AdmissibilityError& e) {
    EXPECT_NE(std::string(e.what()).find("grid too coarse for implicit step"), std::string::npos);
  }
}

TEST(ImplicitStep, NonConvergenceReportsResidual) {
  PicardSettings picard{1e-12, 3};
  try {
    implicit_step([](double y) { return -0.9 * y; }, 1.0, 1.0, 0.95, picard);
    FAIL() << "expected a numerical error";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("residual"), std::string::npos);
  }
}

TEST(FBar, IgnoresDiagonalWhenGeneratorIgnoresGap) {
  ModelSpec m = builtin_model("TRIG", {});
  m.generator = [](double, double, double y, double z, double) { return std::tanh(y) + z; };
  EXPECT_EQ(f_bar(m, 0.2, 1.0, 0.3, 0.4, 5.0), m.generator(0.2, 1.0, 0.3, 0.4, 0.0));
  EXPECT_EQ(f_bar(m, 0.2, 1.0, 0.3, 0.4, -7.0), f_bar(m, 0.2, 1.0, 0.3, 0.4, 5.0));
}

TEST(FBar, LinearModelUsesJumpGap) {
  const ModelSpec m = builtin_model("LIN", {{"lambda", 2.0}});
  EXPECT_DOUBLE_EQ(f_bar(m, 0.0, 1.0, 0.4, 0.5, 1.5), 2.0 * (1.5 - 0.4));
}

TEST(FBar, EqualDiagonalGivesZeroGap) {
  const ModelSpec m = builtin_model("TRIG", {});
  EXPECT_EQ(f_bar(m, 0.3, 0.7, 0.2, 0.1, 0.2), m.generator(0.3, 0.7, 0.2, 0.1, 0.0));
}

TEST(CheckAdmissible, UsesDoubledLipschitzConstant) {
  const ModelSpec m = builtin_model("LIN", {{"lambda", 3.0}});
  EXPECT_NO_THROW(check_admissible(m, uniform_grid(7, 1.0)));
  EXPECT_THROW(check_admissible(m, uniform_grid(6, 1.0)), AdmissibilityError);
}

TEST(SolveBackward, ConstantModelQuadratureIsExact) {
  const ModelSpec m = builtin_model("CONST", {{"g0", 0.7}});
  const PathBundle b = simulated(m, 8, 1000, 3);
  BackwardConfig cfg;
  cfg.mode = BackwardMode::quadrature;
  cfg.oracle.mesh_nodes = 201;
  const BackwardFamilySolution sol = solve_backward(m, b, cfg);
  for (std::size_t i = 0; i <= 8; ++i) {
    for (double x : {0.0, 1.0, 1.4}) {
      EXPECT_NEAR(sol.zero.y(i, x, 0.7), 0.7, 1e-14);
      EXPECT_NEAR(sol.post.y(i, i, x), 0.7, 1e-14);
      if (i < 8) {
        EXPECT_NEAR(sol.zero.z(i, x), 0.0, 1e-14);
        EXPECT_NEAR(sol.post.z(i, i, x), 0.0, 1e-14);
      }
    }
  }
}

TEST(SolveBackward, ConstantModelRegression) {
  const ModelSpec m = builtin_model("CONST", {{"g0", 0.7}});
  const PathBundle b = simulated(m, 8, 20000, 3);
  const BackwardFamilySolution sol = solve_backward(m, b, lsmc(2));
  for (std::size_t i = 0; i <= 8; ++i) {
    for (std::size_t mm = 0; mm < 200; ++mm) {
      ASSERT_NEAR(sol.diagonal.at(mm, i), 0.7, 1e-12);
      ASSERT_NEAR(sol.zero.y(i, b.x0(mm, i), 0.7), 0.7, 1e-12);
    }
  }
  for (std::size_t i = 0; i < 8; ++i) {
    for (double x : {0.5, 1.0, 1.5}) {
      EXPECT_NEAR(sol.zero.z(i, x), 0.0, 1e-12) << "i = " << i;
      EXPECT_NEAR(sol.post.z(i, 0, x), 0.0, 1e-12) << "i = " << i;
    }
  }
}

TEST(SolveY1Family, LinearModelIsTheStateWithSlopeSigma) {
  const ModelSpec m = builtin_model("LIN", {});
  const PathBundle b = simulated(m, 8, 100000, 5);
  const PostJumpSolution post = solve_y1_family(m, b, lsmc(1));
  for (std::size_t j : {0u, 3u, 6u}) {
    for (std::size_t i = j; i < 8; ++i) {
      for (double x : {1.0, 1.3, 1.6}) {
        const double y = post.branch.y(i, j, x);
        EXPECT_NEAR(y, x, 4.0 * post.branch.y_standard_error(i, j, x) + 1e-9);
        const double z = post.branch.z(i, j, x);
        EXPECT_NEAR(z, 0.5, 4.0 * post.branch.z_standard_error(i, j, x)) << i << ' ' << j;
      }
    }
  }
}

TEST(SolveY1Family, TrigDiagonalMatchesQuadrature) {
  const ModelSpec m = builtin_model("TRIG", {});
  const PathBundle b = simulated(m, 8, 50000, 6);
  const PostJumpSolution post = solve_y1_family(m, b, lsmc(3));
  const QuadratureSolution q = quadrature_dp(m, b.grid(), std::size_t{0});
  const double x = m.x0 + m.jump(0.0, m.x0);
  const double se = post.branch.y_standard_error(0, 0, x);
  EXPECT_NEAR(post.branch.y(0, 0, x), q.y(0)(x), 3.0 * se + 0.01);
  EXPECT_EQ(post.diagonal.at(0, 0), post.diagonal.at(17, 0));
}

TEST(SolveY1Family, DiagonalIsTheBranchAtInjectedState) {
  const ModelSpec m = builtin_model("TRIG", {});
  const PathBundle b = simulated(m, 6, 5000, 7);
  const PostJumpSolution post = solve_y1_family(m, b, lsmc(3));
  for (std::size_t i = 0; i <= 6; ++i) {
    for (std::size_t mm = 0; mm < 50; ++mm) {
      const double x = injected_state(m, b, mm, i);
      ASSERT_NEAR(post.diagonal.at(mm, i), post.branch.y(i, i, x), 1e-12);
    }
  }
}

TEST(SolveY0, GapFreeGeneratorIgnoresDiagonalBitwise) {
  ModelSpec m = builtin_model("TRIG", {});
  m.generator = [](double, double, double y, double z, double) {
    return 0.5 * std::tanh(y) + 0.3 * z;
  };
  const PathBundle b = simulated(m, 8, 8000, 8);
  const PostJumpSolution post = solve_y1_family(m, b, lsmc(3));
  const Diagonal zeros(b.paths(), b.steps());
  const ZeroBranch a = solve_y0(m, b, post.diagonal, lsmc(3));
  const ZeroBranch c = solve_y0(m, b, zeros, lsmc(3));
  expect_same_layers(a.layers(), c.layers());
  EXPECT_EQ(a.y(0, m.x0, post.diagonal.at(0, 0)), c.y(0, m.x0, 0.0));
}

TEST(SolveY0, PicardToleranceHalvingIsStable) {
  const ModelSpec m = builtin_model("TRIG", {});
  const PathBundle b = simulated(m, 16, 20000, 9);
  BackwardConfig tight = lsmc(3);
  tight.picard.tol = 0.5e-12;
  const InitialValues a = initial_values(m, solve_backward(m, b, lsmc(3)));
  const InitialValues c = initial_values(m, solve_backward(m, b, tight));
  EXPECT_LT(std::abs(a.y.value - c.y.value), 1e-9);
}

TEST(SolveY0, LinearModelApproachesClosedForm) {
  const ModelSpec m = builtin_model("LIN", {});
  const PathBundle b = simulated(m, 32, 50000, 10);
  const InitialValues v = initial_values(m, solve_backward(m, b, lsmc(1)));
  EXPECT_NEAR(v.y.value, kLinY0, 0.03);
  EXPECT_NEAR(v.u.value, 0.1103638, 0.02);
}

TEST(SolveY0Reference, LinearModelWithinTolerance) {
  const ModelSpec m = builtin_model("LIN", {});
  const PathBundle b = simulated(m, 128, 50000, 11);
  const ReferenceZeroSolution ref = solve_y0_reference(m, b, lsmc(1));
  EXPECT_NEAR(ref.branch.y(0, m.x0, ref.diagonal.at(0, 0)), kLinY0, 0.03);
  EXPECT_DOUBLE_EQ(ref.diagonal.at(0, 0), m.x0 + 0.3);
}

TEST(SolveY0Reference, ConstantModelMatchesSchemeBitwise) {
  const ModelSpec m = builtin_model("CONST", {{"g0", -0.4}});
  const PathBundle b = simulated(m, 8, 5000, 12);
  const BackwardFamilySolution sol = solve_backward(m, b, lsmc(2));
  const ReferenceZeroSolution ref = solve_y0_reference(m, b, lsmc(2));
  expect_same_layers(sol.zero.layers(), ref.branch.layers());
}

TEST(SolveY0Reference, ModelWithoutOracleIsConfigError) {
  const ModelSpec m = builtin_model("TRIG", {});
  const PathBundle b = simulated(m, 4, 100, 1);
  EXPECT_THROW(solve_y0_reference(m, b, lsmc(1)), ConfigError);
}

class RecombineTest : public ::testing::Test {
 protected:
  static constexpr std::size_t kSteps = 8;

  void SetUp() override {
    bundle_.emplace(simulated(model_, kSteps, 4000, 13));
    sol_.emplace(solve_backward(model_, *bundle_, lsmc(1)));
    // Path 0 jumps exactly at t_3; path 1 never jumps.
    bundle_->taus()[0] = JumpTime::at(bundle_->grid().time(3));
    bundle_->taus()[1] = JumpTime::after_horizon();
    family_.emplace(euler_x1_family(model_, *bundle_));
  }

  ModelSpec model_ = builtin_model("LIN", {});
  std::optional<PathBundle> bundle_;
  std::optional<BackwardFamilySolution> sol_;
  std::optional<X1Family> family_;
};

TEST_F(RecombineTest, IndicatorsAtJumpOnGridPoint) {
  const PathBundle& b = *bundle_;
  const BackwardFamilySolution& sol = *sol_;
  const double t3 = b.grid().time(3);
  const RecombinedSlice at = recombine_yzu(sol, b, *family_, t3);
  const double x0 = b.x0(0, 3);
  const double x1 = family_->x1(0, 3, 3);
  const double y0 = sol.zero.y(3, x0, sol.diagonal.at(0, 3));
  // Y switches at tau; Z and U still carry the pre-jump branch.
  EXPECT_EQ(at.y[0], sol.post.y(3, 3, x1));
  EXPECT_EQ(at.z[0], sol.zero.z(3, x0));
  EXPECT_EQ(at.u[0], sol.diagonal.at(0, 3) - y0);
  EXPECT_NE(at.u[0], 0.0);

  const RecombinedSlice before = recombine_yzu(sol, b, *family_, b.grid().time(2));
  EXPECT_EQ(before.y[0], sol.zero.y(2, b.x0(0, 2), sol.diagonal.at(0, 2)));

  const RecombinedSlice after = recombine_yzu(sol, b, *family_, b.grid().time(4));
  EXPECT_EQ(after.y[0], sol.post.y(4, 3, family_->x1(0, 4, 3)));
  EXPECT_EQ(after.z[0], sol.post.z(4, 3, family_->x1(0, 4, 3)));
  EXPECT_EQ(after.u[0], 0.0);
}

TEST_F(RecombineTest, NoJumpKeepsZeroBranchThroughout) {
  const PathBundle& b = *bundle_;
  for (std::size_t i = 0; i <= kSteps; ++i) {
    const RecombinedSlice s = recombine_yzu(*sol_, b, *family_, b.grid().time(i));
    const double diag = sol_->diagonal.at(1, i);
    const double y0 = sol_->zero.y(i, b.x0(1, i), diag);
    EXPECT_EQ(s.y[1], y0);
    EXPECT_EQ(s.z[1], sol_->zero.z(std::min<std::size_t>(i, kSteps - 1),
                                   b.x0(1, std::min<std::size_t>(i, kSteps - 1))));
    EXPECT_EQ(s.u[1], diag - y0);
  }
}

TEST_F(RecombineTest, TerminalValueIsExact) {
  const PathBundle& b = *bundle_;
  const double t = b.grid().horizon();
  const RecombinedSlice s = recombine_yzu(*sol_, b, *family_, t);
  const auto x = recombine_x(b, *family_, t);
  for (std::size_t m = 0; m < b.paths(); ++m) ASSERT_EQ(s.y[m], model_.terminal(x[m]));
}

TEST_F(RecombineTest, UVanishesAfterJump) {
  const PathBundle& b = *bundle_;
  for (std::size_t i = 0; i <= kSteps; ++i) {
    const double t = b.grid().time(i);
    const RecombinedSlice s = recombine_yzu(*sol_, b, *family_, t);
    for (std::size_t m = 0; m < b.paths(); ++m) {
      if (!b.tau(m).pending_at(t)) {
        ASSERT_EQ(s.u[m], 0.0);
      }
    }
  }
}

TEST(RecombineYzu, ConstantModelIsTrivialEverywhere) {
  const ModelSpec m = builtin_model("CONST", {{"g0", 2.0}});
  const PathBundle b = simulated(m, 4, 2000, 14);
  BackwardConfig cfg;
  cfg.mode = BackwardMode::quadrature;
  cfg.oracle.mesh_nodes = 101;
  const BackwardFamilySolution sol = solve_backward(m, b, cfg);
  const X1Family family = euler_x1_family(m, b);
  for (std::size_t i = 0; i <= 4; ++i) {
    const RecombinedSlice s = recombine_yzu(sol, b, family, b.grid().time(i));
    for (std::size_t k = 0; k < b.paths(); ++k) {
      ASSERT_NEAR(s.y[k], 2.0, 1e-14);
      ASSERT_NEAR(s.z[k], 0.0, 1e-14);
      ASSERT_NEAR(s.u[k], 0.0, 1e-14);
    }
  }
}

TEST(SolveBackward, DeterministicAcrossRuns) {
  const ModelSpec m = builtin_model("TRIG", {});
  const PathBundle b = simulated(m, 8, 6000, 15);
  const InitialValues a = initial_values(m, solve_backward(m, b, lsmc(3)));
  const InitialValues c = initial_values(m, solve_backward(m, b, lsmc(3)));
  EXPECT_EQ(a.y.value, c.y.value);
  EXPECT_EQ(a.z.value, c.z.value);
  EXPECT_EQ(a.u.value, c.u.value);
}

TEST(SolveBackward, RequiresForwardPaths) {
  const ModelSpec m = builtin_model("LIN", {});
  const PathBundle b = simulate_increments(uniform_grid(4, 1.0), 100, 1, m.density);
  EXPECT_THROW(solve_backward(m, b, lsmc(1)), ConfigError);
}

}  // namespace
}  // namespace jumpbsde
