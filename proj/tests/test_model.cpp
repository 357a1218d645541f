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

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "jumpbsde/errors.hpp"
#include "jumpbsde/model.hpp"
#include "jumpbsde/rng.hpp"

namespace jumpbsde {
namespace {

TEST(Intensity, ExponentialQuotient) {
  const DensityModel dm = DensityModel::exponential(1.0);
  EXPECT_NEAR(dm.intensity(0.4, true), 1.0, 1e-15);
  EXPECT_EQ(dm.intensity(0.4, false), 0.0);
  EXPECT_NEAR(DensityModel::exponential(2.0).intensity(0.7, true), 2.0, 1e-14);
}

TEST(Intensity, VanishingSurvivalIsDomainError) {
  // Uniform density on [0, 0.5]: S(t) = 0 beyond t = 0.5.
  const DensityModel dm([](double t) { return t <= 0.5 ? 2.0 : 0.0; },
                        [](double t) { return std::max(0.0, 1.0 - 2.0 * t); });
  EXPECT_NO_THROW(dm.intensity(0.25, true));
  EXPECT_THROW(dm.intensity(0.75, true), DomainError);
}

TEST(Intensity, TimesSurvivalIsDensity) {
  const DensityModel dm = DensityModel::exponential(1.7);
  for (double t = 0.0; t <= 1.0; t += 0.05) {
    EXPECT_NEAR(dm.intensity(t, true) * dm.survival(t), dm.density(t), 1e-15);
  }
}

TEST(DensityModel, FromDensityMatchesExponential) {
  const DensityModel q = DensityModel::from_density([](double t) { return std::exp(-t); });
  for (double t : {0.0, 0.3, 1.0, 2.5}) EXPECT_NEAR(q.survival(t), std::exp(-t), 1e-10);
  EXPECT_NEAR(q.intensity(0.4, true), 1.0, 1e-9);
}

TEST(DensityModel, NonNormalizedDensityIsConfigError) {
  EXPECT_THROW(DensityModel::from_density([](double t) { return 2.0 * std::exp(-t); }), ConfigError);
  EXPECT_THROW(DensityModel::from_density([](double t) { return 1.0 / (1.0 + t); }), ConfigError);
  EXPECT_THROW(DensityModel::exponential(0.0), ConfigError);
}

TEST(DensityModel, SurvivalMonotoneAndStartsAtOne) {
  const DensityModel dm =
      DensityModel::from_density([](double t) { return t * std::exp(-t); });  // Gamma(2, 1)
  EXPECT_NEAR(dm.survival(0.0), 1.0, 1e-10);
  double previous = 1.0 + 1e-12;
  for (double t = 0.0; t <= 1.0; t += 0.01) {
    const double s = dm.survival(t);
    EXPECT_LE(s, previous);
    previous = s;
  }
}

TEST(SampleJumpTime, InvertsExponentialCdf) {
  const DensityModel dm = DensityModel::exponential(1.0);
  const JumpTime tau = sample_jump_time(dm, 1.0, 1.0 - std::exp(-0.5));
  ASSERT_TRUE(tau.finite());
  EXPECT_NEAR(tau.value(), 0.5, 1e-11);
}

TEST(SampleJumpTime, BeyondHorizonMassGivesSentinel) {
  const DensityModel dm = DensityModel::exponential(1.0);
  const JumpTime tau = sample_jump_time(dm, 1.0, 0.99);
  EXPECT_FALSE(tau.finite());
  EXPECT_EQ(tau, JumpTime::after_horizon());
  EXPECT_FALSE(tau.occurred_by(1.0));
  EXPECT_TRUE(tau.alive_at(1.0));
}

TEST(SampleJumpTime, SmallUniformGivesEarlyJump) {
  const DensityModel dm = DensityModel::exponential(1.0);
  const JumpTime tau = sample_jump_time(dm, 1.0, 1e-9);
  ASSERT_TRUE(tau.finite());
  EXPECT_GE(tau.value(), 0.0);
  EXPECT_LT(tau.value(), 1e-8);
}

TEST(SampleJumpTime, UniformOutsideOpenIntervalIsError) {
  const DensityModel dm = DensityModel::exponential(1.0);
  EXPECT_THROW(sample_jump_time(dm, 1.0, 0.0), DomainError);
  EXPECT_THROW(sample_jump_time(dm, 1.0, 1.0), DomainError);
}

TEST(SampleJumpTime, DeterministicInU) {
  const DensityModel dm = DensityModel::exponential(1.3);
  EXPECT_EQ(sample_jump_time(dm, 1.0, 0.3), sample_jump_time(dm, 1.0, 0.3));
}

TEST(SampleJumpTime, FiniteJumpFrequencyMatchesCdf) {
  const DensityModel dm = DensityModel::exponential(1.0);
  const CounterRng rng(99);
  const int count = 100000;
  int finite = 0;
  for (int m = 0; m < count; ++m) {
    finite += sample_jump_time(dm, 1.0, rng.uniform(m, 0, Channel::jump_time)).finite() ? 1 : 0;
  }
  const double p = dm.cdf(1.0);
  EXPECT_NEAR(static_cast<double>(finite) / count, p, 4.0 * std::sqrt(p * (1.0 - p) / count));
}

TEST(SampleJumpTime, EmpiricalCdfWithinKolmogorovSmirnovBand) {
  const DensityModel dm = DensityModel::from_density([](double t) { return t * std::exp(-t); });
  const double horizon = 2.0;
  const CounterRng rng(5);
  const int count = 100000;
  std::vector<double> draws;
  draws.reserve(count);
  for (int m = 0; m < count; ++m) {
    draws.push_back(sample_jump_time(dm, horizon, rng.uniform(m, 0, Channel::jump_time)).value());
  }
  std::sort(draws.begin(), draws.end());
  double ks = 0.0;
  for (int k = 0; k < count; ++k) {
    if (!std::isfinite(draws[k])) break;
    const double f = dm.cdf(draws[k]);
    ks = std::max({ks, std::abs(f - static_cast<double>(k) / count),
                   std::abs(f - static_cast<double>(k + 1) / count)});
  }
  EXPECT_LT(ks, 1.628 / std::sqrt(static_cast<double>(count)));
}

TEST(JumpTime, IndicatorConventionsAtTau) {
  const JumpTime tau = JumpTime::at(0.5);
  EXPECT_TRUE(tau.occurred_by(0.5));
  EXPECT_FALSE(tau.alive_at(0.5));
  EXPECT_TRUE(tau.pending_at(0.5));
  EXPECT_FALSE(tau.pending_at(0.5000001));
  EXPECT_TRUE(tau.alive_at(0.4999999));
}

TEST(BuiltinModel, ConstHasTrivialSolutionData) {
  const ModelSpec m = builtin_model("CONST", {{"g0", 2.0}});
  EXPECT_EQ(m.terminal(-3.0), 2.0);
  EXPECT_EQ(m.generator(0.3, 1.0, 2.0, 0.5, 0.7), 0.0);
  EXPECT_EQ(m.jump(0.2, 5.0), 0.0);
  EXPECT_FALSE(m.closed_form.has_value());
}

TEST(BuiltinModel, LinearModelCoefficients) {
  const ModelSpec m = builtin_model("LIN", {{"x0", 1.0}, {"sigma", 0.5}, {"beta", 0.3},
                                            {"lambda", 1.0}, {"T", 1.0}});
  ASSERT_TRUE(m.closed_form.has_value());
  EXPECT_EQ(m.drift(0.1, 4.0), 0.0);
  EXPECT_EQ(m.diffusion(0.1, 4.0), 0.5);
  EXPECT_EQ(m.jump(0.1, 4.0), 0.3);
  EXPECT_EQ(m.terminal(1.25), 1.25);
  EXPECT_EQ(m.generator(0.0, 0.0, 9.0, 9.0, 0.2), 0.2);
  EXPECT_NEAR(m.density.intensity(0.3, true), 1.0, 1e-15);
  EXPECT_EQ(m.lipschitz.generator, 1.0);
}

TEST(BuiltinModel, TrigCoefficients) {
  const ModelSpec m = builtin_model("TRIG", {});
  const double x = 0.7;
  EXPECT_DOUBLE_EQ(m.drift(0.0, x), 0.1 * std::cos(x));
  EXPECT_DOUBLE_EQ(m.diffusion(0.0, x), 0.2 + 0.1 * std::sin(x));
  EXPECT_DOUBLE_EQ(m.jump(0.0, x), 0.3 * std::cos(x));
  EXPECT_DOUBLE_EQ(m.terminal(x), std::tanh(x));
  EXPECT_DOUBLE_EQ(m.generator(0.0, x, 0.2, 0.1, 0.05), 0.5 * std::tanh(0.2) + 0.03 + 0.05);
}

TEST(BuiltinModel, DefaultsAreFilledAndRecorded) {
  const ModelSpec m = builtin_model("LIN", {{"beta", 0.0}});
  EXPECT_EQ(m.params.at("beta"), 0.0);
  EXPECT_EQ(m.params.at("sigma"), 0.5);
  EXPECT_EQ(m.jump(0.0, 1.0), 0.0);
}

TEST(BuiltinModel, Errors) {
  EXPECT_THROW(builtin_model("QUAD", {}), ConfigError);
  EXPECT_THROW(builtin_model("CONST", {}), ConfigError);
  EXPECT_THROW(builtin_model("LIN", {{"sigmaa", 0.5}}), ConfigError);
  EXPECT_THROW(builtin_model("LIN", {{"sigma", std::numeric_limits<double>::quiet_NaN()}}),
               ConfigError);
  EXPECT_THROW(builtin_model("LIN", {{"T", -1.0}}), ConfigError);
}

TEST(BuiltinModel, RegistryListsAllModels) {
  std::vector<std::string> names;
  for (const auto& info : builtin_models()) names.push_back(info.name);
  EXPECT_EQ(names, (std::vector<std::string>{"CONST", "LIN", "TRIG"}));
  EXPECT_THROW(model_info("nope"), ConfigError);
}

}  // namespace
}  // namespace jumpbsde
