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

#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "jumpbsde/errors.hpp"

namespace jumpbsde {

/// Law of the jump time: a deterministic density gamma on [0, inf) and its
/// survival function S(t) = P[tau > t]. The jump time is independent of the
/// Brownian motion, so the intensity before the jump is gamma(t) / S(t).
class DensityModel {
 public:
  using Function = std::function<double(double)>;

  /// gamma(theta) = rate * exp(-rate * theta).
  static DensityModel exponential(double rate) {
    if (!(rate > 0.0)) {
      throw ConfigError("model::DensityModel", "exponential rate must be positive");
    }
    return DensityModel([rate](double t) { return rate * std::exp(-rate * t); },
                        [rate](double t) { return std::exp(-rate * t); });
  }

  /// Arbitrary density; the survival function is obtained by adaptive
  /// Gauss-Kronrod integration. Throws if gamma does not integrate to one.
  static DensityModel from_density(Function gamma) {
    const double mass = integrate(gamma, 0.0, std::numeric_limits<double>::infinity());
    if (!std::isfinite(mass) || std::abs(mass - 1.0) > 1e-8) {
      throw ConfigError("model::DensityModel",
                        "density is not integrable to one (mass " + std::to_string(mass) + ")");
    }
    auto shared = std::make_shared<Function>(std::move(gamma));
    return DensityModel([shared](double t) { return (*shared)(t); },
                        [shared](double t) {
                          return integrate(*shared, t, std::numeric_limits<double>::infinity());
                        });
  }

  DensityModel(Function density, Function survival)
      : density_(std::move(density)), survival_(std::move(survival)) {}

  double density(double theta) const { return density_(theta); }
  double survival(double t) const { return survival_(t); }
  double cdf(double t) const { return 1.0 - survival_(t); }

  /// Compensator rate of H_t = 1{tau <= t}: gamma(t)/S(t) while alive, else 0.
  double intensity(double t, bool alive) const {
    if (!alive) return 0.0;
    const double s = survival_(t);
    if (!(s > 0.0)) {
      throw DomainError("model::intensity", "survival vanished before horizon");
    }
    return density_(t) / s;
  }

 private:
  static double integrate(const Function& f, double a, double b) {
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, a, b, 15, 1e-13);
  }

  Function density_;
  Function survival_;
};

/// A jump time, or the sentinel meaning the jump happens after the horizon.
class JumpTime {
 public:
  static JumpTime at(double tau) { return JumpTime(tau); }
  static JumpTime after_horizon() { return JumpTime(std::numeric_limits<double>::infinity()); }

  bool finite() const noexcept { return std::isfinite(value_); }
  /// The jump time; +inf for the after-horizon sentinel.
  double value() const noexcept { return value_; }

  /// tau <= t, i.e. H_t = 1.
  bool occurred_by(double t) const noexcept { return value_ <= t; }
  /// t < tau.
  bool alive_at(double t) const noexcept { return t < value_; }
  /// t <= tau; the left-limit indicator carried by Z and U.
  bool pending_at(double t) const noexcept { return t <= value_; }

  friend bool operator==(const JumpTime&, const JumpTime&) = default;

 private:
  explicit JumpTime(double v) : value_(v) {}
  double value_;
};

/// Inverse-CDF draw of the jump time from a uniform u in (0, 1).
inline JumpTime sample_jump_time(const DensityModel& dm, double horizon, double u) {
  if (!(u > 0.0 && u < 1.0)) {
    throw DomainError("model::sample_jump_time", "uniform variate outside (0, 1)");
  }
  if (!(u < dm.cdf(horizon))) return JumpTime::after_horizon();
  double lo = 0.0;
  double hi = horizon;
  while (hi - lo > 1e-12) {
    const double mid = 0.5 * (lo + hi);
    if (dm.cdf(mid) < u) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return JumpTime::at(0.5 * (lo + hi));
}

/// Parameters of the linear model, which has a closed-form solution.
struct LinearParams {
  double x0 = 1.0;
  double sigma = 0.5;
  double beta = 0.3;
  double lambda = 1.0;
  double horizon = 1.0;
};

/// Lipschitz constants declared by a model, in the state for the forward
/// coefficients and jointly over (y, z, u) for the generator.
struct LipschitzBounds {
  double drift = 0.0;
  double diffusion = 0.0;
  double jump = 0.0;
  double generator = 0.0;
};

/// A decoupled forward-backward SDE with a single jump:
///   dX = b dt + sigma dW + beta dH,
///   -dY = f(t, X, Y, Z, (1-H)U) dt - Z dW - U dH,  Y_T = g(X_T).
struct ModelSpec {
  using Coefficient = std::function<double(double, double)>;
  using Terminal = std::function<double(double)>;
  using Generator = std::function<double(double, double, double, double, double)>;

  std::string name;
  Coefficient drift;
  Coefficient diffusion;
  Coefficient jump;
  Terminal terminal;
  /// f(t, x, y, z, u)
  Generator generator;
  double horizon = 1.0;
  double x0 = 0.0;
  DensityModel density = DensityModel::exponential(1.0);
  LipschitzBounds lipschitz;
  /// Sup norms of sigma, |beta| and |b| over the state space.
  double sigma_max = 0.0;
  double jump_max = 0.0;
  double drift_max = 0.0;
  /// Set when the model has a closed-form solution.
  std::optional<LinearParams> closed_form;
  /// Exact post-jump value Y^1_t(t) at the post-jump state, when known.
  std::function<double(double, double)> exact_post_jump;
  /// Resolved parameters, defaults included.
  std::map<std::string, double> params;
};

struct ParamSpec {
  std::string key;
  std::optional<double> default_value;
  std::string description;
};

struct ModelInfo {
  std::string name;
  std::string description;
  std::vector<ParamSpec> params;
};

inline const std::vector<ModelInfo>& builtin_models() {
  static const std::vector<ModelInfo> models = {
      {"CONST",
       "b, sigma constant; beta = 0; g = g0; f = 0. Exact solution Y = g0, Z = U = 0.",
       {{"g0", std::nullopt, "terminal value"},
        {"b", 0.0, "constant drift"},
        {"sigma", 0.2, "constant diffusion"},
        {"x0", 1.0, "initial state"},
        {"lambda", 1.0, "exponential jump-time rate"},
        {"T", 1.0, "horizon"}}},
      {"LIN",
       "b = 0, sigma = sigma0, beta = beta0, g(x) = x, f = lambda0 * u. Closed form "
       "Y0_t = x + beta0 (1 - exp(-lambda0 (T - t))). g is unbounded.",
       {{"x0", 1.0, "initial state"},
        {"sigma", 0.5, "constant diffusion sigma0"},
        {"beta", 0.3, "constant jump size beta0"},
        {"lambda", 1.0, "exponential jump-time rate lambda0"},
        {"T", 1.0, "horizon"}}},
      {"TRIG",
       "b = 0.1 cos x, sigma = 0.2 + 0.1 sin x, beta = beta0 cos x, g = tanh, "
       "f = 0.5 tanh(y) + 0.3 z + lambda0 u.",
       {{"x0", 1.0, "initial state"},
        {"beta", 0.3, "jump amplitude beta0"},
        {"lambda", 1.0, "exponential jump-time rate lambda0"},
        {"T", 1.0, "horizon"}}},
  };
  return models;
}

inline const ModelInfo& model_info(const std::string& name) {
  for (const auto& info : builtin_models()) {
    if (info.name == name) return info;
  }
  throw ConfigError("model::builtin_model", "unknown model '" + name + "'");
}

/// Builds one of the registered test models. Unknown parameters and missing
/// parameters without a default are configuration errors.
inline ModelSpec builtin_model(const std::string& name, const std::map<std::string, double>& given) {
  const ModelInfo& info = model_info(name);
  std::map<std::string, double> p;
  for (const auto& spec : info.params) {
    if (auto it = given.find(spec.key); it != given.end()) {
      p[spec.key] = it->second;
    } else if (spec.default_value) {
      p[spec.key] = *spec.default_value;
    } else {
      throw ConfigError("model::builtin_model",
                        "model " + name + " requires parameter '" + spec.key + "'");
    }
  }
  for (const auto& [key, value] : given) {
    if (!p.contains(key)) {
      throw ConfigError("model::builtin_model",
                        "model " + name + " has no parameter '" + key + "'");
    }
  }
  for (const auto& [key, value] : p) {
    if (!std::isfinite(value)) {
      throw ConfigError("model::builtin_model", "parameter '" + key + "' is not finite");
    }
  }
  if (!(p.at("T") > 0.0)) throw ConfigError("model::builtin_model", "T must be positive");
  if (!(p.at("lambda") > 0.0)) throw ConfigError("model::builtin_model", "lambda must be positive");

  ModelSpec m;
  m.name = name;
  m.params = p;
  m.horizon = p.at("T");
  m.x0 = p.at("x0");
  m.density = DensityModel::exponential(p.at("lambda"));

  if (name == "CONST") {
    const double b = p.at("b");
    const double sigma = p.at("sigma");
    const double g0 = p.at("g0");
    m.drift = [b](double, double) { return b; };
    m.diffusion = [sigma](double, double) { return sigma; };
    m.jump = [](double, double) { return 0.0; };
    m.terminal = [g0](double) { return g0; };
    m.generator = [](double, double, double, double, double) { return 0.0; };
    m.lipschitz = {0.0, 0.0, 0.0, 0.0};
    m.sigma_max = std::abs(sigma);
    m.drift_max = std::abs(b);
    m.exact_post_jump = [g0](double, double) { return g0; };
  } else if (name == "LIN") {
    LinearParams lp{p.at("x0"), p.at("sigma"), p.at("beta"), p.at("lambda"), p.at("T")};
    m.drift = [](double, double) { return 0.0; };
    m.diffusion = [s = lp.sigma](double, double) { return s; };
    m.jump = [b = lp.beta](double, double) { return b; };
    m.terminal = [](double x) { return x; };
    m.generator = [l = lp.lambda](double, double, double, double, double u) { return l * u; };
    m.lipschitz = {0.0, 0.0, 0.0, lp.lambda};
    m.sigma_max = std::abs(lp.sigma);
    m.jump_max = std::abs(lp.beta);
    m.closed_form = lp;
    m.exact_post_jump = [](double, double x) { return x; };
  } else {
    const double beta = p.at("beta");
    const double lambda = p.at("lambda");
    m.drift = [](double, double x) { return 0.1 * std::cos(x); };
    m.diffusion = [](double, double x) { return 0.2 + 0.1 * std::sin(x); };
    m.jump = [beta](double, double x) { return beta * std::cos(x); };
    m.terminal = [](double x) { return std::tanh(x); };
    m.generator = [lambda](double, double, double y, double z, double u) {
      return 0.5 * std::tanh(y) + 0.3 * z + lambda * u;
    };
    m.lipschitz = {0.1, 0.1, std::abs(beta), std::max({0.5, 0.3, lambda})};
    m.sigma_max = 0.3;
    m.jump_max = std::abs(beta);
    m.drift_max = 0.1;
  }
  return m;
}

}  // namespace jumpbsde
