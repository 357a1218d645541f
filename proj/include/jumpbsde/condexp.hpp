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

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "jumpbsde/errors.hpp"
#include "jumpbsde/parallel.hpp"

namespace jumpbsde {

/// Largest supported polynomial degree; keeps the power-sum buffers on the stack.
inline constexpr int kMaxDegree = 15;

namespace detail {

/// Calls fn(std::integral_constant<std::size_t, p>) so per-path kernels see
/// the basis size at compile time.
template <class Fn>
auto with_basis_size(std::size_t p, Fn&& fn) {
  return [&]<std::size_t... P>(std::index_sequence<P...>) {
    using Result = decltype(fn(std::integral_constant<std::size_t, 1>{}));
    std::optional<Result> out;
    ((p == P + 1 ? (out.emplace(fn(std::integral_constant<std::size_t, P + 1>{})), true) : false) ||
     ...);
    return std::move(*out);
  }(std::make_index_sequence<kMaxDegree + 1>{});
}

}  // namespace detail

/// Centered monomials ((x - shift) / scale)^k, k = 0..degree.
struct Basis {
  int degree = 3;
  double shift = 0.0;
  double scale = 1.0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(degree) + 1; }

  double normalized(double x) const noexcept { return (x - shift) / scale; }

  /// Shift and scale from the sample mean and standard deviation; a
  /// degenerate sample keeps scale 1.
  static Basis centered(int degree, std::span<const double> states) {
    if (degree < 0 || degree > kMaxDegree) {
      throw ConfigError("condexp::Basis", "degree must lie in [0, 15]");
    }
    const auto sums = parallel_sum(states.size(), 1, [&](std::size_t b, std::size_t e, double* acc) {
      for (std::size_t m = b; m < e; ++m) acc[0] += states[m];
    });
    const double mean = sums[0] / static_cast<double>(states.size());
    const auto sq = parallel_sum(states.size(), 1, [&](std::size_t b, std::size_t e, double* acc) {
      for (std::size_t m = b; m < e; ++m) acc[0] += (states[m] - mean) * (states[m] - mean);
    });
    const double sd = std::sqrt(sq[0] / static_cast<double>(states.size()));
    const bool degenerate = !(sd > 1e-12 * std::max(1.0, std::abs(mean))) || !std::isfinite(sd);
    return Basis{degree, mean, degenerate ? 1.0 : sd};
  }
};

/// A function x -> sum_k c_k phi_k(x) produced by least squares, together
/// with the coefficient covariance used for prediction standard errors.
class FittedFunction {
 public:
  FittedFunction() = default;
  FittedFunction(Basis basis, std::vector<double> coeffs, Eigen::MatrixXd covariance = {})
      : basis_(basis), coeffs_(std::move(coeffs)), covariance_(std::move(covariance)) {}

  /// Constant function, e.g. for degenerate targets.
  static FittedFunction constant(double c) { return FittedFunction(Basis{0, 0.0, 1.0}, {c}); }

  const Basis& basis() const noexcept { return basis_; }
  std::span<const double> coeffs() const noexcept { return coeffs_; }

  double operator()(double x) const noexcept {
    const double z = basis_.normalized(x);
    double value = 0.0;
    for (std::size_t k = coeffs_.size(); k-- > 0;) value = value * z + coeffs_[k];
    return value;
  }

  /// Standard error of the fitted value at x under homoscedastic residuals.
  double standard_error(double x) const {
    if (covariance_.size() == 0) return 0.0;
    const double z = basis_.normalized(x);
    Eigen::VectorXd phi(static_cast<Eigen::Index>(coeffs_.size()));
    double power = 1.0;
    for (Eigen::Index k = 0; k < phi.size(); ++k, power *= z) phi[k] = power;
    return std::sqrt(std::max(0.0, phi.dot(covariance_ * phi)));
  }

 private:
  Basis basis_;
  std::vector<double> coeffs_;
  Eigen::MatrixXd covariance_;
};

inline double evaluate(const FittedFunction& fn, double x) { return fn(x); }

/// Normal equations (Phi^T Phi + ridge I) c = Phi^T (y - mean(y)) for a fixed design,
/// factored once and reused for several target vectors.
class RegressionDesign {
 public:
  RegressionDesign(const Basis& basis, std::span<const double> states, double ridge)
      : basis_(basis), states_(states) {
    const std::size_t p = basis.size();
    if (ridge < 0.0 || !std::isfinite(ridge)) {
      throw ConfigError("condexp::fit_least_squares", "ridge must be nonnegative");
    }
    if (states.size() <= p) {
      throw ConfigError("condexp::fit_least_squares", "need more samples than basis functions");
    }
    // Power sums sum_m z_m^k, k = 0..2d, give the Hankel Gram matrix.
    const auto sums = detail::with_basis_size(p, [&](auto size) {
      constexpr std::size_t w = 2 * decltype(size)::value - 1;
      return parallel_sum(states.size(), w, [&](std::size_t b, std::size_t e, double* acc) {
        std::array<double, w> local{};
        for (std::size_t m = b; m < e; ++m) {
          const double z = basis_.normalized(states[m]);
          double power = 1.0;
          for (std::size_t k = 0; k < w; ++k, power *= z) local[k] += power;
        }
        std::copy(local.begin(), local.end(), acc);
      });
    });
    gram_.resize(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    for (std::size_t r = 0; r < p; ++r) {
      for (std::size_t c = 0; c < p; ++c) gram_(r, c) = sums[r + c];
    }
    Eigen::MatrixXd system = gram_;
    system.diagonal().array() += ridge;
    ldlt_.compute(system);
    const Eigen::VectorXd d = ldlt_.vectorD();
    const double dmax = d.cwiseAbs().maxCoeff();
    const double dmin = d.minCoeff();
    condition_ = dmin > 0.0 ? dmax / dmin : std::numeric_limits<double>::infinity();
    const bool singular = ldlt_.info() != Eigen::Success || !(dmin > 0.0) || !std::isfinite(dmax) ||
                          (ridge == 0.0 && dmin <= 64.0 * std::numeric_limits<double>::epsilon() * dmax);
    if (singular) {
      throw EstimatorError("condexp::fit_least_squares", "Gram matrix numerically singular",
                           condition_);
    }
  }

  double condition() const noexcept { return condition_; }

  FittedFunction fit(std::span<const double> targets) const { return fit(targets, {})[0]; }

  /// Fits one or two target vectors in a single pass over the states.
  std::array<FittedFunction, 2> fit(std::span<const double> first,
                                    std::span<const double> second) const {
    const std::size_t p = basis_.size();
    const std::size_t count = first.size();
    if (count != states_.size() || (!second.empty() && second.size() != count)) {
      throw ConfigError("condexp::fit_least_squares", "states and targets differ in length");
    }
    const bool pair = !second.empty();
    // Per target: sum y z^k for k = 0..d, then sum y^2.
    const std::size_t width = (pair ? 2 : 1) * (p + 1);
    const auto sums = detail::with_basis_size(p, [&](auto size) {
      constexpr std::size_t q = decltype(size)::value;
      return parallel_sum(count, width, [&](std::size_t b, std::size_t e, double* acc) {
        std::array<double, 2 * (q + 1)> local{};
        for (std::size_t m = b; m < e; ++m) {
          const double z = basis_.normalized(states_[m]);
          const double y = first[m];
          const double w = pair ? second[m] : 0.0;
          double power = 1.0;
          for (std::size_t k = 0; k < q; ++k, power *= z) {
            local[k] += y * power;
            local[q + 1 + k] += w * power;
          }
          local[q] += y * y;
          local[2 * q + 1] += w * w;
        }
        std::copy_n(local.begin(), width, acc);
      });
    });
    std::array<FittedFunction, 2> out;
    out[0] = solve(std::span<const double>(sums.data(), p + 1), count);
    if (pair) out[1] = solve(std::span<const double>(sums.data() + p + 1, p + 1), count);
    return out;
  }

 private:
  Basis basis_;
  std::span<const double> states_;
  // The response is centered at its sample mean before solving, so the ridge
  // shrinks towards the mean rather than towards zero and constant targets
  // are reproduced to round-off.
  FittedFunction solve(std::span<const double> sums, std::size_t count) const {
    const std::size_t p = basis_.size();
    const double mean = sums[0] / static_cast<double>(count);
    Eigen::VectorXd rhs(static_cast<Eigen::Index>(p));
    for (std::size_t k = 0; k < p; ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      rhs[kk] = sums[k] - mean * gram_(0, kk);
    }
    Eigen::VectorXd c = ldlt_.solve(rhs);
    if (!c.allFinite()) {
      throw EstimatorError("condexp::fit_least_squares", "non-finite coefficients", condition_);
    }
    const double centered_ss = sums[p] - mean * sums[0];
    const double rss = std::max(0.0, centered_ss - 2.0 * c.dot(rhs) + c.dot(gram_ * c));
    const double residual_variance = rss / (static_cast<double>(count) - static_cast<double>(p));
    const auto dim = static_cast<Eigen::Index>(p);
    Eigen::MatrixXd covariance = residual_variance * ldlt_.solve(Eigen::MatrixXd::Identity(dim, dim));
    c[0] += mean;
    return FittedFunction(basis_, std::vector<double>(c.data(), c.data() + c.size()),
                          std::move(covariance));
  }

  Eigen::MatrixXd gram_;
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
  double condition_ = 1.0;
};

/// Minimizes sum_m (y_m - sum_k c_k phi_k(x_m))^2 + ridge |c - mean(y) e_0|^2.
inline FittedFunction fit_least_squares(const Basis& basis, std::span<const double> states,
                                        std::span<const double> targets, double ridge = 1e-10) {
  if (states.size() != targets.size()) {
    throw ConfigError("condexp::fit_least_squares", "states and targets differ in length");
  }
  return RegressionDesign(basis, states, ridge).fit(targets);
}

}  // namespace jumpbsde
