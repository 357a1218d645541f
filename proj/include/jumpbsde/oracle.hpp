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
#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jumpbsde/errors.hpp"
#include "jumpbsde/model.hpp"
#include "jumpbsde/parallel.hpp"
#include "jumpbsde/timegrid.hpp"

// Reference solutions. Nothing here depends on the regression or backward
// modules: the implicit step is solved by a separate fixed-point loop.

namespace jumpbsde {

/// (Y, Z, U) at one time and state.
struct Triple {
  double y = 0.0;
  double z = 0.0;
  double u = 0.0;
};

/// Closed-form solution of the LIN model. The no-jump branch is
/// Y0(t, x) = x + beta (1 - exp(-lambda (T - t))); after the jump Y1(t, x) = x
/// where x already includes the jump. Z = sigma on both branches and
/// U(t) = beta exp(-lambda (T - t)) before the jump, 0 after.
inline Triple linear_analytic(const LinearParams& p, double t, double x, bool jumped) {
  if (jumped) return {x, p.sigma, 0.0};
  const double tail = p.beta * std::exp(-p.lambda * (p.horizon - t));
  return {x + p.beta - tail, p.sigma, tail};
}

/// Nodes and weights for E[h(xi)], xi ~ N(0, 1), by Golub-Welsch on the
/// Jacobi matrix of the probabilists' Hermite polynomials.
struct GaussHermiteRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  explicit GaussHermiteRule(int count) {
    if (count < 1) throw ConfigError("oracle::GaussHermiteRule", "node count must be positive");
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(count, count);
    for (int k = 1; k < count; ++k) {
      jacobi(k - 1, k) = jacobi(k, k - 1) = std::sqrt(static_cast<double>(k));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
    nodes.resize(static_cast<std::size_t>(count));
    weights.resize(static_cast<std::size_t>(count));
    for (int k = 0; k < count; ++k) {
      nodes[static_cast<std::size_t>(k)] = eig.eigenvalues()[k];
      const double v = eig.eigenvectors()(0, k);
      weights[static_cast<std::size_t>(k)] = v * v;
    }
  }
};

/// Function on a uniform state mesh: piecewise-cubic interpolation through
/// the four nearest nodes inside [lo, hi], linear extrapolation from the
/// boundary pair outside.
class MeshFunction {
 public:
  MeshFunction(double lo, double hi, std::vector<double> values)
      : lo_(lo), hi_(hi), values_(std::move(values)),
        step_((hi - lo) / static_cast<double>(values_.size() - 1)) {}

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  std::size_t size() const noexcept { return values_.size(); }
  double node(std::size_t k) const noexcept { return lo_ + step_ * static_cast<double>(k); }
  double value(std::size_t k) const noexcept { return values_[k]; }

  double operator()(double x) const noexcept {
    const double u = (x - lo_) / step_;
    const auto last = static_cast<double>(values_.size() - 2);
    const double k = std::clamp(std::floor(u), 0.0, last);
    const auto i = static_cast<std::size_t>(k);
    const double frac = u - k;
    if (frac < 0.0 || frac > 1.0 || values_.size() < 4) {
      return values_[i] + frac * (values_[i + 1] - values_[i]);
    }
    const std::size_t s = std::min(i > 0 ? i - 1 : 0, values_.size() - 4);
    const double t = u - static_cast<double>(s);
    const double* v = values_.data() + s;
    const double t1 = t - 1.0;
    const double t2 = t - 2.0;
    const double t3 = t - 3.0;
    return (-v[0] * t1 * t2 * t3 + 3.0 * v[1] * t * t2 * t3 - 3.0 * v[2] * t * t1 * t3 +
            v[3] * t * t1 * t2) /
           6.0;
  }

 private:
  double lo_;
  double hi_;
  std::vector<double> values_;
  double step_;
};

struct QuadratureConfig {
  int gh_nodes = 16;
  int mesh_nodes = 2001;
  /// Mesh half-width in diffusion standard deviations over the horizon.
  double width_sd = 6.0;
  double picard_tol = 1e-12;
  int picard_max = 50;
};

/// Mesh functions Y_i, Z_i for i >= first_index (Z up to n-1).
class QuadratureSolution {
 public:
  QuadratureSolution(std::size_t first, std::vector<MeshFunction> y, std::vector<MeshFunction> z)
      : first_(first), y_(std::move(y)), z_(std::move(z)) {}

  std::size_t first_index() const noexcept { return first_; }
  std::size_t last_index() const noexcept { return first_ + y_.size() - 1; }
  const MeshFunction& y(std::size_t i) const { return y_.at(i - first_); }
  const MeshFunction& z(std::size_t i) const { return z_.at(i - first_); }

 private:
  std::size_t first_;
  std::vector<MeshFunction> y_;
  std::vector<MeshFunction> z_;
};

/// Jump-gap input of the generator at (grid index, state, y).
using JumpGap = std::function<double(std::size_t, double, double)>;

namespace detail {

inline double upper_normal_tail(double a) { return 0.5 * std::erfc(a / std::sqrt(2.0)); }

struct MeshRange {
  double lo;
  double hi;
};

inline MeshRange oracle_mesh(const ModelSpec& model, const QuadratureConfig& cfg) {
  const double spread = model.sigma_max * std::sqrt(model.horizon);
  const double shift = model.jump_max + model.drift_max * model.horizon;
  const double half = std::max(cfg.width_sd * spread + shift, 1.0);
  if (spread > 0.0) {
    // Reflection bound P[sup |sigma W| > a] <= 4 P[N > a / (sigma sqrt T)].
    const double escape = 4.0 * upper_normal_tail((half - shift) / spread);
    if (escape > 1e-6) {
      throw ConfigError("oracle::quadrature_dp",
                        "mesh too narrow: escaping mass bound " + std::to_string(escape));
    }
  }
  return {model.x0 - half, model.x0 + half};
}

inline void check_config(const QuadratureConfig& cfg) {
  if (cfg.gh_nodes < 8) throw ConfigError("oracle::quadrature_dp", "gh_nodes must be at least 8");
  if (cfg.mesh_nodes < 3) throw ConfigError("oracle::quadrature_dp", "mesh_nodes must be at least 3");
  if (!(cfg.picard_tol > 0.0) || cfg.picard_max < 1) {
    throw ConfigError("oracle::quadrature_dp", "invalid Picard settings");
  }
}

/// Backward recursion from Y_n = g down to index `first`. `gap` supplies the
/// u-argument of f; `lipschitz` is the contraction constant of y -> f.
inline QuadratureSolution backward_on_mesh(const ModelSpec& model, const TimeGrid& grid,
                                           std::size_t first, const QuadratureConfig& cfg,
                                           const JumpGap& gap, double lipschitz) {
  check_config(cfg);
  const MeshRange range = oracle_mesh(model, cfg);
  const GaussHermiteRule rule(cfg.gh_nodes);
  const std::size_t n = grid.steps();
  const auto nodes = static_cast<std::size_t>(cfg.mesh_nodes);
  const std::size_t layers = n + 1 - first;

  std::vector<MeshFunction> ys;
  std::vector<MeshFunction> zs;
  ys.reserve(layers);
  std::vector<double> values(nodes);
  MeshFunction probe(range.lo, range.hi, std::vector<double>(nodes, 0.0));
  for (std::size_t k = 0; k < nodes; ++k) values[k] = model.terminal(probe.node(k));
  ys.emplace_back(range.lo, range.hi, values);

  for (std::size_t i = n; i > first; --i) {
    const double t = grid.time(i - 1);
    const double dt = grid.dt(i);
    if (!(lipschitz * dt < 1.0)) {
      throw AdmissibilityError("oracle::quadrature_dp", "grid too coarse for implicit step");
    }
    const double sqdt = std::sqrt(dt);
    const MeshFunction& next = ys.back();
    std::vector<double> yv(nodes);
    std::vector<double> zv(nodes);
    parallel_for(nodes, [&](std::size_t k) {
      const double x = probe.node(k);
      const double mean = x + model.drift(t, x) * dt;
      const double vol = model.diffusion(t, x) * sqdt;
      double ey = 0.0;
      double eyw = 0.0;
      for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
        const double v = next(mean + vol * rule.nodes[q]);
        ey += rule.weights[q] * v;
        eyw += rule.weights[q] * v * rule.nodes[q];
      }
      const double z = eyw / sqdt;
      double y = ey;
      int it = 0;
      for (;; ++it) {
        const double updated = ey + dt * model.generator(t, x, y, z, gap(i - 1, x, y));
        const double change = std::abs(updated - y);
        y = updated;
        if (change <= cfg.picard_tol) break;
        if (it + 1 >= cfg.picard_max) {
          throw NumericalError("oracle::quadrature_dp",
                               "fixed point did not converge, residual " + std::to_string(change));
        }
      }
      yv[k] = y;
      zv[k] = z;
    });
    ys.emplace_back(range.lo, range.hi, std::move(yv));
    zs.emplace_back(range.lo, range.hi, std::move(zv));
  }
  std::reverse(ys.begin(), ys.end());
  std::reverse(zs.begin(), zs.end());
  return QuadratureSolution(first, std::move(ys), std::move(zs));
}

}  // namespace detail

/// Exact-expectation realisation of the backward schemes on a state mesh.
/// With a jump index j this is the post-jump recursion (u-argument 0),
/// defined for i >= j; on the mesh it does not depend on j. Without a jump
/// index it is the no-jump recursion, whose jump gap reads the post-jump
/// solution at x + beta(t_i, x).
inline QuadratureSolution quadrature_dp(const ModelSpec& model, const TimeGrid& grid,
                                        std::optional<std::size_t> jump_index,
                                        const QuadratureConfig& cfg = {}) {
  const double k = model.lipschitz.generator;
  if (jump_index) {
    if (*jump_index > grid.steps()) {
      throw ConfigError("oracle::quadrature_dp", "jump index beyond the grid");
    }
    return detail::backward_on_mesh(model, grid, *jump_index, cfg,
                                    [](std::size_t, double, double) { return 0.0; }, k);
  }
  const QuadratureSolution post = quadrature_dp(model, grid, std::size_t{0}, cfg);
  const JumpGap gap = [&](std::size_t i, double x, double y) {
    return post.y(i)(x + model.jump(grid.time(i), x)) - y;
  };
  return detail::backward_on_mesh(model, grid, 0, cfg, gap, 2.0 * k);
}

/// No-jump recursion with a caller-supplied diagonal Y1_{t_i}(t_i) as a
/// function of (index, pre-jump state).
inline QuadratureSolution quadrature_dp_with_diagonal(
    const ModelSpec& model, const TimeGrid& grid,
    const std::function<double(std::size_t, double)>& diagonal, const QuadratureConfig& cfg = {}) {
  const JumpGap gap = [&](std::size_t i, double x, double y) { return diagonal(i, x) - y; };
  return detail::backward_on_mesh(model, grid, 0, cfg, gap, 2.0 * model.lipschitz.generator);
}

}  // namespace jumpbsde
