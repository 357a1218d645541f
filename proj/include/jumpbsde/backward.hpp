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
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jumpbsde/condexp.hpp"
#include "jumpbsde/errors.hpp"
#include "jumpbsde/forward.hpp"
#include "jumpbsde/model.hpp"
#include "jumpbsde/oracle.hpp"
#include "jumpbsde/parallel.hpp"
#include "jumpbsde/timegrid.hpp"

namespace jumpbsde {

enum class BackwardMode { lsmc, quadrature };

struct PicardSettings {
  double tol = 1e-12;
  int max_iter = 50;
};

struct BackwardConfig {
  BackwardMode mode = BackwardMode::lsmc;
  int degree = 3;
  double ridge = 1e-10;
  PicardSettings picard;
  QuadratureConfig oracle;
};

/// Solves y = e_y + f_eval(y) dt by Picard iteration from y = e_y. Requires
/// lipschitz * dt < 1 so the map is a contraction.
template <class F>
double implicit_step(F&& f_eval, double e_y, double dt, double lipschitz,
                     const PicardSettings& picard = {}) {
  if (!(lipschitz * dt < 1.0)) {
    throw AdmissibilityError("backward::implicit_step", "grid too coarse for implicit step");
  }
  double y = e_y;
  double change = 0.0;
  for (int it = 0; it < picard.max_iter; ++it) {
    const double next = e_y + f_eval(y) * dt;
    change = std::abs(next - y);
    y = next;
    if (change <= picard.tol) return y;
  }
  throw NumericalError("backward::implicit_step",
                       "Picard iteration did not converge, last residual " + std::to_string(change));
}

/// Effective no-jump generator: f with its jump-gap slot set to diag - y,
/// where diag is the same path's Y^{1,pi}_{pi(t)}(pi(t)).
inline double f_bar(const ModelSpec& model, double t, double x, double y, double z, double diag) {
  return model.generator(t, x, y, z, diag - y);
}

/// Conditional-expectation estimates that define Y and Z at one grid index:
/// Z = gradient(x), and Y solves y = expectation(x) + f(..., y, Z, .) dt.
struct RegressionLayer {
  FittedFunction expectation;
  FittedFunction gradient;
};

/// Checks the contraction condition for both branches before any work.
inline void check_admissible(const ModelSpec& model, const TimeGrid& grid) {
  if (!(2.0 * model.lipschitz.generator * grid.mesh() < 1.0)) {
    throw AdmissibilityError("backward::implicit_step", "grid too coarse for implicit step");
  }
}

namespace detail {

/// Backward regression recursion over indices first..n. `column(i)` returns
/// the states at t_i; `gen(k, m, x, y, z)` is the generator at index k for
/// path m. On return `values` holds the per-path Y at t_first.
///
/// Z is regressed on (Y_i - E_{i-1}[Y_i]) dW_i / dt_i. Subtracting the fitted
/// expectation leaves the conditional mean unchanged and removes the
/// sampling noise that Y_i itself would feed into the Z estimate.
template <class Column, class Gen>
std::vector<RegressionLayer> regression_pass(const ModelSpec& model, const PathBundle& bundle,
                                             std::size_t first, Column&& column,
                                             const BackwardConfig& cfg, double lipschitz,
                                             Gen&& gen, std::vector<double>& values) {
  const std::size_t paths = bundle.paths();
  const std::size_t n = bundle.steps();
  const TimeGrid& grid = bundle.grid();
  values.resize(paths);
  std::vector<double> weighted(paths);
  {
    const std::span<const double> terminal = column(n);
    parallel_for(paths, [&](std::size_t m) { values[m] = model.terminal(terminal[m]); });
  }
  std::vector<RegressionLayer> layers(n - first);
  for (std::size_t i = n; i > first; --i) {
    const std::size_t k = i - 1;
    const double dt = grid.dt(i);
    const std::span<const double> states = column(k);
    const Basis basis = Basis::centered(cfg.degree, states);
    const RegressionDesign design(basis, states, cfg.ridge);
    RegressionLayer layer;
    layer.expectation = design.fit(values);
    const auto dw = bundle.increments(i);
    parallel_for(paths, [&](std::size_t m) {
      weighted[m] = (values[m] - layer.expectation(states[m])) * dw[m] / dt;
    });
    layer.gradient = design.fit(weighted);
    parallel_for(paths, [&](std::size_t m) {
      const double x = states[m];
      const double z = layer.gradient(x);
      values[m] = implicit_step([&](double y) { return gen(k, m, x, y, z); },
                                layer.expectation(x), dt, lipschitz, cfg.picard);
    });
    layers[k - first] = std::move(layer);
  }
  return layers;
}

}  // namespace detail

/// Post-jump branch Y^{1,pi}_{t_i}(t_j), Z^{1,pi}_{t_i}(t_j) for j <= i.
class PostJumpBranch {
 public:
  static PostJumpBranch from_regression(ModelSpec model, TimeGrid grid, PicardSettings picard,
                                        std::vector<std::vector<RegressionLayer>> layers) {
    PostJumpBranch b(std::move(model), std::move(grid), picard);
    b.layers_ = std::move(layers);
    return b;
  }
  static PostJumpBranch from_mesh(ModelSpec model, TimeGrid grid, PicardSettings picard,
                                  QuadratureSolution mesh) {
    PostJumpBranch b(std::move(model), std::move(grid), picard);
    b.mesh_.emplace(std::move(mesh));
    return b;
  }

  bool is_mesh() const noexcept { return mesh_.has_value(); }

  double y(std::size_t i, std::size_t j, double x) const {
    if (mesh_) return mesh_->y(i)(x);
    if (i == grid_.steps()) return model_.terminal(x);
    const RegressionLayer& layer = layers_[j][i - j];
    const double t = grid_.time(i);
    const double z = layer.gradient(x);
    return implicit_step([&](double v) { return model_.generator(t, x, v, z, 0.0); },
                         layer.expectation(x), grid_.dt(i + 1), model_.lipschitz.generator,
                         picard_);
  }

  /// Defined for i <= n - 1.
  double z(std::size_t i, std::size_t j, double x) const {
    if (mesh_) return mesh_->z(i)(x);
    return layers_[j][i - j].gradient(x);
  }

  /// Regression standard errors of the conditional expectations at x.
  double y_standard_error(std::size_t i, std::size_t j, double x) const {
    if (mesh_ || i == grid_.steps()) return 0.0;
    return layers_[j][i - j].expectation.standard_error(x);
  }
  double z_standard_error(std::size_t i, std::size_t j, double x) const {
    if (mesh_) return 0.0;
    return layers_[j][i - j].gradient.standard_error(x);
  }

  /// Layers of jump index j (regression mode), entry i - j for i = j..n-1.
  std::span<const RegressionLayer> layers(std::size_t j) const { return layers_.at(j); }

 private:
  PostJumpBranch(ModelSpec model, TimeGrid grid, PicardSettings picard)
      : model_(std::move(model)), grid_(std::move(grid)), picard_(picard) {}

  ModelSpec model_;
  TimeGrid grid_;
  PicardSettings picard_;
  std::vector<std::vector<RegressionLayer>> layers_;
  std::optional<QuadratureSolution> mesh_;
};

/// No-jump branch Y^{0,pi}_{t_i}, Z^{0,pi}_{t_i}. In regression mode Y needs
/// the path's diagonal value; the mesh realisation already contains it.
class ZeroBranch {
 public:
  static ZeroBranch from_regression(ModelSpec model, TimeGrid grid, PicardSettings picard,
                                    std::vector<RegressionLayer> layers) {
    ZeroBranch b(std::move(model), std::move(grid), picard);
    b.layers_ = std::move(layers);
    return b;
  }
  static ZeroBranch from_mesh(ModelSpec model, TimeGrid grid, PicardSettings picard,
                              QuadratureSolution mesh) {
    ZeroBranch b(std::move(model), std::move(grid), picard);
    b.mesh_.emplace(std::move(mesh));
    return b;
  }

  bool is_mesh() const noexcept { return mesh_.has_value(); }

  double y(std::size_t i, double x, double diag) const {
    if (mesh_) return mesh_->y(i)(x);
    if (i == grid_.steps()) return model_.terminal(x);
    const RegressionLayer& layer = layers_[i];
    const double t = grid_.time(i);
    const double z = layer.gradient(x);
    return implicit_step([&](double v) { return f_bar(model_, t, x, v, z, diag); },
                         layer.expectation(x), grid_.dt(i + 1), 2.0 * model_.lipschitz.generator,
                         picard_);
  }

  double z(std::size_t i, double x) const {
    if (mesh_) return mesh_->z(i)(x);
    return layers_[i].gradient(x);
  }

  double y_standard_error(std::size_t i, double x) const {
    if (mesh_ || i == grid_.steps()) return 0.0;
    return layers_[i].expectation.standard_error(x);
  }
  double z_standard_error(std::size_t i, double x) const {
    if (mesh_) return 0.0;
    return layers_[i].gradient.standard_error(x);
  }

  std::span<const RegressionLayer> layers() const noexcept { return layers_; }

 private:
  ZeroBranch(ModelSpec model, TimeGrid grid, PicardSettings picard)
      : model_(std::move(model)), grid_(std::move(grid)), picard_(picard) {}

  ModelSpec model_;
  TimeGrid grid_;
  PicardSettings picard_;
  std::vector<RegressionLayer> layers_;
  std::optional<QuadratureSolution> mesh_;
};

/// Per-path diagonal Y^{1,pi}_{t_i}(t_i), evaluated at X^{1,pi}_{t_i}(t_i).
/// Stored step-major: at(m, i) = values[i * M + m].
class Diagonal {
 public:
  Diagonal() = default;
  Diagonal(std::size_t paths, std::size_t steps) : paths_(paths), values_((steps + 1) * paths) {}

  double at(std::size_t m, std::size_t i) const { return values_[i * paths_ + m]; }
  std::span<double> column(std::size_t i) { return {values_.data() + i * paths_, paths_}; }
  std::span<const double> column(std::size_t i) const {
    return {values_.data() + i * paths_, paths_};
  }
  std::size_t paths() const noexcept { return paths_; }

 private:
  std::size_t paths_ = 0;
  std::vector<double> values_;
};

struct PostJumpSolution {
  PostJumpBranch branch;
  Diagonal diagonal;
};

/// Backward scheme for (Y^1, Z^1): for each jump index j, regress on the
/// post-jump states X^{1,pi}(t_j) from t_n down to t_j with the jump-gap
/// argument of f frozen at 0. Slices are generated one j at a time.
inline PostJumpSolution solve_y1_family(const ModelSpec& model, const PathBundle& bundle,
                                        const BackwardConfig& cfg) {
  if (!bundle.has_x0()) {
    throw ConfigError("backward::solve_y1_family", "forward paths must be simulated first");
  }
  const std::size_t n = bundle.steps();
  const std::size_t paths = bundle.paths();
  const TimeGrid& grid = bundle.grid();
  Diagonal diag(paths, n);
  if (cfg.mode == BackwardMode::quadrature) {
    QuadratureConfig qc = cfg.oracle;
    qc.picard_tol = cfg.picard.tol;
    qc.picard_max = cfg.picard.max_iter;
    QuadratureSolution mesh = quadrature_dp(model, grid, std::size_t{0}, qc);
    for (std::size_t i = 0; i <= n; ++i) {
      auto column = diag.column(i);
      parallel_for(paths, [&](std::size_t m) {
        column[m] = mesh.y(i)(injected_state(model, bundle, m, i));
      });
    }
    return {PostJumpBranch::from_mesh(model, grid, cfg.picard, std::move(mesh)), std::move(diag)};
  }

  std::vector<std::vector<RegressionLayer>> layers(n + 1);
  std::vector<double> slice;
  std::vector<double> values;
  for (std::size_t j = 0; j <= n; ++j) {
    euler_x1_slice(model, bundle, j, slice);
    auto column = [&](std::size_t i) {
      return std::span<const double>(slice.data() + (i - j) * paths, paths);
    };
    auto gen = [&](std::size_t k, std::size_t, double x, double y, double z) {
      return model.generator(grid.time(k), x, y, z, 0.0);
    };
    layers[j] = detail::regression_pass(model, bundle, j, column, cfg, model.lipschitz.generator,
                                        gen, values);
    std::copy(values.begin(), values.end(), diag.column(j).begin());
  }
  return {PostJumpBranch::from_regression(model, grid, cfg.picard, std::move(layers)),
          std::move(diag)};
}

/// Backward scheme for (Y^0, Z^0) with generator f_bar fed by the per-path
/// diagonal. In quadrature mode the diagonal is read on the mesh instead.
inline ZeroBranch solve_y0(const ModelSpec& model, const PathBundle& bundle, const Diagonal& diag,
                           const BackwardConfig& cfg) {
  if (!bundle.has_x0()) {
    throw ConfigError("backward::solve_y0", "forward paths must be simulated first");
  }
  const TimeGrid& grid = bundle.grid();
  if (cfg.mode == BackwardMode::quadrature) {
    QuadratureConfig qc = cfg.oracle;
    qc.picard_tol = cfg.picard.tol;
    qc.picard_max = cfg.picard.max_iter;
    return ZeroBranch::from_mesh(model, grid, cfg.picard, quadrature_dp(model, grid, std::nullopt, qc));
  }
  std::vector<double> values;
  auto column = [&](std::size_t i) { return bundle.x0_column(i); };
  auto gen = [&](std::size_t k, std::size_t m, double x, double y, double z) {
    return f_bar(model, grid.time(k), x, y, z, diag.at(m, k));
  };
  auto layers = detail::regression_pass(model, bundle, 0, column, cfg,
                                        2.0 * model.lipschitz.generator, gen, values);
  return ZeroBranch::from_regression(model, grid, cfg.picard, std::move(layers));
}

/// Diagonal built from the exact post-jump value Y^1_{t_i}(t_i) at
/// X^{0,pi}_{t_i} + beta.
inline Diagonal exact_diagonal(const ModelSpec& model, const PathBundle& bundle) {
  if (!model.exact_post_jump) {
    throw ConfigError("backward::solve_y0_reference", "model " + model.name + " lacks an oracle");
  }
  Diagonal diag(bundle.paths(), bundle.steps());
  for (std::size_t i = 0; i <= bundle.steps(); ++i) {
    const double t = bundle.grid().time(i);
    auto column = diag.column(i);
    parallel_for(bundle.paths(), [&](std::size_t m) {
      const double x = bundle.x0(m, i);
      column[m] = model.exact_post_jump(t, x + model.jump(t, x));
    });
  }
  return diag;
}

/// Intermediary scheme: the no-jump recursion driven by the true diagonal
/// Y^1_t(t) instead of its approximation.
struct ReferenceZeroSolution {
  ZeroBranch branch;
  Diagonal diagonal;
};

inline ReferenceZeroSolution solve_y0_reference(const ModelSpec& model, const PathBundle& bundle,
                                                const BackwardConfig& cfg) {
  Diagonal diag = exact_diagonal(model, bundle);
  if (cfg.mode == BackwardMode::quadrature) {
    const TimeGrid& grid = bundle.grid();
    QuadratureConfig qc = cfg.oracle;
    qc.picard_tol = cfg.picard.tol;
    qc.picard_max = cfg.picard.max_iter;
    auto diagonal = [&](std::size_t i, double x) {
      const double t = grid.time(i);
      return model.exact_post_jump(t, x + model.jump(t, x));
    };
    return {ZeroBranch::from_mesh(model, grid, cfg.picard,
                                  quadrature_dp_with_diagonal(model, grid, diagonal, qc)),
            std::move(diag)};
  }
  ZeroBranch branch = solve_y0(model, bundle, diag, cfg);
  return {std::move(branch), std::move(diag)};
}

/// Complete solution of the decomposed backward system.
struct BackwardFamilySolution {
  PostJumpBranch post;
  ZeroBranch zero;
  Diagonal diagonal;
};

/// Solves the post-jump family first, then the no-jump branch that depends on it.
inline BackwardFamilySolution solve_backward(const ModelSpec& model, const PathBundle& bundle,
                                             const BackwardConfig& cfg) {
  check_admissible(model, bundle.grid());
  PostJumpSolution post = solve_y1_family(model, bundle, cfg);
  ZeroBranch zero = solve_y0(model, bundle, post.diagonal, cfg);
  return {std::move(post.branch), std::move(zero), std::move(post.diagonal)};
}

struct RecombinedSlice {
  std::vector<double> y;
  std::vector<double> z;
  std::vector<double> u;
};

/// Recombination at time t:
///   Y = Y0_{pi(t)} on {t < tau},  Y1_{pi(t)}(pi(tau)) on {t >= tau};
///   Z = Z0_{pi(t)} on {t <= tau}, Z1_{pi(t)}(pi(tau)) on {t > tau};
///   U = (diag_{pi(t)} - Y0_{pi(t)}) on {t <= tau}, 0 otherwise.
/// Z at t = T uses the t_{n-1} estimate.
template <JumpStateSource Family>
RecombinedSlice recombine_yzu(const BackwardFamilySolution& sol, const PathBundle& bundle,
                              const Family& family, double t) {
  const std::size_t n = bundle.steps();
  const std::size_t i = bundle.grid().locate(t);
  const std::size_t iz = std::min(i, n - 1);
  const std::size_t paths = bundle.paths();
  RecombinedSlice out{std::vector<double>(paths), std::vector<double>(paths),
                      std::vector<double>(paths)};
  parallel_for(paths, [&](std::size_t m) {
    const JumpTime& tau = bundle.tau(m);
    const double x0 = bundle.x0(m, i);
    const double diag = sol.diagonal.at(m, i);
    const double y0 = sol.zero.y(i, x0, diag);
    if (tau.alive_at(t)) {
      out.y[m] = y0;
    } else {
      const std::size_t j = *bundle.jump_index(m);
      out.y[m] = sol.post.y(i, j, family.x1(m, i, j));
    }
    if (tau.pending_at(t)) {
      out.z[m] = sol.zero.z(iz, bundle.x0(m, iz));
      out.u[m] = diag - y0;
    } else {
      const std::size_t j = *bundle.jump_index(m);
      out.z[m] = sol.post.z(iz, j, family.x1(m, iz, j));
      out.u[m] = 0.0;
    }
  });
  return out;
}

struct PointEstimate {
  double value = 0.0;
  double se = 0.0;
};

struct InitialValues {
  PointEstimate y;
  PointEstimate z;
  PointEstimate u;
};

/// (Y^pi_0, Z^pi_0, U^pi_0). At t = 0 every path sits at x0 before the jump,
/// so the recombined values coincide across paths; the standard errors are
/// those of the regression estimates at the initial state.
inline InitialValues initial_values(const ModelSpec& model, const BackwardFamilySolution& sol) {
  const double x0 = model.x0;
  const double diag = sol.diagonal.at(0, 0);
  const double injected = model.x0 + model.jump(0.0, model.x0);
  InitialValues v;
  v.y.value = sol.zero.y(0, x0, diag);
  v.y.se = sol.zero.y_standard_error(0, x0);
  v.z.value = sol.zero.z(0, x0);
  v.z.se = sol.zero.z_standard_error(0, x0);
  v.u.value = diag - v.y.value;
  const double se_diag = sol.post.y_standard_error(0, 0, injected);
  v.u.se = std::sqrt(se_diag * se_diag + v.y.se * v.y.se);
  return v;
}

}  // namespace jumpbsde
