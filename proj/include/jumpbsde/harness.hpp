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

#include <chrono>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "jumpbsde/backward.hpp"
#include "jumpbsde/csv.hpp"
#include "jumpbsde/errors.hpp"
#include "jumpbsde/forward.hpp"
#include "jumpbsde/model.hpp"
#include "jumpbsde/oracle.hpp"
#include "jumpbsde/parallel.hpp"
#include "jumpbsde/rng.hpp"
#include "jumpbsde/timegrid.hpp"

namespace jumpbsde {

/// Monte Carlo mean with its standard error.
struct ErrorEstimate {
  double value = 0.0;
  double se = 0.0;
};

namespace detail {

inline ErrorEstimate mean_and_se(std::span<const double> samples) {
  const std::size_t count = samples.size();
  const auto sums = parallel_sum(count, 1, [&](std::size_t b, std::size_t e, double* acc) {
    for (std::size_t m = b; m < e; ++m) acc[0] += samples[m];
  });
  const double mean = sums[0] / static_cast<double>(count);
  const auto sq = parallel_sum(count, 1, [&](std::size_t b, std::size_t e, double* acc) {
    for (std::size_t m = b; m < e; ++m) acc[0] += (samples[m] - mean) * (samples[m] - mean);
  });
  const double var = count > 1 ? sq[0] / static_cast<double>(count - 1) : 0.0;
  return {mean, std::sqrt(var / static_cast<double>(count))};
}

}  // namespace detail

/// E[sup_s |X_s - X^pi_s|^2] where X is the recombined scheme on the refined
/// grid and X^pi is the recombined coarse scheme held constant between
/// coarse points. With grid_only, the sup runs over coarse grid times only.
inline ErrorEstimate forward_error(const ModelSpec& model, const CoupledPaths& coupled,
                                   bool grid_only = false) {
  const PathBundle& coarse = coupled.coarse();
  if (!coarse.has_x0()) {
    throw ConfigError("harness::forward_error", "coarse paths must be simulated first");
  }
  const TimeGrid& fine = coupled.fine_grid();
  const std::size_t r = coupled.refine();
  std::vector<double> sup(coarse.paths());
  parallel_for(coarse.paths(), [&](std::size_t m) {
    const auto dw = coupled.fine_increments(m);
    const auto fine_x0 = euler_single(model, fine, dw);
    const JumpTime& tau = coarse.tau(m);
    std::vector<double> fine_x1;
    std::vector<double> coarse_x1;
    if (tau.finite()) {
      fine_x1 = euler_single(model, fine, dw, coupled.fine_jump_index(m));
      coarse_x1 = jump_path(model, coarse, m, *coarse.jump_index(m));
    }
    double worst = 0.0;
    for (std::size_t k = 0; k <= fine.steps(); k += grid_only ? r : 1) {
      const double s = fine.time(k);
      const std::size_t i = k / r;
      const bool alive = tau.alive_at(s);
      const double reference = alive ? fine_x0[k] : fine_x1[k];
      const double scheme = alive ? coarse.x0(m, i) : coarse_x1[i];
      worst = std::max(worst, (reference - scheme) * (reference - scheme));
    }
    sup[m] = worst;
  });
  return detail::mean_and_se(sup);
}

/// E[sup_{s >= theta} |X^1_s(theta) - X^{1,pi}_{pi(s)}(pi(theta))|^2] for a
/// fixed jump time theta, with the refined scheme as reference.
inline ErrorEstimate forward_error_theta(const ModelSpec& model, const CoupledPaths& coupled,
                                         double theta) {
  const PathBundle& coarse = coupled.coarse();
  if (!coarse.has_x0()) {
    throw ConfigError("harness::forward_error", "coarse paths must be simulated first");
  }
  const TimeGrid& fine = coupled.fine_grid();
  const std::size_t r = coupled.refine();
  const std::size_t jf = fine.locate(theta);
  const std::size_t jc = coarse.grid().locate(theta);
  std::vector<double> sup(coarse.paths());
  parallel_for(coarse.paths(), [&](std::size_t m) {
    const auto dw = coupled.fine_increments(m);
    const auto fine_x1 = euler_single(model, fine, dw, jf);
    const auto coarse_x1 = jump_path(model, coarse, m, jc);
    double worst = 0.0;
    for (std::size_t k = 0; k <= fine.steps(); ++k) {
      if (fine.time(k) < theta) continue;
      const double d = fine_x1[k] - coarse_x1[k / r];
      worst = std::max(worst, d * d);
    }
    sup[m] = worst;
  });
  return detail::mean_and_se(sup);
}

/// Reference (Y, Z, U) along the coupled paths at coarse grid times, using
/// the refined-scheme states. Backed by the closed form when the model has
/// one, otherwise by the quadrature solver on the refined grid.
class ReferenceSolution {
 public:
  static ReferenceSolution make(const ModelSpec& model, const CoupledPaths& coupled,
                                const QuadratureConfig& cfg) {
    ReferenceSolution ref(model, coupled);
    if (!model.closed_form) {
      ref.post_.emplace(quadrature_dp(model, coupled.fine_grid(), std::size_t{0}, cfg));
      ref.zero_.emplace(quadrature_dp(model, coupled.fine_grid(), std::nullopt, cfg));
    }
    return ref;
  }

  /// Values at coarse index i for every path.
  RecombinedSlice slice(std::size_t i) const {
    const PathBundle& coarse = coupled_->coarse();
    const std::size_t paths = coarse.paths();
    const std::size_t r = coupled_->refine();
    const std::size_t fine_n = coupled_->fine_grid().steps();
    const double t = coarse.grid().time(i);
    const std::size_t k = i * r;
    const std::size_t kz = std::min(k, fine_n - 1);
    RecombinedSlice out{std::vector<double>(paths), std::vector<double>(paths),
                        std::vector<double>(paths)};
    parallel_for(paths, [&](std::size_t m) {
      const JumpTime& tau = coarse.tau(m);
      const double x0 = x0_[i * paths + m];
      const double x1 = x1_[i * paths + m];
      const bool alive = tau.alive_at(t);
      const bool z_before = tau.pending_at(t);
      if (model_.closed_form) {
        const LinearParams& p = *model_.closed_form;
        const Triple before = linear_analytic(p, t, x0, false);
        const Triple after = linear_analytic(p, t, x1, true);
        out.y[m] = alive ? before.y : after.y;
        out.z[m] = z_before ? before.z : after.z;
        out.u[m] = z_before ? before.u : 0.0;
        return;
      }
      const double y0 = zero_->y(k)(x0);
      out.y[m] = alive ? y0 : post_->y(k)(x1);
      // Z between fine points is held from the left fine index.
      const double x0z = k == kz ? x0 : x0z_[i * paths + m];
      const double x1z = k == kz ? x1 : x1z_[i * paths + m];
      out.z[m] = z_before ? zero_->z(kz)(x0z) : post_->z(kz)(x1z);
      out.u[m] = z_before ? post_->y(k)(x0 + model_.jump(t, x0)) - y0 : 0.0;
    });
    return out;
  }

 private:
  ReferenceSolution(const ModelSpec& model, const CoupledPaths& coupled)
      : model_(model), coupled_(&coupled) {
    const PathBundle& coarse = coupled.coarse();
    const std::size_t paths = coarse.paths();
    const std::size_t n = coarse.steps();
    const std::size_t r = coupled.refine();
    const TimeGrid& fine = coupled.fine_grid();
    x0_.resize((n + 1) * paths);
    x1_.resize((n + 1) * paths);
    x0z_.resize((n + 1) * paths);
    x1z_.resize((n + 1) * paths);
    parallel_for(paths, [&](std::size_t m) {
      const auto dw = coupled.fine_increments(m);
      const auto a = euler_single(model, fine, dw);
      const auto jf = coupled.fine_jump_index(m);
      const auto b = jf ? euler_single(model, fine, dw, jf) : a;
      for (std::size_t i = 0; i <= n; ++i) {
        const std::size_t k = i * r;
        const std::size_t kz = std::min(k, fine.steps() - 1);
        x0_[i * paths + m] = a[k];
        x1_[i * paths + m] = b[k];
        x0z_[i * paths + m] = a[kz];
        x1z_[i * paths + m] = b[kz];
      }
    });
  }

  ModelSpec model_;
  const CoupledPaths* coupled_;
  std::vector<double> x0_, x1_, x0z_, x1z_;
  std::optional<QuadratureSolution> post_;
  std::optional<QuadratureSolution> zero_;
};

struct BackwardErrors {
  ErrorEstimate y;
  ErrorEstimate z;
  ErrorEstimate u;
};

/// Slice provider: grid index -> per-path (Y, Z, U).
using SliceFn = std::function<RecombinedSlice(std::size_t)>;

/// err_y = max_i E|Y - Y^pi|^2 over grid times; err_z = E sum_i dt |Z - Z^pi|^2
/// and err_u = E sum_i dt lambda_{t_i} |U - U^pi|^2 as left-endpoint sums,
/// with lambda = intensity(t_i, t_i <= tau) per path.
inline BackwardErrors backward_error(const SliceFn& reference, const SliceFn& approx,
                                     const ModelSpec& model, const PathBundle& bundle) {
  const std::size_t paths = bundle.paths();
  const std::size_t n = bundle.steps();
  const TimeGrid& grid = bundle.grid();
  BackwardErrors out;
  std::vector<double> z_acc(paths, 0.0);
  std::vector<double> u_acc(paths, 0.0);
  std::vector<double> dy(paths);
  out.y.value = -1.0;
  for (std::size_t i = 0; i <= n; ++i) {
    const RecombinedSlice ref = reference(i);
    const RecombinedSlice app = approx(i);
    const double t = grid.time(i);
    const double dt = i < n ? grid.dt(i + 1) : 0.0;
    parallel_for(paths, [&](std::size_t m) {
      dy[m] = (ref.y[m] - app.y[m]) * (ref.y[m] - app.y[m]);
      if (i < n) {
        const double dz = ref.z[m] - app.z[m];
        const double du = ref.u[m] - app.u[m];
        const bool alive = bundle.tau(m).pending_at(t);
        const double lambda = alive ? model.density.intensity(t, true) : 0.0;
        z_acc[m] += dt * dz * dz;
        u_acc[m] += dt * lambda * du * du;
      }
    });
    const ErrorEstimate e = detail::mean_and_se(dy);
    if (e.value > out.y.value) out.y = e;
  }
  out.z = detail::mean_and_se(z_acc);
  out.u = detail::mean_and_se(u_acc);
  return out;
}

/// Least-squares slope of log(err) against log(mesh) with a 95% interval.
/// A column whose errors all vanish to round-off is reported as exact with
/// infinite slope.
struct SlopeFit {
  double slope = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool exact = false;
};

inline constexpr double kZeroErrorFloor = 1e-24;

inline SlopeFit fit_slope(std::span<const double> mesh, std::span<const double> err) {
  if (mesh.size() != err.size()) {
    throw ConfigError("harness::fit_slope", "mesh and error columns differ in length");
  }
  if (mesh.size() < 3) throw ConfigError("harness::fit_slope", "insufficient points for slope");
  std::vector<double> xs;
  std::vector<double> ys;
  bool all_zero = true;
  for (std::size_t k = 0; k < mesh.size(); ++k) {
    if (err[k] < 0.0 || !std::isfinite(err[k])) {
      throw NumericalError("harness::fit_slope", "error estimates must be finite and nonnegative");
    }
    if (err[k] > kZeroErrorFloor) {
      all_zero = false;
      xs.push_back(std::log(mesh[k]));
      ys.push_back(std::log(err[k]));
    }
  }
  const double inf = std::numeric_limits<double>::infinity();
  if (all_zero) return {inf, inf, inf, true};
  if (xs.size() < 3) throw ConfigError("harness::fit_slope", "insufficient points for slope");
  const auto k = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t q = 0; q < xs.size(); ++q) {
    mx += xs[q];
    my += ys[q];
  }
  mx /= k;
  my /= k;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t q = 0; q < xs.size(); ++q) {
    sxx += (xs[q] - mx) * (xs[q] - mx);
    sxy += (xs[q] - mx) * (ys[q] - my);
  }
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double rss = 0.0;
  for (std::size_t q = 0; q < xs.size(); ++q) {
    const double res = ys[q] - intercept - slope * xs[q];
    rss += res * res;
  }
  const double se = std::sqrt(rss / (k - 2.0) / sxx);
  const boost::math::students_t dist(k - 2.0);
  const double tq = boost::math::quantile(dist, 0.975);
  return {slope, slope - tq * se, slope + tq * se, false};
}

struct StudyConfig {
  std::size_t paths = 10000;
  std::uint64_t seed = 1;
  std::size_t refine = 16;
  BackwardConfig backward;
  bool forward = true;
  bool backward_errors = true;
  bool record_timing = false;
};

struct ErrorRow {
  std::size_t n = 0;
  double mesh = 0.0;
  ErrorEstimate x, y, z, u;
  double wall_ms = 0.0;
};

struct SlopeRow {
  std::string column;
  SlopeFit fit;
};

struct ErrorReport {
  std::string model;
  std::string mode;
  std::vector<ErrorRow> rows;
  std::vector<SlopeRow> slopes;
};

inline std::string mode_name(BackwardMode mode) {
  return mode == BackwardMode::lsmc ? "lsmc" : "quadrature";
}

/// One study row: forward and backward errors on a uniform n-step grid.
inline ErrorRow study_row(const ModelSpec& model, std::size_t n, const StudyConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const TimeGrid grid = uniform_grid(n, model.horizon);
  CoupledPaths coupled =
      simulate_coupled(grid, cfg.refine, cfg.paths, derive_seed(cfg.seed, n), model.density);
  euler_x0(model, coupled.coarse());
  ErrorRow row;
  row.n = n;
  row.mesh = grid.mesh();
  if (cfg.forward) row.x = forward_error(model, coupled);
  if (cfg.backward_errors) {
    const PathBundle& bundle = coupled.coarse();
    const BackwardFamilySolution sol = solve_backward(model, bundle, cfg.backward);
    const OwnJumpStates own(model, bundle);
    const ReferenceSolution ref = ReferenceSolution::make(model, coupled, cfg.backward.oracle);
    const BackwardErrors e = backward_error(
        [&](std::size_t i) { return ref.slice(i); },
        [&](std::size_t i) { return recombine_yzu(sol, bundle, own, grid.time(i)); }, model,
        bundle);
    row.y = e.y;
    row.z = e.z;
    row.u = e.u;
  }
  if (cfg.record_timing) {
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                      .count();
  }
  return row;
}

/// Runs the forward and backward schemes for every n with seeds derived
/// from (seed, n) and fits a convergence slope per error column.
inline ErrorReport convergence_study(const ModelSpec& model, std::span<const std::size_t> n_list,
                                     const StudyConfig& cfg) {
  if (n_list.size() < 3) {
    throw ConfigError("harness::convergence_study", "insufficient points for slope");
  }
  for (std::size_t k = 1; k < n_list.size(); ++k) {
    if (n_list[k] <= n_list[k - 1]) {
      throw ConfigError("harness::convergence_study", "n_list must be strictly ascending");
    }
  }
  ErrorReport report{model.name, mode_name(cfg.backward.mode), {}, {}};
  for (const std::size_t n : n_list) {
    try {
      report.rows.push_back(study_row(model, n, cfg));
    } catch (Error& e) {
      e.add_context("n = " + std::to_string(n));
      throw;
    }
  }
  std::vector<double> mesh, ex, ey, ez, eu;
  for (const auto& row : report.rows) {
    mesh.push_back(row.mesh);
    ex.push_back(row.x.value);
    ey.push_back(row.y.value);
    ez.push_back(row.z.value);
    eu.push_back(row.u.value);
  }
  if (cfg.forward) report.slopes.push_back({"err_x", fit_slope(mesh, ex)});
  if (cfg.backward_errors) {
    report.slopes.push_back({"err_y", fit_slope(mesh, ey)});
    report.slopes.push_back({"err_z", fit_slope(mesh, ez)});
    report.slopes.push_back({"err_u", fit_slope(mesh, eu)});
  }
  return report;
}

inline void write_errors_csv(std::ostream& os, const ErrorReport& report) {
  os << "model,mode,n,mesh,err_x,se_x,err_y,se_y,err_z,se_z,err_u,se_u,wall_ms\n";
  for (const auto& r : report.rows) {
    os << report.model << ',' << report.mode << ',' << r.n << ',' << format_double(r.mesh) << ','
       << format_double(r.x.value) << ',' << format_double(r.x.se) << ','
       << format_double(r.y.value) << ',' << format_double(r.y.se) << ','
       << format_double(r.z.value) << ',' << format_double(r.z.se) << ','
       << format_double(r.u.value) << ',' << format_double(r.u.se) << ','
       << format_double(r.wall_ms) << '\n';
  }
}

inline void write_slopes_csv(std::ostream& os, const ErrorReport& report) {
  os << "model,mode,column,slope,ci_lo,ci_hi\n";
  for (const auto& s : report.slopes) {
    os << report.model << ',' << report.mode << ',' << s.column << ',' << format_double(s.fit.slope)
       << ',' << format_double(s.fit.ci_lo) << ',' << format_double(s.fit.ci_hi) << '\n';
  }
}

}  // namespace jumpbsde
