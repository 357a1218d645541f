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

#include <cassert>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jumpbsde/csv.hpp"
#include "jumpbsde/errors.hpp"
#include "jumpbsde/model.hpp"
#include "jumpbsde/parallel.hpp"
#include "jumpbsde/rng.hpp"
#include "jumpbsde/timegrid.hpp"

namespace jumpbsde {

struct RngDescriptor {
  std::uint64_t seed = 0;
  /// Fine steps per coarse step when increments are block sums of a finer draw.
  std::size_t refine_factor = 1;
  std::string layout = "philox4x32-10 key=seed counter=(step, channel, path)";
};

/// Monte Carlo paths on a grid: Brownian increments, jump times and the
/// no-jump Euler scheme X^{0,pi}. Arrays are stored step-major so that a
/// whole time column is contiguous.
class PathBundle {
 public:
  PathBundle(TimeGrid grid, std::size_t paths, RngDescriptor rng)
      : grid_(std::move(grid)),
        paths_(paths),
        rng_(std::move(rng)),
        dw_(grid_.steps() * paths, 0.0),
        taus_(paths, JumpTime::after_horizon()) {}

  const TimeGrid& grid() const noexcept { return grid_; }
  std::size_t paths() const noexcept { return paths_; }
  std::size_t steps() const noexcept { return grid_.steps(); }
  const RngDescriptor& rng() const noexcept { return rng_; }

  /// Delta W_i = W_{t_i} - W_{t_{i-1}}, 1 <= i <= n.
  double increment(std::size_t m, std::size_t i) const { return dw_[(i - 1) * paths_ + m]; }
  std::span<const double> increments(std::size_t i) const {
    return {dw_.data() + (i - 1) * paths_, paths_};
  }
  std::span<double> increments(std::size_t i) { return {dw_.data() + (i - 1) * paths_, paths_}; }

  bool has_x0() const noexcept { return !x0_.empty(); }
  double x0(std::size_t m, std::size_t i) const { return x0_[i * paths_ + m]; }
  std::span<const double> x0_column(std::size_t i) const {
    return {x0_.data() + i * paths_, paths_};
  }

  const JumpTime& tau(std::size_t m) const { return taus_[m]; }
  std::span<const JumpTime> taus() const noexcept { return taus_; }
  std::span<JumpTime> taus() noexcept { return taus_; }

  /// pi(tau_m) as a grid index, or nullopt when the jump is after the horizon.
  std::optional<std::size_t> jump_index(std::size_t m) const {
    if (!taus_[m].finite()) return std::nullopt;
    return grid_.locate(taus_[m].value());
  }

 private:
  friend void euler_x0(const ModelSpec&, PathBundle&);

  TimeGrid grid_;
  std::size_t paths_;
  RngDescriptor rng_;
  std::vector<double> dw_;
  std::vector<double> x0_;
  std::vector<JumpTime> taus_;
};

namespace detail {

inline void draw_jump_times(PathBundle& bundle, const DensityModel& density, const CounterRng& rng) {
  auto taus = bundle.taus();
  const double horizon = bundle.grid().horizon();
  parallel_for(bundle.paths(), [&](std::size_t m) {
    taus[m] = sample_jump_time(density, horizon, rng.uniform(m, 0, Channel::jump_time));
  });
}

inline void check_finite(double x, const char* origin, std::size_t m) {
  if (!std::isfinite(x)) throw NumericalError(origin, "non-finite state", m);
}

}  // namespace detail

/// Draws increments dW[m][i] = sqrt(dt_i) * Phi^{-1}(u(seed, m, i, W)) and
/// jump times tau_m from u(seed, m, 0, tau). X^{0,pi} is left empty.
inline PathBundle simulate_increments(const TimeGrid& grid, std::size_t paths, std::uint64_t seed,
                                      const DensityModel& density) {
  if (paths == 0) throw ConfigError("forward::simulate_increments", "path count must be positive");
  PathBundle bundle(grid, paths, RngDescriptor{seed, 1, {}});
  const CounterRng rng(seed);
  for (std::size_t i = 1; i <= grid.steps(); ++i) {
    const double scale = std::sqrt(grid.dt(i));
    auto column = bundle.increments(i);
    parallel_for(paths, [&](std::size_t m) {
      column[m] = scale * rng.normal(m, i, Channel::brownian);
    });
  }
  detail::draw_jump_times(bundle, density, rng);
  return bundle;
}

inline TimeGrid refine_grid(const TimeGrid& grid, std::size_t refine) {
  std::vector<double> times;
  times.reserve(grid.steps() * refine + 1);
  times.push_back(0.0);
  for (std::size_t i = 1; i <= grid.steps(); ++i) {
    const double a = grid.time(i - 1);
    const double b = grid.time(i);
    for (std::size_t k = 1; k < refine; ++k) {
      times.push_back(a + (b - a) * static_cast<double>(k) / static_cast<double>(refine));
    }
    times.push_back(b);
  }
  return TimeGrid(std::move(times));
}

/// A coarse bundle coupled to a refined grid on the same probability space:
/// each coarse step is split into `refine` equal fine steps, the coarse
/// increments are block sums of the fine ones, and jump times are shared.
/// Fine increments are regenerated per path from the counter-based
/// generator rather than stored.
class CoupledPaths {
 public:
  CoupledPaths(PathBundle coarse, TimeGrid fine_grid, std::size_t refine)
      : coarse_(std::move(coarse)), fine_grid_(std::move(fine_grid)), refine_(refine),
        rng_(coarse_.rng().seed) {}

  const PathBundle& coarse() const noexcept { return coarse_; }
  PathBundle& coarse() noexcept { return coarse_; }
  const TimeGrid& fine_grid() const noexcept { return fine_grid_; }
  std::size_t refine() const noexcept { return refine_; }

  /// Fine increments of path m; entry k - 1 is the k-th fine increment.
  std::vector<double> fine_increments(std::size_t m) const {
    std::vector<double> dw(fine_grid_.steps());
    for (std::size_t k = 1; k <= dw.size(); ++k) {
      dw[k - 1] = std::sqrt(fine_grid_.dt(k)) * rng_.normal(m, k, Channel::brownian);
    }
    return dw;
  }

  /// pi(tau_m) on the fine grid.
  std::optional<std::size_t> fine_jump_index(std::size_t m) const {
    const JumpTime& tau = coarse_.tau(m);
    if (!tau.finite()) return std::nullopt;
    return fine_grid_.locate(tau.value());
  }

 private:
  PathBundle coarse_;
  TimeGrid fine_grid_;
  std::size_t refine_;
  CounterRng rng_;
};

inline CoupledPaths simulate_coupled(const TimeGrid& grid, std::size_t refine, std::size_t paths,
                                     std::uint64_t seed, const DensityModel& density) {
  if (refine == 0) throw ConfigError("forward::simulate_coupled", "refine factor must be positive");
  if (paths == 0) throw ConfigError("forward::simulate_coupled", "path count must be positive");
  TimeGrid fine = refine_grid(grid, refine);
  PathBundle coarse(grid, paths, RngDescriptor{seed, refine, {}});
  const CounterRng rng(seed);
  const std::size_t n = grid.steps();
  std::vector<double*> columns(n);
  for (std::size_t i = 1; i <= n; ++i) columns[i - 1] = coarse.increments(i).data();
  parallel_for(paths, [&](std::size_t m) {
    for (std::size_t i = 1; i <= n; ++i) {
      double sum = 0.0;
      for (std::size_t k = (i - 1) * refine + 1; k <= i * refine; ++k) {
        sum += std::sqrt(fine.dt(k)) * rng.normal(m, k, Channel::brownian);
      }
      columns[i - 1][m] = sum;
    }
  });
  detail::draw_jump_times(coarse, density, rng);
  return CoupledPaths(std::move(coarse), std::move(fine), refine);
}

/// Euler scheme for the no-jump state:
///   X_{t_i} = X_{t_{i-1}} + b(t_{i-1}, X) dt_i + sigma(t_{i-1}, X) dW_i.
inline void euler_x0(const ModelSpec& model, PathBundle& bundle) {
  const std::size_t paths = bundle.paths();
  const std::size_t n = bundle.steps();
  const TimeGrid& grid = bundle.grid();
  bundle.x0_.assign((n + 1) * paths, 0.0);
  double* x = bundle.x0_.data();
  parallel_chunks(paths, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t m = begin; m < end; ++m) x[m] = model.x0;
    for (std::size_t i = 1; i <= n; ++i) {
      const double t = grid.time(i - 1);
      const double dt = grid.dt(i);
      const double* prev = x + (i - 1) * paths;
      double* next = x + i * paths;
      const auto dw = bundle.increments(i);
      for (std::size_t m = begin; m < end; ++m) {
        const double xm = prev[m];
        next[m] = xm + model.drift(t, xm) * dt + model.diffusion(t, xm) * dw[m];
        detail::check_finite(next[m], "forward::euler_x0", m);
      }
    }
  });
}

/// X^{1,pi}_{t_j}(t_j): the state at the grid time where the jump is injected.
/// For j = 0 this is x + beta(t_0, x); otherwise one Euler step from the
/// pre-jump state X^{0,pi}_{t_{j-1}} with beta evaluated at that left state.
inline double injected_state(const ModelSpec& model, const PathBundle& bundle, std::size_t m,
                             std::size_t j) {
  const TimeGrid& grid = bundle.grid();
  if (j == 0) return model.x0 + model.jump(grid.time(0), model.x0);
  const double t = grid.time(j - 1);
  const double x = bundle.x0(m, j - 1);
  return x + model.drift(t, x) * grid.dt(j) + model.diffusion(t, x) * bundle.increment(m, j) +
         model.jump(t, x);
}

/// Post-jump Euler states X^{1,pi}_{t_i}(t_j), i = j..n, for every path,
/// stored step-major: out[(i - j) * M + m].
inline void euler_x1_slice(const ModelSpec& model, const PathBundle& bundle, std::size_t j,
                           std::vector<double>& out) {
  assert(bundle.has_x0());
  const std::size_t paths = bundle.paths();
  const std::size_t n = bundle.steps();
  const TimeGrid& grid = bundle.grid();
  out.resize((n + 1 - j) * paths);
  double* x = out.data();
  parallel_chunks(paths, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t m = begin; m < end; ++m) {
      x[m] = injected_state(model, bundle, m, j);
      detail::check_finite(x[m], "forward::euler_x1_family", m);
    }
    for (std::size_t i = j + 1; i <= n; ++i) {
      const double t = grid.time(i - 1);
      const double dt = grid.dt(i);
      const double* prev = x + (i - 1 - j) * paths;
      double* next = x + (i - j) * paths;
      const auto dw = bundle.increments(i);
      for (std::size_t m = begin; m < end; ++m) {
        const double xm = prev[m];
        next[m] = xm + model.drift(t, xm) * dt + model.diffusion(t, xm) * dw[m];
        detail::check_finite(next[m], "forward::euler_x1_family", m);
      }
    }
  });
}

/// Euler states of a single path on `grid` driven by `dw` (entry i - 1 is
/// Delta W_i). Without a jump index this is X^{0,pi}; with index j it is
/// X^{1,pi}(t_j), equal to X^{0,pi} before t_j.
inline std::vector<double> euler_single(const ModelSpec& model, const TimeGrid& grid,
                                        std::span<const double> dw,
                                        std::optional<std::size_t> jump = std::nullopt) {
  const std::size_t n = grid.steps();
  std::vector<double> x(n + 1);
  x[0] = model.x0;
  if (jump && *jump == 0) x[0] = model.x0 + model.jump(grid.time(0), model.x0);
  for (std::size_t i = 1; i <= n; ++i) {
    const double t = grid.time(i - 1);
    const double xm = x[i - 1];
    x[i] = xm + model.drift(t, xm) * grid.dt(i) + model.diffusion(t, xm) * dw[i - 1];
    if (jump && *jump == i) x[i] += model.jump(t, xm);
  }
  return x;
}

/// X^{1,pi}_{t_i}(t_j) for i = 0..n along one path; entries i < j are the
/// pre-jump states X^{0,pi}_{t_i}.
inline std::vector<double> jump_path(const ModelSpec& model, const PathBundle& bundle,
                                     std::size_t m, std::size_t j) {
  const std::size_t n = bundle.steps();
  const TimeGrid& grid = bundle.grid();
  std::vector<double> x(n + 1);
  for (std::size_t i = 0; i < j; ++i) x[i] = bundle.x0(m, i);
  x[j] = injected_state(model, bundle, m, j);
  for (std::size_t i = j + 1; i <= n; ++i) {
    const double t = grid.time(i - 1);
    x[i] = x[i - 1] + model.drift(t, x[i - 1]) * grid.dt(i) +
           model.diffusion(t, x[i - 1]) * bundle.increment(m, i);
  }
  return x;
}

/// Anything that can report X^{1,pi}_{t_i}(t_j) for path m.
template <class S>
concept JumpStateSource = requires(const S& s, std::size_t m, std::size_t i, std::size_t j) {
  { s.x1(m, i, j) } -> std::convertible_to<double>;
};

/// The full post-jump family, one triangular slice per jump index j. Memory
/// is about M n^2 / 2 doubles; intended for small runs and inspection.
class X1Family {
 public:
  X1Family(const PathBundle& bundle, std::vector<std::vector<double>> slices)
      : bundle_(&bundle), slices_(std::move(slices)) {}

  double x1(std::size_t m, std::size_t i, std::size_t j) const {
    if (i < j) return bundle_->x0(m, i);
    return slices_[j][(i - j) * bundle_->paths() + m];
  }

  std::size_t jump_indices() const noexcept { return slices_.size(); }

 private:
  const PathBundle* bundle_;
  std::vector<std::vector<double>> slices_;
};

inline X1Family euler_x1_family(const ModelSpec& model, const PathBundle& bundle) {
  if (!bundle.has_x0()) {
    throw ConfigError("forward::euler_x1_family", "no-jump scheme must be simulated first");
  }
  std::vector<std::vector<double>> slices(bundle.steps() + 1);
  for (std::size_t j = 0; j <= bundle.steps(); ++j) euler_x1_slice(model, bundle, j, slices[j]);
  return X1Family(bundle, std::move(slices));
}

/// Each path's own post-jump trajectory X^{1,pi}(pi(tau_m)); O(M n) memory.
class OwnJumpStates {
 public:
  OwnJumpStates(const ModelSpec& model, const PathBundle& bundle)
      : bundle_(&bundle), x_((bundle.steps() + 1) * bundle.paths()) {
    const std::size_t paths = bundle.paths();
    const std::size_t n = bundle.steps();
    parallel_for(paths, [&](std::size_t m) {
      const auto j = bundle.jump_index(m);
      if (!j) {
        for (std::size_t i = 0; i <= n; ++i) x_[i * paths + m] = bundle.x0(m, i);
        return;
      }
      const auto path = jump_path(model, bundle, m, *j);
      for (std::size_t i = 0; i <= n; ++i) x_[i * paths + m] = path[i];
    });
  }

  /// Only j = pi(tau_m) is available.
  double x1(std::size_t m, std::size_t i, [[maybe_unused]] std::size_t j) const {
    assert(bundle_->jump_index(m) == j);
    return x_[i * bundle_->paths() + m];
  }

 private:
  const PathBundle* bundle_;
  std::vector<double> x_;
};

/// X^pi_t = X^{0,pi}_{pi(t)} on {t < tau}, X^{1,pi}_{pi(t)}(pi(tau)) on {t >= tau}.
template <JumpStateSource Family>
std::vector<double> recombine_x(const PathBundle& bundle, const Family& family, double t) {
  const std::size_t i = bundle.grid().locate(t);
  std::vector<double> out(bundle.paths());
  for (std::size_t m = 0; m < bundle.paths(); ++m) {
    const JumpTime& tau = bundle.tau(m);
    out[m] = tau.alive_at(t) ? bundle.x0(m, i) : family.x1(m, i, *bundle.jump_index(m));
  }
  return out;
}

/// Path dump with header `path,step,time,dW,x0,tau`. dW is empty at step 0;
/// tau is "inf" for jumps after the horizon.
inline void write_path_dump(std::ostream& os, const PathBundle& bundle) {
  os << "path,step,time,dW,x0,tau\n";
  for (std::size_t m = 0; m < bundle.paths(); ++m) {
    const std::string tau = format_double(bundle.tau(m).value());
    for (std::size_t i = 0; i <= bundle.steps(); ++i) {
      os << m << ',' << i << ',' << format_double(bundle.grid().time(i)) << ','
         << (i == 0 ? std::string() : format_double(bundle.increment(m, i))) << ','
         << (bundle.has_x0() ? format_double(bundle.x0(m, i)) : std::string()) << ',' << tau
         << '\n';
    }
  }
}

}  // namespace jumpbsde
