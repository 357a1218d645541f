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
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "jumpbsde/errors.hpp"

namespace jumpbsde {

/// A partition 0 = t_0 < t_1 < ... < t_n = T with mesh at most 1.
class TimeGrid {
 public:
  explicit TimeGrid(std::vector<double> times) : times_(std::move(times)) {
    if (times_.size() < 2) {
      throw ConfigError("timegrid::TimeGrid", "grid needs at least one step");
    }
    if (times_.front() != 0.0) {
      throw ConfigError("timegrid::TimeGrid", "grid must start at 0");
    }
    for (std::size_t i = 1; i < times_.size(); ++i) {
      const double dt = times_[i] - times_[i - 1];
      if (!(dt > 0.0)) {
        throw ConfigError("timegrid::TimeGrid", "grid times must be strictly increasing");
      }
      mesh_ = std::max(mesh_, dt);
    }
    if (mesh_ > 1.0) {
      throw ConfigError("timegrid::TimeGrid",
                        "mesh " + std::to_string(mesh_) + " exceeds 1");
    }
  }

  /// Number of steps n.
  std::size_t steps() const noexcept { return times_.size() - 1; }
  double horizon() const noexcept { return times_.back(); }
  double mesh() const noexcept { return mesh_; }
  double time(std::size_t i) const { return times_[i]; }
  /// Step length t_i - t_{i-1}, for 1 <= i <= n.
  double dt(std::size_t i) const { return times_[i] - times_[i - 1]; }
  std::span<const double> times() const noexcept { return times_; }

  /// Largest i with t_i <= t (so a grid point maps to its own index).
  std::size_t locate(double t) const {
    if (!(t >= 0.0) || t > horizon()) {
      throw DomainError("timegrid::locate",
                        "time " + std::to_string(t) + " outside [0, T]");
    }
    const auto it = std::upper_bound(times_.begin(), times_.end(), t);
    return static_cast<std::size_t>(it - times_.begin()) - 1;
  }

 private:
  std::vector<double> times_;
  double mesh_ = 0.0;
};

inline TimeGrid uniform_grid(std::size_t n, double horizon) {
  if (n == 0) {
    throw ConfigError("timegrid::uniform_grid", "n must be positive");
  }
  if (!(horizon > 0.0)) {
    throw ConfigError("timegrid::uniform_grid", "horizon must be positive");
  }
  std::vector<double> times(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    times[i] = horizon * static_cast<double>(i) / static_cast<double>(n);
  }
  times[n] = horizon;
  return TimeGrid(std::move(times));
}

}  // namespace jumpbsde
