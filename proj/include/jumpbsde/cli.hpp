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

// Config parsing and the batch driver behind the `jumpbsde` executable.
// Needs toml++ and nlohmann/json on the include path.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <toml.hpp>

#include "jumpbsde/backward.hpp"
#include "jumpbsde/csv.hpp"
#include "jumpbsde/errors.hpp"
#include "jumpbsde/forward.hpp"
#include "jumpbsde/harness.hpp"
#include "jumpbsde/model.hpp"
#include "jumpbsde/timegrid.hpp"
#include "jumpbsde/version.hpp"

namespace jumpbsde {

enum class RunMode { solve, study };

/// Fully resolved run configuration.
struct RunConfig {
  RunMode mode = RunMode::solve;
  std::string model_name;
  std::map<std::string, double> model_params;
  std::optional<std::size_t> n;
  std::vector<std::size_t> n_list;
  std::size_t paths = 10000;
  std::uint64_t seed = 1;
  std::size_t refine_factor = 16;
  double work_budget = 1e10;
  int degree = 3;
  double ridge = 1e-10;
  BackwardMode backward_mode = BackwardMode::lsmc;
  double picard_tol = 1e-12;
  int picard_max = 50;
  int gh_nodes = 16;
  int mesh_nodes = 2001;
  std::string output_dir = "out";
  bool path_dump = false;
  bool timing = false;

  BackwardConfig backward() const {
    BackwardConfig cfg;
    cfg.mode = backward_mode;
    cfg.degree = degree;
    cfg.ridge = ridge;
    cfg.picard = {picard_tol, picard_max};
    cfg.oracle.gh_nodes = gh_nodes;
    cfg.oracle.mesh_nodes = mesh_nodes;
    cfg.oracle.picard_tol = picard_tol;
    cfg.oracle.picard_max = picard_max;
    return cfg;
  }
};

namespace detail {

inline constexpr const char* kConfigOrigin = "cli::parse_config";

inline std::string key_path(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

[[noreturn]] inline void bad_value(const std::string& key, const std::string& expected) {
  throw ConfigError(kConfigOrigin, "key '" + key + "' must be " + expected);
}

inline const toml::table* section(const toml::table& root, const std::string& name) {
  const toml::node* node = root.get(name);
  if (node == nullptr) return nullptr;
  if (!node->is_table()) bad_value(name, "a table");
  return node->as_table();
}

inline std::optional<std::int64_t> get_int(const toml::table* t, const std::string& sec,
                                           const std::string& key) {
  if (t == nullptr) return std::nullopt;
  const toml::node* node = t->get(key);
  if (node == nullptr) return std::nullopt;
  if (!node->is_integer()) bad_value(key_path(sec, key), "an integer");
  return node->value<std::int64_t>();
}

inline std::optional<double> get_double(const toml::table* t, const std::string& sec,
                                        const std::string& key) {
  if (t == nullptr) return std::nullopt;
  const toml::node* node = t->get(key);
  if (node == nullptr) return std::nullopt;
  if (!node->is_number()) bad_value(key_path(sec, key), "a number");
  const double v = *node->value<double>();
  if (!std::isfinite(v)) bad_value(key_path(sec, key), "finite");
  return v;
}

inline std::optional<std::string> get_string(const toml::table* t, const std::string& sec,
                                             const std::string& key) {
  if (t == nullptr) return std::nullopt;
  const toml::node* node = t->get(key);
  if (node == nullptr) return std::nullopt;
  if (!node->is_string()) bad_value(key_path(sec, key), "a string");
  return *node->value<std::string>();
}

inline std::optional<bool> get_bool(const toml::table* t, const std::string& sec,
                                    const std::string& key) {
  if (t == nullptr) return std::nullopt;
  const toml::node* node = t->get(key);
  if (node == nullptr) return std::nullopt;
  if (!node->is_boolean()) bad_value(key_path(sec, key), "a boolean");
  return *node->value<bool>();
}

inline std::size_t positive(std::int64_t v, const std::string& key) {
  if (v < 1) bad_value(key, "a positive integer");
  return static_cast<std::size_t>(v);
}

/// Rejects any key outside the schema before values are read.
inline void check_keys(const toml::table& root, const std::string& model_name) {
  static const std::map<std::string, std::set<std::string>> schema = {
      {"grid", {"n"}},
      {"study", {"n_list"}},
      {"mc", {"paths", "seed", "refine_factor", "work_budget"}},
      {"regress", {"degree", "ridge"}},
      {"backward", {"mode", "picard_tol", "picard_max"}},
      {"oracle", {"gh_nodes", "mesh_nodes"}},
      {"output", {"dir", "path_dump", "timing"}},
  };
  for (auto&& [k, node] : root) {
    const std::string key(k.str());
    if (key == "mode") continue;
    if (key == "model") {
      std::set<std::string> allowed{"name"};
      for (const auto& p : model_info(model_name).params) allowed.insert(p.key);
      for (auto&& [mk, mnode] : *node.as_table()) {
        if (!allowed.contains(std::string(mk.str()))) {
          throw ConfigError(kConfigOrigin, "unknown key 'model." + std::string(mk.str()) +
                                               "' for model " + model_name);
        }
      }
      continue;
    }
    const auto it = schema.find(key);
    if (it == schema.end()) throw ConfigError(kConfigOrigin, "unknown key '" + key + "'");
    if (!node.is_table()) bad_value(key, "a table");
    for (auto&& [sk, snode] : *node.as_table()) {
      if (!it->second.contains(std::string(sk.str()))) {
        throw ConfigError(kConfigOrigin, "unknown key '" + key + "." + std::string(sk.str()) + "'");
      }
    }
  }
}

}  // namespace detail

/// Validates every key and value of a parsed config table.
inline RunConfig parse_config(const toml::table& root) {
  using namespace detail;
  RunConfig cfg;
  const toml::table* model = section(root, "model");
  const auto name = get_string(model, "model", "name");
  if (!name) {
    // A misspelt section should be reported as such, not as a missing name.
    if (model == nullptr) check_keys(root, "");
    throw ConfigError(kConfigOrigin, "missing key 'model.name'");
  }
  cfg.model_name = *name;
  check_keys(root, cfg.model_name);

  const auto mode = get_string(&root, "", "mode");
  if (!mode) throw ConfigError(kConfigOrigin, "missing key 'mode'");
  if (*mode == "solve") {
    cfg.mode = RunMode::solve;
  } else if (*mode == "study") {
    cfg.mode = RunMode::study;
  } else {
    bad_value("mode", "\"solve\" or \"study\"");
  }

  for (auto&& [k, node] : *model) {
    const std::string key(k.str());
    if (key != "name") cfg.model_params[key] = *get_double(model, "model", key);
  }

  const toml::table* grid = section(root, "grid");
  if (const auto n = get_int(grid, "grid", "n")) cfg.n = positive(*n, "grid.n");
  const toml::table* study = section(root, "study");
  if (study != nullptr && study->get("n_list") != nullptr) {
    const toml::array* list = study->get("n_list")->as_array();
    if (list == nullptr) bad_value("study.n_list", "an array of integers");
    for (const auto& item : *list) {
      if (!item.is_integer()) bad_value("study.n_list", "an array of integers");
      cfg.n_list.push_back(positive(*item.value<std::int64_t>(), "study.n_list"));
    }
  }
  if (cfg.mode == RunMode::solve && !cfg.n) {
    throw ConfigError(kConfigOrigin, "missing key 'grid.n' for mode = \"solve\"");
  }
  if (cfg.mode == RunMode::study) {
    if (cfg.n_list.empty()) {
      throw ConfigError(kConfigOrigin, "missing key 'study.n_list' for mode = \"study\"");
    }
    if (cfg.n_list.size() < 3) throw ConfigError("harness::convergence_study", "insufficient points for slope");
    if (!std::is_sorted(cfg.n_list.begin(), cfg.n_list.end()) ||
        std::adjacent_find(cfg.n_list.begin(), cfg.n_list.end()) != cfg.n_list.end()) {
      bad_value("study.n_list", "strictly ascending");
    }
  }

  const toml::table* mc = section(root, "mc");
  if (const auto v = get_int(mc, "mc", "paths")) cfg.paths = positive(*v, "mc.paths");
  if (const auto v = get_int(mc, "mc", "seed")) {
    if (*v < 0) bad_value("mc.seed", "nonnegative");
    cfg.seed = static_cast<std::uint64_t>(*v);
  }
  if (const auto v = get_int(mc, "mc", "refine_factor")) {
    cfg.refine_factor = positive(*v, "mc.refine_factor");
  }
  if (const auto v = get_double(mc, "mc", "work_budget")) {
    if (!(*v > 0.0)) bad_value("mc.work_budget", "positive");
    cfg.work_budget = *v;
  }

  const toml::table* regress = section(root, "regress");
  if (const auto v = get_int(regress, "regress", "degree")) {
    if (*v < 0 || *v > kMaxDegree) bad_value("regress.degree", "in [0, 15]");
    cfg.degree = static_cast<int>(*v);
  }
  if (const auto v = get_double(regress, "regress", "ridge")) {
    if (*v < 0.0) bad_value("regress.ridge", "nonnegative");
    cfg.ridge = *v;
  }

  const toml::table* backward = section(root, "backward");
  if (const auto v = get_string(backward, "backward", "mode")) {
    if (*v == "lsmc") {
      cfg.backward_mode = BackwardMode::lsmc;
    } else if (*v == "quadrature") {
      cfg.backward_mode = BackwardMode::quadrature;
    } else {
      bad_value("backward.mode", "\"lsmc\" or \"quadrature\"");
    }
  }
  if (const auto v = get_double(backward, "backward", "picard_tol")) {
    if (!(*v > 0.0)) bad_value("backward.picard_tol", "positive");
    cfg.picard_tol = *v;
  }
  if (const auto v = get_int(backward, "backward", "picard_max")) {
    cfg.picard_max = static_cast<int>(positive(*v, "backward.picard_max"));
  }

  const toml::table* oracle = section(root, "oracle");
  if (const auto v = get_int(oracle, "oracle", "gh_nodes")) {
    if (*v < 8 || *v > 256) bad_value("oracle.gh_nodes", "in [8, 256]");
    cfg.gh_nodes = static_cast<int>(*v);
  }
  if (const auto v = get_int(oracle, "oracle", "mesh_nodes")) {
    if (*v < 3 || *v > 1'000'000) bad_value("oracle.mesh_nodes", "in [3, 1000000]");
    cfg.mesh_nodes = static_cast<int>(*v);
  }

  const toml::table* output = section(root, "output");
  if (const auto v = get_string(output, "output", "dir")) cfg.output_dir = *v;
  if (const auto v = get_bool(output, "output", "path_dump")) cfg.path_dump = *v;
  if (const auto v = get_bool(output, "output", "timing")) cfg.timing = *v;
  if (cfg.path_dump && cfg.mode != RunMode::solve) {
    throw ConfigError(kConfigOrigin, "output.path_dump requires mode = \"solve\"");
  }

  // Fill model defaults now so the manifest records every parameter.
  cfg.model_params = builtin_model(cfg.model_name, cfg.model_params).params;
  return cfg;
}

namespace detail {

inline toml::array json_to_toml_array(const nlohmann::json& j);

inline toml::table json_to_toml(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("cli::load_manifest", "manifest config must be an object");
  toml::table out;
  for (const auto& [key, value] : j.items()) {
    if (value.is_object()) {
      out.insert(key, json_to_toml(value));
    } else if (value.is_array()) {
      out.insert(key, json_to_toml_array(value));
    } else if (value.is_boolean()) {
      out.insert(key, value.get<bool>());
    } else if (value.is_number_integer()) {
      out.insert(key, value.get<std::int64_t>());
    } else if (value.is_number_float()) {
      out.insert(key, value.get<double>());
    } else if (value.is_string()) {
      out.insert(key, value.get<std::string>());
    } else {
      throw ConfigError("cli::load_manifest", "unsupported value for key '" + key + "'");
    }
  }
  return out;
}

inline toml::array json_to_toml_array(const nlohmann::json& j) {
  toml::array out;
  for (const auto& item : j) {
    if (!item.is_number_integer()) {
      throw ConfigError("cli::load_manifest", "arrays must hold integers");
    }
    out.push_back(item.get<std::int64_t>());
  }
  return out;
}

}  // namespace detail

/// Resolved config as JSON, in the same layout as the TOML input.
inline nlohmann::ordered_json config_to_json(const RunConfig& cfg) {
  nlohmann::ordered_json j;
  j["mode"] = cfg.mode == RunMode::solve ? "solve" : "study";
  j["model"]["name"] = cfg.model_name;
  for (const auto& [k, v] : cfg.model_params) j["model"][k] = v;
  if (cfg.n) j["grid"]["n"] = *cfg.n;
  if (!cfg.n_list.empty()) j["study"]["n_list"] = cfg.n_list;
  j["mc"]["paths"] = cfg.paths;
  j["mc"]["seed"] = cfg.seed;
  j["mc"]["refine_factor"] = cfg.refine_factor;
  j["mc"]["work_budget"] = cfg.work_budget;
  j["regress"]["degree"] = cfg.degree;
  j["regress"]["ridge"] = cfg.ridge;
  j["backward"]["mode"] = mode_name(cfg.backward_mode);
  j["backward"]["picard_tol"] = cfg.picard_tol;
  j["backward"]["picard_max"] = cfg.picard_max;
  j["oracle"]["gh_nodes"] = cfg.gh_nodes;
  j["oracle"]["mesh_nodes"] = cfg.mesh_nodes;
  j["output"]["dir"] = cfg.output_dir;
  j["output"]["path_dump"] = cfg.path_dump;
  j["output"]["timing"] = cfg.timing;
  return j;
}

/// Parses TOML config text.
inline RunConfig parse_config_text(std::string_view text) {
  try {
    return parse_config(toml::parse(text));
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << e.description() << " at line " << e.source().begin.line;
    throw ConfigError(detail::kConfigOrigin, msg.str());
  }
}

/// Loads a TOML config, or a manifest.json written by a previous run.
inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cli::load_config", "cannot read " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (path.extension() == ".json") {
    nlohmann::json manifest;
    try {
      manifest = nlohmann::json::parse(buffer.str());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("cli::load_manifest", e.what());
    }
    if (!manifest.is_object() || !manifest.contains("config")) {
      throw ConfigError("cli::load_manifest", "manifest has no 'config' object");
    }
    return parse_config(detail::json_to_toml(manifest["config"]));
  }
  return parse_config_text(buffer.str());
}

/// Stops runs whose path-step work would exceed the configured budget.
inline void check_work_budget(const RunConfig& cfg) {
  const std::size_t n_max = cfg.mode == RunMode::solve ? *cfg.n : cfg.n_list.back();
  const double n = static_cast<double>(n_max);
  const double work = static_cast<double>(cfg.paths) * n * n;
  if (work > cfg.work_budget) {
    std::ostringstream msg;
    msg << "paths * n^2 = " << work << " exceeds mc.work_budget = " << cfg.work_budget;
    throw ConfigError("cli::run", msg.str());
  }
}

namespace detail {

inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cli::run", "cannot write " + path.string());
  return out;
}

inline void write_solution_csv(std::ostream& os, const RunConfig& cfg, const TimeGrid& grid,
                               const InitialValues& v) {
  os << "model,mode,n,mesh,y0,se_y0,z0,se_z0,u0,se_u0\n";
  os << cfg.model_name << ',' << mode_name(cfg.backward_mode) << ',' << grid.steps() << ','
     << format_double(grid.mesh()) << ',' << format_double(v.y.value) << ','
     << format_double(v.y.se) << ',' << format_double(v.z.value) << ',' << format_double(v.z.se)
     << ',' << format_double(v.u.value) << ',' << format_double(v.u.se) << '\n';
}

}  // namespace detail

/// Executes a resolved config, writing every output under `out_dir`.
inline void execute(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  check_work_budget(cfg);
  const ModelSpec model = builtin_model(cfg.model_name, cfg.model_params);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw ConfigError("cli::run", "cannot create " + out_dir.string() + ": " + ec.message());
  {
    nlohmann::ordered_json manifest;
    manifest["artifact"] = "jumpbsde";
    manifest["version"] = kVersion;
    manifest["config"] = config_to_json(cfg);
    auto out = detail::open_output(out_dir / "manifest.json");
    out << manifest.dump(2) << '\n';
  }
  if (cfg.mode == RunMode::solve) {
    const TimeGrid grid = uniform_grid(*cfg.n, model.horizon);
    check_admissible(model, grid);
    PathBundle bundle = simulate_increments(grid, cfg.paths, cfg.seed, model.density);
    euler_x0(model, bundle);
    if (cfg.path_dump) {
      auto out = detail::open_output(out_dir / "paths.csv");
      write_path_dump(out, bundle);
    }
    const BackwardFamilySolution sol = solve_backward(model, bundle, cfg.backward());
    auto out = detail::open_output(out_dir / "solution.csv");
    detail::write_solution_csv(out, cfg, grid, initial_values(model, sol));
    return;
  }
  StudyConfig study;
  study.paths = cfg.paths;
  study.seed = cfg.seed;
  study.refine = cfg.refine_factor;
  study.backward = cfg.backward();
  study.record_timing = cfg.timing;
  for (const std::size_t n : cfg.n_list) check_admissible(model, uniform_grid(n, model.horizon));
  const ErrorReport report = convergence_study(model, cfg.n_list, study);
  {
    auto out = detail::open_output(out_dir / "errors.csv");
    write_errors_csv(out, report);
  }
  auto out = detail::open_output(out_dir / "slopes.csv");
  write_slopes_csv(out, report);
}

/// Exit status for the batch driver: 0 success, 2 configuration error,
/// 3 numerical, admissibility, domain or estimator error.
inline int run(const std::filesystem::path& config_path,
               const std::optional<std::filesystem::path>& out_override, std::ostream& err) {
  try {
    const RunConfig cfg = load_config(config_path);
    execute(cfg, out_override ? *out_override : std::filesystem::path(cfg.output_dir));
    return 0;
  } catch (const ConfigError& e) {
    err << "jumpbsde: config error in " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "jumpbsde: error in " << e.what() << '\n';
    return 3;
  }
}

/// Human-readable listing of the built-in models and their parameters.
inline void list_models(std::ostream& os) {
  for (const auto& info : builtin_models()) {
    os << info.name << ": " << info.description << '\n';
    for (const auto& p : info.params) {
      os << "  " << p.key << " = ";
      if (p.default_value) {
        os << format_double(*p.default_value);
      } else {
        os << "(required)";
      }
      os << "  " << p.description << '\n';
    }
  }
}

}  // namespace jumpbsde
