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

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "jumpbsde/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Forward-backward SDE solver with a single jump"};
  app.require_subcommand(1);
  app.set_version_flag("--version", jumpbsde::kVersion);

  std::string config;
  std::string out;
  CLI::App* run = app.add_subcommand("run", "Run a solve or convergence study from a config");
  run->add_option("config", config, "TOML config or manifest.json")->required();
  run->add_option("--out", out, "Output directory, overriding output.dir");

  app.add_subcommand("models", "List built-in models and their parameters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (app.got_subcommand("models")) {
    jumpbsde::list_models(std::cout);
    return 0;
  }
  const std::optional<std::filesystem::path> override =
      out.empty() ? std::nullopt : std::optional<std::filesystem::path>(out);
  return jumpbsde::run(config, override, std::cerr);
}
