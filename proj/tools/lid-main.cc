// tools/lid-main.cc

// Copyright 2026  The lidkit authors

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

// Command line driver.  Usage:
//   lid <stage> --config run.ini [--jobs N] [--force] [--seed S]
//   lid preset <a|b|c|d> --workdir DIR [--out run.ini]
// Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 numeric error.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "lid/common.h"
#include "lid/pipeline.h"

namespace {

int RunPreset(const std::string &name, const std::string &workdir,
              const std::string &out) {
  const std::string text = lid::PresetConfig(name, workdir);
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    if (!f) {
      std::cerr << "lid: cannot write " << out << "\n";
      return 2;
    }
    f << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"lidkit: i-vector spoken language recognition pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  int jobs = 1;
  bool force = false;
  std::optional<uint64_t> seed;
  for (const std::string &stage : lid::StageNames()) {
    CLI::App *sub = app.add_subcommand(stage, "Run the " + stage + " stage");
    sub->add_option("--config", config_path, "Run configuration (INI)")
        ->required();
    sub->add_option("--jobs", jobs, "Worker threads");
    sub->add_flag("--force", force, "Rebuild even if inputs changed");
    sub->add_option("--seed", seed, "Override pipeline.seed");
  }

  std::string preset_name, preset_workdir, preset_out;
  CLI::App *preset =
      app.add_subcommand("preset", "Print a ready-made run configuration");
  preset->add_option("name", preset_name, "One of a, b, c, d")->required();
  preset->add_option("--workdir", preset_workdir, "Working directory to embed")
      ->required();
  preset->add_option("--out", preset_out, "Write to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (preset->parsed())
      return RunPreset(preset_name, preset_workdir, preset_out);
    for (const std::string &stage : lid::StageNames()) {
      if (app.get_subcommand(stage)->parsed()) {
        lid::RunConfig cfg = lid::RunConfig::Parse(config_path);
        lid::RunStage(stage, cfg, jobs, force, seed);
        return 0;
      }
    }
    std::cerr << "lid: no stage given\n";
    return 1;
  } catch (const lid::NumericError &e) {
    std::cerr << "lid: numeric error: " << e.what() << "\n";
    return 3;
  } catch (const lid::Error &e) {
    std::cerr << "lid: error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "lid: " << e.what() << "\n";
    return 2;
  }
}
