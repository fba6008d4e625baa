/**
 * Copyright 2026 The memsync Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// memsync <analytic|simulate|fig2|sweep> --config <path> [--out <dir>] [--seed <u64>]
//         [--mode paper_literal|normalized|per_mode] [--decoherence exact|linearized]

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "memsync/experiments.hpp"

namespace fs = std::filesystem;
using namespace memsync;
using namespace memsync::experiments;

int main(int argc, char** argv) {
  CLI::App app{"Quantum-memory synchronization of heralded photon sources"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::string mode;
  std::string decoherence;

  for (const char* name : {"analytic", "simulate", "fig2", "sweep"}) {
    CLI::App* sub = app.add_subcommand(name, std::string("run the ") + name + " command");
    sub->add_option("--config", config_path, "JSON configuration file")->required();
    sub->add_option("--out", out_dir, "output directory (overrides output.dir)");
    sub->add_option("--seed", seed, "simulation seed (overrides sim.seed)");
    sub->add_option("--mode", mode, "postselection denominator")
        ->check(CLI::IsMember({"paper_literal", "normalized", "per_mode"}));
    sub->add_option("--decoherence", decoherence, "per-pulse decoherence model")
        ->check(CLI::IsMember({"exact", "linearized"}));
  }
  CLI11_PARSE(app, argc, argv);

  const CLI::App* sub = app.get_subcommands().front();
  const Command cmd = *parse_command(sub->get_name());

  try {
    std::ifstream in(config_path);
    if (!in) throw ConfigError("--config", "cannot open '" + config_path + "'");
    std::stringstream text;
    text << in.rdbuf();

    ExperimentConfig cfg = parse_config(text.str());
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (sub->count("--seed")) cfg.sim.seed = seed;
    if (!mode.empty()) cfg.denominator_mode = *parse_denominator_mode(mode);
    if (!decoherence.empty()) cfg.decoherence = parse_decoherence_mode(decoherence);

    const CommandOutput out = run_command(cmd, cfg);
    fs::create_directories(cfg.out_dir);
    for (const auto& [name, contents] : out.files) {
      const fs::path path = fs::path(cfg.out_dir) / name;
      std::ofstream f(path, std::ios::binary);
      f << contents;
      if (!f) throw Error("failed to write " + path.string());
      std::cout << "wrote " << path.string() << "\n";
    }
    if (!out.errors.empty()) {
      std::cerr << error_summary(out.errors) << "\n";
      return 1;
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << error_summary({{e.key_path(), e.what()}}) << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << error_summary({{"<run>", e.what()}}) << "\n";
    return 2;
  }
}
