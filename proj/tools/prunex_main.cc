/*
 * Copyright 2026 The Prunex Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line driver for the pruning / explanation-quality pipeline.
//
//   prunex run-all --config desk.ini --out runs/desk
//   prunex train|prune|attribute|evaluate|concepts|report --config ... --out ...

#include <spdlog/spdlog.h>

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "prunex/harness.h"
#include "prunex/runtime.h"

namespace {

struct CommonArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string log_level = "info";
};

void AddCommon(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "INI experiment config (defaults when omitted)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out, "Output directory (overrides the config's `output`)");
  cmd->add_option("--seed", args.seed, "Global seed (overrides the config's `seed`)");
  cmd->add_option("--log-level", args.log_level, "trace|debug|info|warn|error")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error"}));
}

prunex::Pipeline MakePipeline(const CommonArgs& args) {
  prunex::ExperimentConfig config =
      args.config.empty() ? prunex::ExperimentConfig() : prunex::ExperimentConfig::Load(args.config);
  if (args.seed) config.SetSeed(*args.seed);
  const std::filesystem::path out = args.out.empty() ? config.output : std::filesystem::path(args.out);
  return prunex::Pipeline(std::move(config), out);
}

}  // namespace

int main(int argc, char** argv) {
  prunex::TuneAllocator();
  CLI::App app{"Lottery-ticket pruning vs. saliency quality benchmark"};
  app.require_subcommand(1);
  CommonArgs args;

  struct Command {
    const char* name;
    const char* help;
    std::function<void(prunex::Pipeline&)> run;
  };
  const Command commands[] = {
      {"train", "Train the dense model", [](auto& p) { p.Train(); }},
      {"prune", "Iterative prune, rewind and fine-tune", [](auto& p) { p.Prune(); }},
      {"attribute", "Vanilla / integrated gradient maps per level", [](auto& p) { p.Attribute(); }},
      {"evaluate", "Gini, ROAD and AOPC tables", [](auto& p) { p.Evaluate(); }},
      {"concepts", "NMF concepts ranked by Sobol importance", [](auto& p) { p.Concepts(); }},
      {"report", "SVG plots and summary.json from the tables", [](auto& p) { p.Report(); }},
      {"run-all", "Every stage in order", [](auto& p) { p.RunAll(); }},
  };
  for (const auto& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    AddCommon(sub, args);
    sub->callback([&args, &c] {
      spdlog::set_level(spdlog::level::from_str(args.log_level));
      prunex::Pipeline pipeline = MakePipeline(args);
      c.run(pipeline);
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const prunex::MissingArtifact& e) {
    spdlog::error("{}", e.what());
    return 2;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
