/*
 * Copyright (C) 2026 The flockmpc Authors
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
 *
*/

#include <flockmpc/cli.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <thread>

int main(int argc, char** argv)
{
  using namespace flockmpc;

  CLI::App app{"Multi-agent MPC with dynamic coordination groups"};
  app.require_subcommand(1);

  std::string validate_path;
  auto* validate = app.add_subcommand("validate", "Check a semantic map");
  validate->add_option("map", validate_path, "Map JSON file")->required();

  GridSpec grid;
  std::string grid_out;
  auto* generate = app.add_subcommand("generate-map",
    "Write the benchmark grid map");
  generate->add_option("--out,-o", grid_out, "Output path")->required();
  generate->add_option("--cols", grid.cols, "Vertical corridors")
    ->capture_default_str();
  generate->add_option("--rows", grid.rows, "Horizontal corridors")
    ->capture_default_str();
  generate->add_option("--corridor-width", grid.corridor_width)
    ->capture_default_str();
  generate->add_option("--block-x", grid.block_x)->capture_default_str();
  generate->add_option("--block-y", grid.block_y)->capture_default_str();
  generate->add_option("--segments", grid.segments,
    "Areas per corridor segment")->capture_default_str();

  cli::RunOptions run_opt;
  run_opt.jobs = std::max(1u, std::thread::hardware_concurrency());
  std::string mode_str;
  auto* run = app.add_subcommand("run", "Simulate a scenario");
  run->add_option("scenario", run_opt.scenario_path, "Scenario JSON file")
    ->required();
  run->add_option("--mode", mode_str, "Cooperation mode")
    ->check(CLI::IsMember({"A", "D", "N"}));
  auto* runs_opt = run->add_option("--runs", "Number of runs");
  auto* seed_opt = run->add_option("--seed", "Base seed");
  auto* steps_opt = run->add_option("--max-steps", "Step limit per run");
  auto* params_opt = run->add_option("--params",
    "JSON object of MPC parameter overrides");
  run->add_option("--out-dir", run_opt.out_dir, "Artifact directory")
    ->capture_default_str();
  run->add_option("--jobs,-j", run_opt.jobs, "Worker threads")
    ->check(CLI::PositiveNumber)->capture_default_str();
  auto* budget_opt = run->add_option("--failure-budget",
    "Exit with code 3 when more runs fail");

  std::string record_path, svg_path, plot_map;
  auto* plot = app.add_subcommand("plot", "Render a run record as SVG");
  plot->add_option("record", record_path, "Run record JSON")->required();
  plot->add_option("out", svg_path, "Output SVG")->required();
  auto* plot_map_opt = plot->add_option("--map", plot_map,
    "Map file when the record has none embedded");

  try
  {
    app.parse(argc, argv);
  }
  catch (const CLI::ParseError& e)
  {
    const int code = app.exit(e);
    return code == 0 ? cli::Ok : cli::Usage;
  }

  if (*validate)
    return cli::cmd_validate(validate_path, std::cout, std::cerr);

  if (*generate)
    return cli::cmd_generate_map(grid, grid_out, std::cerr);

  if (*run)
  {
    try
    {
      if (!mode_str.empty())
        run_opt.mode = cooperation_mode_from_string(mode_str);
      if (*runs_opt)
      {
        const auto n = runs_opt->as<long long>();
        if (n < 1)
          throw std::invalid_argument("--runs must be at least 1");
        run_opt.runs = static_cast<std::size_t>(n);
      }
      if (*seed_opt) run_opt.seed = seed_opt->as<std::uint64_t>();
      if (*steps_opt) run_opt.max_steps = steps_opt->as<std::size_t>();
      if (*params_opt) run_opt.params = params_opt->as<std::string>();
      if (*budget_opt) run_opt.failure_budget = budget_opt->as<std::size_t>();
    }
    catch (const std::exception& e)
    {
      std::cerr << "error: " << e.what() << "\n";
      return cli::Usage;
    }
    return cli::cmd_run(run_opt, std::cout, std::cerr);
  }

  if (*plot)
  {
    std::optional<std::string> map;
    if (*plot_map_opt)
      map = plot_map;
    return cli::cmd_plot(record_path, svg_path, map, std::cerr);
  }
  return cli::Usage;
}
