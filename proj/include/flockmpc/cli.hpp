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

#ifndef FLOCKMPC__CLI_HPP
#define FLOCKMPC__CLI_HPP

#include <flockmpc/sim.hpp>

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <ios>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace flockmpc::cli {

enum ExitCode : int
{
  Ok = 0,
  Usage = 1,        ///< invalid arguments, scenario or map content
  Io = 2,           ///< unreadable or unwritable files
  FailureBudget = 3 ///< more failed runs than allowed
};

//==============================================================================
// MPC parameter overrides
//==============================================================================
inline nlohmann::json params_to_json(const MpcParams& p)
{
  return {
    {"dt", p.dt}, {"horizon_steps", p.horizon_steps},
    {"frequency", p.frequency}, {"R", p.R}, {"Q", p.Q}, {"q", p.q},
    {"element_horizon", p.element_horizon},
    {"agent_horizon", p.agent_horizon}, {"soft_penalty", p.soft_penalty},
    {"max_iterations", p.max_iterations}, {"tolerance", p.tolerance},
    {"max_wall_time", p.max_wall_time}};
}

/// Applies the keys of `overrides` on top of `base`. Throws
/// std::invalid_argument for unknown keys, wrong types or invalid results.
inline MpcParams apply_param_overrides(MpcParams base,
  const nlohmann::json& overrides)
{
  if (overrides.is_null())
    return base;
  if (!overrides.is_object())
    throw std::invalid_argument("params must be a JSON object");

  auto number = [](const nlohmann::json& v, const std::string& key)
  {
    if (!v.is_number())
      throw std::invalid_argument("params." + key + " must be a number");
    return v.get<double>();
  };
  auto count = [](const nlohmann::json& v, const std::string& key)
  {
    if (!v.is_number_unsigned())
      throw std::invalid_argument(
        "params." + key + " must be a non-negative integer");
    return v.get<std::size_t>();
  };

  for (const auto& [key, v] : overrides.items())
  {
    if (key == "dt") base.dt = number(v, key);
    else if (key == "horizon_steps") base.horizon_steps = count(v, key);
    else if (key == "frequency") base.frequency = number(v, key);
    else if (key == "Q") base.Q = number(v, key);
    else if (key == "q") base.q = number(v, key);
    else if (key == "element_horizon") base.element_horizon = count(v, key);
    else if (key == "agent_horizon") base.agent_horizon = count(v, key);
    else if (key == "soft_penalty") base.soft_penalty = number(v, key);
    else if (key == "max_iterations") base.max_iterations = count(v, key);
    else if (key == "tolerance") base.tolerance = number(v, key);
    else if (key == "max_wall_time") base.max_wall_time = number(v, key);
    else if (key == "R")
    {
      if (!v.is_array() || v.size() != 4)
        throw std::invalid_argument("params.R must be 4 numbers (row-major)");
      for (std::size_t i = 0; i < 4; ++i)
        base.R[i] = number(v[i], "R");
    }
    else
      throw std::invalid_argument("unknown parameter '" + key + "'");
  }

  const std::string err = base.check();
  if (!err.empty())
    throw std::invalid_argument("invalid parameters: " + err);
  return base;
}

//==============================================================================
// Scenario files
//==============================================================================
struct Scenario
{
  std::string name;
  std::string map_path;  ///< as resolved against the scenario file
  std::shared_ptr<const SemanticMap> map;
  std::vector<AgentSpec> agents;
  CooperationMode mode = CooperationMode::Dynamic;
  nlohmann::json params = nlohmann::json::object();
  std::size_t runs = 1;
  std::uint64_t seed = 0;
  std::size_t max_steps = 400;

  SimConfig sim_config() const
  {
    SimConfig c;
    c.map = map;
    c.agents = agents;
    c.mode = mode;
    c.params = apply_param_overrides(MpcParams{}, params);
    c.seed = seed;
    c.max_steps = max_steps;
    c.runs = runs;
    return c;
  }
};

/// Parses a scenario document. `base_dir` resolves a relative map path.
/// Throws std::ios_base::failure when the map cannot be read, and
/// std::invalid_argument / MapError for invalid content.
inline Scenario parse_scenario(const nlohmann::json& doc,
  const std::filesystem::path& base_dir)
{
  if (!doc.is_object())
    throw std::invalid_argument("scenario must be a JSON object");
  for (const auto& [key, v] : doc.items())
  {
    static const std::set<std::string> allowed{"name", "map", "mode",
      "params", "runs", "seed", "max_steps", "agents"};
    if (!allowed.count(key))
      throw std::invalid_argument("scenario: unknown key '" + key + "'");
  }

  Scenario s;
  s.name = doc.value("name", std::string{});
  if (!doc.contains("map") || !doc["map"].is_string())
    throw std::invalid_argument("scenario: missing string 'map'");
  std::filesystem::path map_path = doc["map"].get<std::string>();
  if (map_path.is_relative())
    map_path = base_dir / map_path;
  s.map_path = map_path.lexically_normal().string();
  s.map = std::make_shared<const SemanticMap>(load_map_file(s.map_path));

  if (doc.contains("mode"))
  {
    const auto mode = doc["mode"].is_string()
      ? cooperation_mode_from_string(doc["mode"].get<std::string>())
      : std::nullopt;
    if (!mode)
      throw std::invalid_argument("scenario: mode must be A, D or N");
    s.mode = *mode;
  }
  if (doc.contains("params"))
    s.params = doc["params"];
  apply_param_overrides(MpcParams{}, s.params);

  auto count = [&](const char* key, auto fallback)
  {
    if (!doc.contains(key))
      return static_cast<decltype(fallback)>(fallback);
    if (!doc[key].is_number_unsigned())
      throw std::invalid_argument(std::string("scenario: '") + key
        + "' must be a non-negative integer");
    return doc[key].get<decltype(fallback)>();
  };
  s.runs = count("runs", std::size_t{1});
  s.seed = count("seed", std::uint64_t{0});
  s.max_steps = count("max_steps", std::size_t{400});
  if (s.runs < 1)
    throw std::invalid_argument("scenario: runs must be at least 1");

  if (!doc.contains("agents") || !doc["agents"].is_array())
    throw std::invalid_argument("scenario: missing 'agents' array");
  for (const auto& a : doc["agents"])
  {
    if (!a.is_object() || !a.contains("id") || !a["id"].is_string()
      || !a.contains("route") || !a["route"].is_array())
      throw std::invalid_argument(
        "scenario: each agent needs a string 'id' and a 'route' array");
    AgentSpec spec;
    spec.id = a["id"].get<std::string>();
    for (const auto& r : a["route"])
    {
      if (!r.is_string())
        throw std::invalid_argument("scenario: route entries must be ids");
      spec.route.push_back(r.get<std::string>());
    }
    if (a.contains("r_v")) spec.shape.r_v = a["r_v"].get<double>();
    if (a.contains("r_soft")) spec.shape.r_soft = a["r_soft"].get<double>();
    s.agents.push_back(std::move(spec));
  }

  s.sim_config().validate();
  return s;
}

inline Scenario load_scenario_file(const std::string& path)
{
  const std::string text = read_text_file(path);
  nlohmann::json doc;
  try
  {
    doc = nlohmann::json::parse(text);
  }
  catch (const nlohmann::json::parse_error& e)
  {
    throw std::invalid_argument(std::string("malformed scenario JSON: ")
      + e.what());
  }
  return parse_scenario(doc,
    std::filesystem::path(path).parent_path());
}

//==============================================================================
// Reports
//==============================================================================
inline std::string format_summary(const Summary& s, double scale, int digits)
{
  if (s.empty())
    return "[-, -, -]";
  std::ostringstream out;
  out << std::fixed << std::setprecision(digits) << "[" << s.min * scale
      << ", " << s.avg * scale << ", " << s.max * scale << "]";
  return out.str();
}

/// Human-readable table with [min, avg, max] summaries.
inline std::string summary_table(const std::string& name,
  CooperationMode mode, const ScenarioStats& st)
{
  std::ostringstream out;
  out << name << " (" << to_string(mode) << "), " << st.runs << " runs\n"
      << "  succeeded                 " << st.succeeded << "\n"
      << "  infeasible / collision    " << st.infeasible_runs << " / "
      << st.collision_runs << "\n"
      << "  minor collisions          " << st.minor_collision_runs << "\n"
      << "  completion [steps]        "
      << format_summary(st.completion_steps, 1.0, 1) << "\n"
      << "  MPC time [ms]             "
      << format_summary(st.mpc_time, 1e3, 2) << "\n"
      << "  MPC time, all runs [ms]   "
      << format_summary(st.mpc_time_all, 1e3, 2) << "\n"
      << "  config time [s]           "
      << format_summary(st.config_time, 1.0, 4) << "\n"
      << "  flocks (count / size)     " << std::fixed << std::setprecision(2)
      << st.avg_flock_count << " / " << st.avg_flock_size << "\n";
  return out.str();
}

inline nlohmann::json results_to_json(const Scenario& s,
  const SimConfig& config, const ScenarioStats& stats,
  const std::vector<RunRecord>& records)
{
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : records)
    runs.push_back(record_to_json(r));
  return {{"name", s.name}, {"map", s.map_path},
    {"mode", to_string(config.mode)}, {"seed", config.seed},
    {"runs", records.size()}, {"max_steps", config.max_steps},
    {"params", params_to_json(config.params)},
    {"stats", stats_to_json(stats)}, {"records", runs}};
}

//==============================================================================
// SVG plots
//==============================================================================
/// Map bounding box grown by `margin` of its extent on every side.
inline geom::Box2 plot_box(const SemanticMap& map, double margin = 0.05)
{
  geom::Box2 box = map.bounding_box();
  const double mx = margin * box.width();
  const double my = margin * box.height();
  box.min = {box.min.x - mx, box.min.y - my};
  box.max = {box.max.x + mx, box.max.y + my};
  return box;
}

namespace detail {

inline const char* agent_color(std::size_t i)
{
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
    "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};
  return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

inline std::string fmt(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

} // namespace detail

/// SVG 1.1 document: map polygons, route areas shaded per agent (start area
/// darkest) and one trajectory path per agent with samples. `routes` may be
/// empty, in which case no route shading is drawn.
inline std::string render_svg(const SemanticMap& map, const RunRecord& record,
  const std::vector<std::vector<std::string>>& routes = {})
{
  using detail::fmt;
  const geom::Box2 box = plot_box(map);
  const double scale = 30.0;
  auto X = [&](double x) { return fmt((x - box.min.x) * scale); };
  auto Y = [&](double y) { return fmt((box.max.y - y) * scale); };

  auto polygon = [&](const std::vector<geom::Point2>& pts,
    const std::string& style)
  {
    std::string s = "<polygon points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i)
      s += (i ? " " : "") + X(pts[i].x) + "," + Y(pts[i].y);
    return s + "\" " + style + "/>\n";
  };

  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" "
      << "width=\"" << fmt(box.width() * scale) << "\" height=\""
      << fmt(box.height() * scale) << "\" viewBox=\"0 0 "
      << fmt(box.width() * scale) << " " << fmt(box.height() * scale)
      << "\">\n"
      << "<g id=\"map\">\n";
  for (const auto& n : map.nodes())
  {
    if (n.kind == NodeKind::Area)
      out << polygon(n.vertices(),
        "fill=\"#f4f4f4\" stroke=\"#bbbbbb\" stroke-width=\"1\"");
    else if (n.kind == NodeKind::Boundary)
      out << polygon(n.vertices(), "fill=\"#555555\" stroke=\"none\"");
  }
  out << "</g>\n<g id=\"routes\">\n";
  for (std::size_t i = 0; i < routes.size(); ++i)
  {
    for (std::size_t k = 0; k < routes[i].size(); ++k)
    {
      const auto* n = map.find(routes[i][k]);
      if (!n || n->kind != NodeKind::Area)
        continue;
      const double opacity = k == 0 ? 0.6 : 0.2;
      out << polygon(n->vertices(), std::string("fill=\"")
        + detail::agent_color(i) + "\" fill-opacity=\"" + fmt(opacity)
        + "\" stroke=\"none\"");
    }
  }
  out << "</g>\n<g id=\"trajectories\" fill=\"none\" stroke-width=\"2\">\n";
  for (std::size_t i = 0; i < record.agent_ids.size()
       && i < record.trajectories.size(); ++i)
  {
    const auto& traj = record.trajectories[i];
    if (traj.empty())
      continue;
    out << "<path id=\"agent-" << record.agent_ids[i] << "\" stroke=\""
        << detail::agent_color(i) << "\" d=\"";
    for (std::size_t k = 0; k < traj.size(); ++k)
      out << (k ? " L " : "M ") << X(traj[k].state.x) << " "
          << Y(traj[k].state.y);
    out << "\"/>\n";
  }
  out << "</g>\n</svg>\n";
  return out.str();
}

//==============================================================================
// Commands
//==============================================================================
inline int cmd_validate(const std::string& map_path, std::ostream& out,
  std::ostream& err)
{
  std::string text;
  try
  {
    text = read_text_file(map_path);
  }
  catch (const std::ios_base::failure& e)
  {
    err << "error: " << e.what() << "\n";
    return Io;
  }
  try
  {
    const SemanticMap map = load_map(text);
    out << map_path << ": ok (" << map.nodes().size() << " nodes, "
        << map.edges().size() << " edges)\n";
    return Ok;
  }
  catch (const ValidationError& e)
  {
    for (const auto& v : e.violations())
    {
      err << map_path << ": " << v.str() << "\n";
    }
    return Usage;
  }
  catch (const MapError& e)
  {
    err << map_path << ": " << e.what() << "\n";
    return Usage;
  }
}

inline int cmd_generate_map(const GridSpec& spec, const std::string& out_path,
  std::ostream& err)
{
  SemanticMap map;
  try
  {
    map = generate_grid_map(spec);
  }
  catch (const std::exception& e)
  {
    err << "error: " << e.what() << "\n";
    return Usage;
  }
  try
  {
    write_text_file(out_path, save_map(map));
  }
  catch (const std::ios_base::failure& e)
  {
    err << "error: " << e.what() << "\n";
    return Io;
  }
  return Ok;
}

struct RunOptions
{
  std::string scenario_path;
  std::optional<CooperationMode> mode;
  std::optional<std::size_t> runs;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_steps;
  std::optional<std::string> params;  ///< JSON object text
  std::string out_dir = ".";
  std::size_t jobs = 1;
  std::optional<std::size_t> failure_budget;
};

inline int cmd_run(const RunOptions& opt, std::ostream& out, std::ostream& err)
{
  Scenario scenario;
  SimConfig config;
  try
  {
    scenario = load_scenario_file(opt.scenario_path);
    if (opt.mode) scenario.mode = *opt.mode;
    if (opt.runs) scenario.runs = *opt.runs;
    if (opt.seed) scenario.seed = *opt.seed;
    if (opt.max_steps) scenario.max_steps = *opt.max_steps;
    if (opt.params)
    {
      nlohmann::json overrides;
      try
      {
        overrides = nlohmann::json::parse(*opt.params);
      }
      catch (const nlohmann::json::parse_error& e)
      {
        throw std::invalid_argument(std::string("--params: ") + e.what());
      }
      if (!overrides.is_object())
        throw std::invalid_argument("--params must be a JSON object");
      for (const auto& [k, v] : overrides.items())
        scenario.params[k] = v;
    }
    if (scenario.runs < 1)
      throw std::invalid_argument("runs must be at least 1");
    config = scenario.sim_config();
    config.validate();
  }
  catch (const std::ios_base::failure& e)
  {
    err << "error: " << e.what() << "\n";
    return Io;
  }
  catch (const std::exception& e)
  {
    err << "error: " << e.what() << "\n";
    return Usage;
  }

  const auto records = run_all(config, scenario.runs, opt.jobs);
  const ScenarioStats stats = aggregate(records);
  const std::string name = scenario.name.empty()
    ? std::filesystem::path(opt.scenario_path).stem().string()
    : scenario.name;

  try
  {
    const std::filesystem::path dir(opt.out_dir);
    std::filesystem::create_directories(dir);
    write_text_file((dir / "results.json").string(),
      results_to_json(scenario, config, stats, records).dump(1) + "\n");
    nlohmann::json routes = nlohmann::json::object();
    for (const auto& a : scenario.agents)
      routes[a.id] = a.route;
    for (std::size_t r = 0; r < records.size(); ++r)
    {
      char stem[32];
      std::snprintf(stem, sizeof(stem), "run_%03zu", r);
      nlohmann::json rec = record_to_json(records[r]);
      rec["map"] = map_to_json(*scenario.map);
      rec["routes"] = routes;
      write_text_file((dir / (std::string(stem) + ".json")).string(),
        rec.dump(1) + "\n");
      write_text_file((dir / (std::string(stem) + ".csv")).string(),
        trajectory_csv(records[r]));
    }
  }
  catch (const std::exception& e)
  {
    err << "error: " << e.what() << "\n";
    return Io;
  }

  out << summary_table(name, config.mode, stats);
  const std::size_t failed = stats.runs - stats.succeeded;
  if (opt.failure_budget && failed > *opt.failure_budget)
  {
    err << "failure budget exceeded: " << failed << " failed runs > "
        << *opt.failure_budget << "\n";
    return FailureBudget;
  }
  return Ok;
}

/// Plots a run record written by `run`. The record embeds its map unless
/// `map_path` is given.
inline int cmd_plot(const std::string& record_path, const std::string& out_path,
  const std::optional<std::string>& map_path, std::ostream& err)
{
  std::string text, map_text;
  try
  {
    text = read_text_file(record_path);
    if (map_path)
      map_text = read_text_file(*map_path);
  }
  catch (const std::ios_base::failure& e)
  {
    err << "error: " << e.what() << "\n";
    return Io;
  }

  std::string svg;
  try
  {
    const nlohmann::json doc = nlohmann::json::parse(text);
    const RunRecord record = record_from_json(doc);
    SemanticMap map;
    if (map_path)
      map = load_map(map_text);
    else if (doc.contains("map"))
      map = map_from_json(doc["map"]);
    else
      throw std::invalid_argument("record has no embedded map; pass --map");
    std::vector<std::vector<std::string>> routes;
    if (doc.contains("routes"))
    {
      for (const auto& id : record.agent_ids)
        routes.push_back(doc["routes"].value(id,
          std::vector<std::string>{}));
    }
    svg = render_svg(map, record, routes);
  }
  catch (const std::exception& e)
  {
    err << "error: " << record_path << ": " << e.what() << "\n";
    return Usage;
  }

  try
  {
    write_text_file(out_path, svg);
  }
  catch (const std::ios_base::failure& e)
  {
    err << "error: " << e.what() << "\n";
    return Io;
  }
  return Ok;
}

} // namespace flockmpc::cli

#endif // FLOCKMPC__CLI_HPP
