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

#ifndef FLOCKMPC_TESTS__SUPPORT_HPP
#define FLOCKMPC_TESTS__SUPPORT_HPP

#include <flockmpc/cli.hpp>
#include <flockmpc/sim.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#ifndef FLOCKMPC_SOURCE_DIR
#error "FLOCKMPC_SOURCE_DIR must point at the repository root"
#endif

namespace flockmpc::testing {

inline std::string asset(const std::string& rel)
{
  return std::string(FLOCKMPC_SOURCE_DIR) + "/assets/" + rel;
}

/// Two areas A = [0, length] x [0, width] and B = [length, 2 length] x
/// [0, width] joined by the interface "I" at x = length. With walls, "S" and
/// "N" line the south and north sides of both areas.
inline SemanticMap corridor_map(double length, double width, bool walls)
{
  auto rect = [](double x0, double y0, double x1, double y1)
  {
    return nlohmann::json::array({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
  };
  nlohmann::json nodes = nlohmann::json::array();
  nodes.push_back({{"id", "A"}, {"kind", "area"},
    {"polygon", rect(0, 0, length, width)}});
  nodes.push_back({{"id", "B"}, {"kind", "area"},
    {"polygon", rect(length, 0, 2 * length, width)}});
  const nlohmann::json seg = {{length, 0.0}, {length, width}};
  nodes.push_back({{"id", "I"}, {"kind", "interface"}, {"segment", seg},
    {"objective", {{"segment", seg}, {"forward_area", "B"}}},
    {"event", {{"segment", seg}}}});
  nlohmann::json edges = nlohmann::json::array({{"A", "I"}, {"B", "I"}});
  if (walls)
  {
    nodes.push_back({{"id", "S"}, {"kind", "boundary"},
      {"polygon", rect(0, -0.4, 2 * length, 0)}});
    nodes.push_back({{"id", "N"}, {"kind", "boundary"},
      {"polygon", rect(0, width, 2 * length, width + 0.4)}});
    for (const char* a : {"A", "B"})
      for (const char* w : {"S", "N"})
        edges.push_back(nlohmann::json::array({a, w}));
  }
  return map_from_json({{"nodes", nodes}, {"edges", edges}});
}

/// Smallest clearance margins of a decision vector, measured with polygon
/// distances rather than the separating hyperplanes.
struct Clearance
{
  double wall = std::numeric_limits<double>::infinity();  ///< dist - r_v
  double pair = std::numeric_limits<double>::infinity();  ///< dist - r_i - r_j
  std::size_t wall_knot = 0;
  std::size_t pair_knot = 0;
};

inline Clearance audit_clearance(const MpcProblem& p,
  const std::vector<double>& x, std::size_t first_knot = 0)
{
  Clearance c;
  const std::size_t N = p.horizon();
  auto pos = [&](std::size_t i, std::size_t k)
  {
    return geom::Point2{x[p.state_index(i, k, 0)], x[p.state_index(i, k, 1)]};
  };
  for (std::size_t i = 0; i < p.agents().size(); ++i)
  {
    const auto& a = p.agents()[i];
    for (const auto& w : a.elements.walls)
    {
      for (std::size_t k = first_knot; k <= N; ++k)
      {
        const double m = geom::point_hull_distance(pos(i, k), w.vertices)
          - a.shape.r_v;
        if (m < c.wall)
        {
          c.wall = m;
          c.wall_knot = k;
        }
      }
    }
  }
  for (std::size_t i = 0; i < p.agents().size(); ++i)
  {
    for (std::size_t j = i + 1; j < p.agents().size(); ++j)
    {
      const double r = p.agents()[i].shape.r_v + p.agents()[j].shape.r_v;
      for (std::size_t k = first_knot; k <= N; ++k)
      {
        const double m = geom::norm(pos(i, k) - pos(j, k)) - r;
        if (m < c.pair)
        {
          c.pair = m;
          c.pair_knot = k;
        }
      }
    }
  }
  return c;
}

/// Connected components of the horizon-overlap graph by repeated transitive
/// closure of an adjacency matrix.
inline FlockSet brute_force_flocks(const std::vector<AgentTask>& tasks,
  std::size_t n)
{
  const std::size_t m = tasks.size();
  std::vector<std::vector<char>> reach(m, std::vector<char>(m, 0));
  for (std::size_t i = 0; i < m; ++i)
  {
    const auto hi = semantic_horizon(tasks[i], n);
    for (std::size_t j = 0; j < m; ++j)
    {
      const auto hj = semantic_horizon(tasks[j], n);
      for (const auto& a : hi)
      {
        if (std::find(hj.begin(), hj.end(), a) != hj.end())
          reach[i][j] = 1;
      }
    }
  }
  // Warshall closure.
  for (std::size_t k = 0; k < m; ++k)
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < m; ++j)
        if (reach[i][k] && reach[k][j])
          reach[i][j] = 1;

  std::set<std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < m; ++i)
  {
    std::vector<std::size_t> g;
    for (std::size_t j = 0; j < m; ++j)
      if (reach[i][j])
        g.push_back(j);
    groups.insert(g);
  }
  return canonical({groups.begin(), groups.end()});
}

inline AgentTask make_task(std::string id, std::vector<std::string> route,
  std::size_t mode = 0)
{
  AgentTask t;
  t.agent_id = std::move(id);
  t.route = std::move(route);
  t.mode = mode;
  return t;
}

/// Random walk of areas on the grid, revisits allowed but no immediate
/// back-and-forth.
inline std::vector<std::string> random_walk(const SemanticMap& map,
  std::mt19937_64& rng, std::size_t len)
{
  const auto areas = map.ids_of_kind(NodeKind::Area);
  std::uniform_int_distribution<std::size_t> pick(0, areas.size() - 1);
  std::vector<std::string> route{areas[pick(rng)]};
  while (route.size() < len)
  {
    std::vector<std::string> next;
    for (const auto& i : map.interfaces_of(route.back()))
      for (const auto& a : map.areas_of(i))
        if (a != route.back()
          && (route.size() < 2 || a != route[route.size() - 2]))
          next.push_back(a);
    if (next.empty())
      break;
    std::uniform_int_distribution<std::size_t> k(0, next.size() - 1);
    route.push_back(next[k(rng)]);
  }
  return route;
}

inline std::vector<AgentTask> random_tasks(const SemanticMap& map,
  std::mt19937_64& rng, std::size_t max_agents)
{
  std::uniform_int_distribution<std::size_t> count(1, max_agents);
  std::uniform_int_distribution<std::size_t> len(1, 8);
  std::vector<AgentTask> tasks;
  const std::size_t n = count(rng);
  for (std::size_t i = 0; i < n; ++i)
  {
    auto route = random_walk(map, rng, len(rng));
    std::uniform_int_distribution<std::size_t> m(0, route.size() - 1);
    tasks.push_back(make_task("a" + std::to_string(i), route, m(rng)));
  }
  return tasks;
}

/// Flock problem with 1-3 agents on random routes, random weights and a
/// random decision vector near the start states.
struct RandomProblem
{
  std::shared_ptr<SemanticMap> map;
  std::vector<AgentTask> tasks;
  std::vector<AgentState> states;
  MpcProblem problem;
  std::vector<double> x;
};

inline RandomProblem random_problem(std::mt19937_64& rng,
  const std::shared_ptr<SemanticMap>& map)
{
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> agents(1, 3), horizon(3, 8),
    len(1, 5);
  RandomProblem rp;
  rp.map = map;
  const auto areas = map->ids_of_kind(NodeKind::Area);
  std::uniform_int_distribution<std::size_t> pick(0, areas.size() - 1);
  const std::size_t n = agents(rng);
  for (std::size_t i = 0; i < n; ++i)
  {
    std::vector<std::string> route{areas[pick(rng)]};
    const std::size_t l = len(rng);
    while (route.size() < l)
    {
      std::vector<std::string> next;
      for (const auto& f : map->interfaces_of(route.back()))
        for (const auto& a : map->areas_of(f))
          if (a != route.back())
            next.push_back(a);
      std::uniform_int_distribution<std::size_t> k(0, next.size() - 1);
      route.push_back(next[k(rng)]);
    }
    std::uniform_int_distribution<std::size_t> m(0, route.size() - 1);
    rp.tasks.push_back(make_task("a" + std::to_string(i), route, m(rng)));
    const auto c = map->node(route[rp.tasks.back().mode]).polygon.centroid();
    rp.states.push_back({c.x + u(rng) - 0.5, c.y + u(rng) - 0.5,
      2.0 * M_PI * u(rng), u(rng)});
  }
  MpcParams params;
  params.horizon_steps = horizon(rng);
  params.Q = 0.5 + u(rng);
  params.q = 10.0 * u(rng);
  params.R = {u(rng), 0.0, 0.0, u(rng)};
  std::vector<std::size_t> flock(n);
  std::iota(flock.begin(), flock.end(), std::size_t{0});
  rp.problem = build_problem(flock, rp.tasks, rp.states, *map, params);
  for (std::size_t i = 0; i < n; ++i)
  {
    std::vector<double> w(rp.problem.agents()[i].elements.objectives.size());
    for (auto& v : w)
      v = u(rng) < 0.6 ? 1.0 : 0.0;
    rp.problem.set_weights(i, w);
  }

  // Random point with states near the start and arbitrary planes/slacks.
  rp.x.assign(rp.problem.num_variables(), 0.0);
  for (auto& v : rp.x)
    v = 2.0 * u(rng) - 1.0;
  const std::size_t N = rp.problem.horizon();
  for (std::size_t i = 0; i < n; ++i)
  {
    for (std::size_t k = 0; k <= N; ++k)
    {
      rp.x[rp.problem.state_index(i, k, 0)] = rp.states[i].x + 2 * u(rng) - 1;
      rp.x[rp.problem.state_index(i, k, 1)] = rp.states[i].y + 2 * u(rng) - 1;
      rp.x[rp.problem.state_index(i, k, 2)] = 6.0 * u(rng) - 3.0;
      rp.x[rp.problem.state_index(i, k, 3)] = u(rng);
    }
  }
  return rp;
}

/// Largest relative error of the analytic objective gradient and constraint
/// Jacobian against central differences, relative to max(1, |analytic|).
struct DerivativeError
{
  double gradient = 0.0;
  double jacobian = 0.0;
};

/// The objective is at most quadratic in each variable, so its step `hf` can
/// be wider than the constraint step `h`.
inline DerivativeError derivative_error(const MpcProblem& p,
  std::vector<double> x, double h = 1e-6, double hf = 1e-4)
{
  const std::size_t n = p.num_variables(), m = p.num_constraints();
  DerivativeError e;
  std::vector<double> grad(n);
  p.gradient(x, grad);
  const auto pattern = p.jacobian_structure();
  std::vector<double> vals(pattern.size());
  p.jacobian_values(x, vals);
  std::vector<std::vector<std::pair<std::size_t, double>>> columns(n);
  for (std::size_t k = 0; k < pattern.size(); ++k)
    columns[pattern[k].second].emplace_back(pattern[k].first, vals[k]);

  std::vector<double> gp(m), gm(m), an(m);
  for (std::size_t j = 0; j < n; ++j)
  {
    const double keep = x[j];
    x[j] = keep + hf;
    const double fp = p.objective(x);
    x[j] = keep - hf;
    const double fm = p.objective(x);
    x[j] = keep + h;
    p.constraints(x, gp);
    x[j] = keep - h;
    p.constraints(x, gm);
    x[j] = keep;
    e.gradient = std::max(e.gradient, std::abs((fp - fm) / (2 * hf) - grad[j])
      / std::max(1.0, std::abs(grad[j])));
    std::fill(an.begin(), an.end(), 0.0);
    for (const auto& [r, v] : columns[j])
      an[r] += v;
    for (std::size_t r = 0; r < m; ++r)
      e.jacobian = std::max(e.jacobian,
        std::abs((gp[r] - gm[r]) / (2 * h) - an[r])
        / std::max(1.0, std::abs(an[r])));
  }
  return e;
}

/// Scenario from the bundled assets with the given cooperation mode.
inline SimConfig scenario_config(const std::string& name, CooperationMode mode)
{
  auto sc = cli::load_scenario_file(asset("scenarios/" + name + ".json"));
  sc.mode = mode;
  return sc.sim_config();
}

} // namespace flockmpc::testing

#endif // FLOCKMPC_TESTS__SUPPORT_HPP
