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

#ifndef FLOCKMPC__COORDINATION_HPP
#define FLOCKMPC__COORDINATION_HPP

#include <flockmpc/worldmodel.hpp>

#include <algorithm>
#include <numeric>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace flockmpc {

//==============================================================================
struct AgentShape
{
  double r_v = 0.40;     ///< hard radius [m]
  double r_soft = 0.45;  ///< enlarged radius for the soft constraints [m]

  bool valid() const { return 0.0 < r_v && r_v < r_soft; }
};

struct DynamicLimits
{
  double v_min = 0.0, v_max = 1.0;
  double a_min = -0.5, a_max = 0.5;
  double omega_min = -0.5, omega_max = 0.5;

  bool valid() const
  {
    return v_min <= v_max && a_min <= a_max && omega_min <= omega_max;
  }
};

//==============================================================================
struct AgentTask
{
  std::string agent_id;
  std::vector<std::string> route;
  std::size_t mode = 0;
  AgentShape shape;
  DynamicLimits limits;

  bool completed() const { return mode + 1 == route.size(); }
};

/// Throws std::invalid_argument (or RouteError for map mismatches) when the
/// task violates its invariants.
inline void validate_task(const AgentTask& task, const SemanticMap& map)
{
  if (task.agent_id.empty())
    throw std::invalid_argument("agent id is empty");
  if (!task.shape.valid())
    throw std::invalid_argument("agent '" + task.agent_id
      + "': radii must satisfy 0 < r_v < r_soft");
  if (!task.limits.valid())
    throw std::invalid_argument("agent '" + task.agent_id
      + "': dynamic limits are inverted");
  check_route(map, task.route);
  if (task.mode >= task.route.size())
    throw RouteError("agent '" + task.agent_id + "': mode out of range");
}

//==============================================================================
/// Route slice [mode, min(mode + n, |route| - 1)].
inline std::vector<std::string> semantic_horizon(
  const AgentTask& task, std::size_t n)
{
  const std::size_t last = std::min(task.mode + n, task.route.size() - 1);
  return {task.route.begin() + task.mode, task.route.begin() + last + 1};
}

//==============================================================================
/// Partition of agents (indices into the task list) into coordination groups.
/// Members are sorted, groups are ordered by their first member.
struct FlockSet
{
  std::vector<std::vector<std::size_t>> flocks;

  std::size_t size() const { return flocks.size(); }

  friend bool operator==(const FlockSet&, const FlockSet&) = default;
};

inline FlockSet canonical(std::vector<std::vector<std::size_t>> groups)
{
  for (auto& g : groups)
    std::sort(g.begin(), g.end());
  std::sort(groups.begin(), groups.end());
  return {std::move(groups)};
}

namespace detail {

class DisjointSets
{
public:
  explicit DisjointSets(std::size_t n)
  : _parent(n), _rank(n, 0)
  {
    std::iota(_parent.begin(), _parent.end(), std::size_t{0});
  }

  std::size_t find(std::size_t i)
  {
    while (_parent[i] != i)
    {
      _parent[i] = _parent[_parent[i]];
      i = _parent[i];
    }
    return i;
  }

  void unite(std::size_t a, std::size_t b)
  {
    a = find(a);
    b = find(b);
    if (a == b)
      return;
    if (_rank[a] < _rank[b])
      std::swap(a, b);
    _parent[b] = a;
    if (_rank[a] == _rank[b])
      ++_rank[a];
  }

private:
  std::vector<std::size_t> _parent;
  std::vector<std::size_t> _rank;
};

} // namespace detail

/// Agents cooperate when their horizons of length `n` share an area; groups
/// are closed transitively. Agents without overlap form singletons.
inline FlockSet form_flocks(const std::vector<AgentTask>& tasks, std::size_t n)
{
  std::vector<std::set<std::string>> horizons;
  horizons.reserve(tasks.size());
  for (const auto& t : tasks)
  {
    const auto h = semantic_horizon(t, n);
    horizons.emplace_back(h.begin(), h.end());
  }

  detail::DisjointSets sets(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i)
  {
    for (std::size_t j = i + 1; j < tasks.size(); ++j)
    {
      const auto& hi = horizons[i];
      const auto& hj = horizons[j];
      const bool overlap = std::any_of(hi.begin(), hi.end(),
        [&](const std::string& a) { return hj.count(a) > 0; });
      if (overlap)
        sets.unite(i, j);
    }
  }

  std::vector<std::vector<std::size_t>> groups;
  std::vector<long> group_of(tasks.size(), -1);
  for (std::size_t i = 0; i < tasks.size(); ++i)
  {
    const std::size_t root = sets.find(i);
    if (group_of[root] < 0)
    {
      group_of[root] = static_cast<long>(groups.size());
      groups.emplace_back();
    }
    groups[group_of[root]].push_back(i);
  }
  return canonical(std::move(groups));
}

//==============================================================================
enum class CooperationMode { Always, Dynamic, Never };

inline const char* to_string(CooperationMode m)
{
  switch (m)
  {
    case CooperationMode::Always: return "A";
    case CooperationMode::Dynamic: return "D";
    case CooperationMode::Never: return "N";
  }
  return "?";
}

inline std::optional<CooperationMode> cooperation_mode_from_string(
  const std::string& s)
{
  if (s == "A" || s == "always" || s == "Always") return CooperationMode::Always;
  if (s == "D" || s == "dynamic" || s == "Dynamic")
    return CooperationMode::Dynamic;
  if (s == "N" || s == "never" || s == "Never") return CooperationMode::Never;
  return std::nullopt;
}

inline FlockSet flocks_for_mode(const std::vector<AgentTask>& tasks,
  CooperationMode mode, std::size_t agent_horizon)
{
  std::vector<std::vector<std::size_t>> groups;
  switch (mode)
  {
    case CooperationMode::Always:
    {
      if (!tasks.empty())
      {
        groups.emplace_back(tasks.size());
        std::iota(groups.back().begin(), groups.back().end(), std::size_t{0});
      }
      return canonical(std::move(groups));
    }
    case CooperationMode::Never:
    {
      for (std::size_t i = 0; i < tasks.size(); ++i)
        groups.push_back({i});
      return canonical(std::move(groups));
    }
    case CooperationMode::Dynamic:
      return form_flocks(tasks, agent_horizon);
  }
  return {};
}

//==============================================================================
/// New mode when the position lies inside the next area of the route.
inline std::optional<std::size_t> check_event(const AgentTask& task,
  geom::Point2 position, const SemanticMap& map)
{
  if (task.mode + 1 >= task.route.size())
    return std::nullopt;
  const auto& next = map.node(task.route[task.mode + 1]);
  if (geom::point_in_polygon(position, next.polygon))
    return task.mode + 1;
  return std::nullopt;
}

} // namespace flockmpc

#endif // FLOCKMPC__COORDINATION_HPP
