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

#include "support.hpp"

#include <catch_amalgamated.hpp>

#include <random>
#include <set>

using namespace flockmpc;

namespace {

AgentTask task(std::string id, std::vector<std::string> route,
  std::size_t mode = 0)
{
  AgentTask t;
  t.agent_id = std::move(id);
  t.route = std::move(route);
  t.mode = mode;
  return t;
}

bool is_partition(const FlockSet& f, std::size_t n)
{
  std::vector<int> seen(n, 0);
  for (const auto& g : f.flocks)
  {
    if (g.empty())
      return false;
    for (auto i : g)
    {
      if (i >= n)
        return false;
      ++seen[i];
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; });
}

/// Partition expressed with agent ids so it survives reordering.
std::set<std::set<std::string>> by_id(const FlockSet& f,
  const std::vector<AgentTask>& tasks)
{
  std::set<std::set<std::string>> out;
  for (const auto& g : f.flocks)
  {
    std::set<std::string> s;
    for (auto i : g)
      s.insert(tasks[i].agent_id);
    out.insert(s);
  }
  return out;
}

} // namespace

TEST_CASE("semantic horizon examples", "[coordination]")
{
  CHECK(semantic_horizon(task("a", {"S0", "S1", "S2"}, 0), 2)
    == std::vector<std::string>{"S0", "S1", "S2"});
  CHECK(semantic_horizon(task("a", {"S0", "S1", "S2"}, 2), 2)
    == std::vector<std::string>{"S2"});
  CHECK(semantic_horizon(task("a", {"S0", "S1", "S2"}, 1), 0)
    == std::vector<std::string>{"S1"});
}

TEST_CASE("semantic horizon matches index slicing", "[coordination]")
{
  std::mt19937_64 rng(31);
  std::uniform_int_distribution<std::size_t> len(1, 12), hor(0, 15);
  for (int t = 0; t < 1000; ++t)
  {
    std::vector<std::string> route;
    const std::size_t n = len(rng);
    for (std::size_t i = 0; i < n; ++i)
      route.push_back("R" + std::to_string(i));
    std::uniform_int_distribution<std::size_t> m(0, n - 1);
    const std::size_t mode = m(rng), h = hor(rng);
    const auto got = semantic_horizon(task("a", route, mode), h);
    std::vector<std::string> expected;
    for (std::size_t i = mode; i < n && i <= mode + h; ++i)
      expected.push_back(route[i]);
    CHECK(got == expected);
    CHECK_FALSE(got.empty());
  }
}

TEST_CASE("flock formation examples", "[coordination]")
{
  const std::vector<AgentTask> disjoint{task("a", {"A", "B"}),
    task("b", {"C", "D"})};
  CHECK(form_flocks(disjoint, 1).flocks
    == std::vector<std::vector<std::size_t>>{{0}, {1}});
  CHECK(form_flocks({task("a", {"A"})}, 1).flocks
    == std::vector<std::vector<std::size_t>>{{0}});
  // Chain a-b-c closes transitively.
  const std::vector<AgentTask> chain{task("a", {"A", "B"}),
    task("b", {"B", "C"}), task("c", {"C", "D"}), task("d", {"E"})};
  CHECK(form_flocks(chain, 1).flocks
    == std::vector<std::vector<std::size_t>>{{0, 1, 2}, {3}});
}

TEST_CASE("cooperation modes", "[coordination]")
{
  const std::vector<AgentTask> tasks{task("a", {"A", "B"}),
    task("b", {"B", "C"}), task("c", {"X"})};
  CHECK(flocks_for_mode(tasks, CooperationMode::Always, 1).flocks
    == std::vector<std::vector<std::size_t>>{{0, 1, 2}});
  CHECK(flocks_for_mode(tasks, CooperationMode::Never, 1).flocks
    == std::vector<std::vector<std::size_t>>{{0}, {1}, {2}});
  CHECK(flocks_for_mode(tasks, CooperationMode::Dynamic, 1).flocks
    == std::vector<std::vector<std::size_t>>{{0, 1}, {2}});
  CHECK(cooperation_mode_from_string("D") == CooperationMode::Dynamic);
  CHECK_FALSE(cooperation_mode_from_string("x").has_value());
}

TEST_CASE("flock formation equals connected components", "[coordination]")
{
  std::mt19937_64 rng(32);
  GridSpec spec;
  spec.cols = 3;
  spec.rows = 3;
  const auto map = generate_grid_map(spec);
  std::uniform_int_distribution<std::size_t> hor(0, 3);
  for (int t = 0; t < 1000; ++t)
  {
    const auto tasks = testing::random_tasks(map, rng, 12);
    const std::size_t n = hor(rng);
    const auto f = form_flocks(tasks, n);
    REQUIRE(f == testing::brute_force_flocks(tasks, n));
    CHECK(is_partition(f, tasks.size()));
  }
}

TEST_CASE("flock formation properties", "[coordination]")
{
  std::mt19937_64 rng(33);
  GridSpec spec;
  spec.cols = 3;
  spec.rows = 3;
  const auto map = generate_grid_map(spec);
  for (int t = 0; t < 300; ++t)
  {
    auto tasks = testing::random_tasks(map, rng, 10);
    const auto base = form_flocks(tasks, 1);

    // Permutation invariance.
    auto shuffled = tasks;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    CHECK(by_id(form_flocks(shuffled, 1), shuffled) == by_id(base, tasks));

    // A longer horizon never splits a flock.
    const auto wider = form_flocks(tasks, 2);
    for (const auto& g : base.flocks)
    {
      const bool contained = std::any_of(wider.flocks.begin(),
        wider.flocks.end(), [&](const auto& w)
        {
          return std::includes(w.begin(), w.end(), g.begin(), g.end());
        });
      CHECK(contained);
    }

    // Horizon zero pairs agents sharing their current area only.
    const auto zero = form_flocks(tasks, 0);
    for (std::size_t i = 0; i < tasks.size(); ++i)
    {
      for (std::size_t j = i + 1; j < tasks.size(); ++j)
      {
        if (tasks[i].route[tasks[i].mode] == tasks[j].route[tasks[j].mode])
        {
          CHECK(std::any_of(zero.flocks.begin(), zero.flocks.end(),
            [&](const auto& g)
            {
              return std::count(g.begin(), g.end(), i)
                && std::count(g.begin(), g.end(), j);
            }));
        }
      }
    }

    // Full-route horizons join every pair of routes sharing an area.
    for (auto& tk : tasks)
      tk.mode = 0;
    const auto full = form_flocks(tasks, 100);
    for (std::size_t i = 0; i < tasks.size(); ++i)
    {
      for (std::size_t j = i + 1; j < tasks.size(); ++j)
      {
        const std::set<std::string> ri(tasks[i].route.begin(),
          tasks[i].route.end());
        const bool share = std::any_of(tasks[j].route.begin(),
          tasks[j].route.end(),
          [&](const std::string& a) { return ri.count(a) > 0; });
        if (!share)
          continue;
        CHECK(std::any_of(full.flocks.begin(), full.flocks.end(),
          [&](const auto& g)
          {
            return std::count(g.begin(), g.end(), i)
              && std::count(g.begin(), g.end(), j);
          }));
      }
    }
  }
}

TEST_CASE("event detection examples", "[coordination]")
{
  const auto map = load_map_file(testing::asset("maps/three_area.json"));
  auto t = task("a", {"S0", "S1", "S2"}, 0);
  CHECK(check_event(t, map.node("S1").polygon.centroid(), map) == 1u);
  CHECK_FALSE(check_event(t, map.node("S0").polygon.centroid(), map));
  t.mode = 2;
  CHECK_FALSE(check_event(t, map.node("S2").polygon.centroid(), map));
}

TEST_CASE("a crossing fires exactly one event at the first inside sample",
  "[coordination]")
{
  const auto map = load_map_file(testing::asset("maps/three_area.json"));
  auto t = task("a", {"S0", "S1", "S2"}, 0);
  const geom::Point2 a = map.node("S0").polygon.centroid();
  const geom::Point2 b = map.node("S1").polygon.centroid();
  const auto& next = map.node("S1").polygon;
  const int samples = 2000;
  int fired = 0, fired_at = -1, first_inside = -1;
  for (int s = 0; s <= samples; ++s)
  {
    const geom::Point2 p = a + (static_cast<double>(s) / samples) * (b - a);
    if (first_inside < 0 && geom::point_in_polygon(p, next))
      first_inside = s;
    if (const auto m = check_event(t, p, map); m && t.mode == 0)
    {
      ++fired;
      fired_at = s;
      t.mode = *m;
    }
  }
  CHECK(fired == 1);
  CHECK(fired_at == first_inside);
  CHECK(t.mode == 1);
}

TEST_CASE("task validation", "[coordination]")
{
  const auto map = load_map_file(testing::asset("maps/three_area.json"));
  CHECK_NOTHROW(validate_task(task("a", {"S0", "S1"}), map));
  CHECK_THROWS_AS(validate_task(task("", {"S0"}), map), std::invalid_argument);
  CHECK_THROWS_AS(validate_task(task("a", {"S0", "S2"}), map), RouteError);
  auto bad = task("a", {"S0"});
  bad.shape.r_soft = bad.shape.r_v;
  CHECK_THROWS_AS(validate_task(bad, map), std::invalid_argument);
  bad = task("a", {"S0"}, 1);
  CHECK_THROWS_AS(validate_task(bad, map), RouteError);
}
