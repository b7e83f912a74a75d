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

#include <filesystem>
#include <map>
#include <queue>
#include <random>
#include <set>

using namespace flockmpc;
using nlohmann::json;

namespace {

SemanticMap three_area()
{
  return load_map_file(testing::asset("maps/three_area.json"));
}

std::set<std::string> wall_ids(const RelevantElements& e)
{
  std::set<std::string> out;
  for (const auto& w : e.walls)
    out.insert(w.id);
  return out;
}

/// Element retrieval re-derived from the raw edge list.
struct NaiveElements
{
  std::set<std::string> walls;
  std::vector<std::string> active;
};

NaiveElements naive_elements(const SemanticMap& map,
  const std::vector<std::string>& route, std::size_t mode, std::size_t nh)
{
  auto kind = [&](const std::string& id)
  {
    for (const auto& n : map.nodes())
      if (n.id == id)
        return n.kind;
    throw std::logic_error("unknown id");
  };
  auto incident = [&](const std::string& id)
  {
    std::vector<std::string> out;
    for (const auto& [a, b] : map.edges())
    {
      if (a == id) out.push_back(b);
      if (b == id) out.push_back(a);
    }
    return out;
  };
  auto connects = [&](const std::string& iface, const std::string& area)
  {
    const auto inc = incident(iface);
    return std::find(inc.begin(), inc.end(), area) != inc.end();
  };

  NaiveElements out;
  const std::size_t last = std::min(mode + nh, route.size() - 1);
  for (std::size_t j = mode; j <= last; ++j)
  {
    for (const auto& nb : incident(route[j]))
    {
      if (kind(nb) == NodeKind::Boundary)
        out.walls.insert(nb);
      else if (kind(nb) == NodeKind::Interface)
      {
        const bool prev = j > 0 && connects(nb, route[j - 1]);
        const bool next = j + 1 < route.size() && connects(nb, route[j + 1]);
        if (!prev && !next)
          out.walls.insert(nb);
      }
    }
    if (j + 1 < route.size())
    {
      for (const auto& nb : incident(route[j]))
      {
        if (kind(nb) == NodeKind::Interface && connects(nb, route[j + 1]))
        {
          out.active.push_back(nb);
          break;
        }
      }
    }
  }
  return out;
}

/// Random simple path of areas through interfaces.
std::vector<std::string> random_route(const SemanticMap& map,
  std::mt19937_64& rng, std::size_t max_len)
{
  const auto areas = map.ids_of_kind(NodeKind::Area);
  std::uniform_int_distribution<std::size_t> pick(0, areas.size() - 1);
  std::vector<std::string> route{areas[pick(rng)]};
  std::set<std::string> seen{route.front()};
  while (route.size() < max_len)
  {
    std::vector<std::string> next;
    for (const auto& i : map.interfaces_of(route.back()))
      for (const auto& a : map.areas_of(i))
        if (!seen.count(a))
          next.push_back(a);
    if (next.empty())
      break;
    std::uniform_int_distribution<std::size_t> k(0, next.size() - 1);
    route.push_back(next[k(rng)]);
    seen.insert(route.back());
  }
  return route;
}

bool areas_connected(const SemanticMap& map)
{
  const auto areas = map.ids_of_kind(NodeKind::Area);
  std::set<std::string> seen{areas.front()};
  std::queue<std::string> q;
  q.push(areas.front());
  while (!q.empty())
  {
    const auto a = q.front();
    q.pop();
    for (const auto& i : map.interfaces_of(a))
      for (const auto& b : map.areas_of(i))
        if (seen.insert(b).second)
          q.push(b);
  }
  return seen.size() == areas.size();
}

} // namespace

TEST_CASE("three-area map loads with the expected primitives", "[worldmodel]")
{
  const auto map = three_area();
  const auto areas = map.ids_of_kind(NodeKind::Area);
  for (const char* id : {"S0", "S1", "S2"})
    CHECK(std::count(areas.begin(), areas.end(), id) == 1);
  CHECK(map.ids_of_kind(NodeKind::Interface)
    == std::vector<std::string>{"I0", "I1", "I2", "I3"});
  CHECK(map.ids_of_kind(NodeKind::Boundary)
    == std::vector<std::string>{"W0", "W1", "W2", "W3"});
  CHECK(map.interface_between("S0", "S1") == "I1");
  CHECK(map.interface_between("S1", "S2") == "I2");
  for (const auto& i : map.ids_of_kind(NodeKind::Interface))
    CHECK(map.areas_of(i).size() == 2);
}

TEST_CASE("empty and malformed maps are rejected", "[worldmodel]")
{
  CHECK_THROWS_AS(load_map(R"({"nodes": [], "edges": []})"), ValidationError);
  CHECK_THROWS_AS(load_map("{not json"), ParseError);
  CHECK_THROWS_AS(load_map(R"({"nodes": 3})"), MapError);
}

TEST_CASE("validation names the offending ids", "[worldmodel]")
{
  json doc = json::parse(read_text_file(testing::asset("maps/three_area.json")));
  doc["edges"].push_back({"S0", "S2"});
  try
  {
    map_from_json(doc);
    FAIL("area-area edge accepted");
  }
  catch (const ValidationError& e)
  {
    bool named = false;
    for (const auto& v : e.violations())
    {
      if (std::count(v.ids.begin(), v.ids.end(), "S0")
        && std::count(v.ids.begin(), v.ids.end(), "S2"))
        named = true;
    }
    CHECK(named);
  }
}

TEST_CASE("bundled maps round-trip", "[worldmodel]")
{
  for (const char* name : {"three_area.json", "benchmark_grid.json"})
  {
    INFO(name);
    const std::string text = read_text_file(testing::asset(
      std::string("maps/") + name));
    const auto map = load_map(text);
    CHECK(json::parse(save_map(map)) == json::parse(text));
    CHECK(save_map(load_map(save_map(map))) == save_map(map));
  }
}

TEST_CASE("generated maps round-trip and validate", "[worldmodel]")
{
  for (std::size_t cols : {2u, 3u, 5u})
  {
    for (std::size_t rows : {2u, 4u})
    {
      for (std::size_t seg : {1u, 2u, 3u})
      {
        GridSpec spec;
        spec.cols = cols;
        spec.rows = rows;
        spec.segments = seg;
        const auto map = generate_grid_map(spec);
        const std::string text = save_map(map);
        const auto again = load_map(text);
        CHECK(save_map(again) == text);
        CHECK(areas_connected(again));
      }
    }
  }
}

TEST_CASE("minimal grid is connected with two areas per interface",
  "[worldmodel]")
{
  GridSpec spec;
  spec.cols = 2;
  spec.rows = 2;
  spec.corridor_width = 2.0;
  const auto map = generate_grid_map(spec);
  CHECK(areas_connected(map));
  for (const auto& i : map.ids_of_kind(NodeKind::Interface))
    CHECK(map.areas_of(i).size() == 2);
  for (const auto& b : map.ids_of_kind(NodeKind::Boundary))
    CHECK(map.areas_of(b).size() >= 1);
}

TEST_CASE("benchmark grid matches the workspace size", "[worldmodel]")
{
  const auto map = generate_grid_map(GridSpec{});
  const auto box = map.bounding_box();
  CHECK(box.width() >= 19.0);
  CHECK(box.width() <= 21.0);
  CHECK(box.height() >= 22.0);
  CHECK(box.height() <= 24.0);
  CHECK(save_map(map) == save_map(load_map_file(
    testing::asset("maps/benchmark_grid.json"))));
}

TEST_CASE("invalid grid dimensions are rejected", "[worldmodel]")
{
  GridSpec spec;
  spec.cols = 1;
  CHECK_THROWS_AS(generate_grid_map(spec), std::invalid_argument);
  spec = GridSpec{};
  spec.corridor_width = 0.0;
  CHECK_THROWS_AS(generate_grid_map(spec), std::invalid_argument);
}

TEST_CASE("relevant elements on the three-area map", "[worldmodel]")
{
  const auto map = three_area();
  const std::vector<std::string> route{"S0", "S1", "S2"};

  const auto e = relevant_elements(map, route, 0, 1);
  CHECK(e.horizon_areas == std::vector<std::string>{"S0", "S1"});
  CHECK(e.active_interfaces == std::vector<std::string>{"I1", "I2"});
  std::set<std::string> slot0;
  for (const auto& w : e.walls)
    if (w.slot == 0)
      slot0.insert(w.id);
  CHECK(slot0 == std::set<std::string>{"I0", "W0", "W1"});
  for (const auto& w : e.walls)
    CHECK(w.is_virtual == (w.id[0] == 'I'));
  REQUIRE(e.objectives.size() == 2);
  CHECK(e.objectives[0] == map.node("I1").objective->segment);
  CHECK(e.objectives[1] == map.node("I2").objective->segment);
  CHECK(e.events[0] == *map.node("I1").event);
  CHECK(e.events[1] == *map.node("I2").event);
  // The approach side of each objective is positive.
  CHECK(geom::signed_distance_to_line(
    map.node("S0").polygon.centroid(), e.objectives[0]) > 0.0);
  CHECK(geom::signed_distance_to_line(
    map.node("S1").polygon.centroid(), e.objectives[0]) < 0.0);
}

TEST_CASE("terminal slot contributes walls only", "[worldmodel]")
{
  const auto map = three_area();
  const auto e = relevant_elements(map, {"S0", "S1", "S2"}, 2, 0);
  CHECK(e.active_interfaces.empty());
  CHECK(e.objectives.empty());
  CHECK(wall_ids(e) == std::set<std::string>{"I3", "W2", "W3"});
}

TEST_CASE("relevant elements reject bad routes", "[worldmodel]")
{
  const auto map = three_area();
  CHECK_THROWS_AS(relevant_elements(map, {"S0", "S2"}, 0, 1), RouteError);
  CHECK_THROWS_AS(relevant_elements(map, {"S0", "S1"}, 2, 1), RouteError);
  CHECK_THROWS_AS(relevant_elements(map, {"S0", "nope"}, 0, 1), RouteError);
}

TEST_CASE("relevant elements match a raw edge scan", "[worldmodel]")
{
  std::mt19937_64 rng(21);
  GridSpec spec;
  spec.cols = 3;
  spec.rows = 3;
  const auto map = generate_grid_map(spec);
  for (int t = 0; t < 300; ++t)
  {
    const auto route = random_route(map, rng, 8);
    std::uniform_int_distribution<std::size_t> m(0, route.size() - 1);
    std::uniform_int_distribution<std::size_t> h(0, 3);
    const std::size_t mode = m(rng), nh = h(rng);
    const auto e = relevant_elements(map, route, mode, nh);
    const auto oracle = naive_elements(map, route, mode, nh);
    CHECK(wall_ids(e) == oracle.walls);
    CHECK(e.active_interfaces == oracle.active);
    CHECK(e.objectives.size() == e.active_interfaces.size());
    CHECK(e.events.size() == e.active_interfaces.size());

    // Locality and the active/virtual exclusivity.
    const std::set<std::string> window(e.horizon_areas.begin(),
      e.horizon_areas.end());
    for (const auto& w : e.walls)
    {
      const auto areas = map.areas_of(w.id);
      CHECK(std::any_of(areas.begin(), areas.end(),
        [&](const std::string& a) { return window.count(a) > 0; }));
      CHECK(std::find(e.active_interfaces.begin(), e.active_interfaces.end(),
        w.id) == e.active_interfaces.end());
    }
    CHECK(relevant_elements(map, route, mode, nh) == e);
  }
}
