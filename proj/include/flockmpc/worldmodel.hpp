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

#ifndef FLOCKMPC__WORLDMODEL_HPP
#define FLOCKMPC__WORLDMODEL_HPP

#include <flockmpc/geom.hpp>

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace flockmpc {

//==============================================================================
class MapError : public std::runtime_error
{
public:
  using std::runtime_error::runtime_error;
};

class ParseError : public MapError
{
public:
  using MapError::MapError;
};

/// One violated map rule. `ids` names every node involved.
struct Violation
{
  std::vector<std::string> ids;
  std::string rule;

  std::string str() const
  {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i)
      out += (i ? ", " : "") + ids[i];
    return "[" + out + "] " + rule;
  }
};

class ValidationError : public MapError
{
public:
  explicit ValidationError(std::vector<Violation> violations)
  : MapError(summarize(violations)),
    _violations(std::move(violations))
  { }

  const std::vector<Violation>& violations() const { return _violations; }

private:
  static std::string summarize(const std::vector<Violation>& v)
  {
    std::string out = "map validation failed:";
    for (const auto& x : v)
      out += "\n  " + x.str();
    return out;
  }

  std::vector<Violation> _violations;
};

class RouteError : public MapError
{
public:
  using MapError::MapError;
};

//==============================================================================
enum class NodeKind { Area, Interface, Boundary };

inline const char* to_string(NodeKind k)
{
  switch (k)
  {
    case NodeKind::Area: return "area";
    case NodeKind::Interface: return "interface";
    case NodeKind::Boundary: return "boundary";
  }
  return "?";
}

inline std::optional<NodeKind> node_kind_from_string(const std::string& s)
{
  if (s == "area") return NodeKind::Area;
  if (s == "interface") return NodeKind::Interface;
  if (s == "boundary") return NodeKind::Boundary;
  return std::nullopt;
}

/// Objective line of an interface. The stored segment has `forward_area` on
/// its negative (right-hand) side.
struct InterfaceObjective
{
  geom::Segment2 segment;
  std::string forward_area;
};

struct MapNode
{
  std::string id;
  NodeKind kind = NodeKind::Area;
  geom::ConvexPolygon polygon;   // Area, Boundary
  geom::Segment2 segment;        // Interface
  std::optional<InterfaceObjective> objective;  // Interface
  std::optional<geom::Segment2> event;          // Interface

  /// Vertex set used for hyperplane constraints.
  std::vector<geom::Point2> vertices() const
  {
    if (kind == NodeKind::Interface)
      return {segment.a, segment.b};
    return polygon.vertices();
  }
};

//==============================================================================
/// Immutable property graph of areas, interfaces and boundaries.
class SemanticMap
{
public:
  SemanticMap() = default;

  /// Builds and validates. Throws ValidationError listing every violation.
  SemanticMap(std::vector<MapNode> nodes,
    std::vector<std::pair<std::string, std::string>> edges)
  : _nodes(std::move(nodes)),
    _edges(std::move(edges))
  {
    auto violations = index();
    if (!violations.empty())
      throw ValidationError(std::move(violations));
  }

  const std::vector<MapNode>& nodes() const { return _nodes; }
  const std::vector<std::pair<std::string, std::string>>& edges() const
  {
    return _edges;
  }

  const MapNode* find(const std::string& id) const
  {
    const auto it = _index.find(id);
    return it == _index.end() ? nullptr : &_nodes[it->second];
  }

  const MapNode& node(const std::string& id) const
  {
    const auto* n = find(id);
    if (!n)
      throw RouteError("unknown map node '" + id + "'");
    return *n;
  }

  /// Neighbours of a node sorted by id.
  const std::vector<std::string>& neighbors(const std::string& id) const
  {
    static const std::vector<std::string> none;
    const auto it = _adjacency.find(id);
    return it == _adjacency.end() ? none : it->second;
  }

  std::vector<std::string> neighbors_of_kind(
    const std::string& id, NodeKind kind) const
  {
    std::vector<std::string> out;
    for (const auto& n : neighbors(id))
    {
      if (node(n).kind == kind)
        out.push_back(n);
    }
    return out;
  }

  std::vector<std::string> interfaces_of(const std::string& area) const
  {
    return neighbors_of_kind(area, NodeKind::Interface);
  }

  std::vector<std::string> boundaries_of(const std::string& area) const
  {
    return neighbors_of_kind(area, NodeKind::Boundary);
  }

  std::vector<std::string> areas_of(const std::string& id) const
  {
    return neighbors_of_kind(id, NodeKind::Area);
  }

  /// Interface connecting two areas, smallest id first if several exist.
  std::optional<std::string> interface_between(
    const std::string& a, const std::string& b) const
  {
    for (const auto& i : interfaces_of(a))
    {
      const auto areas = areas_of(i);
      if (std::find(areas.begin(), areas.end(), b) != areas.end())
        return i;
    }
    return std::nullopt;
  }

  std::vector<std::string> ids_of_kind(NodeKind kind) const
  {
    std::vector<std::string> out;
    for (const auto& n : _nodes)
    {
      if (n.kind == kind)
        out.push_back(n.id);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  geom::Box2 bounding_box() const
  {
    geom::Box2 box;
    for (const auto& n : _nodes)
    {
      for (const auto& p : n.vertices())
        box.expand(p);
    }
    return box;
  }

private:
  std::vector<Violation> index()
  {
    std::vector<Violation> out;
    _index.clear();
    _adjacency.clear();

    if (_nodes.empty())
      out.push_back({{}, "map has no nodes"});

    for (std::size_t i = 0; i < _nodes.size(); ++i)
    {
      const auto& n = _nodes[i];
      if (n.id.empty())
        out.push_back({{}, "node id is empty"});
      else if (!_index.emplace(n.id, i).second)
        out.push_back({{n.id}, "duplicate node id"});
    }

    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& [a, b] : _edges)
    {
      const auto* na = find(a);
      const auto* nb = find(b);
      if (!na || !nb)
      {
        out.push_back({{a, b}, "edge references an unknown node"});
        continue;
      }
      if (a == b)
      {
        out.push_back({{a}, "self edge"});
        continue;
      }
      const auto key = std::minmax(a, b);
      if (!seen.emplace(key.first, key.second).second)
      {
        out.push_back({{a, b}, "duplicate edge"});
        continue;
      }

      const bool a_area = na->kind == NodeKind::Area;
      const bool b_area = nb->kind == NodeKind::Area;
      if (a_area && b_area)
      {
        out.push_back({{a, b},
          "areas must not be connected directly (area-area edge)"});
        continue;
      }
      if (!a_area && !b_area)
      {
        out.push_back({{a, b}, "edge must connect an area to an interface or "
          "boundary"});
        continue;
      }

      _adjacency[a].push_back(b);
      _adjacency[b].push_back(a);
    }

    for (auto& [id, adj] : _adjacency)
      std::sort(adj.begin(), adj.end());

    std::size_t area_count = 0;
    for (const auto& n : _nodes)
    {
      if (n.id.empty())
        continue;

      switch (n.kind)
      {
        case NodeKind::Area:
        {
          ++area_count;
          const auto err = geom::ConvexPolygon::check(n.polygon.vertices());
          if (!err.empty())
            out.push_back({{n.id}, err});
          break;
        }
        case NodeKind::Boundary:
        {
          const auto err = geom::ConvexPolygon::check(n.polygon.vertices());
          if (!err.empty())
            out.push_back({{n.id}, err});
          if (areas_of(n.id).empty())
            out.push_back({{n.id}, "boundary is not attached to any area"});
          break;
        }
        case NodeKind::Interface:
        {
          if (!geom::is_valid(n.segment))
            out.push_back({{n.id}, "interface segment is degenerate"});
          const auto areas = areas_of(n.id);
          if (areas.empty() || areas.size() > 2)
          {
            out.push_back({{n.id}, "interface must connect exactly two areas "
              "(or one area at the map edge), found "
              + std::to_string(areas.size())});
          }
          if (!n.objective)
            out.push_back({{n.id}, "interface has no objective"});
          else if (!geom::is_valid(n.objective->segment))
            out.push_back({{n.id}, "objective segment is degenerate"});
          else if (n.objective->forward_area.empty())
            out.push_back({{n.id}, "objective has no forward_area"});
          else
            check_objective_orientation(n, areas, out);
          if (!n.event)
            out.push_back({{n.id}, "interface has no event"});
          else if (!geom::is_valid(*n.event))
            out.push_back({{n.id}, "event segment is degenerate"});
          break;
        }
      }
    }

    if (!_nodes.empty() && area_count == 0)
      out.push_back({{}, "map has no areas"});

    return out;
  }

  void check_objective_orientation(const MapNode& n,
    const std::vector<std::string>& areas, std::vector<Violation>& out) const
  {
    const auto& fwd = n.objective->forward_area;
    if (areas.size() == 2
      && std::find(areas.begin(), areas.end(), fwd) == areas.end())
    {
      out.push_back({{n.id, fwd},
        "objective forward_area is not an area of this interface"});
      return;
    }

    for (const auto& a : areas)
    {
      const auto* area = find(a);
      if (!area || !geom::ConvexPolygon::check(
          area->polygon.vertices()).empty())
        continue;
      const double d = geom::signed_distance_to_line(
        area->polygon.centroid(), n.objective->segment);
      const bool forward = (a == fwd);
      if ((forward && d >= 0.0) || (!forward && d <= 0.0))
      {
        out.push_back({{n.id, a}, "objective orientation disagrees with "
          "forward_area (forward side must be on the right)"});
      }
    }
  }

  std::vector<MapNode> _nodes;
  std::vector<std::pair<std::string, std::string>> _edges;
  std::unordered_map<std::string, std::size_t> _index;
  std::map<std::string, std::vector<std::string>> _adjacency;
};

//==============================================================================
// JSON file format
//==============================================================================
namespace detail {

using nlohmann::json;

inline json point_to_json(geom::Point2 p) { return json::array({p.x, p.y}); }

inline json segment_to_json(const geom::Segment2& s)
{
  return json::array({point_to_json(s.a), point_to_json(s.b)});
}

inline geom::Point2 point_from_json(const json& j, const std::string& where)
{
  if (!j.is_array() || j.size() != 2 || !j[0].is_number()
    || !j[1].is_number())
    throw ParseError(where + ": expected a point [x, y]");
  return {j[0].get<double>(), j[1].get<double>()};
}

inline std::vector<geom::Point2> points_from_json(
  const json& j, const std::string& where)
{
  if (!j.is_array())
    throw ParseError(where + ": expected an array of points");
  std::vector<geom::Point2> out;
  out.reserve(j.size());
  for (const auto& p : j)
    out.push_back(point_from_json(p, where));
  return out;
}

inline geom::Segment2 segment_from_json(const json& j, const std::string& where)
{
  const auto pts = points_from_json(j, where);
  if (pts.size() != 2)
    throw ParseError(where + ": a segment needs exactly 2 points");
  return {pts[0], pts[1]};
}

inline void require_keys(const json& j, const std::set<std::string>& allowed,
  const std::string& where)
{
  for (const auto& [key, value] : j.items())
  {
    if (!allowed.count(key))
      throw ParseError(where + ": unexpected key '" + key + "'");
  }
}

} // namespace detail

inline nlohmann::json map_to_json(const SemanticMap& map)
{
  using nlohmann::json;
  using namespace detail;

  json nodes = json::array();
  for (const auto& n : map.nodes())
  {
    json j;
    j["id"] = n.id;
    j["kind"] = to_string(n.kind);
    if (n.kind == NodeKind::Interface)
    {
      j["segment"] = segment_to_json(n.segment);
      j["objective"] = {
        {"segment", segment_to_json(n.objective->segment)},
        {"forward_area", n.objective->forward_area}};
      j["event"] = {{"segment", segment_to_json(*n.event)}};
    }
    else
    {
      json poly = json::array();
      for (const auto& p : n.polygon.vertices())
        poly.push_back(point_to_json(p));
      j["polygon"] = poly;
    }
    nodes.push_back(std::move(j));
  }

  json edges = json::array();
  for (const auto& [a, b] : map.edges())
    edges.push_back(json::array({a, b}));

  return {{"nodes", nodes}, {"edges", edges}};
}

/// Parses the map document without semantic validation. Throws ParseError.
inline std::pair<std::vector<MapNode>,
  std::vector<std::pair<std::string, std::string>>>
parse_map_document(const nlohmann::json& doc)
{
  using namespace detail;

  if (!doc.is_object())
    throw ParseError("map document must be a JSON object");
  require_keys(doc, {"nodes", "edges"}, "map");
  if (!doc.contains("nodes") || !doc["nodes"].is_array())
    throw ParseError("map: missing 'nodes' array");
  if (!doc.contains("edges") || !doc["edges"].is_array())
    throw ParseError("map: missing 'edges' array");

  std::vector<MapNode> nodes;
  for (std::size_t i = 0; i < doc["nodes"].size(); ++i)
  {
    const json& j = doc["nodes"][i];
    std::string where = "nodes[" + std::to_string(i) + "]";
    if (!j.is_object())
      throw ParseError(where + ": expected an object");
    if (!j.contains("id") || !j["id"].is_string())
      throw ParseError(where + ": missing string 'id'");

    MapNode n;
    n.id = j["id"].get<std::string>();
    where = "node '" + n.id + "'";

    if (!j.contains("kind") || !j["kind"].is_string())
      throw ParseError(where + ": missing string 'kind'");
    const auto kind = node_kind_from_string(j["kind"].get<std::string>());
    if (!kind)
      throw ParseError(where + ": unknown kind '"
        + j["kind"].get<std::string>() + "'");
    n.kind = *kind;

    if (n.kind == NodeKind::Interface)
    {
      require_keys(j, {"id", "kind", "segment", "objective", "event"}, where);
      if (!j.contains("segment"))
        throw ParseError(where + ": interface needs 'segment'");
      n.segment = segment_from_json(j["segment"], where + ".segment");

      if (j.contains("objective"))
      {
        const json& o = j["objective"];
        if (!o.is_object())
          throw ParseError(where + ".objective: expected an object");
        require_keys(o, {"segment", "forward_area"}, where + ".objective");
        if (!o.contains("segment"))
          throw ParseError(where + ".objective: missing 'segment'");
        if (!o.contains("forward_area") || !o["forward_area"].is_string())
          throw ParseError(where + ".objective: missing 'forward_area'");
        n.objective = InterfaceObjective{
          segment_from_json(o["segment"], where + ".objective.segment"),
          o["forward_area"].get<std::string>()};
      }
      if (j.contains("event"))
      {
        const json& e = j["event"];
        if (!e.is_object())
          throw ParseError(where + ".event: expected an object");
        require_keys(e, {"segment"}, where + ".event");
        if (!e.contains("segment"))
          throw ParseError(where + ".event: missing 'segment'");
        n.event = segment_from_json(e["segment"], where + ".event.segment");
      }
    }
    else
    {
      require_keys(j, {"id", "kind", "polygon"}, where);
      if (!j.contains("polygon"))
        throw ParseError(where + ": needs 'polygon'");
      n.polygon = geom::ConvexPolygon(
        points_from_json(j["polygon"], where + ".polygon"));
    }

    nodes.push_back(std::move(n));
  }

  std::vector<std::pair<std::string, std::string>> edges;
  for (std::size_t i = 0; i < doc["edges"].size(); ++i)
  {
    const json& e = doc["edges"][i];
    if (!e.is_array() || e.size() != 2 || !e[0].is_string()
      || !e[1].is_string())
      throw ParseError("edges[" + std::to_string(i)
        + "]: expected [id, id]");
    edges.emplace_back(e[0].get<std::string>(), e[1].get<std::string>());
  }

  return {std::move(nodes), std::move(edges)};
}

inline SemanticMap map_from_json(const nlohmann::json& doc)
{
  auto [nodes, edges] = parse_map_document(doc);
  return SemanticMap(std::move(nodes), std::move(edges));
}

/// Parses and validates map-file content.
inline SemanticMap load_map(const std::string& content)
{
  nlohmann::json doc;
  try
  {
    doc = nlohmann::json::parse(content);
  }
  catch (const nlohmann::json::parse_error& e)
  {
    throw ParseError(std::string("malformed JSON: ") + e.what());
  }
  return map_from_json(doc);
}

inline std::string save_map(const SemanticMap& map)
{
  return map_to_json(map).dump(1);
}

inline std::string read_text_file(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::ios_base::failure("cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw std::ios_base::failure("cannot open '" + path + "' for writing");
  out << text;
  if (!out)
    throw std::ios_base::failure("failed writing '" + path + "'");
}

inline SemanticMap load_map_file(const std::string& path)
{
  return load_map(read_text_file(path));
}

//==============================================================================
// Benchmark environment
//==============================================================================
struct GridSpec
{
  std::size_t cols = 4;           ///< vertical corridors
  std::size_t rows = 4;           ///< horizontal corridors
  double corridor_width = 2.0;
  double block_x = 4.0;           ///< block extent along x
  double block_y = 5.0;           ///< block extent along y
  std::size_t segments = 2;       ///< areas per corridor segment
  double wall_thickness = 0.2;
};

/// Id helpers for the generated grid.
inline std::string grid_intersection_id(std::size_t c, std::size_t r)
{
  return "X" + std::to_string(c) + "_" + std::to_string(r);
}

/// Horizontal corridor piece k between X{c}_{r} and X{c+1}_{r}.
inline std::string grid_horizontal_id(std::size_t c, std::size_t r,
  std::size_t k)
{
  return "H" + std::to_string(c) + "_" + std::to_string(r) + "_"
    + std::to_string(k);
}

/// Vertical corridor piece k between X{c}_{r} and X{c}_{r+1}.
inline std::string grid_vertical_id(std::size_t c, std::size_t r,
  std::size_t k)
{
  return "V" + std::to_string(c) + "_" + std::to_string(r) + "_"
    + std::to_string(k);
}

namespace detail {

inline geom::ConvexPolygon rect(double x0, double y0, double x1, double y1)
{
  return geom::ConvexPolygon({{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}});
}

} // namespace detail

/// Grid of corridors with intersections, blocks between corridors and thin
/// outer walls. Default parameters give a 20 x 23 m workspace.
inline SemanticMap generate_grid_map(const GridSpec& spec)
{
  if (spec.cols < 2 || spec.rows < 2)
    throw std::invalid_argument("grid needs at least 2 columns and 2 rows");
  if (!(spec.corridor_width > 0.0) || !(spec.block_x > 0.0)
    || !(spec.block_y > 0.0) || !(spec.wall_thickness > 0.0))
    throw std::invalid_argument("grid dimensions must be positive");
  if (spec.segments < 1)
    throw std::invalid_argument("grid needs at least one area per segment");

  using detail::rect;
  const double w = spec.corridor_width;
  const double px = w + spec.block_x;
  const double py = w + spec.block_y;
  const double width = spec.cols * w + (spec.cols - 1) * spec.block_x;
  const double height = spec.rows * w + (spec.rows - 1) * spec.block_y;
  const double t = spec.wall_thickness;
  const std::size_t C = spec.cols;
  const std::size_t R = spec.rows;

  std::vector<MapNode> nodes;
  std::vector<std::pair<std::string, std::string>> edges;

  auto add_area = [&](std::string id, geom::ConvexPolygon poly)
  {
    MapNode n;
    n.id = std::move(id);
    n.kind = NodeKind::Area;
    n.polygon = std::move(poly);
    nodes.push_back(std::move(n));
  };

  auto add_boundary = [&](std::string id, geom::ConvexPolygon poly)
  {
    MapNode n;
    n.id = std::move(id);
    n.kind = NodeKind::Boundary;
    n.polygon = std::move(poly);
    nodes.push_back(std::move(n));
  };

  // `low` is on the -x / -y side of the interface, `high` on the other.
  auto add_interface = [&](const std::string& low, const std::string& high,
      geom::Segment2 seg)
  {
    MapNode n;
    n.id = "I_" + low + "_" + high;
    n.kind = NodeKind::Interface;
    n.segment = seg;
    n.objective = InterfaceObjective{seg, high};
    n.event = seg;
    edges.emplace_back(low, n.id);
    edges.emplace_back(high, n.id);
    nodes.push_back(std::move(n));
  };

  // Vertical interface line at x between y0 and y1: right side is +x.
  auto vline = [](double x, double y0, double y1)
  {
    return geom::Segment2{{x, y0}, {x, y1}};
  };
  // Horizontal interface line at y between x0 and x1: right side is +y.
  auto hline = [](double y, double x0, double x1)
  {
    return geom::Segment2{{x1, y}, {x0, y}};
  };

  auto block_id = [](std::size_t c, std::size_t r)
  {
    return "B" + std::to_string(c) + "_" + std::to_string(r);
  };

  // Boundaries
  for (std::size_t r = 0; r + 1 < R; ++r)
  {
    for (std::size_t c = 0; c + 1 < C; ++c)
    {
      add_boundary(block_id(c, r),
        rect(c * px + w, r * py + w, (c + 1) * px, (r + 1) * py));
    }
  }
  add_boundary("W_south", rect(-t, -t, width + t, 0.0));
  add_boundary("W_north", rect(-t, height, width + t, height + t));
  add_boundary("W_west", rect(-t, 0.0, 0.0, height));
  add_boundary("W_east", rect(width, 0.0, width + t, height));

  auto has_block = [&](long c, long r)
  {
    return c >= 0 && r >= 0 && c + 1 < static_cast<long>(C)
      && r + 1 < static_cast<long>(R);
  };

  // Intersections
  for (std::size_t r = 0; r < R; ++r)
  {
    for (std::size_t c = 0; c < C; ++c)
    {
      const std::string id = grid_intersection_id(c, r);
      add_area(id, rect(c * px, r * py, c * px + w, r * py + w));
      for (long dc = -1; dc <= 0; ++dc)
      {
        for (long dr = -1; dr <= 0; ++dr)
        {
          const long bc = static_cast<long>(c) + dc;
          const long br = static_cast<long>(r) + dr;
          if (has_block(bc, br))
            edges.emplace_back(id, block_id(bc, br));
        }
      }
      if (c == 0) edges.emplace_back(id, "W_west");
      if (c + 1 == C) edges.emplace_back(id, "W_east");
      if (r == 0) edges.emplace_back(id, "W_south");
      if (r + 1 == R) edges.emplace_back(id, "W_north");
    }
  }

  const std::size_t K = spec.segments;

  // Horizontal corridor pieces
  for (std::size_t r = 0; r < R; ++r)
  {
    for (std::size_t c = 0; c + 1 < C; ++c)
    {
      const double x0 = c * px + w;
      const double len = spec.block_x / K;
      const double y0 = r * py;
      std::string prev = grid_intersection_id(c, r);
      for (std::size_t k = 0; k < K; ++k)
      {
        const std::string id = grid_horizontal_id(c, r, k);
        const double xa = x0 + k * len;
        const double xb = (k + 1 == K) ? (c + 1) * px : x0 + (k + 1) * len;
        add_area(id, rect(xa, y0, xb, y0 + w));
        edges.emplace_back(id, r + 1 < R ? block_id(c, r) : "W_north");
        edges.emplace_back(id, r > 0 ? block_id(c, r - 1) : "W_south");
        add_interface(prev, id, vline(xa, y0, y0 + w));
        prev = id;
      }
      add_interface(prev, grid_intersection_id(c + 1, r),
        vline((c + 1) * px, y0, y0 + w));
    }
  }

  // Vertical corridor pieces
  for (std::size_t c = 0; c < C; ++c)
  {
    for (std::size_t r = 0; r + 1 < R; ++r)
    {
      const double y0 = r * py + w;
      const double len = spec.block_y / K;
      const double x0 = c * px;
      std::string prev = grid_intersection_id(c, r);
      for (std::size_t k = 0; k < K; ++k)
      {
        const std::string id = grid_vertical_id(c, r, k);
        const double ya = y0 + k * len;
        const double yb = (k + 1 == K) ? (r + 1) * py : y0 + (k + 1) * len;
        add_area(id, rect(x0, ya, x0 + w, yb));
        edges.emplace_back(id, c > 0 ? block_id(c - 1, r) : "W_west");
        edges.emplace_back(id, c + 1 < C ? block_id(c, r) : "W_east");
        add_interface(prev, id, hline(ya, x0, x0 + w));
        prev = id;
      }
      add_interface(prev, grid_intersection_id(c, r + 1),
        hline((r + 1) * py, x0, x0 + w));
    }
  }

  return SemanticMap(std::move(nodes), std::move(edges));
}

//==============================================================================
// Element retrieval
//==============================================================================
/// A convex element the agent must stay clear of.
struct WallElement
{
  std::string id;
  std::vector<geom::Point2> vertices;
  bool is_virtual = false;   ///< inactive interface used as a wall
  std::size_t slot = 0;      ///< horizon slot that first contributed it

  friend bool operator==(const WallElement&, const WallElement&) = default;
};

struct RelevantElements
{
  std::vector<std::string> horizon_areas;
  std::vector<WallElement> walls;
  std::vector<std::string> active_interfaces;
  /// Oriented so the area being left is on the positive (left) side.
  std::vector<geom::Segment2> objectives;
  std::vector<geom::Segment2> events;

  friend bool operator==(const RelevantElements&,
    const RelevantElements&) = default;
};

/// Throws RouteError unless every area exists and consecutive areas share an
/// interface.
inline void check_route(const SemanticMap& map,
  const std::vector<std::string>& route)
{
  if (route.empty())
    throw RouteError("route is empty");
  for (const auto& a : route)
  {
    const auto* n = map.find(a);
    if (!n || n->kind != NodeKind::Area)
      throw RouteError("route area '" + a + "' is not an area of the map");
  }
  for (std::size_t j = 0; j + 1 < route.size(); ++j)
  {
    if (route[j] == route[j + 1] || !map.interface_between(route[j],
        route[j + 1]))
      throw RouteError("route areas '" + route[j] + "' and '" + route[j + 1]
        + "' are not connected through an interface");
  }
}

/// Walls, active interfaces, objectives and events for the areas
/// route[mode .. mode + horizon] (truncated at the route end).
inline RelevantElements relevant_elements(const SemanticMap& map,
  const std::vector<std::string>& route, std::size_t mode, std::size_t horizon)
{
  check_route(map, route);
  if (mode >= route.size())
    throw RouteError("mode " + std::to_string(mode) + " is out of range for a "
      "route of " + std::to_string(route.size()) + " areas");

  RelevantElements out;
  const std::size_t last = std::min(mode + horizon, route.size() - 1);
  std::set<std::string> taken;

  // Interfaces active anywhere in the window are never walls.
  std::set<std::string> active;
  for (std::size_t j = mode; j <= last && j + 1 < route.size(); ++j)
    active.insert(*map.interface_between(route[j], route[j + 1]));

  for (std::size_t j = mode; j <= last; ++j)
  {
    const std::string& area = route[j];
    const std::size_t slot = j - mode;
    out.horizon_areas.push_back(area);

    for (const auto& b : map.boundaries_of(area))
    {
      if (taken.insert(b).second)
        out.walls.push_back({b, map.node(b).vertices(), false, slot});
    }

    for (const auto& i : map.interfaces_of(area))
    {
      if (active.count(i))
        continue;
      bool to_neighbor = false;
      for (const auto& other : map.areas_of(i))
      {
        if (other == area)
          continue;
        if ((j > 0 && other == route[j - 1])
          || (j + 1 < route.size() && other == route[j + 1]))
          to_neighbor = true;
      }
      if (to_neighbor)
        continue;
      if (taken.insert(i).second)
        out.walls.push_back({i, map.node(i).vertices(), true, slot});
    }

    if (j + 1 < route.size())
    {
      const std::string iface = *map.interface_between(area, route[j + 1]);
      const auto& node = map.node(iface);
      out.active_interfaces.push_back(iface);
      const bool as_stored = node.objective->forward_area == route[j + 1];
      out.objectives.push_back(as_stored
        ? node.objective->segment : node.objective->segment.reversed());
      out.events.push_back(*node.event);
    }
  }

  return out;
}

} // namespace flockmpc

#endif // FLOCKMPC__WORLDMODEL_HPP
