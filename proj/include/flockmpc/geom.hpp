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

#ifndef FLOCKMPC__GEOM_HPP
#define FLOCKMPC__GEOM_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flockmpc {
namespace geom {

/// Tolerance for geometric predicates, in meters.
inline constexpr double kTolerance = 1e-9;

//==============================================================================
struct Point2
{
  double x = 0.0;
  double y = 0.0;

  friend Point2 operator+(Point2 a, Point2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Point2 operator-(Point2 a, Point2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Point2 operator*(double s, Point2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(const Point2&, const Point2&) = default;
};

inline double dot(Point2 a, Point2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Point2 a, Point2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Point2 a) { return std::hypot(a.x, a.y); }

inline bool is_finite(Point2 p)
{
  return std::isfinite(p.x) && std::isfinite(p.y);
}

//==============================================================================
/// Directed line segment a -> b. The left side of the direction is positive.
struct Segment2
{
  Point2 a;
  Point2 b;

  double length() const { return norm(b - a); }
  Point2 midpoint() const { return 0.5 * (a + b); }
  Segment2 reversed() const { return {b, a}; }

  /// Unit normal pointing to the left of a -> b.
  Point2 left_normal() const
  {
    const Point2 d = b - a;
    const double l = norm(d);
    return {-d.y / l, d.x / l};
  }

  friend bool operator==(const Segment2&, const Segment2&) = default;
};

inline bool is_valid(const Segment2& s)
{
  return is_finite(s.a) && is_finite(s.b) && s.length() > kTolerance;
}

//==============================================================================
/// Convex polygon with counter-clockwise vertex order. Use make() to obtain a
/// checked instance; the raw constructor is for callers that validated input.
class ConvexPolygon
{
public:
  ConvexPolygon() = default;

  explicit ConvexPolygon(std::vector<Point2> vertices)
  : _vertices(std::move(vertices))
  { }

  /// Returns an empty string if the vertex list is a valid CCW strictly convex
  /// polygon, otherwise a short description of the violated rule.
  static std::string check(std::span<const Point2> v)
  {
    if (v.size() < 3)
      return "polygon needs at least 3 vertices";

    for (const auto& p : v)
    {
      if (!is_finite(p))
        return "polygon has a non-finite coordinate";
    }

    const std::size_t n = v.size();
    for (std::size_t i = 0; i < n; ++i)
    {
      const Point2 e0 = v[(i + 1) % n] - v[i];
      const Point2 e1 = v[(i + 2) % n] - v[(i + 1) % n];
      if (norm(e0) <= kTolerance)
        return "polygon has a repeated vertex";
      const double c = cross(e0, e1);
      if (c < -kTolerance)
        return "polygon is not counter-clockwise convex";
      if (std::abs(c) <= kTolerance * std::max(1.0, norm(e0) * norm(e1)))
        return "polygon has collinear consecutive edges";
    }

    // Convex turn at every vertex still admits star polygons; the total
    // turning must be exactly one revolution.
    double turning = 0.0;
    for (std::size_t i = 0; i < n; ++i)
    {
      const Point2 e0 = v[(i + 1) % n] - v[i];
      const Point2 e1 = v[(i + 2) % n] - v[(i + 1) % n];
      turning += std::atan2(cross(e0, e1), dot(e0, e1));
    }
    if (std::abs(turning - 2.0 * M_PI) > 1e-6)
      return "polygon winds more than once";

    return {};
  }

  static ConvexPolygon make(std::vector<Point2> vertices)
  {
    const std::string err = check(vertices);
    if (!err.empty())
      throw std::invalid_argument(err);
    return ConvexPolygon(std::move(vertices));
  }

  const std::vector<Point2>& vertices() const { return _vertices; }
  std::size_t size() const { return _vertices.size(); }

  Segment2 edge(std::size_t i) const
  {
    return {_vertices[i], _vertices[(i + 1) % _vertices.size()]};
  }

  Point2 centroid() const
  {
    // Area-weighted centroid.
    double a2 = 0.0;
    Point2 c{0.0, 0.0};
    const std::size_t n = _vertices.size();
    for (std::size_t i = 0; i < n; ++i)
    {
      const Point2 p = _vertices[i];
      const Point2 q = _vertices[(i + 1) % n];
      const double w = cross(p, q);
      a2 += w;
      c = c + w * (p + q);
    }
    return (1.0 / (3.0 * a2)) * c;
  }

  friend bool operator==(const ConvexPolygon&, const ConvexPolygon&) = default;

private:
  std::vector<Point2> _vertices;
};

//==============================================================================
/// Axis-aligned bounding box helper.
struct Box2
{
  Point2 min{std::numeric_limits<double>::infinity(),
    std::numeric_limits<double>::infinity()};
  Point2 max{-std::numeric_limits<double>::infinity(),
    -std::numeric_limits<double>::infinity()};

  void expand(Point2 p)
  {
    min = {std::min(min.x, p.x), std::min(min.y, p.y)};
    max = {std::max(max.x, p.x), std::max(max.y, p.y)};
  }

  bool empty() const { return min.x > max.x; }
  double width() const { return max.x - min.x; }
  double height() const { return max.y - min.y; }
};

//==============================================================================
/// Perpendicular distance from p to the infinite line through s; positive on
/// the left of a -> b.
inline double signed_distance_to_line(Point2 p, const Segment2& s)
{
  const Point2 d = s.b - s.a;
  return cross(d, p - s.a) / norm(d);
}

//==============================================================================
inline bool point_in_polygon(Point2 p, const ConvexPolygon& poly)
{
  const std::size_t n = poly.size();
  for (std::size_t i = 0; i < n; ++i)
  {
    if (signed_distance_to_line(p, poly.edge(i)) < -kTolerance)
      return false;
  }
  return true;
}

//==============================================================================
inline double point_segment_distance(Point2 p, const Segment2& s)
{
  const Point2 d = s.b - s.a;
  const double l2 = dot(d, d);
  double t = l2 > 0.0 ? dot(p - s.a, d) / l2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return norm(p - (s.a + t * d));
}

//==============================================================================
/// Euclidean distance from p to the polygon, 0 inside.
inline double point_polygon_distance(Point2 p, const ConvexPolygon& poly)
{
  if (point_in_polygon(p, poly))
    return 0.0;

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poly.size(); ++i)
    best = std::min(best, point_segment_distance(p, poly.edge(i)));
  return best;
}

/// Distance from p to the convex hull of an arbitrary vertex set of one or two
/// points (segments used as virtual walls) or a polygon.
inline double point_hull_distance(Point2 p, std::span<const Point2> vertices)
{
  if (vertices.size() == 1)
    return norm(p - vertices[0]);
  if (vertices.size() == 2)
    return point_segment_distance(p, {vertices[0], vertices[1]});
  return point_polygon_distance(
    p, ConvexPolygon(std::vector<Point2>(vertices.begin(), vertices.end())));
}

} // namespace geom
} // namespace flockmpc

#endif // FLOCKMPC__GEOM_HPP
