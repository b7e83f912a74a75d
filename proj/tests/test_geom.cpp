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

#include <flockmpc/geom.hpp>

#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

using namespace flockmpc::geom;
using Catch::Approx;

namespace {

ConvexPolygon unit_square()
{
  return ConvexPolygon::make({{0, 0}, {1, 0}, {1, 1}, {0, 1}});
}

/// Random CCW convex polygon: sorted angles on a circle with a minimum gap.
ConvexPolygon random_polygon(std::mt19937_64& rng)
{
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> count(3, 9);
  for (;;)
  {
    const int n = count(rng);
    std::vector<double> ang;
    for (int i = 0; i < n; ++i)
      ang.push_back(2.0 * M_PI * u(rng));
    std::sort(ang.begin(), ang.end());
    bool ok = true;
    for (int i = 0; i < n; ++i)
    {
      const double next = i + 1 < n ? ang[i + 1] : ang[0] + 2.0 * M_PI;
      if (next - ang[i] < 0.05 || next - ang[i] > M_PI - 0.05)
        ok = false;
    }
    if (!ok)
      continue;
    const Point2 c{20.0 * u(rng) - 10.0, 20.0 * u(rng) - 10.0};
    const double r = 0.5 + 5.0 * u(rng);
    std::vector<Point2> v;
    for (double a : ang)
      v.push_back({c.x + r * std::cos(a), c.y + r * std::sin(a)});
    if (ConvexPolygon::check(v).empty())
      return ConvexPolygon(v);
  }
}

/// Winding number of the closed polygon around p via summed angles.
int winding_number(Point2 p, const ConvexPolygon& poly)
{
  double total = 0.0;
  const auto& v = poly.vertices();
  for (std::size_t i = 0; i < v.size(); ++i)
  {
    const Point2 a = v[i] - p;
    const Point2 b = v[(i + 1) % v.size()] - p;
    total += std::atan2(a.x * b.y - a.y * b.x, a.x * b.x + a.y * b.y);
  }
  return static_cast<int>(std::lround(total / (2.0 * M_PI)));
}

double segment_distance_oracle(Point2 p, Point2 a, Point2 b)
{
  const double dx = b.x - a.x, dy = b.y - a.y;
  double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / (dx * dx + dy * dy);
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

Point2 rigid(Point2 p, double angle, Point2 shift)
{
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * p.x - s * p.y + shift.x, s * p.x + c * p.y + shift.y};
}

} // namespace

TEST_CASE("signed distance examples", "[geom]")
{
  const Segment2 s{{0, 0}, {1, 0}};
  CHECK(signed_distance_to_line({0.3, 0.0}, s) == 0.0);
  CHECK(signed_distance_to_line({0.5, 2.0}, s) == Approx(2.0));
  CHECK(signed_distance_to_line({0.5, -2.0}, s) == Approx(-2.0));
}

TEST_CASE("signed distance matches a projection oracle", "[geom]")
{
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  for (int i = 0; i < 1000; ++i)
  {
    const Segment2 s{{u(rng), u(rng)}, {u(rng), u(rng)}};
    if (!is_valid(s) || s.length() < 1e-3)
      continue;
    const Point2 p{u(rng), u(rng)};
    // Foot of the perpendicular, distance, side from the orientation test.
    const double dx = s.b.x - s.a.x, dy = s.b.y - s.a.y;
    const double t = ((p.x - s.a.x) * dx + (p.y - s.a.y) * dy)
      / (dx * dx + dy * dy);
    const double dist = std::hypot(p.x - s.a.x - t * dx, p.y - s.a.y - t * dy);
    const double side = dx * (p.y - s.a.y) - dy * (p.x - s.a.x);
    const double expected = side >= 0.0 ? dist : -dist;
    CHECK(std::abs(signed_distance_to_line(p, s) - expected) <= 1e-12
      * std::max(1.0, dist) * 10.0);
    // Orientation reversal flips the sign.
    CHECK(signed_distance_to_line(p, s.reversed())
      == Approx(-signed_distance_to_line(p, s)).margin(1e-12));
  }
}

TEST_CASE("point in polygon examples", "[geom]")
{
  const auto sq = unit_square();
  CHECK(point_in_polygon({0.5, 0.5}, sq));
  CHECK_FALSE(point_in_polygon({1.5, 0.5}, sq));
  CHECK(point_in_polygon({1.0, 0.5}, sq));
  CHECK(point_in_polygon({0.0, 0.0}, sq));
}

TEST_CASE("point in polygon matches the winding number", "[geom]")
{
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(-16.0, 16.0);
  int inside = 0;
  for (int i = 0; i < 1000; ++i)
  {
    const auto poly = random_polygon(rng);
    const Point2 c = poly.centroid();
    const Point2 p{c.x + 0.3 * u(rng), c.y + 0.3 * u(rng)};
    // Skip points within rounding distance of the boundary.
    double edge = 1e9;
    for (std::size_t e = 0; e < poly.size(); ++e)
      edge = std::min(edge, segment_distance_oracle(p, poly.edge(e).a,
        poly.edge(e).b));
    if (edge < 1e-7)
      continue;
    const bool expected = winding_number(p, poly) != 0;
    inside += expected;
    CHECK(point_in_polygon(p, poly) == expected);
  }
  CHECK(inside > 100);
  CHECK(inside < 900);
}

TEST_CASE("point polygon distance examples", "[geom]")
{
  const auto sq = unit_square();
  CHECK(point_polygon_distance({2.0, 0.5}, sq) == Approx(1.0));
  CHECK(point_polygon_distance({0.5, 0.5}, sq) == 0.0);
  CHECK(point_polygon_distance({2.0, 2.0}, sq) == Approx(std::sqrt(2.0)));
}

TEST_CASE("point polygon distance matches edge projections", "[geom]")
{
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(-16.0, 16.0);
  for (int i = 0; i < 1000; ++i)
  {
    const auto poly = random_polygon(rng);
    const Point2 p{u(rng), u(rng)};
    const double d = point_polygon_distance(p, poly);
    if (winding_number(p, poly) != 0)
    {
      CHECK(d == 0.0);
      continue;
    }
    double expected = 1e18;
    const auto& v = poly.vertices();
    for (std::size_t e = 0; e < v.size(); ++e)
      expected = std::min(expected,
        segment_distance_oracle(p, v[e], v[(e + 1) % v.size()]));
    CHECK(std::abs(d - expected) <= 1e-9);
  }
}

TEST_CASE("containment implies zero distance", "[geom]")
{
  std::mt19937_64 rng(14);
  std::uniform_real_distribution<double> u(-16.0, 16.0);
  for (int i = 0; i < 500; ++i)
  {
    const auto poly = random_polygon(rng);
    const Point2 p{u(rng), u(rng)};
    if (point_in_polygon(p, poly))
      CHECK(point_polygon_distance(p, poly) == 0.0);
    else
      CHECK(point_polygon_distance(p, poly) > 0.0);
  }
}

TEST_CASE("geometry is invariant under rigid transforms", "[geom]")
{
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> u(-16.0, 16.0);
  std::uniform_real_distribution<double> ang(-M_PI, M_PI);
  for (int i = 0; i < 500; ++i)
  {
    const auto poly = random_polygon(rng);
    const Point2 p{u(rng), u(rng)};
    const double a = ang(rng);
    const Point2 t{u(rng), u(rng)};
    std::vector<Point2> moved;
    for (const auto& v : poly.vertices())
      moved.push_back(rigid(v, a, t));
    const ConvexPolygon poly2(moved);
    const Point2 p2 = rigid(p, a, t);

    CHECK(point_polygon_distance(p2, poly2)
      == Approx(point_polygon_distance(p, poly)).margin(1e-9));
    double edge = 1e9;
    for (std::size_t e = 0; e < poly.size(); ++e)
      edge = std::min(edge, segment_distance_oracle(p, poly.edge(e).a,
        poly.edge(e).b));
    if (edge > 1e-6)
      CHECK(point_in_polygon(p2, poly2) == point_in_polygon(p, poly));
    const Segment2 s = poly.edge(0);
    const Segment2 s2{rigid(s.a, a, t), rigid(s.b, a, t)};
    CHECK(signed_distance_to_line(p2, s2)
      == Approx(signed_distance_to_line(p, s)).margin(1e-9));
  }
}

TEST_CASE("polygon validation rejects bad vertex lists", "[geom]")
{
  CHECK_FALSE(ConvexPolygon::check(std::vector<Point2>{{0, 0}, {1, 0}}).empty());
  // Clockwise order.
  CHECK_FALSE(ConvexPolygon::check(
    std::vector<Point2>{{0, 0}, {0, 1}, {1, 1}, {1, 0}}).empty());
  // Collinear middle vertex.
  CHECK_FALSE(ConvexPolygon::check(
    std::vector<Point2>{{0, 0}, {1, 0}, {2, 0}, {1, 1}}).empty());
  // Non-convex.
  CHECK_FALSE(ConvexPolygon::check(
    std::vector<Point2>{{0, 0}, {2, 0}, {1, 0.5}, {2, 2}, {0, 2}}).empty());
  CHECK_THROWS_AS(ConvexPolygon::make({{0, 0}, {1, 0}}), std::invalid_argument);
  CHECK(unit_square().centroid() == Point2{0.5, 0.5});
}
