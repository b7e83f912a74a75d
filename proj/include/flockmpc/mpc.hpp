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

#ifndef FLOCKMPC__MPC_HPP
#define FLOCKMPC__MPC_HPP

#include <flockmpc/coordination.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace flockmpc {

//==============================================================================
struct MpcParams
{
  double dt = 0.5;                 ///< prediction step [s]
  std::size_t horizon_steps = 25;  ///< N_t
  double frequency = 4.0;          ///< control update rate [Hz]
  std::array<double, 4> R = {0.05, 0.0, 0.0, 0.5};  ///< row-major 2x2
  double Q = 1.0;
  double q = 10.0;
  std::size_t element_horizon = 2;  ///< N_h
  std::size_t agent_horizon = 1;    ///< N_hA
  double soft_penalty = 1e4;
  std::size_t max_iterations = 150;
  double tolerance = 1e-4;
  double max_wall_time = 0.0;  ///< solver wall-time cap [s], 0 disables

  double control_period() const { return 1.0 / frequency; }

  /// Empty string when valid, otherwise the violated rule.
  std::string check() const
  {
    if (!(dt > 0.0)) return "dt must be positive";
    if (horizon_steps < 1) return "horizon_steps must be at least 1";
    if (!(frequency > 0.0)) return "frequency must be positive";
    // 2x2 symmetric part PSD: non-negative diagonal and determinant.
    const double r01 = 0.5 * (R[1] + R[2]);
    if (R[0] < 0.0 || R[3] < 0.0 || R[0] * R[3] - r01 * r01 < -1e-12)
      return "R must be positive semidefinite";
    if (Q < 0.0) return "Q must be non-negative";
    if (soft_penalty < 0.0) return "soft_penalty must be non-negative";
    if (max_iterations < 1) return "max_iterations must be at least 1";
    if (!(tolerance > 0.0)) return "tolerance must be positive";
    return {};
  }
};

//==============================================================================
struct AgentState
{
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double v = 0.0;

  geom::Point2 position() const { return {x, y}; }
  friend bool operator==(const AgentState&, const AgentState&) = default;
};

struct ControlInput
{
  double a = 0.0;
  double omega = 0.0;
  friend bool operator==(const ControlInput&, const ControlInput&) = default;
};

/// Forward-Euler unicycle step.
inline AgentState dynamics_step(const AgentState& s, const ControlInput& u,
  double dt)
{
  return {
    s.x + dt * s.v * std::cos(s.theta),
    s.y + dt * s.v * std::sin(s.theta),
    s.theta + dt * u.omega,
    s.v + dt * u.a};
}

//==============================================================================
/// Binary objective weights: ones for every horizon slot whose area the
/// previous prediction reached, zeros after. Slot 0 is always weighted.
inline std::vector<double> update_objective_weights(
  const std::vector<geom::Point2>* previous_prediction,
  const std::vector<std::string>& horizon_areas, std::size_t objective_count,
  const SemanticMap& map)
{
  std::vector<double> w(objective_count, 0.0);
  if (objective_count == 0)
    return w;
  w[0] = 1.0;
  if (!previous_prediction)
    return w;

  std::size_t reached = 0;
  for (std::size_t j = 1; j < horizon_areas.size() && j < objective_count; ++j)
  {
    const auto& poly = map.node(horizon_areas[j]).polygon;
    for (const auto& p : *previous_prediction)
    {
      if (geom::point_in_polygon(p, poly))
      {
        reached = j;
        break;
      }
    }
  }
  for (std::size_t j = 0; j <= reached; ++j)
    w[j] = 1.0;
  return w;
}

//==============================================================================
/// Previous optimal trajectory of one agent, used for warm starts and for the
/// objective weights.
struct AgentSolution
{
  std::vector<AgentState> states;   ///< N_t + 1 knots
  std::vector<ControlInput> inputs; ///< N_t
  struct Plane { double ax = 0.0, ay = 0.0, b = 0.0; std::vector<double> slack; };
  std::map<std::string, Plane> planes;  ///< keyed by wall id

  std::vector<geom::Point2> positions() const
  {
    std::vector<geom::Point2> out;
    out.reserve(states.size());
    for (const auto& s : states)
      out.push_back(s.position());
    return out;
  }
};

//==============================================================================
/// Per-flock nonlinear program in multiple-shooting form:
///
///   min  sum_i [ sum_k u_ik' R u_ik
///              + sum_k sum_j w_ij (Q d_ij(p_ik)^2 + q d_ij(p_ik)) ]
///        + soft_penalty * sum(slacks)
///
/// subject to Euler unicycle dynamics, the initial condition, box bounds,
/// separating-hyperplane wall constraints (hard at r_v, soft at r_soft) and
/// pairwise distance constraints (hard and soft) at the knots and at the
/// midpoints of segments 1..N-1. Soft rows cover every knot, hard rows start
/// at knot kFirstHardKnot.
///
/// Exposes the sparse first/second-order interface used by the interior point
/// solver: constraint rows have bounds [gl, gu], equality when gl == gu.
class MpcProblem
{
public:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  struct Agent
  {
    std::size_t task_index = 0;
    std::string agent_id;
    AgentShape shape;
    DynamicLimits limits;
    AgentState initial;
    RelevantElements elements;
    std::vector<geom::ConvexPolygon> areas;  ///< horizon area polygons
    /// Planes are a.(q - origin) = b internally; defaults to the initial
    /// position.
    geom::Point2 origin;
    std::vector<double> weights;

    std::size_t x_off = 0;      ///< 4 per knot, knots 0..N
    std::size_t u_off = 0;      ///< 2 per step, steps 0..N-1
    std::size_t plane_off = 0;  ///< (a_x, a_y, b) per wall
    std::size_t slack_off = 0;  ///< one per wall per knot
  };

  struct Pair
  {
    std::size_t i = 0;  ///< indices into agents()
    std::size_t j = 0;
    double hard_sq = 0.0;
    double soft_sq = 0.0;
    std::size_t slack_off = 0;  ///< knots 0..N, then midpoints 1..N-1

    static std::size_t slack_count(std::size_t N) { return 2 * N; }
    std::size_t knot_slack(std::size_t k) const { return slack_off + k; }
    std::size_t mid_slack(std::size_t N, std::size_t k) const
    {
      return slack_off + N + k;
    }
  };

  enum class RowKind : unsigned char
  {
    Initial, Dynamics, WallVertex, WallNorm, WallHard, WallSoft,
    PairHard, PairSoft, PairMidHard, PairMidSoft
  };

  struct Row
  {
    RowKind kind;
    std::size_t owner;  ///< agent or pair index
    std::size_t wall;   ///< wall index within the agent, or component
    std::size_t k;      ///< knot, or vertex index for WallVertex
  };

  /// Knots 0 and 1 follow from the initial state alone; hard clearance rows
  /// start at the first knot the inputs can move.
  static constexpr std::size_t kFirstHardKnot = 2;

  MpcProblem() = default;

  MpcProblem(std::vector<Agent> agents, const MpcParams& params)
  : _params(params),
    _agents(std::move(agents))
  {
    layout();
  }

  const MpcParams& params() const { return _params; }
  const std::vector<Agent>& agents() const { return _agents; }
  const std::vector<Pair>& pairs() const { return _pairs; }
  const std::vector<Row>& rows() const { return _rows; }
  std::size_t horizon() const { return _params.horizon_steps; }

  std::size_t num_variables() const { return _n; }
  std::size_t num_constraints() const { return _rows.size(); }

  std::size_t count_rows(RowKind kind) const
  {
    std::size_t c = 0;
    for (const auto& r : _rows)
      c += (r.kind == kind);
    return c;
  }

  void set_initial_state(std::size_t agent, const AgentState& s)
  {
    _agents.at(agent).initial = s;
  }

  void set_weights(std::size_t agent, std::vector<double> w)
  {
    auto& a = _agents.at(agent);
    if (w.size() != a.elements.objectives.size())
      throw std::invalid_argument("objective weight count mismatch");
    a.weights = std::move(w);
  }

  // Index helpers ------------------------------------------------------------
  std::size_t state_index(std::size_t agent, std::size_t k, std::size_t c) const
  {
    return _agents[agent].x_off + 4 * k + c;
  }

  std::size_t input_index(std::size_t agent, std::size_t k, std::size_t c) const
  {
    return _agents[agent].u_off + 2 * k + c;
  }

  std::size_t plane_index(std::size_t agent, std::size_t w, std::size_t c) const
  {
    return _agents[agent].plane_off + 3 * w + c;
  }

  std::size_t slack_index(std::size_t agent, std::size_t w, std::size_t k) const
  {
    return _agents[agent].slack_off + w * (horizon() + 1) + k;
  }

  // Bounds -------------------------------------------------------------------
  void bounds(std::span<double> xl, std::span<double> xu,
    std::span<double> gl, std::span<double> gu) const
  {
    std::fill(xl.begin(), xl.end(), -kInf);
    std::fill(xu.begin(), xu.end(), kInf);
    const std::size_t N = horizon();

    for (std::size_t i = 0; i < _agents.size(); ++i)
    {
      const auto& a = _agents[i];
      // The initial knot is pinned by equality rows and left unbounded.
      for (std::size_t k = 1; k <= N; ++k)
      {
        xl[state_index(i, k, 3)] = a.limits.v_min;
        xu[state_index(i, k, 3)] = a.limits.v_max;
      }
      for (std::size_t k = 0; k < N; ++k)
      {
        xl[input_index(i, k, 0)] = a.limits.a_min;
        xu[input_index(i, k, 0)] = a.limits.a_max;
        xl[input_index(i, k, 1)] = a.limits.omega_min;
        xu[input_index(i, k, 1)] = a.limits.omega_max;
      }
      const std::size_t walls = a.elements.walls.size();
      for (std::size_t s = 0; s < walls * (N + 1); ++s)
        xl[a.slack_off + s] = 0.0;
    }
    for (const auto& p : _pairs)
    {
      for (std::size_t k = 0; k < Pair::slack_count(N); ++k)
        xl[p.slack_off + k] = 0.0;
    }

    for (std::size_t r = 0; r < _rows.size(); ++r)
    {
      const Row& row = _rows[r];
      switch (row.kind)
      {
        case RowKind::Initial:
        case RowKind::Dynamics:
          gl[r] = gu[r] = 0.0;
          break;
        case RowKind::WallVertex:
          gl[r] = 0.0; gu[r] = kInf;
          break;
        case RowKind::WallNorm:
          gl[r] = -kInf; gu[r] = 1.0;
          break;
        case RowKind::WallHard:
          gl[r] = _agents[row.owner].shape.r_v; gu[r] = kInf;
          break;
        case RowKind::WallSoft:
          gl[r] = _agents[row.owner].shape.r_soft; gu[r] = kInf;
          break;
        case RowKind::PairHard:
          gl[r] = _pairs[row.owner].hard_sq; gu[r] = kInf;
          break;
        case RowKind::PairSoft:
          gl[r] = _pairs[row.owner].soft_sq; gu[r] = kInf;
          break;
        case RowKind::PairMidHard:
          gl[r] = _pairs[row.owner].hard_sq; gu[r] = kInf;
          break;
        case RowKind::PairMidSoft:
          gl[r] = _pairs[row.owner].soft_sq; gu[r] = kInf;
          break;
      }
    }
  }

  // Objective ----------------------------------------------------------------
  double objective(std::span<const double> x) const
  {
    const std::size_t N = horizon();
    const auto& R = _params.R;
    double f = 0.0;
    for (std::size_t i = 0; i < _agents.size(); ++i)
    {
      const auto& a = _agents[i];
      for (std::size_t k = 0; k < N; ++k)
      {
        const double ua = x[input_index(i, k, 0)];
        const double uw = x[input_index(i, k, 1)];
        f += ua * (R[0] * ua + R[1] * uw) + uw * (R[2] * ua + R[3] * uw);
      }
      for (std::size_t j = 0; j < a.elements.objectives.size(); ++j)
      {
        if (a.weights[j] == 0.0)
          continue;
        const auto [n, c] = objective_line(a, j);
        for (std::size_t k = 0; k <= N; ++k)
        {
          const double d = n.x * x[state_index(i, k, 0)]
            + n.y * x[state_index(i, k, 1)] - c;
          f += a.weights[j] * (_params.Q * d * d + _params.q * d);
        }
      }
      const std::size_t slacks = a.elements.walls.size() * (N + 1);
      for (std::size_t s = 0; s < slacks; ++s)
        f += _params.soft_penalty * x[a.slack_off + s];
    }
    for (const auto& p : _pairs)
    {
      for (std::size_t k = 0; k < Pair::slack_count(N); ++k)
        f += _params.soft_penalty * x[p.slack_off + k];
    }
    return f;
  }

  void gradient(std::span<const double> x, std::span<double> g) const
  {
    std::fill(g.begin(), g.end(), 0.0);
    const std::size_t N = horizon();
    const auto& R = _params.R;
    for (std::size_t i = 0; i < _agents.size(); ++i)
    {
      const auto& a = _agents[i];
      for (std::size_t k = 0; k < N; ++k)
      {
        const std::size_t ia = input_index(i, k, 0);
        const std::size_t iw = input_index(i, k, 1);
        const double ua = x[ia];
        const double uw = x[iw];
        g[ia] += 2.0 * R[0] * ua + (R[1] + R[2]) * uw;
        g[iw] += 2.0 * R[3] * uw + (R[1] + R[2]) * ua;
      }
      for (std::size_t j = 0; j < a.elements.objectives.size(); ++j)
      {
        const double w = a.weights[j];
        if (w == 0.0)
          continue;
        const auto [n, c] = objective_line(a, j);
        for (std::size_t k = 0; k <= N; ++k)
        {
          const std::size_t ix = state_index(i, k, 0);
          const std::size_t iy = state_index(i, k, 1);
          const double d = n.x * x[ix] + n.y * x[iy] - c;
          const double dd = w * (2.0 * _params.Q * d + _params.q);
          g[ix] += dd * n.x;
          g[iy] += dd * n.y;
        }
      }
      const std::size_t slacks = a.elements.walls.size() * (N + 1);
      for (std::size_t s = 0; s < slacks; ++s)
        g[a.slack_off + s] += _params.soft_penalty;
    }
    for (const auto& p : _pairs)
    {
      for (std::size_t k = 0; k < Pair::slack_count(N); ++k)
        g[p.slack_off + k] += _params.soft_penalty;
    }
  }

  // Constraints --------------------------------------------------------------
  void constraints(std::span<const double> x, std::span<double> g) const
  {
    const double dt = _params.dt;
    for (std::size_t r = 0; r < _rows.size(); ++r)
    {
      const Row& row = _rows[r];
      switch (row.kind)
      {
        case RowKind::Initial:
        {
          const auto& s = _agents[row.owner].initial;
          const double init[4] = {s.x, s.y, s.theta, s.v};
          g[r] = x[state_index(row.owner, 0, row.wall)] - init[row.wall];
          break;
        }
        case RowKind::Dynamics:
        {
          const std::size_t i = row.owner, k = row.k;
          const double th = x[state_index(i, k, 2)];
          const double v = x[state_index(i, k, 3)];
          const double next = x[state_index(i, k + 1, row.wall)];
          const double cur = x[state_index(i, k, row.wall)];
          double f = 0.0;
          switch (row.wall)
          {
            case 0: f = dt * v * std::cos(th); break;
            case 1: f = dt * v * std::sin(th); break;
            case 2: f = dt * x[input_index(i, k, 1)]; break;
            case 3: f = dt * x[input_index(i, k, 0)]; break;
          }
          g[r] = next - cur - f;
          break;
        }
        case RowKind::WallVertex:
        {
          const auto& ag = _agents[row.owner];
          const geom::Point2 v = ag.elements.walls[row.wall].vertices[row.k]
            - ag.origin;
          g[r] = x[plane_index(row.owner, row.wall, 0)] * v.x
            + x[plane_index(row.owner, row.wall, 1)] * v.y
            - x[plane_index(row.owner, row.wall, 2)];
          break;
        }
        case RowKind::WallNorm:
        {
          const double ax = x[plane_index(row.owner, row.wall, 0)];
          const double ay = x[plane_index(row.owner, row.wall, 1)];
          g[r] = ax * ax + ay * ay;
          break;
        }
        case RowKind::WallHard:
        case RowKind::WallSoft:
        {
          const std::size_t i = row.owner;
          const geom::Point2 o = _agents[i].origin;
          double val = x[plane_index(i, row.wall, 2)]
            - x[plane_index(i, row.wall, 0)] * (x[state_index(i, row.k, 0)] - o.x)
            - x[plane_index(i, row.wall, 1)] * (x[state_index(i, row.k, 1)] - o.y);
          if (row.kind == RowKind::WallSoft)
            val += x[slack_index(i, row.wall, row.k)];
          g[r] = val;
          break;
        }
        case RowKind::PairHard:
        case RowKind::PairSoft:
        {
          const auto& p = _pairs[row.owner];
          const double dx = x[state_index(p.i, row.k, 0)]
            - x[state_index(p.j, row.k, 0)];
          const double dy = x[state_index(p.i, row.k, 1)]
            - x[state_index(p.j, row.k, 1)];
          double val = dx * dx + dy * dy;
          if (row.kind == RowKind::PairSoft)
            val += x[p.knot_slack(row.k)];
          g[r] = val;
          break;
        }
        case RowKind::PairMidHard:
        case RowKind::PairMidSoft:
        {
          const auto& p = _pairs[row.owner];
          double val = 0.0;
          for (std::size_t c = 0; c < 2; ++c)
          {
            const double m = 0.5 * (x[state_index(p.i, row.k, c)]
              + x[state_index(p.i, row.k + 1, c)]
              - x[state_index(p.j, row.k, c)]
              - x[state_index(p.j, row.k + 1, c)]);
            val += m * m;
          }
          if (row.kind == RowKind::PairMidSoft)
            val += x[p.mid_slack(horizon(), row.k)];
          g[r] = val;
          break;
        }
      }
    }
  }

  /// Sparse Jacobian pattern as (row, column), duplicates allowed.
  std::vector<std::pair<std::size_t, std::size_t>> jacobian_structure() const
  {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t r = 0; r < _rows.size(); ++r)
    {
      visit_jacobian(r, nullptr, [&](std::size_t c, double)
      {
        out.emplace_back(r, c);
      });
    }
    return out;
  }

  void jacobian_values(std::span<const double> x, std::span<double> vals) const
  {
    std::size_t e = 0;
    for (std::size_t r = 0; r < _rows.size(); ++r)
    {
      visit_jacobian(r, x.data(), [&](std::size_t, double v)
      {
        vals[e++] = v;
      });
    }
  }

  /// Lower-triangular Hessian pattern as (row, column) with row >= column.
  std::vector<std::pair<std::size_t, std::size_t>> hessian_structure() const
  {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    visit_hessian(nullptr, 0.0, nullptr,
      [&](std::size_t r, std::size_t c, double)
      {
        out.emplace_back(std::max(r, c), std::min(r, c));
      });
    return out;
  }

  /// Values of obj_factor * Hess(f) + sum_r lambda_r Hess(g_r).
  void hessian_values(std::span<const double> x, double obj_factor,
    std::span<const double> lambda, std::span<double> vals) const
  {
    std::size_t e = 0;
    visit_hessian(x.data(), obj_factor, lambda.data(),
      [&](std::size_t, std::size_t, double v)
      {
        vals[e++] = v;
      });
  }

  /// Proximal damping for the separating planes, whose optimum is not unique
  /// while their wall is inactive.
  void proximal_weights(std::span<double> w) const
  {
    std::fill(w.begin(), w.end(), 0.0);
    for (const auto& a : _agents)
    {
      for (std::size_t e = 0; e < 3 * a.elements.walls.size(); ++e)
        w[a.plane_off + e] = kPlaneProximal;
    }
  }

  static constexpr double kPlaneProximal = 1e-2;

  // Solution helpers ---------------------------------------------------------
  AgentSolution extract(std::size_t agent, std::span<const double> x) const
  {
    const std::size_t N = horizon();
    const auto& a = _agents[agent];
    AgentSolution s;
    for (std::size_t k = 0; k <= N; ++k)
    {
      s.states.push_back({x[state_index(agent, k, 0)],
        x[state_index(agent, k, 1)], x[state_index(agent, k, 2)],
        x[state_index(agent, k, 3)]});
    }
    for (std::size_t k = 0; k < N; ++k)
    {
      s.inputs.push_back({x[input_index(agent, k, 0)],
        x[input_index(agent, k, 1)]});
    }
    for (std::size_t w = 0; w < a.elements.walls.size(); ++w)
    {
      AgentSolution::Plane p;
      p.ax = x[plane_index(agent, w, 0)];
      p.ay = x[plane_index(agent, w, 1)];
      p.b = x[plane_index(agent, w, 2)] + p.ax * a.origin.x
        + p.ay * a.origin.y;
      for (std::size_t k = 0; k <= N; ++k)
        p.slack.push_back(x[slack_index(agent, w, k)]);
      s.planes.emplace(a.elements.walls[w].id, std::move(p));
    }
    return s;
  }

  /// Oriented objective line j of an agent as (unit normal, offset) so that
  /// d(p) = n.p - c is the signed distance, positive before the interface.
  static std::pair<geom::Point2, double> objective_line(
    const Agent& a, std::size_t j)
  {
    const auto& seg = a.elements.objectives[j];
    const geom::Point2 n = seg.left_normal();
    return {n, geom::dot(n, seg.a)};
  }

private:
  void layout()
  {
    const std::size_t N = horizon();
    std::size_t off = 0;
    for (auto& a : _agents)
    {
      a.x_off = off; off += 4 * (N + 1);
      a.u_off = off; off += 2 * N;
      a.plane_off = off; off += 3 * a.elements.walls.size();
      a.slack_off = off; off += a.elements.walls.size() * (N + 1);
      if (a.weights.size() != a.elements.objectives.size())
      {
        a.weights.assign(a.elements.objectives.size(), 0.0);
        if (!a.weights.empty())
          a.weights[0] = 1.0;
      }
    }
    for (std::size_t i = 0; i < _agents.size(); ++i)
    {
      for (std::size_t j = i + 1; j < _agents.size(); ++j)
      {
        Pair p;
        p.i = i;
        p.j = j;
        const double hard = _agents[i].shape.r_v + _agents[j].shape.r_v;
        const double soft = _agents[i].shape.r_soft + _agents[j].shape.r_soft;
        p.hard_sq = hard * hard;
        p.soft_sq = soft * soft;
        p.slack_off = off;
        off += Pair::slack_count(N);
        _pairs.push_back(p);
      }
    }
    _n = off;

    for (std::size_t i = 0; i < _agents.size(); ++i)
    {
      for (std::size_t c = 0; c < 4; ++c)
        _rows.push_back({RowKind::Initial, i, c, 0});
      for (std::size_t k = 0; k < N; ++k)
      {
        for (std::size_t c = 0; c < 4; ++c)
          _rows.push_back({RowKind::Dynamics, i, c, k});
      }
      const auto& walls = _agents[i].elements.walls;
      for (std::size_t w = 0; w < walls.size(); ++w)
      {
        for (std::size_t v = 0; v < walls[w].vertices.size(); ++v)
          _rows.push_back({RowKind::WallVertex, i, w, v});
        _rows.push_back({RowKind::WallNorm, i, w, 0});
        for (std::size_t k = kFirstHardKnot; k <= N; ++k)
          _rows.push_back({RowKind::WallHard, i, w, k});
        for (std::size_t k = 0; k <= N; ++k)
          _rows.push_back({RowKind::WallSoft, i, w, k});
      }
    }
    for (std::size_t p = 0; p < _pairs.size(); ++p)
    {
      for (std::size_t k = kFirstHardKnot; k <= N; ++k)
        _rows.push_back({RowKind::PairHard, p, 0, k});
      for (std::size_t k = 0; k <= N; ++k)
        _rows.push_back({RowKind::PairSoft, p, 0, k});
      // Knot 1 follows from the initial state alone, so the first segment
      // carries no decision freedom and is left unconstrained.
      for (std::size_t k = 1; k < N; ++k)
        _rows.push_back({RowKind::PairMidHard, p, 0, k});
      for (std::size_t k = 1; k < N; ++k)
        _rows.push_back({RowKind::PairMidSoft, p, 0, k});
    }
  }

  // Calls emit(column, value) for every Jacobian entry of row r in a fixed
  // order. Values are only meaningful when x is non-null.
  template <typename Emit>
  void visit_jacobian(std::size_t r, const double* x, Emit&& emit) const
  {
    const Row& row = _rows[r];
    const double dt = _params.dt;
    auto val = [x](std::size_t i) { return x ? x[i] : 0.0; };

    switch (row.kind)
    {
      case RowKind::Initial:
        emit(state_index(row.owner, 0, row.wall), 1.0);
        return;
      case RowKind::Dynamics:
      {
        const std::size_t i = row.owner, k = row.k, c = row.wall;
        const double th = val(state_index(i, k, 2));
        const double v = val(state_index(i, k, 3));
        emit(state_index(i, k + 1, c), 1.0);
        emit(state_index(i, k, c), -1.0);
        switch (c)
        {
          case 0:
            emit(state_index(i, k, 2), dt * v * std::sin(th));
            emit(state_index(i, k, 3), -dt * std::cos(th));
            break;
          case 1:
            emit(state_index(i, k, 2), -dt * v * std::cos(th));
            emit(state_index(i, k, 3), -dt * std::sin(th));
            break;
          case 2:
            emit(input_index(i, k, 1), -dt);
            break;
          case 3:
            emit(input_index(i, k, 0), -dt);
            break;
        }
        return;
      }
      case RowKind::WallVertex:
      {
        const auto& ag = _agents[row.owner];
        const geom::Point2 v = ag.elements.walls[row.wall].vertices[row.k]
          - ag.origin;
        emit(plane_index(row.owner, row.wall, 0), v.x);
        emit(plane_index(row.owner, row.wall, 1), v.y);
        emit(plane_index(row.owner, row.wall, 2), -1.0);
        return;
      }
      case RowKind::WallNorm:
      {
        const std::size_t ax = plane_index(row.owner, row.wall, 0);
        const std::size_t ay = plane_index(row.owner, row.wall, 1);
        emit(ax, 2.0 * val(ax));
        emit(ay, 2.0 * val(ay));
        return;
      }
      case RowKind::WallHard:
      case RowKind::WallSoft:
      {
        const std::size_t i = row.owner;
        const std::size_t ax = plane_index(i, row.wall, 0);
        const std::size_t ay = plane_index(i, row.wall, 1);
        const std::size_t px = state_index(i, row.k, 0);
        const std::size_t py = state_index(i, row.k, 1);
        const geom::Point2 o = _agents[i].origin;
        emit(plane_index(i, row.wall, 2), 1.0);
        emit(ax, o.x - val(px));
        emit(ay, o.y - val(py));
        emit(px, -val(ax));
        emit(py, -val(ay));
        if (row.kind == RowKind::WallSoft)
          emit(slack_index(i, row.wall, row.k), 1.0);
        return;
      }
      case RowKind::PairHard:
      case RowKind::PairSoft:
      {
        const auto& p = _pairs[row.owner];
        const std::size_t xi = state_index(p.i, row.k, 0);
        const std::size_t yi = state_index(p.i, row.k, 1);
        const std::size_t xj = state_index(p.j, row.k, 0);
        const std::size_t yj = state_index(p.j, row.k, 1);
        const double dx = val(xi) - val(xj);
        const double dy = val(yi) - val(yj);
        emit(xi, 2.0 * dx);
        emit(yi, 2.0 * dy);
        emit(xj, -2.0 * dx);
        emit(yj, -2.0 * dy);
        if (row.kind == RowKind::PairSoft)
          emit(p.knot_slack(row.k), 1.0);
        return;
      }
      case RowKind::PairMidHard:
      case RowKind::PairMidSoft:
      {
        const auto& p = _pairs[row.owner];
        for (std::size_t c = 0; c < 2; ++c)
        {
          const std::size_t i0 = state_index(p.i, row.k, c);
          const std::size_t i1 = state_index(p.i, row.k + 1, c);
          const std::size_t j0 = state_index(p.j, row.k, c);
          const std::size_t j1 = state_index(p.j, row.k + 1, c);
          const double m = 0.5 * (val(i0) + val(i1) - val(j0) - val(j1));
          emit(i0, m);
          emit(i1, m);
          emit(j0, -m);
          emit(j1, -m);
        }
        if (row.kind == RowKind::PairMidSoft)
          emit(p.mid_slack(horizon(), row.k), 1.0);
        return;
      }
    }
  }

  // Calls emit(r, c, value) for every Hessian contribution in a fixed order.
  template <typename Emit>
  void visit_hessian(const double* x, double obj_factor, const double* lambda,
    Emit&& emit) const
  {
    const std::size_t N = horizon();
    const double dt = _params.dt;
    const auto& R = _params.R;
    auto val = [x](std::size_t i) { return x ? x[i] : 0.0; };
    auto lam = [lambda](std::size_t r) { return lambda ? lambda[r] : 0.0; };

    for (std::size_t i = 0; i < _agents.size(); ++i)
    {
      const auto& a = _agents[i];
      for (std::size_t k = 0; k < N; ++k)
      {
        const std::size_t ia = input_index(i, k, 0);
        const std::size_t iw = input_index(i, k, 1);
        emit(ia, ia, obj_factor * 2.0 * R[0]);
        emit(iw, ia, obj_factor * (R[1] + R[2]));
        emit(iw, iw, obj_factor * 2.0 * R[3]);
      }

      // Objective curvature 2 Q sum_j w_j n_j n_j' on each knot position.
      double hxx = 0.0, hxy = 0.0, hyy = 0.0;
      for (std::size_t j = 0; j < a.elements.objectives.size(); ++j)
      {
        const auto [n, c] = objective_line(a, j);
        const double s = 2.0 * _params.Q * a.weights[j];
        hxx += s * n.x * n.x;
        hxy += s * n.x * n.y;
        hyy += s * n.y * n.y;
      }
      for (std::size_t k = 0; k <= N; ++k)
      {
        const std::size_t ix = state_index(i, k, 0);
        const std::size_t iy = state_index(i, k, 1);
        emit(ix, ix, obj_factor * hxx);
        emit(iy, ix, obj_factor * hxy);
        emit(iy, iy, obj_factor * hyy);
      }
    }

    for (std::size_t r = 0; r < _rows.size(); ++r)
    {
      const Row& row = _rows[r];
      const double l = lam(r);
      switch (row.kind)
      {
        case RowKind::Dynamics:
        {
          if (row.wall > 1)
            break;
          const std::size_t i = row.owner, k = row.k;
          const std::size_t ith = state_index(i, k, 2);
          const std::size_t iv = state_index(i, k, 3);
          const double th = val(ith);
          const double v = val(iv);
          if (row.wall == 0)
          {
            // g = x' - x - dt v cos(th)
            emit(ith, ith, l * dt * v * std::cos(th));
            emit(iv, ith, l * dt * std::sin(th));
          }
          else
          {
            // g = y' - y - dt v sin(th)
            emit(ith, ith, l * dt * v * std::sin(th));
            emit(iv, ith, -l * dt * std::cos(th));
          }
          break;
        }
        case RowKind::WallNorm:
        {
          const std::size_t ax = plane_index(row.owner, row.wall, 0);
          const std::size_t ay = plane_index(row.owner, row.wall, 1);
          emit(ax, ax, 2.0 * l);
          emit(ay, ay, 2.0 * l);
          break;
        }
        case RowKind::WallHard:
        case RowKind::WallSoft:
        {
          const std::size_t i = row.owner;
          emit(plane_index(i, row.wall, 0), state_index(i, row.k, 0), -l);
          emit(plane_index(i, row.wall, 1), state_index(i, row.k, 1), -l);
          break;
        }
        case RowKind::PairHard:
        case RowKind::PairSoft:
        {
          const auto& p = _pairs[row.owner];
          for (std::size_t c = 0; c < 2; ++c)
          {
            const std::size_t ii = state_index(p.i, row.k, c);
            const std::size_t jj = state_index(p.j, row.k, c);
            emit(ii, ii, 2.0 * l);
            emit(jj, jj, 2.0 * l);
            emit(ii, jj, -2.0 * l);
          }
          break;
        }
        case RowKind::PairMidHard:
        case RowKind::PairMidSoft:
        {
          // g = |c'z|^2 with c = (1, 1, -1, -1) / 2 per coordinate.
          const auto& p = _pairs[row.owner];
          for (std::size_t c = 0; c < 2; ++c)
          {
            const std::size_t idx[4] = {state_index(p.i, row.k, c),
              state_index(p.i, row.k + 1, c), state_index(p.j, row.k, c),
              state_index(p.j, row.k + 1, c)};
            const double sign[4] = {1.0, 1.0, -1.0, -1.0};
            for (std::size_t u = 0; u < 4; ++u)
            {
              for (std::size_t v = 0; v <= u; ++v)
                emit(idx[u], idx[v], 0.5 * l * sign[u] * sign[v]);
            }
          }
          break;
        }
        default:
          break;
      }
    }
  }

  MpcParams _params;
  std::vector<Agent> _agents;
  std::vector<Pair> _pairs;
  std::vector<Row> _rows;
  std::size_t _n = 0;
};

//==============================================================================
/// Assembles the flock problem from the tasks and the map. `flock` holds
/// indices into `tasks` and `states`.
inline MpcProblem build_problem(const std::vector<std::size_t>& flock,
  const std::vector<AgentTask>& tasks, const std::vector<AgentState>& states,
  const SemanticMap& map, const MpcParams& params)
{
  const std::string err = params.check();
  if (!err.empty())
    throw std::invalid_argument("invalid MPC parameters: " + err);

  std::vector<MpcProblem::Agent> agents;
  agents.reserve(flock.size());
  for (const std::size_t t : flock)
  {
    const AgentTask& task = tasks.at(t);
    MpcProblem::Agent a;
    a.task_index = t;
    a.agent_id = task.agent_id;
    a.shape = task.shape;
    a.limits = task.limits;
    a.initial = states.at(t);
    a.elements = relevant_elements(map, task.route, task.mode,
      params.element_horizon);
    for (const auto& id : a.elements.horizon_areas)
      a.areas.push_back(map.node(id).polygon);
    a.origin = a.initial.position();
    agents.push_back(std::move(a));
  }
  return MpcProblem(std::move(agents), params);
}

//==============================================================================
namespace detail {

inline double lerp(double a, double b, double t) { return a + t * (b - a); }

/// Nearest point of a wall's convex hull to p.
inline geom::Point2 nearest_on_hull(geom::Point2 p,
  const std::vector<geom::Point2>& v)
{
  if (v.size() >= 3)
  {
    geom::ConvexPolygon poly(v);
    if (geom::point_in_polygon(p, poly))
      return p;
  }
  geom::Point2 best = v.front();
  double best_d = geom::norm(p - best);
  const std::size_t edges = v.size() == 2 ? 1 : v.size();
  for (std::size_t e = 0; e < edges; ++e)
  {
    const geom::Point2 a = v[e];
    const geom::Point2 b = v[(e + 1) % v.size()];
    const geom::Point2 d = b - a;
    const double l2 = geom::dot(d, d);
    const double t = l2 > 0.0 ? std::clamp(geom::dot(p - a, d) / l2, 0.0, 1.0)
      : 0.0;
    const geom::Point2 q = a + t * d;
    const double dq = geom::norm(p - q);
    if (dq < best_d)
    {
      best_d = dq;
      best = q;
    }
  }
  return best;
}

/// Rollout of a proportional heading controller towards the first weighted
/// objective line, cruising at half the speed limit.
inline void heading_rollout(const MpcProblem& problem,
  const MpcProblem::Agent& a, std::vector<AgentState>& states,
  std::vector<ControlInput>& inputs)
{
  const double dt = problem.params().dt;
  std::size_t j = 0;
  while (j < a.weights.size() && a.weights[j] == 0.0)
    ++j;
  states[0] = a.initial;
  if (j >= a.elements.objectives.size())
  {
    std::fill(states.begin(), states.end(), a.initial);
    std::fill(inputs.begin(), inputs.end(), ControlInput{});
    return;
  }
  const geom::Point2 n = MpcProblem::objective_line(a, j).first;
  const double goal = std::atan2(-n.y, -n.x);
  const double v_cruise = std::clamp(0.5 * a.limits.v_max, a.limits.v_min,
    a.limits.v_max);
  for (std::size_t k = 0; k < inputs.size(); ++k)
  {
    const AgentState& s = states[k];
    double err = std::remainder(goal - s.theta, 2.0 * std::numbers::pi);
    if (std::abs(err) >= std::numbers::pi - 1e-9)
      err = std::numbers::pi;
    ControlInput u;
    u.omega = std::clamp(err / dt, a.limits.omega_min, a.limits.omega_max);
    const double v_des = std::clamp(v_cruise * std::max(0.0, std::cos(err)),
      a.limits.v_min, a.limits.v_max);
    u.a = std::clamp((v_des - s.v) / dt, a.limits.a_min, a.limits.a_max);
    inputs[k] = u;
    states[k + 1] = dynamics_step(s, u, dt);
  }
}

} // namespace detail

/// Initial decision vector. Agents with a previous solution get their states
/// and inputs shifted by `shift` prediction steps (linear interpolation, last
/// entries repeated). Agents without one get the rollout of a heading
/// controller that turns towards the first weighted objective and then
/// accelerates. Either trajectory is held in place from the first knot that
/// leaves the horizon areas or approaches a wall closer than r_v. Hyperplanes of
/// walls that are still present are kept; new ones support the wall hull at
/// the point nearest to the trajectory. Slacks start at their smallest
/// feasible values.
inline std::vector<double> warm_start(const MpcProblem& problem,
  const std::vector<const AgentSolution*>& previous, double shift)
{
  const std::size_t N = problem.horizon();
  std::vector<double> x(problem.num_variables(), 0.0);
  std::vector<std::vector<AgentState>> all_states;

  for (std::size_t i = 0; i < problem.agents().size(); ++i)
  {
    const auto& a = problem.agents()[i];
    const AgentSolution* prev = i < previous.size() ? previous[i] : nullptr;
    if (prev && (prev->states.size() != N + 1 || prev->inputs.size() != N))
      prev = nullptr;

    std::vector<AgentState> states(N + 1, a.initial);
    std::vector<ControlInput> inputs(N);
    if (prev)
    {
      auto sample_state = [&](double t)
      {
        const double c = std::clamp(t, 0.0, static_cast<double>(N));
        const std::size_t k0 = std::min(static_cast<std::size_t>(c), N);
        const std::size_t k1 = std::min(k0 + 1, N);
        const double f = c - k0;
        const auto& s0 = prev->states[k0];
        const auto& s1 = prev->states[k1];
        return AgentState{detail::lerp(s0.x, s1.x, f),
          detail::lerp(s0.y, s1.y, f), detail::lerp(s0.theta, s1.theta, f),
          detail::lerp(s0.v, s1.v, f)};
      };
      auto sample_input = [&](double t)
      {
        const double c = std::clamp(t, 0.0, static_cast<double>(N - 1));
        const std::size_t k0 = std::min(static_cast<std::size_t>(c), N - 1);
        const std::size_t k1 = std::min(k0 + 1, N - 1);
        const double f = c - k0;
        return ControlInput{
          detail::lerp(prev->inputs[k0].a, prev->inputs[k1].a, f),
          detail::lerp(prev->inputs[k0].omega, prev->inputs[k1].omega, f)};
      };
      for (std::size_t k = 0; k <= N; ++k)
        states[k] = sample_state(k + shift);
      for (std::size_t k = 0; k < N; ++k)
        inputs[k] = sample_input(k + shift);
      states[0] = a.initial;
    }
    else
    {
      detail::heading_rollout(problem, a, states, inputs);
    }

    {
      auto wall_distance = [&](geom::Point2 p)
      {
        double d = std::numeric_limits<double>::infinity();
        for (const auto& w : a.elements.walls)
          d = std::min(d, geom::point_hull_distance(p, w.vertices));
        return d;
      };
      double d_prev = wall_distance(states[0].position());
      for (std::size_t k = 1; k <= N; ++k)
      {
        const geom::Point2 p = states[k].position();
        const bool inside = std::any_of(a.areas.begin(), a.areas.end(),
          [&](const geom::ConvexPolygon& poly)
          { return geom::point_in_polygon(p, poly); });
        const double d = wall_distance(p);
        if (!inside || (d < a.shape.r_v && d < d_prev))
        {
          for (std::size_t j = k; j <= N; ++j)
          {
            states[j] = states[k - 1];
            states[j].v = 0.0;
          }
          for (std::size_t j = k - 1; j < N; ++j)
            inputs[j] = ControlInput{};
          break;
        }
        d_prev = d;
      }
    }

    for (std::size_t k = 0; k <= N; ++k)
    {
      x[problem.state_index(i, k, 0)] = states[k].x;
      x[problem.state_index(i, k, 1)] = states[k].y;
      x[problem.state_index(i, k, 2)] = states[k].theta;
      x[problem.state_index(i, k, 3)] = std::clamp(states[k].v,
        a.limits.v_min, a.limits.v_max);
    }
    for (std::size_t k = 0; k < N; ++k)
    {
      x[problem.input_index(i, k, 0)] = inputs[k].a;
      x[problem.input_index(i, k, 1)] = inputs[k].omega;
    }

    for (std::size_t w = 0; w < a.elements.walls.size(); ++w)
    {
      const auto& wall = a.elements.walls[w];
      const AgentSolution::Plane* plane = nullptr;
      if (prev)
      {
        const auto it = prev->planes.find(wall.id);
        if (it != prev->planes.end())
          plane = &it->second;
      }

      double ax = 0.0, ay = 0.0, b = 0.0;
      if (plane)
      {
        ax = plane->ax;
        ay = plane->ay;
        b = plane->b;
      }
      else
      {
        geom::Point2 p = states[0].position();
        double best = std::numeric_limits<double>::infinity();
        for (const auto& s : states)
        {
          const double d = geom::point_hull_distance(s.position(),
            wall.vertices);
          if (d < best)
          {
            best = d;
            p = s.position();
          }
        }
        const geom::Point2 q = detail::nearest_on_hull(p, wall.vertices);
        geom::Point2 dir = q - p;
        double len = geom::norm(dir);
        if (len < 1e-9)
        {
          dir = wall.vertices.front() - states[0].position();
          len = std::max(geom::norm(dir), 1e-9);
        }
        const geom::Point2 n = (1.0 / len) * dir;
        ax = n.x;
        ay = n.y;
        b = geom::dot(n, q) - 0.1 * len;
      }
      x[problem.plane_index(i, w, 0)] = ax;
      x[problem.plane_index(i, w, 1)] = ay;
      x[problem.plane_index(i, w, 2)] = b - ax * a.origin.x - ay * a.origin.y;
      for (std::size_t k = 0; k <= N; ++k)
      {
        const double margin = b - ax * states[k].x - ay * states[k].y;
        x[problem.slack_index(i, w, k)] = std::max(0.0,
          a.shape.r_soft - margin);
      }
    }
    all_states.push_back(std::move(states));
  }

  for (const auto& p : problem.pairs())
  {
    for (std::size_t k = 0; k <= N; ++k)
    {
      const geom::Point2 d = all_states[p.i][k].position()
        - all_states[p.j][k].position();
      x[p.knot_slack(k)] = std::max(0.0, p.soft_sq - geom::dot(d, d));
    }
    for (std::size_t k = 1; k < N; ++k)
    {
      const geom::Point2 d = 0.5 * (all_states[p.i][k].position()
        + all_states[p.i][k + 1].position() - all_states[p.j][k].position()
        - all_states[p.j][k + 1].position());
      x[p.mid_slack(N, k)] = std::max(0.0, p.soft_sq - geom::dot(d, d));
    }
  }

  return x;
}

} // namespace flockmpc

#endif // FLOCKMPC__MPC_HPP
