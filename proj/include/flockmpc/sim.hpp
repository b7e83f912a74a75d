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

#ifndef FLOCKMPC__SIM_HPP
#define FLOCKMPC__SIM_HPP

#include <flockmpc/solver.hpp>

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace flockmpc {

//==============================================================================
struct AgentSpec
{
  std::string id;
  std::vector<std::string> route;
  AgentShape shape;
  DynamicLimits limits;
  /// Fixed start state; sampled inside route[0] when absent.
  std::optional<AgentState> start;
};

struct SimConfig
{
  std::shared_ptr<const SemanticMap> map;
  std::vector<AgentSpec> agents;
  CooperationMode mode = CooperationMode::Dynamic;
  MpcParams params;
  std::uint64_t seed = 0;
  std::size_t max_steps = 400;
  std::size_t runs = 1;
  std::size_t substeps = 2;        ///< plant integration steps per period
  double minor_overlap = 0.01;     ///< overlaps below this are minor [m]
  /// Overrides the solver options derived from `params`.
  std::optional<SolverOptions> solver;
  /// Called after every flock solve, on the thread running the simulation.
  std::function<void(const MpcProblem&, const SolveOutcome&)> on_solve;

  /// Throws std::invalid_argument / RouteError when inconsistent.
  void validate() const
  {
    if (!map)
      throw std::invalid_argument("simulation needs a map");
    if (agents.empty())
      throw std::invalid_argument("simulation needs at least one agent");
    const std::string err = params.check();
    if (!err.empty())
      throw std::invalid_argument("invalid MPC parameters: " + err);
    if (runs < 1)
      throw std::invalid_argument("runs must be at least 1");
    if (substeps < 1)
      throw std::invalid_argument("substeps must be at least 1");
    std::set<std::string> ids;
    for (const auto& a : agents)
    {
      if (!ids.insert(a.id).second)
        throw std::invalid_argument("duplicate agent id '" + a.id + "'");
      AgentTask t{a.id, a.route, 0, a.shape, a.limits};
      validate_task(t, *map);
    }
  }
};

//==============================================================================
enum class FailureKind { None, Infeasible, Collision };

inline const char* to_string(FailureKind f)
{
  switch (f)
  {
    case FailureKind::None: return "none";
    case FailureKind::Infeasible: return "infeasible";
    case FailureKind::Collision: return "collision";
  }
  return "?";
}

inline std::optional<FailureKind> failure_kind_from_string(const std::string& s)
{
  if (s == "none") return FailureKind::None;
  if (s == "infeasible") return FailureKind::Infeasible;
  if (s == "collision") return FailureKind::Collision;
  return std::nullopt;
}

struct TrajectorySample
{
  std::size_t step = 0;
  AgentState state;
  std::size_t mode = 0;

  friend bool operator==(const TrajectorySample&,
    const TrajectorySample&) = default;
};

struct CollisionEvent
{
  std::size_t step = 0;
  std::size_t substep = 0;
  std::string agent;
  std::string other;  ///< agent or boundary id
  double overlap = 0.0;
  bool minor = false;

  friend bool operator==(const CollisionEvent&, const CollisionEvent&) = default;
};

struct ModeChange
{
  std::size_t step = 0;
  std::string agent;
  std::size_t mode = 0;

  friend bool operator==(const ModeChange&, const ModeChange&) = default;
};

struct StepTiming
{
  double mpc = 0.0;            ///< max solve wall time over flocks [s]
  std::optional<double> config;  ///< reconfiguration wall time [s]
};

struct RunRecord
{
  std::uint64_t seed = 0;
  CooperationMode mode = CooperationMode::Dynamic;
  std::vector<std::string> agent_ids;
  /// Per agent, one sample per control step plus the final state.
  std::vector<std::vector<TrajectorySample>> trajectories;
  std::vector<ModeChange> mode_changes;
  std::vector<std::optional<std::size_t>> completion_steps;
  std::optional<std::size_t> completion_step;  ///< last agent's completion
  FailureKind failure = FailureKind::None;
  std::string failure_detail;
  bool minor_collision = false;
  std::vector<CollisionEvent> collisions;
  /// Per step: sizes of the flocks that were solved.
  std::vector<std::vector<std::size_t>> flock_census;
  /// Per step: solver status per flock, in flock order.
  std::vector<std::vector<SolveStatus>> solve_status;
  /// Per step: solver iterations per flock.
  std::vector<std::vector<std::size_t>> solve_iterations;
  std::size_t steps = 0;

  // Timing fields; excluded from determinism comparisons.
  std::vector<StepTiming> timing;

  bool succeeded() const
  {
    return failure == FailureKind::None && !minor_collision
      && completion_step.has_value();
  }
};

//==============================================================================
/// Rejection-samples a start pose with clearance r_v from the area boundary
/// and 2 r_v from occupied positions. Falls back to the centroid when it is
/// admissible; throws std::runtime_error otherwise.
template <typename Rng>
AgentState sample_start_pose(const geom::ConvexPolygon& area,
  const AgentShape& shape, const std::vector<AgentState>& occupied, Rng& rng)
{
  geom::Box2 box;
  for (const auto& p : area.vertices())
    box.expand(p);

  auto admissible = [&](geom::Point2 p)
  {
    for (std::size_t i = 0; i < area.size(); ++i)
    {
      if (geom::signed_distance_to_line(p, area.edge(i)) < shape.r_v)
        return false;
    }
    for (const auto& o : occupied)
    {
      if (geom::norm(p - o.position()) < 2.0 * shape.r_v)
        return false;
    }
    return true;
  };

  std::uniform_real_distribution<double> ux(box.min.x, box.max.x);
  std::uniform_real_distribution<double> uy(box.min.y, box.max.y);
  std::uniform_real_distribution<double> uth(-M_PI, M_PI);
  for (int attempt = 0; attempt < 10000; ++attempt)
  {
    const geom::Point2 p{ux(rng), uy(rng)};
    if (admissible(p))
    {
      double th = uth(rng);
      if (th == -M_PI)
        th = M_PI;
      return {p.x, p.y, th, 0.0};
    }
  }

  const geom::Point2 c = area.centroid();
  if (admissible(c))
    return {c.x, c.y, 0.0, 0.0};
  throw std::runtime_error("could not place the agent: start area too small");
}

/// Run seed derived from the scenario seed and the run index (splitmix64).
inline std::uint64_t run_seed(std::uint64_t seed, std::size_t run)
{
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (run + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

//==============================================================================
namespace detail {

struct FlockController
{
  std::vector<std::size_t> members;
  std::vector<std::size_t> modes;  ///< member modes at build time
  std::unique_ptr<MpcProblem> problem;
  std::unique_ptr<InteriorPointSolver<MpcProblem>> solver;
};

} // namespace detail

/// Closed-loop receding-horizon simulation of one run.
inline RunRecord run_once(const SimConfig& config, std::uint64_t seed)
{
  config.validate();
  using Clock = std::chrono::steady_clock;
  const SemanticMap& map = *config.map;
  const MpcParams& params = config.params;
  const std::size_t n = config.agents.size();
  const double period = params.control_period();
  const double h = period / static_cast<double>(config.substeps);
  const SolverOptions options = config.solver.value_or(solver_options(params));

  RunRecord rec;
  rec.seed = seed;
  rec.mode = config.mode;
  rec.trajectories.resize(n);
  rec.completion_steps.resize(n);

  std::vector<AgentTask> tasks;
  for (const auto& a : config.agents)
  {
    tasks.push_back({a.id, a.route, 0, a.shape, a.limits});
    rec.agent_ids.push_back(a.id);
  }

  std::mt19937_64 rng(seed);
  std::vector<AgentState> states;
  for (std::size_t i = 0; i < n; ++i)
  {
    const auto& a = config.agents[i];
    if (a.start)
      states.push_back(*a.start);
    else
      states.push_back(sample_start_pose(map.node(a.route.front()).polygon,
        a.shape, states, rng));
  }

  std::vector<const MapNode*> boundaries;
  for (const auto& node : map.nodes())
  {
    if (node.kind == NodeKind::Boundary)
      boundaries.push_back(&node);
  }

  for (std::size_t i = 0; i < n; ++i)
  {
    if (tasks[i].completed())
      rec.completion_steps[i] = 0;
  }

  std::vector<std::optional<AgentSolution>> previous(n);
  std::vector<std::size_t> limit_streak(n, 0);
  std::vector<detail::FlockController> flocks;
  bool reconfigure = true;
  const double shift = period / params.dt;

  auto all_done = [&]
  {
    return std::all_of(tasks.begin(), tasks.end(),
      [](const AgentTask& t) { return t.completed(); });
  };

  auto sample = [&](std::size_t step)
  {
    for (std::size_t i = 0; i < n; ++i)
      rec.trajectories[i].push_back({step, states[i], tasks[i].mode});
  };

  std::size_t step = 0;
  for (; step < config.max_steps; ++step)
  {
    sample(step);
    if (all_done())
      break;

    StepTiming timing;

    // (1) Configuration
    if (reconfigure)
    {
      const auto t0 = Clock::now();
      const FlockSet set = flocks_for_mode(tasks, config.mode,
        params.agent_horizon);
      std::vector<detail::FlockController> next;
      for (const auto& members : set.flocks)
      {
        std::vector<std::size_t> modes;
        for (const std::size_t i : members)
          modes.push_back(tasks[i].mode);

        auto same = std::find_if(flocks.begin(), flocks.end(),
          [&](const detail::FlockController& f)
          {
            return f.members == members && f.modes == modes && f.problem;
          });
        if (same != flocks.end())
        {
          next.push_back(std::move(*same));
          continue;
        }

        detail::FlockController fc;
        fc.members = members;
        fc.modes = modes;
        fc.problem = std::make_unique<MpcProblem>(
          build_problem(members, tasks, states, map, params));
        fc.solver = std::make_unique<InteriorPointSolver<MpcProblem>>(
          *fc.problem, options);
        next.push_back(std::move(fc));
      }
      flocks = std::move(next);
      timing.config = std::chrono::duration<double>(Clock::now() - t0).count();
      reconfigure = false;
    }

    // (2) Solve every flock
    std::vector<ControlInput> inputs(n);
    std::vector<std::size_t> census;
    std::vector<SolveStatus> statuses;
    std::vector<std::size_t> iterations;
    bool infeasible = false;
    std::string infeasible_detail;

    for (auto& fc : flocks)
    {
      MpcProblem& prob = *fc.problem;
      std::vector<const AgentSolution*> prev;
      for (std::size_t k = 0; k < fc.members.size(); ++k)
      {
        const std::size_t i = fc.members[k];
        prob.set_initial_state(k, states[i]);
        const auto& agent = prob.agents()[k];
        std::vector<geom::Point2> pts;
        if (previous[i])
          pts = previous[i]->positions();
        prob.set_weights(k, update_objective_weights(
          previous[i] ? &pts : nullptr, agent.elements.horizon_areas,
          agent.elements.objectives.size(), map));
        prev.push_back(previous[i] ? &*previous[i] : nullptr);
      }

      const std::vector<double> x0 = warm_start(prob, prev, shift);
      const SolveOutcome out = fc.solver->solve(x0);
      if (config.on_solve)
        config.on_solve(prob, out);
      timing.mpc = std::max(timing.mpc, out.wall_time);
      census.push_back(fc.members.size());
      statuses.push_back(out.status);
      iterations.push_back(out.iterations);

      for (std::size_t k = 0; k < fc.members.size(); ++k)
      {
        const std::size_t i = fc.members[k];
        AgentSolution sol = prob.extract(k, out.x);
        inputs[i] = sol.inputs.front();
        previous[i] = std::move(sol);

        if (out.status == SolveStatus::IterationLimit)
          ++limit_streak[i];
        else
          limit_streak[i] = 0;
        if (out.status == SolveStatus::Infeasible)
        {
          infeasible = true;
          infeasible_detail = "solver reported infeasibility for agent '"
            + tasks[i].agent_id + "'";
        }
        else if (limit_streak[i] >= 2)
        {
          infeasible = true;
          infeasible_detail = "iteration limit on two consecutive steps for "
            "agent '" + tasks[i].agent_id + "'";
        }
      }
    }
    rec.flock_census.push_back(std::move(census));
    rec.solve_status.push_back(std::move(statuses));
    rec.solve_iterations.push_back(std::move(iterations));
    rec.timing.push_back(timing);

    if (infeasible)
    {
      rec.failure = FailureKind::Infeasible;
      rec.failure_detail = infeasible_detail;
      ++step;
      break;
    }

    // (3)-(4) Apply the first inputs and check for collisions.
    bool collided = false;
    for (std::size_t i = 0; i < n; ++i)
    {
      const auto& lim = tasks[i].limits;
      inputs[i].a = std::clamp(inputs[i].a, lim.a_min, lim.a_max);
      inputs[i].omega = std::clamp(inputs[i].omega, lim.omega_min,
        lim.omega_max);
    }
    for (std::size_t s = 0; s < config.substeps && !collided; ++s)
    {
      for (std::size_t i = 0; i < n; ++i)
      {
        states[i] = dynamics_step(states[i], inputs[i], h);
        states[i].v = std::clamp(states[i].v, tasks[i].limits.v_min,
          tasks[i].limits.v_max);
      }

      auto report = [&](std::size_t i, const std::string& other,
        double overlap)
      {
        const bool minor = overlap < config.minor_overlap;
        rec.collisions.push_back({step, s + 1, tasks[i].agent_id, other,
          overlap, minor});
        if (minor)
          rec.minor_collision = true;
        else
          collided = true;
      };

      for (std::size_t i = 0; i < n; ++i)
      {
        const geom::Point2 p = states[i].position();
        for (const MapNode* b : boundaries)
        {
          const double d = geom::point_polygon_distance(p, b->polygon);
          if (d < tasks[i].shape.r_v)
            report(i, b->id, tasks[i].shape.r_v - d);
        }
        for (std::size_t j = i + 1; j < n; ++j)
        {
          const double d = geom::norm(p - states[j].position());
          const double r = tasks[i].shape.r_v + tasks[j].shape.r_v;
          if (d < r)
            report(i, tasks[j].agent_id, r - d);
        }
      }
    }

    // (5) Events
    for (std::size_t i = 0; i < n; ++i)
    {
      while (auto m = check_event(tasks[i], states[i].position(), map))
      {
        tasks[i].mode = *m;
        rec.mode_changes.push_back({step + 1, tasks[i].agent_id, *m});
        reconfigure = true;
        if (tasks[i].completed())
          rec.completion_steps[i] = step + 1;
      }
    }

    if (collided)
    {
      rec.failure = FailureKind::Collision;
      rec.failure_detail = "collision between '" + rec.collisions.back().agent
        + "' and '" + rec.collisions.back().other + "'";
      ++step;
      break;
    }
  }

  rec.steps = step;
  if (rec.failure == FailureKind::None)
  {
    if (all_done())
    {
      std::size_t last = 0;
      for (const auto& c : rec.completion_steps)
        last = std::max(last, *c);
      rec.completion_step = last;
    }
    else
    {
      rec.failure = FailureKind::Infeasible;
      rec.failure_detail = "step limit reached before completion";
    }
  }
  if (step >= config.max_steps || rec.failure != FailureKind::None)
    sample(step);

  return rec;
}

//==============================================================================
struct Summary
{
  std::size_t count = 0;
  double min = 0.0;
  double avg = 0.0;
  double max = 0.0;

  bool empty() const { return count == 0; }

  static Summary of(const std::vector<double>& v)
  {
    Summary s;
    if (v.empty())
      return s;
    s.count = v.size();
    s.min = *std::min_element(v.begin(), v.end());
    s.max = *std::max_element(v.begin(), v.end());
    double sum = 0.0;
    for (double x : v)
      sum += x;
    s.avg = sum / static_cast<double>(v.size());
    return s;
  }
};

struct ScenarioStats
{
  std::size_t runs = 0;
  Summary completion_steps;   ///< successful runs
  Summary mpc_time;           ///< per step [s], successful runs
  Summary config_time;        ///< per reconfiguration [s], successful runs
  Summary mpc_time_all;       ///< per step [s], every run
  Summary config_time_all;    ///< per reconfiguration [s], every run
  std::size_t succeeded = 0;
  std::size_t infeasible_runs = 0;
  std::size_t collision_runs = 0;
  std::size_t minor_collision_runs = 0;
  double avg_flock_count = 0.0;
  double avg_flock_size = 0.0;
};

/// Aggregates run records. Failed runs (including minor collisions) are
/// excluded from the time statistics; the *_all summaries keep every step.
inline ScenarioStats aggregate(const std::vector<RunRecord>& records)
{
  ScenarioStats st;
  st.runs = records.size();
  std::vector<double> completion, mpc, conf, mpc_all, conf_all;
  double flock_count_sum = 0.0, flock_size_sum = 0.0;
  std::size_t census_steps = 0;

  for (const auto& r : records)
  {
    const bool ok = r.succeeded();
    if (ok)
    {
      ++st.succeeded;
      completion.push_back(static_cast<double>(*r.completion_step));
    }
    if (r.failure == FailureKind::Infeasible) ++st.infeasible_runs;
    if (r.failure == FailureKind::Collision) ++st.collision_runs;
    if (r.minor_collision && r.failure != FailureKind::Collision)
      ++st.minor_collision_runs;

    for (const auto& t : r.timing)
    {
      mpc_all.push_back(t.mpc);
      if (t.config) conf_all.push_back(*t.config);
      if (ok)
      {
        mpc.push_back(t.mpc);
        if (t.config) conf.push_back(*t.config);
      }
    }
    for (const auto& c : r.flock_census)
    {
      if (c.empty())
        continue;
      std::size_t agents = 0;
      for (auto s : c)
        agents += s;
      flock_count_sum += static_cast<double>(c.size());
      flock_size_sum += static_cast<double>(agents)
        / static_cast<double>(c.size());
      ++census_steps;
    }
  }

  st.completion_steps = Summary::of(completion);
  st.mpc_time = Summary::of(mpc);
  st.config_time = Summary::of(conf);
  st.mpc_time_all = Summary::of(mpc_all);
  st.config_time_all = Summary::of(conf_all);
  if (census_steps > 0)
  {
    st.avg_flock_count = flock_count_sum / static_cast<double>(census_steps);
    st.avg_flock_size = flock_size_sum / static_cast<double>(census_steps);
  }
  return st;
}

/// Executes `runs` runs with seeds derived from the configuration seed.
inline std::vector<RunRecord> run_all(const SimConfig& config, std::size_t runs)
{
  if (runs < 1)
    throw std::invalid_argument("runs must be at least 1");
  std::vector<RunRecord> out;
  out.reserve(runs);
  for (std::size_t r = 0; r < runs; ++r)
    out.push_back(run_once(config, run_seed(config.seed, r)));
  return out;
}

/// Same records as the sequential overload, computed by `jobs` worker
/// threads. Each run owns its solver state and rng stream.
inline std::vector<RunRecord> run_all(const SimConfig& config,
  std::size_t runs, std::size_t jobs)
{
  if (runs < 1)
    throw std::invalid_argument("runs must be at least 1");
  jobs = std::clamp<std::size_t>(jobs, 1, runs);
  if (jobs == 1)
    return run_all(config, runs);

  std::vector<RunRecord> out(runs);
  std::vector<std::exception_ptr> errors(runs);
  std::atomic<std::size_t> next{0};
  auto worker = [&]()
  {
    for (std::size_t r = next++; r < runs; r = next++)
    {
      try
      {
        out[r] = run_once(config, run_seed(config.seed, r));
      }
      catch (...)
      {
        errors[r] = std::current_exception();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < jobs; ++t)
      pool.emplace_back(worker);
  }
  for (const auto& e : errors)
  {
    if (e)
      std::rethrow_exception(e);
  }
  return out;
}

inline ScenarioStats run_scenario(const SimConfig& config, std::size_t runs)
{
  return aggregate(run_all(config, runs));
}

//==============================================================================
// Serialization
//==============================================================================
inline nlohmann::json summary_to_json(const Summary& s)
{
  if (s.empty())
    return {{"count", 0}, {"min", nullptr}, {"avg", nullptr}, {"max", nullptr}};
  return {{"count", s.count}, {"min", s.min}, {"avg", s.avg}, {"max", s.max}};
}

inline Summary summary_from_json(const nlohmann::json& j)
{
  Summary s;
  s.count = j.at("count").get<std::size_t>();
  if (s.count > 0)
  {
    s.min = j.at("min").get<double>();
    s.avg = j.at("avg").get<double>();
    s.max = j.at("max").get<double>();
  }
  return s;
}

inline nlohmann::json stats_to_json(const ScenarioStats& s)
{
  return {
    {"runs", s.runs},
    {"succeeded", s.succeeded},
    {"completion_steps", summary_to_json(s.completion_steps)},
    {"mpc_time_s", summary_to_json(s.mpc_time)},
    {"config_time_s", summary_to_json(s.config_time)},
    {"mpc_time_all_s", summary_to_json(s.mpc_time_all)},
    {"config_time_all_s", summary_to_json(s.config_time_all)},
    {"infeasible_runs", s.infeasible_runs},
    {"collision_runs", s.collision_runs},
    {"minor_collision_runs", s.minor_collision_runs},
    {"avg_flock_count", s.avg_flock_count},
    {"avg_flock_size", s.avg_flock_size}};
}

inline nlohmann::json state_to_json(const AgentState& s)
{
  return nlohmann::json::array({s.x, s.y, s.theta, s.v});
}

inline AgentState state_from_json(const nlohmann::json& j)
{
  if (!j.is_array() || j.size() != 4)
    throw ParseError("state must be [x, y, theta, v]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
    j[3].get<double>()};
}

/// Record as JSON. Wall-clock measurements live under "timing" only.
inline nlohmann::json record_to_json(const RunRecord& r)
{
  using nlohmann::json;
  json j;
  j["seed"] = r.seed;
  j["mode"] = to_string(r.mode);
  j["agent_ids"] = r.agent_ids;

  json traj = json::object();
  for (std::size_t i = 0; i < r.agent_ids.size(); ++i)
  {
    json samples = json::array();
    if (i < r.trajectories.size())
    {
      for (const auto& s : r.trajectories[i])
        samples.push_back({{"step", s.step},
          {"state", state_to_json(s.state)}, {"mode", s.mode}});
    }
    traj[r.agent_ids[i]] = samples;
  }
  j["trajectories"] = traj;

  json modes = json::array();
  for (const auto& m : r.mode_changes)
    modes.push_back({{"step", m.step}, {"agent", m.agent}, {"mode", m.mode}});
  j["mode_changes"] = modes;

  json comp = json::object();
  for (std::size_t i = 0; i < r.agent_ids.size(); ++i)
  {
    const bool done = i < r.completion_steps.size() && r.completion_steps[i];
    comp[r.agent_ids[i]] = done ? json(*r.completion_steps[i])
      : json(nullptr);
  }
  j["completion_steps"] = comp;
  j["completion_step"] = r.completion_step ? json(*r.completion_step)
    : json(nullptr);
  j["failure"] = to_string(r.failure);
  j["failure_detail"] = r.failure_detail;
  j["minor_collision"] = r.minor_collision;

  json col = json::array();
  for (const auto& c : r.collisions)
    col.push_back({{"step", c.step}, {"substep", c.substep},
      {"agent", c.agent}, {"other", c.other}, {"overlap", c.overlap},
      {"minor", c.minor}});
  j["collisions"] = col;
  j["flock_census"] = r.flock_census;

  json status = json::array();
  for (const auto& s : r.solve_status)
  {
    json row = json::array();
    for (auto v : s)
      row.push_back(to_string(v));
    status.push_back(row);
  }
  j["solve_status"] = status;
  j["solve_iterations"] = r.solve_iterations;
  j["steps"] = r.steps;

  json timing = json::array();
  for (const auto& t : r.timing)
    timing.push_back({{"mpc_s", t.mpc},
      {"config_s", t.config ? json(*t.config) : json(nullptr)}});
  j["timing"] = timing;
  return j;
}

inline RunRecord record_from_json(const nlohmann::json& j)
{
  RunRecord r;
  r.seed = j.at("seed").get<std::uint64_t>();
  const auto mode = cooperation_mode_from_string(j.at("mode").get<std::string>());
  if (!mode)
    throw ParseError("record: unknown cooperation mode");
  r.mode = *mode;
  r.agent_ids = j.at("agent_ids").get<std::vector<std::string>>();
  const std::size_t n = r.agent_ids.size();
  r.trajectories.resize(n);
  r.completion_steps.resize(n);
  for (std::size_t i = 0; i < n; ++i)
  {
    for (const auto& s : j.at("trajectories").at(r.agent_ids[i]))
    {
      r.trajectories[i].push_back({s.at("step").get<std::size_t>(),
        state_from_json(s.at("state")), s.at("mode").get<std::size_t>()});
    }
    const auto& c = j.at("completion_steps").at(r.agent_ids[i]);
    if (!c.is_null())
      r.completion_steps[i] = c.get<std::size_t>();
  }
  for (const auto& m : j.at("mode_changes"))
    r.mode_changes.push_back({m.at("step").get<std::size_t>(),
      m.at("agent").get<std::string>(), m.at("mode").get<std::size_t>()});
  if (!j.at("completion_step").is_null())
    r.completion_step = j.at("completion_step").get<std::size_t>();
  const auto failure = failure_kind_from_string(
    j.at("failure").get<std::string>());
  if (!failure)
    throw ParseError("record: unknown failure kind");
  r.failure = *failure;
  r.failure_detail = j.at("failure_detail").get<std::string>();
  r.minor_collision = j.at("minor_collision").get<bool>();
  for (const auto& c : j.at("collisions"))
    r.collisions.push_back({c.at("step").get<std::size_t>(),
      c.at("substep").get<std::size_t>(), c.at("agent").get<std::string>(),
      c.at("other").get<std::string>(), c.at("overlap").get<double>(),
      c.at("minor").get<bool>()});
  r.flock_census = j.at("flock_census")
    .get<std::vector<std::vector<std::size_t>>>();
  for (const auto& row : j.at("solve_status"))
  {
    std::vector<SolveStatus> v;
    for (const auto& s : row)
    {
      const std::string name = s.get<std::string>();
      if (name == "optimal") v.push_back(SolveStatus::Optimal);
      else if (name == "iteration_limit") v.push_back(SolveStatus::IterationLimit);
      else if (name == "infeasible") v.push_back(SolveStatus::Infeasible);
      else throw ParseError("record: unknown solve status '" + name + "'");
    }
    r.solve_status.push_back(std::move(v));
  }
  r.solve_iterations = j.at("solve_iterations")
    .get<std::vector<std::vector<std::size_t>>>();
  r.steps = j.at("steps").get<std::size_t>();
  for (const auto& t : j.at("timing"))
  {
    StepTiming st;
    st.mpc = t.at("mpc_s").get<double>();
    if (!t.at("config_s").is_null())
      st.config = t.at("config_s").get<double>();
    r.timing.push_back(st);
  }
  return r;
}

/// Trajectory CSV: step, agent_id, x, y, theta, v, mode.
inline std::string trajectory_csv(const RunRecord& r)
{
  std::ostringstream out;
  out << "step,agent_id,x,y,theta,v,mode\n";
  char buf[256];
  for (std::size_t i = 0; i < r.agent_ids.size() && i < r.trajectories.size();
       ++i)
  {
    for (const auto& s : r.trajectories[i])
    {
      std::snprintf(buf, sizeof(buf), "%zu,%s,%.17g,%.17g,%.17g,%.17g,%zu\n",
        s.step, r.agent_ids[i].c_str(), s.state.x, s.state.y, s.state.theta,
        s.state.v, s.mode);
      out << buf;
    }
  }
  return out.str();
}

} // namespace flockmpc

#endif // FLOCKMPC__SIM_HPP
