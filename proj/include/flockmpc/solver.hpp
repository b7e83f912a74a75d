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

#ifndef FLOCKMPC__SOLVER_HPP
#define FLOCKMPC__SOLVER_HPP

#include <flockmpc/mpc.hpp>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstdio>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace flockmpc {

//==============================================================================
/// Smooth nonlinear program  min f(x)  s.t.  gl <= g(x) <= gu,  xl <= x <= xu
/// with sparse first and second derivatives. Hessian entries are the lower
/// triangle (row >= column); duplicate entries are summed.
template <typename P>
concept NonlinearProgram = requires(const P& p, std::span<const double> x,
  std::span<double> out, double s)
{
  { p.num_variables() } -> std::convertible_to<std::size_t>;
  { p.num_constraints() } -> std::convertible_to<std::size_t>;
  p.bounds(out, out, out, out);
  { p.objective(x) } -> std::convertible_to<double>;
  p.gradient(x, out);
  p.constraints(x, out);
  p.jacobian_structure();
  p.jacobian_values(x, out);
  p.hessian_structure();
  p.hessian_values(x, s, x, out);
};

/// Optional hook: nonnegative per-variable proximal weights added to the
/// Newton matrix only. Intended for variables whose optimal value is not
/// unique, such as separating planes of inactive constraints.
template <typename P>
concept HasProximalWeights = requires(const P& p, std::span<double> out)
{
  p.proximal_weights(out);
};

enum class SolveStatus { Optimal, IterationLimit, Infeasible };

inline const char* to_string(SolveStatus s)
{
  switch (s)
  {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::IterationLimit: return "iteration_limit";
    case SolveStatus::Infeasible: return "infeasible";
  }
  return "?";
}

struct SolverOptions
{
  double tolerance = 1e-4;
  std::size_t max_iterations = 150;
  double max_wall_time = 0.0;  ///< seconds, 0 disables
  double mu_init = 0.1;
  double bound_push = 1e-2;
  double infeasibility_threshold = 1e-2;
  /// Consecutive restoration phases without progress before the problem is
  /// declared locally infeasible.
  std::size_t failed_restorations = 2;
  bool verbose = false;  ///< per-iteration log on stderr
};

inline SolverOptions solver_options(const MpcParams& p)
{
  SolverOptions o;
  o.tolerance = p.tolerance;
  o.max_iterations = p.max_iterations;
  o.max_wall_time = p.max_wall_time;
  return o;
}

/// Primal-dual iterate, usable to restart a solve exactly where another ended.
struct PrimalDual
{
  std::vector<double> x;        ///< problem variables
  std::vector<double> y;        ///< constraint multipliers
  std::vector<double> z_lower;  ///< bound multipliers of x and row slacks
  std::vector<double> z_upper;
  double mu = 0.0;
};

struct SolveOutcome
{
  SolveStatus status = SolveStatus::IterationLimit;
  std::vector<double> x;
  double objective = 0.0;
  double max_violation = 0.0;  ///< of g and the variable bounds
  double stationarity = 0.0;   ///< scaled Lagrangian gradient norm
  std::size_t iterations = 0;
  double wall_time = 0.0;      ///< seconds
  PrimalDual final_iterate;
};

/// Largest violation of the constraint rows and the variable bounds.
template <NonlinearProgram P>
double constraint_violation(const P& p, std::span<const double> x)
{
  const std::size_t n = p.num_variables();
  const std::size_t m = p.num_constraints();
  std::vector<double> xl(n), xu(n), gl(m), gu(m), g(m);
  p.bounds(xl, xu, gl, gu);
  p.constraints(x, g);
  double v = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    v = std::max({v, xl[i] - x[i], x[i] - xu[i]});
  for (std::size_t r = 0; r < m; ++r)
    v = std::max({v, gl[r] - g[r], g[r] - gu[r]});
  return v;
}

//==============================================================================
/// Primal-dual interior point method with a filter line search.
///
/// Inequality rows receive slack variables s so that the iterate is
/// w = (x, s) subject to c(w) = 0 and bounds on w. Each iteration solves the
/// symmetric quasi-definite system
///
///   [ H + Sigma + dw I    J'   ] [ dw ]     [ grad phi + J'y ]
///   [       J          -dc I   ] [ dy ] = - [      c         ]
///
/// with a sparse LDL' factorization whose inertia steers the regularization.
///
/// Construction performs the symbolic analysis once; solve() may then be
/// called repeatedly while the problem keeps its sparsity structure.
template <NonlinearProgram P>
class InteriorPointSolver
{
public:
  using Vec = Eigen::VectorXd;
  using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

  InteriorPointSolver(const P& problem, const SolverOptions& options)
  : _p(problem),
    _o(options)
  {
    setup();
  }

  const SolverOptions& options() const { return _o; }
  void set_options(const SolverOptions& o) { _o = o; }

  /// `duals` optionally restarts from a previous primal-dual iterate (its x is
  /// ignored in favor of x0).
  SolveOutcome solve(std::span<const double> x0,
    const PrimalDual* duals = nullptr)
  {
    using Clock = std::chrono::steady_clock;
    const auto t0 = Clock::now();
    SolveOutcome out;

    if (x0.size() != _n)
      throw std::invalid_argument("initial point has dimension "
        + std::to_string(x0.size()) + ", problem has "
        + std::to_string(_n));

    initialize(x0, duals);

    std::size_t iter = 0;
    SolveStatus status = SolveStatus::IterationLimit;

    while (true)
    {
      evaluate(_w);

      // Barrier update: decrease mu while the barrier problem is solved well.
      for (int guard = 0; guard < 8; ++guard)
      {
        if (_mu <= _o.tolerance / 10.0
          || error(_mu) > 10.0 * _mu)
          break;
        _mu = std::max(_o.tolerance / 10.0,
          std::min(0.2 * _mu, std::pow(_mu, 1.5)));
        _tau = std::max(0.99, 1.0 - _mu);
      }

      const double e0 = error(0.0);
      if (e0 <= _o.tolerance)
      {
        status = SolveStatus::Optimal;
        break;
      }

      // Infeasibility: restoration repeatedly fails to reduce a violation
      // above the threshold.
      const double theta = _c.lpNorm<Eigen::Infinity>();
      if (_o.verbose)
      {
        std::fprintf(stderr, "%4zu mu=%.2e E0=%.3e (stat %.1e compl %.1e) "
          "theta=%.3e f=%.6e dw=%.1e alpha=%.2e/%.2e restore=%d\n", iter, _mu,
          e0, _last_stationarity, _last_complementarity, theta,
          _p.objective(xs(_w)), _delta_w, _last_alpha, _last_alpha_max,
          _last_restore);
      }
      if (theta > _o.infeasibility_threshold
        && _restore_failures >= _o.failed_restorations)
      {
        status = SolveStatus::Infeasible;
        break;
      }

      if (iter >= _o.max_iterations)
        break;
      if (_o.max_wall_time > 0.0
        && std::chrono::duration<double>(Clock::now() - t0).count()
        > _o.max_wall_time)
        break;

      ++iter;
      step();
    }

    out.status = status;
    out.iterations = iter;
    out.x.assign(_w.data(), _w.data() + _n);
    out.objective = _p.objective(out.x);
    out.max_violation = constraint_violation(_p, out.x);
    out.stationarity = _last_stationarity;
    out.final_iterate.x = out.x;
    out.final_iterate.y.resize(_m);
    for (std::size_t r = 0; r < _m; ++r)
      out.final_iterate.y[r] = _y[r] / _fs;
    out.final_iterate.z_lower.resize(_N);
    out.final_iterate.z_upper.resize(_N);
    for (std::size_t i = 0; i < _N; ++i)
    {
      out.final_iterate.z_lower[i] = _zl[i] / _fs;
      out.final_iterate.z_upper[i] = _zu[i] / _fs;
    }
    out.final_iterate.mu = _mu;
    out.wall_time = std::chrono::duration<double>(Clock::now() - t0).count();
    return out;
  }

private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  //----------------------------------------------------------------------------
  void setup()
  {
    _n = _p.num_variables();
    _m = _p.num_constraints();

    std::vector<double> xl(_n), xu(_n), gl(_m), gu(_m);
    _p.bounds(xl, xu, gl, gu);
    _gl = gl;

    _slack_of_row.assign(_m, -1);
    std::vector<std::size_t> ineq;
    for (std::size_t r = 0; r < _m; ++r)
    {
      if (gl[r] != gu[r])
      {
        _slack_of_row[r] = static_cast<long>(ineq.size());
        ineq.push_back(r);
      }
    }
    _ni = ineq.size();
    _N = _n + _ni;

    _lo = Vec::Constant(_N, -kInf);
    _up = Vec::Constant(_N, kInf);
    for (std::size_t i = 0; i < _n; ++i)
    {
      _lo[i] = xl[i];
      _up[i] = xu[i];
    }
    for (std::size_t s = 0; s < _ni; ++s)
    {
      _lo[_n + s] = gl[ineq[s]];
      _up[_n + s] = gu[ineq[s]];
    }
    _has_lo.resize(_N);
    _has_up.resize(_N);
    for (std::size_t i = 0; i < _N; ++i)
    {
      _has_lo[i] = std::isfinite(_lo[i]);
      _has_up[i] = std::isfinite(_up[i]);
    }

    // Jacobian of c(w): problem entries plus -1 on each row slack.
    const auto jac = _p.jacobian_structure();
    _jnz = jac.size();
    _jrow.reserve(_jnz + _ni);
    _jcol.reserve(_jnz + _ni);
    for (const auto& [r, c] : jac)
    {
      _jrow.push_back(static_cast<int>(r));
      _jcol.push_back(static_cast<int>(c));
    }
    for (std::size_t r = 0; r < _m; ++r)
    {
      if (_slack_of_row[r] >= 0)
      {
        _jrow.push_back(static_cast<int>(r));
        _jcol.push_back(static_cast<int>(_n + _slack_of_row[r]));
      }
    }
    _jval.assign(_jrow.size(), 0.0);
    for (std::size_t e = _jnz; e < _jval.size(); ++e)
      _jval[e] = -1.0;

    const auto hess = _p.hessian_structure();
    _hnz = hess.size();
    _hval.assign(_hnz, 0.0);

    // Lower-triangular KKT pattern.
    const int K = static_cast<int>(_N + _m);
    std::vector<Eigen::Triplet<double, int>> trip;
    trip.reserve(K + _hnz + _jrow.size());
    for (int i = 0; i < K; ++i)
      trip.emplace_back(i, i, 0.0);
    for (const auto& [r, c] : hess)
      trip.emplace_back(static_cast<int>(r), static_cast<int>(c), 0.0);
    for (std::size_t e = 0; e < _jrow.size(); ++e)
      trip.emplace_back(static_cast<int>(_N) + _jrow[e], _jcol[e], 0.0);
    _K.resize(K, K);
    _K.setFromTriplets(trip.begin(), trip.end());
    _K.makeCompressed();

    auto position = [this](int r, int c)
    {
      const int* begin = _K.innerIndexPtr() + _K.outerIndexPtr()[c];
      const int* end = _K.innerIndexPtr() + _K.outerIndexPtr()[c + 1];
      const int* it = std::lower_bound(begin, end, r);
      return static_cast<int>(it - _K.innerIndexPtr());
    };
    _diag_pos.resize(K);
    for (int i = 0; i < K; ++i)
      _diag_pos[i] = position(i, i);
    _hess_pos.resize(_hnz);
    for (std::size_t e = 0; e < _hnz; ++e)
    {
      _hess_pos[e] = position(static_cast<int>(hess[e].first),
        static_cast<int>(hess[e].second));
    }
    _jac_pos.resize(_jrow.size());
    for (std::size_t e = 0; e < _jrow.size(); ++e)
      _jac_pos[e] = position(static_cast<int>(_N) + _jrow[e], _jcol[e]);

    _ldlt.analyzePattern(_K);

    _gx.resize(_n);
    _gvals.resize(_m);

    _prox = Vec::Zero(_N);
    if constexpr (HasProximalWeights<P>)
    {
      std::vector<double> w(_n, 0.0);
      _p.proximal_weights(w);
      for (std::size_t i = 0; i < _n; ++i)
        _prox[i] = std::max(0.0, w[i]);
    }
  }

  //----------------------------------------------------------------------------
  void initialize(std::span<const double> x0, const PrimalDual* duals)
  {
    _restore_failures = 0;
    _w = Vec::Zero(_N);
    for (std::size_t i = 0; i < _n; ++i)
      _w[i] = x0[i];

    // Gradient-based objective scaling, fixed on the first solve.
    if (!(_fs > 0.0))
    {
      _p.gradient(x0, _gx);
      double gmax = 0.0;
      for (double g : _gx)
        gmax = std::max(gmax, std::abs(g));
      _fs = gmax > 100.0 ? 100.0 / gmax : 1.0;
    }

    std::vector<double> g(_m);
    _p.constraints(std::span<const double>(_w.data(), _n), g);
    for (std::size_t r = 0; r < _m; ++r)
    {
      if (_slack_of_row[r] >= 0)
        _w[_n + _slack_of_row[r]] = g[r];
    }

    // Push strictly inside the bounds; a restart from a previous iterate is
    // already interior and only needs a guard.
    const bool restart = duals && duals->x.size() == _n
      && duals->y.size() == _m && duals->z_lower.size() == _N
      && duals->z_upper.size() == _N;
    const double k = restart ? 1e-12 : _o.bound_push;
    for (std::size_t i = 0; i < _N; ++i)
    {
      const double l = _lo[i], u = _up[i];
      if (_has_lo[i] && _has_up[i])
      {
        const double pl = std::min(k * std::max(1.0, std::abs(l)),
          k * (u - l));
        const double pu = std::min(k * std::max(1.0, std::abs(u)),
          k * (u - l));
        _w[i] = std::clamp(_w[i], l + pl, u - pu);
      }
      else if (_has_lo[i])
        _w[i] = std::max(_w[i], l + k * std::max(1.0, std::abs(l)));
      else if (_has_up[i])
        _w[i] = std::min(_w[i], u - k * std::max(1.0, std::abs(u)));
    }

    _y = Vec::Zero(_m);
    _zl = Vec::Zero(_N);
    _zu = Vec::Zero(_N);
    for (std::size_t i = 0; i < _N; ++i)
    {
      if (_has_lo[i]) _zl[i] = 1.0;
      if (_has_up[i]) _zu[i] = 1.0;
    }
    _mu = _o.mu_init;

    if (restart)
    {
      for (std::size_t r = 0; r < _m; ++r)
        _y[r] = _fs * duals->y[r];
      for (std::size_t i = 0; i < _N; ++i)
      {
        if (_has_lo[i]) _zl[i] = std::max(_fs * duals->z_lower[i], 1e-12);
        if (_has_up[i]) _zu[i] = std::max(_fs * duals->z_upper[i], 1e-12);
      }
      if (duals->mu > 0.0)
        _mu = duals->mu;
    }
    _tau = std::max(0.99, 1.0 - _mu);
    _delta_w_last = 0.0;

    Vec c;
    constraint_residual(_w, c);
    const double theta0 = c.lpNorm<1>();
    _theta_max = 1e4 * std::max(1.0, theta0);
    _theta_min = 1e-4 * std::max(1.0, theta0);
    _filter.clear();
    _filter_mu = _mu;
  }

  //----------------------------------------------------------------------------
  // Evaluations at an arbitrary point w.
  std::span<const double> xs(const Vec& w) const { return {w.data(), _n}; }

  void constraint_residual(const Vec& w, Vec& c)
  {
    _p.constraints(xs(w), _gvals);
    c.resize(_m);
    for (std::size_t r = 0; r < _m; ++r)
    {
      const long s = _slack_of_row[r];
      c[r] = s >= 0 ? _gvals[r] - w[_n + s] : _gvals[r] - _gl[r];
    }
  }

  double barrier_value(const Vec& w, double mu) const
  {
    double phi = _fs * _p.objective(xs(w));
    for (std::size_t i = 0; i < _N; ++i)
    {
      if (_has_lo[i])
      {
        const double d = w[i] - _lo[i];
        if (d <= 0.0) return kInf;
        phi -= mu * std::log(d);
      }
      if (_has_up[i])
      {
        const double d = _up[i] - w[i];
        if (d <= 0.0) return kInf;
        phi -= mu * std::log(d);
      }
    }
    return phi;
  }

  /// Barrier objective at w; theta receives the l1 constraint violation.
  double objective_and_theta(const Vec& w, double& theta)
  {
    const double phi = barrier_value(w, _mu);
    if (!std::isfinite(phi))
    {
      theta = kInf;
      return kInf;
    }
    Vec c;
    constraint_residual(w, c);
    theta = c.lpNorm<1>();
    return phi;
  }

  bool filter_accepts(double theta, double phi) const
  {
    for (const auto& [ft, fp] : _filter)
    {
      if (theta >= ft && phi >= fp)
        return false;
    }
    return true;
  }

  void augment_filter(double theta, double phi)
  {
    const double ft = (1.0 - kGammaTheta) * theta;
    const double fp = phi - kGammaPhi * theta;
    std::erase_if(_filter, [&](const std::pair<double, double>& e)
    {
      return e.first >= ft && e.second >= fp;
    });
    _filter.emplace_back(ft, fp);
  }

  /// Gradient, Jacobian, residual at the current iterate.
  void evaluate(const Vec& w)
  {
    _p.gradient(xs(w), _gx);
    _grad = Vec::Zero(_N);
    for (std::size_t i = 0; i < _n; ++i)
      _grad[i] = _fs * _gx[i];
    _p.jacobian_values(xs(w), std::span<double>(_jval.data(), _jnz));
    constraint_residual(w, _c);
  }

  Vec jt_times(const Vec& y) const
  {
    Vec out = Vec::Zero(_N);
    for (std::size_t e = 0; e < _jrow.size(); ++e)
      out[_jcol[e]] += _jval[e] * y[_jrow[e]];
    return out;
  }

  /// Scaled optimality error of the barrier problem (mu = 0 for the
  /// original problem).
  double error(double mu)
  {
    const Vec lag = _grad + jt_times(_y) - _zl + _zu;
    double zsum = 0.0;
    std::size_t nz = 0;
    for (std::size_t i = 0; i < _N; ++i)
    {
      if (_has_lo[i]) { zsum += std::abs(_zl[i]); ++nz; }
      if (_has_up[i]) { zsum += std::abs(_zu[i]); ++nz; }
    }
    const double smax = 100.0;
    const double sd = std::max(smax,
      (_y.lpNorm<1>() + zsum) / static_cast<double>(std::max<std::size_t>(
        _m + nz, 1))) / smax;
    const double sc = std::max(smax,
      zsum / static_cast<double>(std::max<std::size_t>(nz, 1))) / smax;

    double compl_err = 0.0;
    for (std::size_t i = 0; i < _N; ++i)
    {
      if (_has_lo[i])
        compl_err = std::max(compl_err,
          std::abs((_w[i] - _lo[i]) * _zl[i] - mu));
      if (_has_up[i])
        compl_err = std::max(compl_err,
          std::abs((_up[i] - _w[i]) * _zu[i] - mu));
    }
    const double stat = lag.lpNorm<Eigen::Infinity>() / sd;
    if (mu == 0.0)
    {
      _last_stationarity = stat;
      _last_complementarity = compl_err / sc;
    }
    return std::max({stat, _c.lpNorm<Eigen::Infinity>(), compl_err / sc});
  }

  //----------------------------------------------------------------------------
  /// Fills the KKT values for given regularization. Returns true when the
  /// factorization succeeded with the expected inertia.
  bool factorize(const Vec& sigma, double dw, double dc, bool hessian = true)
  {
    double* val = _K.valuePtr();
    std::fill(val, val + _K.nonZeros(), 0.0);
    if (hessian)
    {
      for (std::size_t e = 0; e < _hnz; ++e)
        val[_hess_pos[e]] += _hval[e];
    }
    for (std::size_t i = 0; i < _N; ++i)
      val[_diag_pos[i]] += sigma[i] + dw + _prox[i];
    for (std::size_t r = 0; r < _m; ++r)
      val[_diag_pos[_N + r]] -= dc;
    for (std::size_t e = 0; e < _jrow.size(); ++e)
      val[_jac_pos[e]] += _jval[e];

    _ldlt.factorize(_K);
    if (_ldlt.info() != Eigen::Success)
      return false;
    const Vec& D = _ldlt.vectorD();
    std::size_t pos = 0, neg = 0;
    for (Eigen::Index i = 0; i < D.size(); ++i)
    {
      if (D[i] > 0.0) ++pos;
      else if (D[i] < 0.0) ++neg;
      else return false;
    }
    return pos == _N && neg == _m;
  }

  /// Regularized factorization with inertia correction: an attempt with the
  /// static regularization first (the factorization does not pivot, so the
  /// matrix must stay quasi-definite), then a geometric search starting from
  /// the last successful regularization.
  bool factorize_with_correction(const Vec& sigma)
  {
    const double dc = 1e-8;
    if (factorize(sigma, kStaticReg, dc))
    {
      _delta_w = 0.0;
      return true;
    }
    double dw = _delta_w_last <= 0.0 ? 1e-4
      : std::max(kStaticReg, _delta_w_last / 3.0);
    const double grow = _delta_w_last <= 0.0 ? 100.0 : 8.0;
    for (int attempt = 0; attempt < 60 && dw <= 1e40; ++attempt)
    {
      if (factorize(sigma, dw, dc))
      {
        _delta_w = dw;
        _delta_w_last = dw;
        return true;
      }
      dw *= grow;
    }
    return false;
  }

  //----------------------------------------------------------------------------
  static double fraction_to_boundary(const Vec& v, const Vec& dv,
    const Vec& lo, const Vec& up, const std::vector<char>& has_lo,
    const std::vector<char>& has_up, double tau)
  {
    double alpha = 1.0;
    for (Eigen::Index i = 0; i < v.size(); ++i)
    {
      if (has_lo[i] && dv[i] < 0.0)
        alpha = std::min(alpha, -tau * (v[i] - lo[i]) / dv[i]);
      if (has_up[i] && dv[i] > 0.0)
        alpha = std::min(alpha, tau * (up[i] - v[i]) / dv[i]);
    }
    return alpha;
  }

  static double multiplier_step(const Vec& z, const Vec& dz,
    const std::vector<char>& has, double tau)
  {
    double alpha = 1.0;
    for (Eigen::Index i = 0; i < z.size(); ++i)
    {
      if (has[i] && dz[i] < 0.0)
        alpha = std::min(alpha, -tau * z[i] / dz[i]);
    }
    return alpha;
  }

  void step()
  {
    // Hessian of the Lagrangian.
    _p.hessian_values(xs(_w), _fs, std::span<const double>(_y.data(), _m),
      _hval);

    Vec sigma = Vec::Zero(_N);
    Vec grad_phi = _grad;
    for (std::size_t i = 0; i < _N; ++i)
    {
      if (_has_lo[i])
      {
        const double d = _w[i] - _lo[i];
        sigma[i] += _zl[i] / d;
        grad_phi[i] -= _mu / d;
      }
      if (_has_up[i])
      {
        const double d = _up[i] - _w[i];
        sigma[i] += _zu[i] / d;
        grad_phi[i] += _mu / d;
      }
    }

    if (!factorize_with_correction(sigma))
    {
      // Nothing sensible left to do; let the outer loop run out.
      return;
    }

    const Vec rd = grad_phi + jt_times(_y);
    Vec rhs(_N + _m);
    rhs.head(_N) = -rd;
    rhs.tail(_m) = -_c;
    const Vec sol = _ldlt.solve(rhs);
    const Vec dw = sol.head(_N);
    const Vec dy = sol.tail(_m);

    // Filter line search on (theta, barrier objective).
    if (_filter_mu != _mu)
    {
      _filter.clear();
      _filter_mu = _mu;
    }
    const double theta = _c.lpNorm<1>();
    const double phi = barrier_value(_w, _mu);
    const double gtd = grad_phi.dot(dw);
    const double noise = 10.0 * std::numeric_limits<double>::epsilon()
      * std::max(1.0, std::abs(phi));

    const double alpha_max = fraction_to_boundary(_w, dw, _lo, _up, _has_lo,
      _has_up, _tau);
    _last_alpha_max = alpha_max;
    double alpha_min = kGammaTheta;
    if (gtd < 0.0)
    {
      alpha_min = std::min({kGammaTheta, kGammaPhi * theta / -gtd,
        kDelta * std::pow(theta, kSTheta) / std::pow(-gtd, kSPhi)});
    }
    alpha_min *= kGammaAlpha;

    // Returns true when (th, ph) is acceptable for the step length alpha;
    // f_type reports whether the Armijo branch decided.
    auto acceptable = [&](double th, double ph, double alpha, bool& f_type)
    {
      f_type = false;
      if (!std::isfinite(ph) || th > _theta_max || !filter_accepts(th, ph))
        return false;
      const bool switching = gtd < 0.0
        && alpha * std::pow(-gtd, kSPhi) > kDelta * std::pow(theta, kSTheta);
      if (theta <= _theta_min && switching)
      {
        f_type = true;
        return ph <= phi + kEtaPhi * alpha * gtd + noise;
      }
      return th <= (1.0 - kGammaTheta) * theta
        || ph <= phi - kGammaPhi * theta + noise;
    };

    double alpha = alpha_max;
    bool accepted = false;
    bool f_type = false;
    Vec step_w = dw;
    Vec step_y = dy;
    double step_alpha = alpha;

    for (int ls = 0; ls < 60 && alpha >= alpha_min; ++ls)
    {
      const Vec trial = _w + alpha * dw;
      double theta_trial = 0.0;
      const double phi_trial = objective_and_theta(trial, theta_trial);
      if (acceptable(theta_trial, phi_trial, alpha, f_type))
      {
        accepted = true;
        step_alpha = alpha;
        break;
      }

      // Second-order corrections on the first rejected trial.
      if (ls == 0 && theta_trial >= theta && std::isfinite(phi_trial))
      {
        Vec c_trial;
        constraint_residual(trial, c_trial);
        Vec c_soc = alpha * _c + c_trial;
        double theta_cur = theta_trial;
        for (int k = 0; k < 4; ++k)
        {
          Vec rhs_soc(_N + _m);
          rhs_soc.head(_N) = -rd;
          rhs_soc.tail(_m) = -c_soc;
          const Vec sol_soc = _ldlt.solve(rhs_soc);
          const Vec dw_soc = sol_soc.head(_N);
          const double a_soc = fraction_to_boundary(_w, dw_soc, _lo, _up,
            _has_lo, _has_up, _tau);
          const Vec point = _w + a_soc * dw_soc;
          double theta_soc = 0.0;
          const double phi_soc = objective_and_theta(point, theta_soc);
          if (acceptable(theta_soc, phi_soc, alpha, f_type))
          {
            accepted = true;
            step_w = dw_soc;
            step_y = sol_soc.tail(_m);
            step_alpha = a_soc;
            break;
          }
          if (!(theta_soc <= kKappaSoc * theta_cur))
            break;
          theta_cur = theta_soc;
          constraint_residual(point, c_trial);
          c_soc = a_soc * c_soc + c_trial;
        }
        if (accepted)
          break;
      }
      alpha *= 0.5;
    }

    if (!accepted)
    {
      augment_filter(theta, phi);
      restore();
      return;
    }
    if (!f_type)
      augment_filter(theta, phi);

    // Bound multiplier steps.
    Vec dzl = Vec::Zero(_N), dzu = Vec::Zero(_N);
    for (std::size_t i = 0; i < _N; ++i)
    {
      if (_has_lo[i])
      {
        const double d = _w[i] - _lo[i];
        dzl[i] = _mu / d - _zl[i] - (_zl[i] / d) * step_w[i];
      }
      if (_has_up[i])
      {
        const double d = _up[i] - _w[i];
        dzu[i] = _mu / d - _zu[i] + (_zu[i] / d) * step_w[i];
      }
    }
    const double alpha_z = std::min(multiplier_step(_zl, dzl, _has_lo, _tau),
      multiplier_step(_zu, dzu, _has_up, _tau));

    _last_alpha = step_alpha;
    _w += step_alpha * step_w;
    _y += step_alpha * step_y;
    _zl += alpha_z * dzl;
    _zu += alpha_z * dzu;
    _last_restore = 0;
    _restore_failures = 0;
    clamp_multipliers();
  }

  /// Feasibility restoration: scaled minimum-norm Newton steps on c(w) = 0
  /// with a backtracking search on the violation, until the filter accepts
  /// the iterate again.
  void restore()
  {
    _last_restore = 1;
    double theta_start = 0.0;
    objective_and_theta(_w, theta_start);
    const double rho = std::max(1e-6, std::sqrt(_mu));

    for (int it = 0; it < 25; ++it)
    {
      if (it > 0)
        evaluate(_w);
      const double theta = _c.lpNorm<1>();
      Vec sigma = Vec::Zero(_N);
      for (std::size_t i = 0; i < _N; ++i)
      {
        if (_has_lo[i]) sigma[i] += _zl[i] / (_w[i] - _lo[i]);
        if (_has_up[i]) sigma[i] += _zu[i] / (_up[i] - _w[i]);
      }
      if (!factorize(sigma, rho, 1e-8, false))
        break;
      Vec rhs = Vec::Zero(_N + _m);
      rhs.tail(_m) = -_c;
      const Vec dw = _ldlt.solve(rhs).head(_N);
      double alpha = fraction_to_boundary(_w, dw, _lo, _up, _has_lo,
        _has_up, _tau);

      bool moved = false;
      for (int ls = 0; ls < 30; ++ls)
      {
        double theta_trial = 0.0;
        objective_and_theta(_w + alpha * dw, theta_trial);
        if (theta_trial <= (1.0 - 1e-4 * alpha) * theta)
        {
          _w += alpha * dw;
          moved = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!moved)
        break;
      clamp_multipliers();

      double theta_new = 0.0;
      const double phi_new = objective_and_theta(_w, theta_new);
      if (theta_new <= 0.9 * theta_start && filter_accepts(theta_new, phi_new))
        break;
    }
    double theta_end = 0.0;
    objective_and_theta(_w, theta_end);
    if (theta_end > 0.99 * theta_start)
      ++_restore_failures;
    else
      _restore_failures = 0;
    _last_alpha = 0.0;
    _delta_w_last = std::max(_delta_w_last, 1e-4);
  }

  /// Keeps the primal-dual Hessian close to the primal one.
  void clamp_multipliers()
  {
    const double ks = 1e10;
    for (std::size_t i = 0; i < _N; ++i)
    {
      if (_has_lo[i])
      {
        const double d = _w[i] - _lo[i];
        _zl[i] = std::clamp(_zl[i], _mu / (ks * d), ks * _mu / d);
      }
      if (_has_up[i])
      {
        const double d = _up[i] - _w[i];
        _zu[i] = std::clamp(_zu[i], _mu / (ks * d), ks * _mu / d);
      }
    }
  }

  //----------------------------------------------------------------------------
  const P& _p;
  SolverOptions _o;

  std::size_t _n = 0, _m = 0, _ni = 0, _N = 0;
  std::vector<long> _slack_of_row;
  std::vector<double> _gl;
  Vec _lo, _up;
  std::vector<char> _has_lo, _has_up;

  std::size_t _jnz = 0;
  std::vector<int> _jrow, _jcol;
  std::vector<double> _jval;
  std::size_t _hnz = 0;
  std::vector<double> _hval;

  SpMat _K;
  std::vector<int> _diag_pos, _hess_pos, _jac_pos;
  Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>> _ldlt;

  std::vector<double> _gx, _gvals;
  Vec _w, _y, _zl, _zu, _grad, _c;
  Vec _prox;
  static constexpr double kStaticReg = 1e-8;
  static constexpr double kGammaTheta = 1e-5;
  static constexpr double kGammaPhi = 1e-8;
  static constexpr double kGammaAlpha = 0.05;
  static constexpr double kDelta = 1.0;
  static constexpr double kSTheta = 1.1;
  static constexpr double kSPhi = 2.3;
  static constexpr double kEtaPhi = 1e-8;
  static constexpr double kKappaSoc = 0.99;

  double _mu = 0.1, _tau = 0.99;
  std::vector<std::pair<double, double>> _filter;
  double _filter_mu = 0.0;
  double _theta_max = kInf, _theta_min = 0.0;
  double _fs = 0.0;  ///< objective scaling factor
  double _delta_w = 0.0, _delta_w_last = 0.0;
  double _last_stationarity = 0.0;
  double _last_complementarity = 0.0;
  double _last_alpha = 0.0;
  double _last_alpha_max = 0.0;
  int _last_restore = 0;
  std::size_t _restore_failures = 0;
};

//==============================================================================
/// One-shot solve from x0.
template <NonlinearProgram P>
SolveOutcome solve(const P& problem, std::span<const double> x0,
  const SolverOptions& options = {}, const PrimalDual* duals = nullptr)
{
  InteriorPointSolver<P> ip(problem, options);
  return ip.solve(x0, duals);
}

inline SolveOutcome solve(const MpcProblem& problem,
  std::span<const double> x0, const MpcParams& params)
{
  return solve(problem, x0, solver_options(params));
}

} // namespace flockmpc

#endif // FLOCKMPC__SOLVER_HPP
