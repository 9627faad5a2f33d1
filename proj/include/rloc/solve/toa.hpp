#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "rloc/channel.hpp"
#include "rloc/error.hpp"
#include "rloc/solve/damped_lsq.hpp"
#include "rloc/solve/options.hpp"

namespace rloc {

namespace detail {

/// Reference-subtraction linearization of range equations: subtracting the
/// first equation removes the quadratic term, leaving 2(a_j - a_0)^T x =
/// |a_j|^2 - |a_0|^2 - (r_j^2 - r_0^2).
inline Point toa_linear_init(const std::vector<Point>& anchors,
                             const std::vector<double>& ranges) {
  const int m = static_cast<int>(anchors.size());
  Eigen::MatrixXd a(m - 1, 2);
  Eigen::VectorXd b(m - 1);
  const Point a0 = anchors[0];
  const double r0 = ranges[0];
  for (int j = 1; j < m; ++j) {
    a(j - 1, 0) = 2.0 * (anchors[j].x - a0.x);
    a(j - 1, 1) = 2.0 * (anchors[j].y - a0.y);
    b(j - 1) = anchors[j].x * anchors[j].x + anchors[j].y * anchors[j].y -
               a0.x * a0.x - a0.y * a0.y -
               (ranges[j] * ranges[j] - r0 * r0);
  }
  const Eigen::Vector2d x = a.colPivHouseholderQr().solve(b);
  return {x(0), x(1)};
}

/// Inverse-range weighted centroid of the anchors; breaks the all-victims-
/// at-the-same-point degeneracy a plain centroid would give.
inline Point weighted_centroid(const std::vector<Point>& anchors,
                               const std::vector<double>& ranges) {
  double wx = 0.0, wy = 0.0, wsum = 0.0;
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    const double w = 1.0 / std::max(ranges[j], kMinRangeM);
    wx += w * anchors[j].x;
    wy += w * anchors[j].y;
    wsum += w;
  }
  return {wx / wsum, wy / wsum};
}

}  // namespace detail

/// Sum of squared range residuals for a single victim at p.
inline double toa_objective(Point p, const std::vector<Point>& anchors,
                            const std::vector<double>& ranges) {
  double f = 0.0;
  for (std::size_t j = 0; j < anchors.size(); ++j) {
    const double e = ranges[j] - distance(p, anchors[j]);
    f += e * e;
  }
  return f;
}

/// Single-victim trilateration: reference-subtraction linear least squares,
/// then Gauss-Newton (Levenberg-damped) refinement of
/// sum_j (r_j - |x - a_j|)^2.
inline SolveResult solve_toa_noncoop(const MeasurementSet& meas,
                                     const std::vector<Point>& rescuers,
                                     const SolverOptions& opts = {}) {
  SolveTimer timer;
  if (meas.modality != Modality::ToaRange)
    throw precondition_error("solve_toa_noncoop: wrong modality");
  if (meas.entries.size() < 3)
    throw precondition_error("underdetermined: need >= 3 ranges");

  std::vector<Point> anchors;
  std::vector<double> ranges;
  for (const Measurement& m : meas.entries) {
    if (m.link.kind != LinkKind::VictimRescuer)
      throw precondition_error("solve_toa_noncoop: victim->rescuer links only");
    anchors.push_back(rescuers.at(static_cast<std::size_t>(m.link.dst)));
    ranges.push_back(m.value);
  }
  if (collinear(anchors))
    throw precondition_error("degenerate geometry: collinear anchors");

  const Point init = !opts.init_positions.empty()
                         ? opts.init_positions.front()
                         : (opts.init == InitStrategy::Algebraic
                                ? detail::toa_linear_init(anchors, ranges)
                                : detail::weighted_centroid(anchors, ranges));

  const int m = static_cast<int>(anchors.size());
  ResidualFn fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r,
                      Eigen::MatrixXd* J) {
    for (int j = 0; j < m; ++j) {
      const double dx = x(0) - anchors[static_cast<std::size_t>(j)].x;
      const double dy = x(1) - anchors[static_cast<std::size_t>(j)].y;
      const double d = std::hypot(dx, dy);
      r(j) = ranges[static_cast<std::size_t>(j)] - d;
      if (J) {
        double ux, uy;
        detail::unit_dir(dx, dy, d, ux, uy);
        (*J)(j, 0) = -ux;
        (*J)(j, 1) = -uy;
      }
    }
  };

  Eigen::VectorXd x0(2);
  x0 << init.x, init.y;
  LsqOutcome out = damped_least_squares(std::move(x0), m, fn, opts);

  SolveResult res;
  res.positions = {{out.x(0), out.x(1)}};
  res.iterations = out.iterations;
  res.objective_trace = std::move(out.trace);
  res.converged = out.converged;
  res.wall_time_s = timer.seconds();
  return res;
}

/// Joint ranging over victim->rescuer and victim->victim links.
/// All 2*n_victims coordinates are refined together by Levenberg-Marquardt;
/// victim-victim terms appear once. Rigidity precondition: every victim has
/// >= 3 links and the stacked Jacobian at the initial iterate has full
/// column rank.
inline SolveResult solve_toa_coop(const MeasurementSet& meas,
                                  const std::vector<Point>& rescuers,
                                  int n_victims,
                                  const SolverOptions& opts = {}) {
  SolveTimer timer;
  if (meas.modality != Modality::ToaRange)
    throw precondition_error("solve_toa_coop: wrong modality");

  std::vector<int> link_count(static_cast<std::size_t>(n_victims), 0);
  for (const Measurement& m : meas.entries) {
    link_count.at(static_cast<std::size_t>(m.link.src))++;
    if (m.link.kind == LinkKind::VictimVictim)
      link_count.at(static_cast<std::size_t>(m.link.dst))++;
  }
  for (int v = 0; v < n_victims; ++v) {
    if (link_count[static_cast<std::size_t>(v)] < 3)
      throw precondition_error(
          "unlocalizable configuration: victim " + std::to_string(v) +
          " has fewer than 3 links");
  }

  // Initial iterate: per-victim inverse-range weighted centroid of its
  // rescuer anchors (plain rescuer centroid when a victim has none).
  Eigen::VectorXd x0(2 * n_victims);
  if (!opts.init_positions.empty() &&
      opts.init_positions.size() != static_cast<std::size_t>(n_victims))
    throw precondition_error("solve_toa_coop: init_positions size mismatch");
  for (int v = 0; v < n_victims; ++v) {
    if (!opts.init_positions.empty()) {
      x0(2 * v) = opts.init_positions[static_cast<std::size_t>(v)].x;
      x0(2 * v + 1) = opts.init_positions[static_cast<std::size_t>(v)].y;
      continue;
    }
    std::vector<Point> anchors;
    std::vector<double> ranges;
    for (const Measurement& m : meas.entries) {
      if (m.link.kind == LinkKind::VictimRescuer && m.link.src == v) {
        anchors.push_back(rescuers.at(static_cast<std::size_t>(m.link.dst)));
        ranges.push_back(m.value);
      }
    }
    Point p;
    if (!anchors.empty()) {
      p = detail::weighted_centroid(anchors, ranges);
    } else {
      double sx = 0.0, sy = 0.0;
      for (const Point& a : rescuers) {
        sx += a.x;
        sy += a.y;
      }
      p = {sx / static_cast<double>(rescuers.size()),
           sy / static_cast<double>(rescuers.size())};
    }
    x0(2 * v) = p.x;
    x0(2 * v + 1) = p.y;
  }

  const int n_res = static_cast<int>(meas.entries.size());
  ResidualFn fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r,
                      Eigen::MatrixXd* J) {
    if (J) J->setZero();
    for (int i = 0; i < n_res; ++i) {
      const Measurement& m = meas.entries[static_cast<std::size_t>(i)];
      const int s = m.link.src;
      const double sx = x(2 * s), sy = x(2 * s + 1);
      double tx, ty;
      int t = -1;
      if (m.link.kind == LinkKind::VictimRescuer) {
        const Point& a = rescuers[static_cast<std::size_t>(m.link.dst)];
        tx = a.x;
        ty = a.y;
      } else {
        t = m.link.dst;
        tx = x(2 * t);
        ty = x(2 * t + 1);
      }
      const double dx = sx - tx, dy = sy - ty;
      const double d = std::hypot(dx, dy);
      r(i) = m.value - d;
      if (J) {
        double ux, uy;
        detail::unit_dir(dx, dy, d, ux, uy);
        (*J)(i, 2 * s) = -ux;
        (*J)(i, 2 * s + 1) = -uy;
        if (t >= 0) {
          (*J)(i, 2 * t) = ux;
          (*J)(i, 2 * t + 1) = uy;
        }
      }
    }
  };

  {
    Eigen::VectorXd r0(n_res);
    Eigen::MatrixXd j0(n_res, 2 * n_victims);
    fn(x0, r0, &j0);
    if (!full_column_rank(j0))
      throw precondition_error(
          "unlocalizable configuration: rank-deficient link topology");
  }

  LsqOutcome out = damped_least_squares(std::move(x0), n_res, fn, opts);

  SolveResult res;
  res.positions.reserve(static_cast<std::size_t>(n_victims));
  for (int v = 0; v < n_victims; ++v)
    res.positions.push_back({out.x(2 * v), out.x(2 * v + 1)});
  res.iterations = out.iterations;
  res.objective_trace = std::move(out.trace);
  res.converged = out.converged;
  res.wall_time_s = timer.seconds();
  return res;
}

}  // namespace rloc
