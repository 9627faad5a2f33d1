#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "rloc/channel.hpp"
#include "rloc/error.hpp"
#include "rloc/solve/damped_lsq.hpp"
#include "rloc/solve/options.hpp"

namespace rloc {

/// Sum of squared wrapped bearing residuals for a single victim at p,
/// unweighted (the validation objective; the solver's internal residuals are
/// noise-scaled but share the same minimizer).
inline double aoa_objective(Point p, const std::vector<Point>& anchors,
                            const std::vector<double>& bearings) {
  double f = 0.0;
  for (std::size_t k = 0; k < anchors.size(); ++k) {
    const double phi = std::atan2(p.y - anchors[k].y, p.x - anchors[k].x);
    const double e = wrap_angle(bearings[k] - phi);
    f += e * e;
  }
  return f;
}

namespace detail {

struct BearingObs {
  Point anchor;
  double theta;
};

/// Best pairwise bearing-line intersection: every (i < j) pair whose lines
/// are not parallel within 1e-6 rad is intersected and scored on the wrapped
/// angular objective; strict comparison keeps the smallest-index pair on
/// ties. Returns false when no usable pair exists.
inline bool best_pair_intersection(const std::vector<BearingObs>& obs,
                                   Point& out) {
  std::vector<Point> anchors;
  std::vector<double> thetas;
  for (const BearingObs& b : obs) {
    anchors.push_back(b.anchor);
    thetas.push_back(b.theta);
  }
  bool found = false;
  double best_f = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    const double cxi = std::cos(obs[i].theta), syi = std::sin(obs[i].theta);
    for (std::size_t j = i + 1; j < obs.size(); ++j) {
      const double cxj = std::cos(obs[j].theta), syj = std::sin(obs[j].theta);
      const double det = cxi * syj - cxj * syi;  // sin(theta_j - theta_i)
      if (std::abs(det) < 1e-6) continue;
      const double rx = obs[j].anchor.x - obs[i].anchor.x;
      const double ry = obs[j].anchor.y - obs[i].anchor.y;
      const double t = (rx * syj - ry * cxj) / det;
      const Point p{obs[i].anchor.x + t * cxi, obs[i].anchor.y + t * syi};
      const double f = aoa_objective(p, anchors, thetas);
      if (!found || f < best_f) {
        found = true;
        best_f = f;
        out = p;
      }
    }
  }
  return found;
}

}  // namespace detail

/// Triangulation with optional cooperation. Victim->rescuer entries carry
/// bearings (radians, measured at the rescuer toward the victim);
/// victim->victim entries carry ranges (meters). Initialization is the best
/// pairwise bearing-line intersection per victim; refinement is joint
/// Gauss-Newton over all victim coordinates on wrapped angular residuals
/// plus range residuals, each scaled by its modality's 1/sigma.
inline SolveResult solve_aoa(const MeasurementSet& meas,
                             const std::vector<Point>& rescuers,
                             int n_victims, const ChannelParams& params,
                             const SolverOptions& opts = {}) {
  SolveTimer timer;
  if (meas.modality != Modality::AoaBearing)
    throw precondition_error("solve_aoa: wrong modality");

  std::vector<std::vector<detail::BearingObs>> bearings(
      static_cast<std::size_t>(n_victims));
  std::vector<int> coop_links(static_cast<std::size_t>(n_victims), 0);
  for (const Measurement& m : meas.entries) {
    if (m.link.kind == LinkKind::VictimRescuer) {
      bearings.at(static_cast<std::size_t>(m.link.src))
          .push_back({rescuers.at(static_cast<std::size_t>(m.link.dst)),
                      m.value});
    } else {
      coop_links.at(static_cast<std::size_t>(m.link.src))++;
      coop_links.at(static_cast<std::size_t>(m.link.dst))++;
    }
  }

  Point rescuer_centroid{0.0, 0.0};
  for (const Point& a : rescuers) {
    rescuer_centroid.x += a.x;
    rescuer_centroid.y += a.y;
  }
  rescuer_centroid.x /= static_cast<double>(rescuers.size());
  rescuer_centroid.y /= static_cast<double>(rescuers.size());

  Eigen::VectorXd x0(2 * n_victims);
  const bool explicit_init = !opts.init_positions.empty();
  if (explicit_init &&
      opts.init_positions.size() != static_cast<std::size_t>(n_victims))
    throw precondition_error("solve_aoa: init_positions size mismatch");
  for (int v = 0; v < n_victims; ++v) {
    const auto& obs = bearings[static_cast<std::size_t>(v)];
    const bool coop = coop_links[static_cast<std::size_t>(v)] > 0;
    if (!explicit_init) {
      if (obs.size() < 2 && !coop)
        throw precondition_error(
            "underdetermined: victim " + std::to_string(v) +
            " needs >= 2 bearings or cooperative links");
      if (obs.empty() && coop)
        throw precondition_error(
            "underdetermined: victim " + std::to_string(v) +
            " has no bearings");
    }
    Point init = rescuer_centroid;
    if (explicit_init) {
      init = opts.init_positions[static_cast<std::size_t>(v)];
    } else if (!detail::best_pair_intersection(obs, init)) {
      if (obs.size() >= 2 && !coop)
        throw precondition_error("parallel bearings");
      // Cooperative fallback: centroid of this victim's bearing anchors.
      // With a single bearing that centroid is the anchor itself, where the
      // angular Jacobian vanishes; start on the bearing ray instead, stepped
      // out by the scale of this victim's cooperative ranges.
      if (obs.size() == 1) {
        double range_sum = 0.0;
        int range_count = 0;
        for (const Measurement& m : meas.entries) {
          if (m.link.kind == LinkKind::VictimVictim &&
              (m.link.src == v || m.link.dst == v)) {
            range_sum += m.value;
            ++range_count;
          }
        }
        const double step =
            range_count > 0 ? std::max(range_sum / range_count, 1.0) : 1.0;
        init = {obs[0].anchor.x + step * std::cos(obs[0].theta),
                obs[0].anchor.y + step * std::sin(obs[0].theta)};
      } else if (!obs.empty()) {
        Point c{0.0, 0.0};
        for (const auto& b : obs) {
          c.x += b.anchor.x;
          c.y += b.anchor.y;
        }
        init = {c.x / static_cast<double>(obs.size()),
                c.y / static_cast<double>(obs.size())};
      }
    }
    x0(2 * v) = init.x;
    x0(2 * v + 1) = init.y;
  }

  const double w_ang = 1.0 / std::max(params.sigma_angle_rad, 1e-6);
  const double w_rng = 1.0 / std::max(params.sigma_range_m, 1e-6);
  const int n_res = static_cast<int>(meas.entries.size());

  ResidualFn fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r,
                      Eigen::MatrixXd* J) {
    if (J) J->setZero();
    for (int i = 0; i < n_res; ++i) {
      const Measurement& m = meas.entries[static_cast<std::size_t>(i)];
      const int s = m.link.src;
      if (m.link.kind == LinkKind::VictimRescuer) {
        const Point& a = rescuers[static_cast<std::size_t>(m.link.dst)];
        const double dx = x(2 * s) - a.x, dy = x(2 * s + 1) - a.y;
        const double phi = std::atan2(dy, dx);
        r(i) = w_ang * wrap_angle(m.value - phi);
        if (J) {
          const double d2 = std::max(dx * dx + dy * dy, 1e-18);
          (*J)(i, 2 * s) = w_ang * (dy / d2);
          (*J)(i, 2 * s + 1) = w_ang * (-dx / d2);
        }
      } else {
        const int t = m.link.dst;
        const double dx = x(2 * s) - x(2 * t);
        const double dy = x(2 * s + 1) - x(2 * t + 1);
        const double d = std::hypot(dx, dy);
        r(i) = w_rng * (m.value - d);
        if (J) {
          double ux, uy;
          detail::unit_dir(dx, dy, d, ux, uy);
          (*J)(i, 2 * s) = -w_rng * ux;
          (*J)(i, 2 * s + 1) = -w_rng * uy;
          (*J)(i, 2 * t) = w_rng * ux;
          (*J)(i, 2 * t + 1) = w_rng * uy;
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
          "unlocalizable configuration: rank-deficient bearing/link topology");
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
