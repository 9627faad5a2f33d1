#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include "rloc/channel.hpp"
#include "rloc/error.hpp"
#include "rloc/solve/damped_lsq.hpp"
#include "rloc/solve/options.hpp"

namespace rloc {

// Distance floor inside the path-loss model so log terms stay finite if an
// iterate passes through a node position.
inline constexpr double kRssModelFloorM = 1e-9;

namespace detail {

// 10*gamma/ln(10): derivative scale of the log-distance path-loss term.
inline double rss_grad_scale(const ChannelParams& params) {
  return 10.0 * params.ple / std::log(10.0);
}

/// Joint RSS misfit over a parameter vector laid out as
/// [x_1, y_1, ..., x_V, y_V, P_1, ..., P_V]. Gradient is optional.
inline double rss_value_grad(const Eigen::VectorXd& theta,
                             const MeasurementSet& meas,
                             const std::vector<Point>& rescuers,
                             int n_victims, const ChannelParams& params,
                             Eigen::VectorXd* grad) {
  const double c = rss_grad_scale(params);
  if (grad) grad->setZero();
  double value = 0.0;
  for (const Measurement& m : meas.entries) {
    const int s = m.link.src;
    const double sx = theta(2 * s), sy = theta(2 * s + 1);
    double tx, ty;
    int t = -1;
    if (m.link.kind == LinkKind::VictimRescuer) {
      const Point& a = rescuers[static_cast<std::size_t>(m.link.dst)];
      tx = a.x;
      ty = a.y;
    } else {
      t = m.link.dst;
      tx = theta(2 * t);
      ty = theta(2 * t + 1);
    }
    const double dx = sx - tx, dy = sy - ty;
    const double d = std::max(std::hypot(dx, dy), kRssModelFloorM);
    const double p_tx = theta(2 * n_victims + s);
    const double model = p_tx - params.ref_loss_db -
                         10.0 * params.ple * std::log10(d / params.ref_dist_m);
    const double e = m.value - model;
    value += e * e;
    if (grad) {
      const double k = 2.0 * e * c / (d * d);  // d/dx of e is (c/d)*unit
      (*grad)(2 * s) += k * dx;
      (*grad)(2 * s + 1) += k * dy;
      if (t >= 0) {
        (*grad)(2 * t) -= k * dx;
        (*grad)(2 * t + 1) -= k * dy;
      }
      (*grad)(2 * n_victims + s) += -2.0 * e;
    }
  }
  return value;
}

/// Closed-form conditional minimizer of the misfit in each transmit power:
/// the model is linear in P_t, so the optimum is the mean over the victim's
/// outgoing links of (measured + reference loss + path-loss term).
inline void rss_power_update(Eigen::VectorXd& theta, const MeasurementSet& meas,
                             const std::vector<Point>& rescuers,
                             int n_victims, const ChannelParams& params) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(n_victims);
  Eigen::VectorXd count = Eigen::VectorXd::Zero(n_victims);
  for (const Measurement& m : meas.entries) {
    const int s = m.link.src;
    const double sx = theta(2 * s), sy = theta(2 * s + 1);
    double tx, ty;
    if (m.link.kind == LinkKind::VictimRescuer) {
      const Point& a = rescuers[static_cast<std::size_t>(m.link.dst)];
      tx = a.x;
      ty = a.y;
    } else {
      tx = theta(2 * m.link.dst);
      ty = theta(2 * m.link.dst + 1);
    }
    const double d =
        std::max(std::hypot(sx - tx, sy - ty), kRssModelFloorM);
    sum(s) += m.value + params.ref_loss_db +
              10.0 * params.ple * std::log10(d / params.ref_dist_m);
    count(s) += 1.0;
  }
  for (int v = 0; v < n_victims; ++v)
    if (count(v) > 0.0) theta(2 * n_victims + v) = sum(v) / count(v);
}

/// Per-victim refinement used only for initialization: alternating
/// closed-form power / damped Gauss-Newton position steps on one victim's
/// rescuer links. The joint cooperative misfit has spurious local minima
/// that capture hull-interior starting points (reflected configurations for
/// victims outside the anchor hull), so each victim is first placed by its
/// own non-cooperative fit before the joint solve begins.
inline Point rss_refine_single(Point p, const MeasurementSet& meas, int v,
                               const std::vector<Point>& rescuers,
                               const ChannelParams& params) {
  std::vector<const Measurement*> ms;
  for (const Measurement& m : meas.entries)
    if (m.link.kind == LinkKind::VictimRescuer && m.link.src == v)
      ms.push_back(&m);
  if (ms.size() < 3) return p;

  const double c = rss_grad_scale(params);
  const auto objective = [&](double x, double y) {
    double power = 0.0;
    std::vector<double> path(ms.size());
    for (std::size_t i = 0; i < ms.size(); ++i) {
      const Point& a = rescuers[static_cast<std::size_t>(ms[i]->link.dst)];
      const double d = std::max(std::hypot(x - a.x, y - a.y), kRssModelFloorM);
      path[i] = params.ref_loss_db +
                10.0 * params.ple * std::log10(d / params.ref_dist_m);
      power += ms[i]->value + path[i];
    }
    power /= static_cast<double>(ms.size());  // closed-form conditional P
    double f = 0.0;
    for (std::size_t i = 0; i < ms.size(); ++i) {
      const double e = ms[i]->value - (power - path[i]);
      f += e * e;
    }
    return std::pair<double, double>{f, power};
  };

  // Damped Gauss-Newton polish of one start point on the profiled objective.
  const auto polish = [&](double x, double y) {
    auto [f, power] = objective(x, y);
    double lambda = 1e-3;
    for (int iter = 0; iter < 60 && f > 0.0; ++iter) {
      double jtj00 = 0.0, jtj01 = 0.0, jtj11 = 0.0, jtr0 = 0.0, jtr1 = 0.0;
      for (const Measurement* m : ms) {
        const Point& a = rescuers[static_cast<std::size_t>(m->link.dst)];
        const double dx = x - a.x, dy = y - a.y;
        const double d2 = std::max(dx * dx + dy * dy,
                                   kRssModelFloorM * kRssModelFloorM);
        const double d = std::sqrt(d2);
        const double model = power - params.ref_loss_db -
                             10.0 * params.ple *
                                 std::log10(d / params.ref_dist_m);
        const double r = m->value - model;
        const double jx = c * dx / d2, jy = c * dy / d2;
        jtj00 += jx * jx;
        jtj01 += jx * jy;
        jtj11 += jy * jy;
        jtr0 += jx * r;
        jtr1 += jy * r;
      }
      bool accepted = false;
      for (int k = 0; k < kMaxDampingEscalations; ++k) {
        const double a00 = jtj00 + lambda, a11 = jtj11 + lambda;
        const double det = a00 * a11 - jtj01 * jtj01;
        if (det <= 0.0) break;
        const double sx = -(a11 * jtr0 - jtj01 * jtr1) / det;
        const double sy = -(a00 * jtr1 - jtj01 * jtr0) / det;
        const auto [f_try, p_try] = objective(x + sx, y + sy);
        if (f_try < f) {
          x += sx;
          y += sy;
          const double df = f - f_try;
          f = f_try;
          power = p_try;
          lambda = std::max(lambda * 0.3, 1e-12);
          accepted = true;
          if (df < 1e-10) iter = 60;  // converged; exit outer loop
          break;
        }
        lambda *= 10.0;
      }
      if (!accepted) break;
    }
    return std::tuple<double, double, double>{x, y, f};
  };

  // Coarse scan of the profiled objective proposes basins; a centroid (or
  // any single) start point routinely lands in a mirrored local minimum for
  // victims outside the anchor hull, and a single scan cell can alias past
  // the true basin, so the best few well-separated cells are each polished
  // and the lowest final objective wins. The scan covers the linked anchors'
  // bounding box padded by 30% of its span (at least 10 m) at a fixed
  // 50x50 resolution (distinct minima can sit only metres apart near the
  // region edge), so it is deterministic and adds well under a millisecond.
  double lo_x = rescuers[static_cast<std::size_t>(ms[0]->link.dst)].x;
  double hi_x = lo_x;
  double lo_y = rescuers[static_cast<std::size_t>(ms[0]->link.dst)].y;
  double hi_y = lo_y;
  for (const Measurement* m : ms) {
    const Point& a = rescuers[static_cast<std::size_t>(m->link.dst)];
    lo_x = std::min(lo_x, a.x);
    hi_x = std::max(hi_x, a.x);
    lo_y = std::min(lo_y, a.y);
    hi_y = std::max(hi_y, a.y);
  }
  const double pad_x = std::max(10.0, 0.3 * (hi_x - lo_x));
  const double pad_y = std::max(10.0, 0.3 * (hi_y - lo_y));
  lo_x -= pad_x;
  hi_x += pad_x;
  lo_y -= pad_y;
  hi_y += pad_y;

  constexpr int kScan = 50;
  struct Cell {
    double f, x, y;
    int ix, iy;
  };
  std::vector<Cell> cells;
  cells.reserve(kScan * kScan);
  for (int iy = 0; iy < kScan; ++iy) {
    for (int ix = 0; ix < kScan; ++ix) {
      const double gx = lo_x + (hi_x - lo_x) * ix / (kScan - 1);
      const double gy = lo_y + (hi_y - lo_y) * iy / (kScan - 1);
      cells.push_back({objective(gx, gy).first, gx, gy, ix, iy});
    }
  }
  std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
    if (a.f != b.f) return a.f < b.f;
    if (a.iy != b.iy) return a.iy < b.iy;
    return a.ix < b.ix;
  });
  std::vector<Cell> starts;
  for (const Cell& cand : cells) {
    if (starts.size() >= 6) break;
    // Only immediate grid neighbors are treated as the same basin proposal;
    // distinct minima of this objective can sit two cells apart.
    bool separated = true;
    for (const Cell& s : starts)
      if (std::abs(cand.ix - s.ix) <= 1 && std::abs(cand.iy - s.iy) <= 1)
        separated = false;
    if (separated) starts.push_back(cand);
  }

  auto [bx, by, bf] = polish(p.x, p.y);
  for (const Cell& s : starts) {
    const auto [cx2, cy2, cf] = polish(s.x, s.y);
    if (cf < bf) {
      bx = cx2;
      by = cy2;
      bf = cf;
    }
  }
  return Point{bx, by};
}

/// Starting iterate for the cooperative RSS solvers: per-victim centroid of
/// its connected rescuer anchors refined by a non-cooperative single-victim
/// fit, then closed-form powers at those positions.
inline Eigen::VectorXd rss_initial_theta(const MeasurementSet& meas,
                                         const std::vector<Point>& rescuers,
                                         int n_victims,
                                         const ChannelParams& params,
                                         const SolverOptions& opts) {
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(3 * n_victims);
  if (!opts.init_positions.empty()) {
    if (opts.init_positions.size() != static_cast<std::size_t>(n_victims))
      throw precondition_error("rss solver: init_positions size mismatch");
    for (int v = 0; v < n_victims; ++v) {
      theta(2 * v) = opts.init_positions[static_cast<std::size_t>(v)].x;
      theta(2 * v + 1) = opts.init_positions[static_cast<std::size_t>(v)].y;
    }
  } else {
    Point overall{0.0, 0.0};
    for (const Point& a : rescuers) {
      overall.x += a.x;
      overall.y += a.y;
    }
    overall.x /= static_cast<double>(rescuers.size());
    overall.y /= static_cast<double>(rescuers.size());
    for (int v = 0; v < n_victims; ++v) {
      // Centroid of connected anchors, weighted by 10^(RSS/(10*gamma)),
      // i.e. proportional to 1/distance under the path-loss model. The
      // unknown transmit power scales all of one victim's weights by the
      // same factor, so the weighted centroid is power-invariant. Distinct
      // weights keep co-connected victims from starting at the same point
      // (victim-victim distance 0 puts the model on its floor).
      double cx = 0.0, cy = 0.0, wsum = 0.0;
      for (const Measurement& m : meas.entries) {
        if (m.link.kind != LinkKind::VictimRescuer || m.link.src != v)
          continue;
        const Point& a = rescuers[static_cast<std::size_t>(m.link.dst)];
        const double w = std::pow(10.0, m.value / (10.0 * params.ple));
        if (!std::isfinite(w) || w <= 0.0) continue;
        cx += w * a.x;
        cy += w * a.y;
        wsum += w;
      }
      const Point p = wsum > 0.0 ? Point{cx / wsum, cy / wsum} : overall;
      const Point refined = rss_refine_single(p, meas, v, rescuers, params);
      theta(2 * v) = refined.x;
      theta(2 * v + 1) = refined.y;
    }
  }
  if (!opts.init_powers.empty()) {
    if (opts.init_powers.size() != static_cast<std::size_t>(n_victims))
      throw precondition_error("rss solver: init_powers size mismatch");
    for (int v = 0; v < n_victims; ++v)
      theta(2 * n_victims + v) = opts.init_powers[static_cast<std::size_t>(v)];
  } else {
    rss_power_update(theta, meas, rescuers, n_victims, params);
  }
  return theta;
}

/// Stacked residual Jacobian over all 3V parameters, used for the joint
/// identifiability precondition.
inline void rss_check_identifiable(const Eigen::VectorXd& theta,
                                   const MeasurementSet& meas,
                                   const std::vector<Point>& rescuers,
                                   int n_victims, const ChannelParams& params) {
  const double c = rss_grad_scale(params);
  const int n_res = static_cast<int>(meas.entries.size());
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n_res, 3 * n_victims);
  for (int i = 0; i < n_res; ++i) {
    const Measurement& m = meas.entries[static_cast<std::size_t>(i)];
    const int s = m.link.src;
    const double sx = theta(2 * s), sy = theta(2 * s + 1);
    double tx, ty;
    int t = -1;
    if (m.link.kind == LinkKind::VictimRescuer) {
      const Point& a = rescuers[static_cast<std::size_t>(m.link.dst)];
      tx = a.x;
      ty = a.y;
    } else {
      t = m.link.dst;
      tx = theta(2 * t);
      ty = theta(2 * t + 1);
    }
    const double dx = sx - tx, dy = sy - ty;
    const double d2 = std::max(dx * dx + dy * dy,
                               kRssModelFloorM * kRssModelFloorM);
    J(i, 2 * s) = c * dx / d2;
    J(i, 2 * s + 1) = c * dy / d2;
    if (t >= 0) {
      J(i, 2 * t) = -c * dx / d2;
      J(i, 2 * t + 1) = -c * dy / d2;
    }
    J(i, 2 * n_victims + s) = -1.0;  // power column block
  }
  if (!full_column_rank(J))
    throw precondition_error(
        "unlocalizable configuration: positions and powers not jointly "
        "identifiable");
}

}  // namespace detail

/// Unweighted sum of squared dB residuals of the log-normal path-loss model
/// plus its gradient over [positions | powers].
inline std::pair<double, Eigen::VectorXd> rss_objective_and_gradient(
    const std::vector<Point>& positions, const std::vector<double>& powers,
    const MeasurementSet& meas, const std::vector<Point>& rescuers,
    const ChannelParams& params) {
  if (positions.size() != powers.size())
    throw precondition_error(
        "rss_objective_and_gradient: positions/powers size mismatch");
  const int v = static_cast<int>(positions.size());
  Eigen::VectorXd theta(3 * v);
  for (int i = 0; i < v; ++i) {
    theta(2 * i) = positions[static_cast<std::size_t>(i)].x;
    theta(2 * i + 1) = positions[static_cast<std::size_t>(i)].y;
    theta(2 * v + i) = powers[static_cast<std::size_t>(i)];
  }
  Eigen::VectorXd grad(3 * v);
  const double value =
      detail::rss_value_grad(theta, meas, rescuers, v, params, &grad);
  return {value, std::move(grad)};
}

/// Per-victim localization from RSS differences; transmit power never enters.
/// Damped Gauss-Newton on D_j = 10*gamma*log10(d_j / d_ref) from the best
/// cell of a coarse objective scan, outer iterations capped by
/// opts.max_iters (default profile: 10). A multi-victim set is solved victim
/// by victim; the trace is the per-victim traces concatenated in victim
/// order.
inline SolveResult solve_rssd_noncoop(const MeasurementSet& meas,
                                      const std::vector<Point>& rescuers,
                                      const ChannelParams& params,
                                      const SolverOptions& opts = {}) {
  SolveTimer timer;
  if (meas.modality != Modality::Rssd)
    throw precondition_error("solve_rssd_noncoop: wrong modality");
  const int n_victims = static_cast<int>(meas.rssd_reference.size());
  if (n_victims == 0)
    throw precondition_error("solve_rssd_noncoop: missing rssd_reference");

  const double c = detail::rss_grad_scale(params);
  SolveResult res;
  res.converged = true;
  for (int v = 0; v < n_victims; ++v) {
    const int ref_idx = meas.rssd_reference[static_cast<std::size_t>(v)];
    const Point ref = rescuers.at(static_cast<std::size_t>(ref_idx));
    std::vector<Point> others;
    std::vector<double> diffs;
    for (const Measurement& m : meas.entries) {
      if (m.link.src != v) continue;
      if (m.link.kind != LinkKind::VictimRescuer)
        throw precondition_error(
            "solve_rssd_noncoop: victim->rescuer links only");
      others.push_back(rescuers.at(static_cast<std::size_t>(m.link.dst)));
      diffs.push_back(m.value);
    }
    if (others.size() < 3)
      throw precondition_error(
          "underdetermined: victim " + std::to_string(v) +
          " needs >= 3 difference entries");

    Point init;
    if (!opts.init_positions.empty()) {
      init = opts.init_positions.at(static_cast<std::size_t>(v));
    } else {
      // The ratio model's misfit has mirrored local minima that capture
      // centroid starts when the victim sits outside the anchor hull, and
      // the default profile leaves few refinement iterations, so the start
      // must already be in the right basin. Basins are proposed by a coarse
      // scan over the linked anchors' padded bounding box plus a fine scan
      // around the reference anchor (the reference has the strongest
      // receive level, i.e. it is the nearest anchor, and a victim close to
      // it makes the global basin narrower than the coarse scan pitch).
      // Each proposal is polished by a small damped Gauss-Newton loop; the
      // lowest polished value becomes the starting iterate. None of this
      // counts toward the iteration cap or the trace.
      const auto rssd_obj = [&](double x, double y) {
        const double d_ref =
            std::max(std::hypot(x - ref.x, y - ref.y), kRssModelFloorM);
        double f = 0.0;
        for (std::size_t j = 0; j < others.size(); ++j) {
          const double d = std::max(
              std::hypot(x - others[j].x, y - others[j].y), kRssModelFloorM);
          const double e = diffs[j] - c * std::log(d / d_ref);
          f += e * e;
        }
        return f;
      };
      const auto polish = [&](double x, double y) {
        double f = rssd_obj(x, y);
        double lambda = 1e-3;
        for (int it = 0; it < 60 && f > 0.0; ++it) {
          double jtj00 = 0.0, jtj01 = 0.0, jtj11 = 0.0, jtr0 = 0.0,
                 jtr1 = 0.0;
          const double rdx = x - ref.x, rdy = y - ref.y;
          const double dr2 = std::max(rdx * rdx + rdy * rdy,
                                      kRssModelFloorM * kRssModelFloorM);
          for (std::size_t j = 0; j < others.size(); ++j) {
            const double dx = x - others[j].x, dy = y - others[j].y;
            const double d2 = std::max(dx * dx + dy * dy,
                                       kRssModelFloorM * kRssModelFloorM);
            const double e =
                diffs[j] - 0.5 * c * std::log(d2 / dr2);  // log d - log d_ref
            const double jx = -c * (dx / d2 - rdx / dr2);
            const double jy = -c * (dy / d2 - rdy / dr2);
            jtj00 += jx * jx;
            jtj01 += jx * jy;
            jtj11 += jy * jy;
            jtr0 += jx * e;
            jtr1 += jy * e;
          }
          bool accepted = false;
          for (int k = 0; k < kMaxDampingEscalations; ++k) {
            const double a00 = jtj00 + lambda, a11 = jtj11 + lambda;
            const double det = a00 * a11 - jtj01 * jtj01;
            if (det <= 0.0) break;
            const double sx = -(a11 * jtr0 - jtj01 * jtr1) / det;
            const double sy = -(a00 * jtr1 - jtj01 * jtr0) / det;
            const double f_try = rssd_obj(x + sx, y + sy);
            if (f_try < f) {
              x += sx;
              y += sy;
              const double df = f - f_try;
              f = f_try;
              lambda = std::max(lambda * 0.3, 1e-12);
              accepted = true;
              if (df < 1e-10) it = 60;
              break;
            }
            lambda *= 10.0;
          }
          if (!accepted) break;
        }
        return std::tuple<double, double, double>{x, y, f};
      };

      double lo_x = ref.x, hi_x = ref.x, lo_y = ref.y, hi_y = ref.y;
      for (const Point& a : others) {
        lo_x = std::min(lo_x, a.x);
        hi_x = std::max(hi_x, a.x);
        lo_y = std::min(lo_y, a.y);
        hi_y = std::max(hi_y, a.y);
      }
      const double pad_x = std::max(10.0, 0.3 * (hi_x - lo_x));
      const double pad_y = std::max(10.0, 0.3 * (hi_y - lo_y));
      lo_x -= pad_x;
      hi_x += pad_x;
      lo_y -= pad_y;
      hi_y += pad_y;

      constexpr int kScan = 50;
      struct Cell {
        double f, x, y;
        int ix, iy;
      };
      std::vector<Cell> cells;
      cells.reserve(kScan * kScan);
      for (int iy = 0; iy < kScan; ++iy) {
        for (int ix = 0; ix < kScan; ++ix) {
          const double gx = lo_x + (hi_x - lo_x) * ix / (kScan - 1);
          const double gy = lo_y + (hi_y - lo_y) * iy / (kScan - 1);
          cells.push_back({rssd_obj(gx, gy), gx, gy, ix, iy});
        }
      }
      std::sort(cells.begin(), cells.end(),
                [](const Cell& a, const Cell& b) {
                  if (a.f != b.f) return a.f < b.f;
                  if (a.iy != b.iy) return a.iy < b.iy;
                  return a.ix < b.ix;
                });
      std::vector<Cell> starts;
      for (const Cell& cand : cells) {
        if (starts.size() >= 4) break;
        bool separated = true;
        for (const Cell& st : starts)
          if (std::abs(cand.ix - st.ix) <= 1 && std::abs(cand.iy - st.iy) <= 1)
            separated = false;
        if (separated) starts.push_back(cand);
      }

      // Fine local scan: 0.5 m pitch over reference anchor +/- 10 m.
      {
        Cell local{rssd_obj(ref.x - 10.0, ref.y - 10.0), ref.x - 10.0,
                   ref.y - 10.0, -1, -1};
        for (int iy = 0; iy <= 40; ++iy) {
          for (int ix = 0; ix <= 40; ++ix) {
            const double gx = ref.x - 10.0 + 0.5 * ix;
            const double gy = ref.y - 10.0 + 0.5 * iy;
            const double f = rssd_obj(gx, gy);
            if (f < local.f) local = {f, gx, gy, -1, -1};
          }
        }
        starts.push_back(local);
      }

      auto [bx, by, bf] = polish(starts.front().x, starts.front().y);
      for (std::size_t k = 1; k < starts.size(); ++k) {
        const auto [px, py, pf] = polish(starts[k].x, starts[k].y);
        if (pf < bf) {
          bx = px;
          by = py;
          bf = pf;
        }
      }
      init = {bx, by};
    }

    const int m = static_cast<int>(others.size());
    ResidualFn fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r,
                        Eigen::MatrixXd* J) {
      const double rdx = x(0) - ref.x, rdy = x(1) - ref.y;
      const double d_ref = std::max(std::hypot(rdx, rdy), kRssModelFloorM);
      for (int j = 0; j < m; ++j) {
        const double dx = x(0) - others[static_cast<std::size_t>(j)].x;
        const double dy = x(1) - others[static_cast<std::size_t>(j)].y;
        const double d = std::max(std::hypot(dx, dy), kRssModelFloorM);
        r(j) = diffs[static_cast<std::size_t>(j)] -
               c * std::log(d / d_ref);  // c/ln10 * ln == 10*gamma*log10
        if (J) {
          (*J)(j, 0) = -c * (dx / (d * d) - rdx / (d_ref * d_ref));
          (*J)(j, 1) = -c * (dy / (d * d) - rdy / (d_ref * d_ref));
        }
      }
    };

    Eigen::VectorXd x0(2);
    x0 << init.x, init.y;
    LsqOutcome out = damped_least_squares(std::move(x0), m, fn, opts);
    res.positions.push_back({out.x(0), out.x(1)});
    res.iterations += out.iterations;
    res.converged = res.converged && out.converged;
    res.objective_trace.insert(res.objective_trace.end(), out.trace.begin(),
                               out.trace.end());
  }
  res.wall_time_s = timer.seconds();
  return res;
}

/// Joint gradient descent over all victim positions and transmit powers.
/// Barzilai-Borwein trial step with Armijo backtracking keeps the trace
/// monotone; stops on absolute objective change < tol or the iteration cap
/// (default profile: 2000). Backtracking below 1e-12 aborts with
/// converged = false at the best iterate.
inline SolveResult solve_rss_coop_gd(const MeasurementSet& meas,
                                     const std::vector<Point>& rescuers,
                                     int n_victims,
                                     const ChannelParams& params,
                                     const SolverOptions& opts = {}) {
  SolveTimer timer;
  if (meas.modality != Modality::Rss)
    throw precondition_error("solve_rss_coop_gd: wrong modality");
  if (meas.entries.empty())
    throw precondition_error("solve_rss_coop_gd: no measurements");

  Eigen::VectorXd theta =
      detail::rss_initial_theta(meas, rescuers, n_victims, params, opts);
  detail::rss_check_identifiable(theta, meas, rescuers, n_victims, params);

  SolveResult res;
  Eigen::VectorXd grad(3 * n_victims);
  double f =
      detail::rss_value_grad(theta, meas, rescuers, n_victims, params, &grad);
  res.objective_trace.push_back(f);

  double step = 1.0 / std::max(1.0, grad.norm());
  Eigen::VectorXd theta_prev = theta, grad_prev = grad;
  bool have_prev = false;

  // Per-iteration move cap (meters for coordinates, dB for powers). The RSS
  // misfit with unknown power has a nearly flat far-field ridge; unbounded
  // Barzilai-Borwein steps can ride it out of the region of interest while
  // still passing the Armijo test.
  constexpr double kGdMaxMove = 10.0;

  // Barzilai-Borwein progress is oscillatory: near-zero steps regularly
  // punctuate large bursts, with a cycle length that scales with the problem
  // dimension. The absolute-change stop is therefore applied to a window of
  // successive objective values (total decrease across the last window of
  // accepted steps < tol) wide enough to span one cycle, instead of a single
  // step, which would fire on one sawtooth trough.
  const std::size_t kStopWindow =
      std::max<std::size_t>(10, 16 * static_cast<std::size_t>(theta.size()));

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    const double g2 = grad.squaredNorm();
    if (g2 == 0.0) {
      res.converged = true;  // stationary (e.g. started at an exact fit)
      break;
    }

    double alpha = step;
    if (have_prev) {
      const Eigen::VectorXd s = theta - theta_prev;
      const Eigen::VectorXd y = grad - grad_prev;
      const double sty = s.dot(y);
      const double yty = y.squaredNorm();
      // Alternate the two Barzilai-Borwein step lengths; the long/short
      // alternation damps the sawtooth on ill-conditioned misfits.
      if (sty > 1e-16)
        alpha = (iter % 2 == 0 || yty <= 0.0) ? s.squaredNorm() / sty
                                              : sty / yty;
    }
    const double ginf = grad.lpNorm<Eigen::Infinity>();
    if (ginf > 0.0) alpha = std::min(alpha, kGdMaxMove / ginf);

    // Armijo backtracking on the steepest-descent direction.
    double f_try = f;
    Eigen::VectorXd theta_try;
    bool ok = false;
    while (alpha >= 1e-12) {
      theta_try = theta - alpha * grad;
      f_try = detail::rss_value_grad(theta_try, meas, rescuers, n_victims,
                                     params, nullptr);
      if (f_try <= f - 1e-4 * alpha * g2) {
        ok = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!ok) break;  // line search failure; converged stays false

    theta_prev = theta;
    grad_prev = grad;
    have_prev = true;
    theta = theta_try;
    f = f_try;
    detail::rss_value_grad(theta, meas, rescuers, n_victims, params, &grad);
    res.objective_trace.push_back(f);
    ++res.iterations;
    step = alpha;
    const std::vector<double>& tr = res.objective_trace;
    if (tr.size() > kStopWindow &&
        tr[tr.size() - 1 - kStopWindow] - tr.back() < opts.tol) {
      res.converged = true;
      break;
    }
  }

  res.positions.reserve(static_cast<std::size_t>(n_victims));
  res.power_estimates.reserve(static_cast<std::size_t>(n_victims));
  for (int v = 0; v < n_victims; ++v) {
    res.positions.push_back({theta(2 * v), theta(2 * v + 1)});
    res.power_estimates.push_back(theta(2 * n_victims + v));
  }
  res.wall_time_s = timer.seconds();
  return res;
}

/// Alternating minimization on the same joint RSS misfit: closed-form power
/// update (exact conditional minimizer), then one damped Gauss-Newton step
/// on the position block. Same tolerance and cap contract as the gradient
/// descent solver.
inline SolveResult solve_rss_coop_mm(const MeasurementSet& meas,
                                     const std::vector<Point>& rescuers,
                                     int n_victims,
                                     const ChannelParams& params,
                                     const SolverOptions& opts = {}) {
  SolveTimer timer;
  if (meas.modality != Modality::Rss)
    throw precondition_error("solve_rss_coop_mm: wrong modality");
  if (meas.entries.empty())
    throw precondition_error("solve_rss_coop_mm: no measurements");

  Eigen::VectorXd theta =
      detail::rss_initial_theta(meas, rescuers, n_victims, params, opts);
  detail::rss_check_identifiable(theta, meas, rescuers, n_victims, params);

  const double c = detail::rss_grad_scale(params);
  const int n_res = static_cast<int>(meas.entries.size());
  const int n_pos = 2 * n_victims;

  // Position-block residuals and Jacobian with powers held fixed.
  const auto eval = [&](const Eigen::VectorXd& th, Eigen::VectorXd& r,
                        Eigen::MatrixXd* J) {
    if (J) J->setZero();
    for (int i = 0; i < n_res; ++i) {
      const Measurement& m = meas.entries[static_cast<std::size_t>(i)];
      const int s = m.link.src;
      const double sx = th(2 * s), sy = th(2 * s + 1);
      double tx, ty;
      int t = -1;
      if (m.link.kind == LinkKind::VictimRescuer) {
        const Point& a = rescuers[static_cast<std::size_t>(m.link.dst)];
        tx = a.x;
        ty = a.y;
      } else {
        t = m.link.dst;
        tx = th(2 * t);
        ty = th(2 * t + 1);
      }
      const double dx = sx - tx, dy = sy - ty;
      const double d = std::max(std::hypot(dx, dy), kRssModelFloorM);
      const double model = th(2 * n_victims + s) - params.ref_loss_db -
                           10.0 * params.ple *
                               std::log10(d / params.ref_dist_m);
      r(i) = m.value - model;
      if (J) {
        const double k = c / (d * d);
        (*J)(i, 2 * s) = k * dx;
        (*J)(i, 2 * s + 1) = k * dy;
        if (t >= 0) {
          (*J)(i, 2 * t) = -k * dx;
          (*J)(i, 2 * t + 1) = -k * dy;
        }
      }
    }
    if (J) {
      // Project out the power columns (Kaufman variable-projection
      // Jacobian): each power column is an indicator of one victim's links,
      // so the projection centers the Jacobian rows within each victim's
      // link group. The profiled residuals are already group-centered by
      // optimality of the closed-form power.
      for (int s = 0; s < n_victims; ++s) {
        Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(n_pos);
        int count = 0;
        for (int i = 0; i < n_res; ++i) {
          if (meas.entries[static_cast<std::size_t>(i)].link.src != s) continue;
          mean += J->row(i);
          ++count;
        }
        if (count == 0) continue;
        mean /= static_cast<double>(count);
        for (int i = 0; i < n_res; ++i) {
          if (meas.entries[static_cast<std::size_t>(i)].link.src != s) continue;
          J->row(i) -= mean;
        }
      }
    }
  };

  SolveResult res;
  Eigen::VectorXd r(n_res), r_try(n_res);
  Eigen::MatrixXd J(n_res, n_pos);

  // Each iteration alternates an exact closed-form power update with one
  // damped Gauss-Newton step on the position block; the power update is
  // re-applied inside every trial evaluation, so the iteration is
  // Gauss-Newton on the reduced misfit min_P F(x, P) (variable projection)
  // and inherits its quadratic endgame.
  detail::rss_power_update(theta, meas, rescuers, n_victims, params);
  eval(theta, r, nullptr);
  double f = r.squaredNorm();
  res.objective_trace.push_back(f);
  if (f == 0.0) res.converged = true;  // started at an exact fit

  double lambda = opts.damping;
  for (int iter = 0; iter < opts.max_iters && f > 0.0; ++iter) {
    eval(theta, r, &J);
    const Eigen::MatrixXd jtj = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    bool accepted = false;
    double f_new = f;
    Eigen::VectorXd th_best;
    for (int k = 0; k < kMaxDampingEscalations; ++k) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal().array() += lambda;
      const Eigen::VectorXd delta = damped.ldlt().solve(-g);
      Eigen::VectorXd th_try = theta;
      th_try.head(n_pos) += delta;
      detail::rss_power_update(th_try, meas, rescuers, n_victims, params);
      eval(th_try, r_try, nullptr);
      const double f_try = r_try.squaredNorm();
      if (f_try < f) {
        th_best = std::move(th_try);
        f_new = f_try;
        lambda = std::max(lambda * 0.3, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) break;  // stationary within damping range; converged stays
    theta = std::move(th_best);
    f = f_new;
    res.objective_trace.push_back(f);
    ++res.iterations;
    // Absolute change over the last two successive iterations: a single
    // quadratic-endgame step can pass through the tolerance band mid-plunge.
    const std::vector<double>& tr = res.objective_trace;
    if (tr.size() > 2 && tr[tr.size() - 3] - tr.back() < opts.tol) {
      res.converged = true;
      break;
    }
  }

  res.positions.reserve(static_cast<std::size_t>(n_victims));
  res.power_estimates.reserve(static_cast<std::size_t>(n_victims));
  for (int v = 0; v < n_victims; ++v) {
    res.positions.push_back({theta(2 * v), theta(2 * v + 1)});
    res.power_estimates.push_back(theta(2 * n_victims + v));
  }
  res.wall_time_s = timer.seconds();
  return res;
}

}  // namespace rloc
