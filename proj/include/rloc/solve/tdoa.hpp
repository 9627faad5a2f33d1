#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <utility>
#include <vector>

#include "rloc/channel.hpp"
#include "rloc/error.hpp"
#include "rloc/solve/damped_lsq.hpp"
#include "rloc/solve/options.hpp"
#include "rloc/solve/toa.hpp"

namespace rloc {

/// Sum of squared range-difference residuals for a victim at p.
inline double tdoa_objective(Point p, const Point& ref,
                             const std::vector<Point>& others,
                             const std::vector<double>& diffs) {
  const double d0 = distance(p, ref);
  double f = 0.0;
  for (std::size_t j = 0; j < others.size(); ++j) {
    const double e = diffs[j] - (distance(p, others[j]) - d0);
    f += e * e;
  }
  return f;
}

namespace detail {

/// Classic hyperbolic-positioning linearization. Squaring
/// |x - a_j| = u + dr_j against |x - a_0| = u and subtracting gives, per j,
///   2 (a_j - a_0)^T x + 2 dr_j u = |a_j|^2 - |a_0|^2 - dr_j^2,
/// linear in (x, y, u) with auxiliary variable u = |x - a_0|.
struct TdoaLinearSystem {
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
};

inline TdoaLinearSystem tdoa_linear_system(const Point& ref,
                                           const std::vector<Point>& others,
                                           const std::vector<double>& diffs) {
  const int m = static_cast<int>(others.size());
  TdoaLinearSystem sys{Eigen::MatrixXd(m, 3), Eigen::VectorXd(m)};
  const double ref_sq = ref.x * ref.x + ref.y * ref.y;
  for (int j = 0; j < m; ++j) {
    const Point& a = others[static_cast<std::size_t>(j)];
    const double dr = diffs[static_cast<std::size_t>(j)];
    sys.a(j, 0) = 2.0 * (a.x - ref.x);
    sys.a(j, 1) = 2.0 * (a.y - ref.y);
    sys.a(j, 2) = 2.0 * dr;
    sys.b(j) = a.x * a.x + a.y * a.y - ref_sq - dr * dr;
  }
  return sys;
}

/// With only two difference equations the linear system is underdetermined:
/// solutions form a line z(t) = z_min + t * n in (x, y, u) space. The
/// consistency condition |x(t) - a_0|^2 = u(t)^2 is a quadratic in t whose
/// roots give up to two position candidates.
inline std::vector<Point> tdoa_ambiguous_candidates(
    const TdoaLinearSystem& sys, const Point& ref) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(
      sys.a, Eigen::ComputeThinU | Eigen::ComputeFullV);
  const Eigen::Vector3d zmin = svd.solve(sys.b);
  const Eigen::Vector3d dir = svd.matrixV().col(2);

  const double px = zmin(0) - ref.x, py = zmin(1) - ref.y;
  const double qa =
      dir(0) * dir(0) + dir(1) * dir(1) - dir(2) * dir(2);
  const double qb = 2.0 * (px * dir(0) + py * dir(1) - zmin(2) * dir(2));
  const double qc = px * px + py * py - zmin(2) * zmin(2);

  std::vector<double> roots;
  if (std::abs(qa) < 1e-12) {
    roots.push_back(std::abs(qb) < 1e-12 ? 0.0 : -qc / qb);
  } else {
    const double disc = qb * qb - 4.0 * qa * qc;
    if (disc >= 0.0) {
      const double s = std::sqrt(disc);
      roots.push_back((-qb + s) / (2.0 * qa));
      roots.push_back((-qb - s) / (2.0 * qa));
    } else {
      // No exact consistency (noise); use the closest-to-consistent point.
      roots.push_back(-qb / (2.0 * qa));
    }
  }

  std::vector<Point> cands;
  for (double t : roots)
    cands.push_back({zmin(0) + t * dir(0), zmin(1) + t * dir(1)});
  return cands;
}

}  // namespace detail

/// Per-victim hyperbolic positioning from range differences relative to a
/// reference rescuer. Two-stage: auxiliary-variable algebraic least squares,
/// then Gauss-Newton on sum_j (dr_j - (|x - a_j| - |x - a_0|))^2. With only
/// two difference equations both algebraic candidates are refined and the
/// lower-objective fix wins.
inline SolveResult solve_tdoa_noncoop(const MeasurementSet& meas,
                                      const std::vector<Point>& rescuers,
                                      const SolverOptions& opts = {}) {
  SolveTimer timer;
  if (meas.modality != Modality::TdoaRangeDiff)
    throw precondition_error("solve_tdoa_noncoop: wrong modality");
  if (meas.entries.size() < 2)
    throw precondition_error("underdetermined: need >= 2 range differences");
  if (meas.tdoa_reference < 0 ||
      meas.tdoa_reference >= static_cast<int>(rescuers.size()))
    throw precondition_error("solve_tdoa_noncoop: bad reference index");

  const Point ref = rescuers[static_cast<std::size_t>(meas.tdoa_reference)];
  std::vector<Point> others;
  std::vector<double> diffs;
  std::vector<Point> all_anchors{ref};
  for (const Measurement& m : meas.entries) {
    if (m.link.kind != LinkKind::VictimRescuer)
      throw precondition_error("solve_tdoa_noncoop: victim->rescuer links only");
    others.push_back(rescuers.at(static_cast<std::size_t>(m.link.dst)));
    diffs.push_back(m.value);
    all_anchors.push_back(others.back());
  }
  if (collinear(all_anchors))
    throw precondition_error("degenerate geometry: collinear anchors");

  const auto sys = detail::tdoa_linear_system(ref, others, diffs);
  std::vector<Point> candidates;
  if (others.size() >= 3) {
    const Eigen::Vector3d z = sys.a.colPivHouseholderQr().solve(sys.b);
    candidates.push_back({z(0), z(1)});
  } else {
    candidates = detail::tdoa_ambiguous_candidates(sys, ref);
  }

  const int m = static_cast<int>(others.size());
  ResidualFn fn = [&](const Eigen::VectorXd& x, Eigen::VectorXd& r,
                      Eigen::MatrixXd* J) {
    const double dx0 = x(0) - ref.x, dy0 = x(1) - ref.y;
    const double d0 = std::hypot(dx0, dy0);
    double u0x, u0y;
    detail::unit_dir(dx0, dy0, d0, u0x, u0y);
    for (int j = 0; j < m; ++j) {
      const double dx = x(0) - others[static_cast<std::size_t>(j)].x;
      const double dy = x(1) - others[static_cast<std::size_t>(j)].y;
      const double d = std::hypot(dx, dy);
      r(j) = diffs[static_cast<std::size_t>(j)] - (d - d0);
      if (J) {
        double ux, uy;
        detail::unit_dir(dx, dy, d, ux, uy);
        (*J)(j, 0) = -(ux - u0x);
        (*J)(j, 1) = -(uy - u0y);
      }
    }
  };

  LsqOutcome best;
  bool have_best = false;
  for (const Point& c : candidates) {
    Eigen::VectorXd x0(2);
    x0 << c.x, c.y;
    LsqOutcome out = damped_least_squares(std::move(x0), m, fn, opts);
    if (!have_best || out.trace.back() < best.trace.back()) {
      best = std::move(out);
      have_best = true;
    }
  }

  SolveResult res;
  res.positions = {{best.x(0), best.x(1)}};
  res.iterations = best.iterations;
  res.objective_trace = std::move(best.trace);
  res.converged = best.converged;
  res.wall_time_s = timer.seconds();
  return res;
}

}  // namespace rloc
