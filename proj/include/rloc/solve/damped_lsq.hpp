#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <vector>

#include "rloc/solve/options.hpp"

namespace rloc {

namespace detail {

// Unit direction with a deterministic fallback for coincident points, so
// Jacobian rows stay finite when an iterate passes through degeneracy.
inline void unit_dir(double dx, double dy, double d, double& ux, double& uy) {
  if (d > 1e-12) {
    ux = dx / d;
    uy = dy / d;
  } else {
    ux = 1.0;
    uy = 0.0;
  }
}

}  // namespace detail

/// Fills the residual vector and, when J is non-null, the Jacobian at x.
using ResidualFn =
    std::function<void(const Eigen::VectorXd& x, Eigen::VectorXd& r,
                       Eigen::MatrixXd* J)>;

struct LsqOutcome {
  Eigen::VectorXd x;
  int iterations = 0;
  std::vector<double> trace;
  bool converged = false;
};

inline constexpr int kMaxDampingEscalations = 30;

/// Levenberg-Marquardt with identity damping. Accepts only non-increasing
/// steps, so the trace is monotone; stops when the absolute objective change
/// of an accepted step falls below tol, or at the iteration cap, or when
/// damping escalation cannot find a non-worsening step.
inline LsqOutcome damped_least_squares(Eigen::VectorXd x0, int n_residuals,
                                       const ResidualFn& fn,
                                       const SolverOptions& opts) {
  const int n = static_cast<int>(x0.size());
  LsqOutcome out;
  out.x = std::move(x0);

  Eigen::VectorXd r(n_residuals), r_try(n_residuals);
  Eigen::MatrixXd J(n_residuals, n);
  fn(out.x, r, &J);
  double f = r.squaredNorm();
  out.trace.push_back(f);
  if (f == 0.0) {  // started at an exact solution
    out.converged = true;
    return out;
  }

  double lambda = opts.damping;
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    const Eigen::MatrixXd jtj = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;

    bool accepted = false;
    Eigen::VectorXd x_try;
    double f_try = f;
    for (int k = 0; k < kMaxDampingEscalations; ++k) {
      Eigen::MatrixXd damped = jtj;
      damped.diagonal().array() += lambda;
      const Eigen::VectorXd delta = damped.ldlt().solve(-g);
      x_try = out.x + delta;
      fn(x_try, r_try, nullptr);
      f_try = r_try.squaredNorm();
      if (f_try <= f) {
        accepted = true;
        lambda = std::max(lambda * 0.3, 1e-12);
        break;
      }
      lambda *= 10.0;
    }
    if (!accepted) break;  // stuck against the damping ceiling

    const double df = f - f_try;
    out.x = x_try;
    f = f_try;
    ++out.iterations;
    out.trace.push_back(f);
    if (df < opts.tol) {
      out.converged = true;
      break;
    }
    fn(out.x, r, &J);
  }
  return out;
}

/// Column rank check used by the cooperative solvers' rigidity preconditions.
inline bool full_column_rank(const Eigen::MatrixXd& J, double threshold = 1e-8) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(J);
  qr.setThreshold(threshold);
  return qr.rank() == J.cols();
}

/// Wall-clock helper; solvers report the duration of the solve call only.
class SolveTimer {
 public:
  SolveTimer() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start_)
        .count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace rloc
