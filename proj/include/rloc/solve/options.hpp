#pragma once

#include <vector>

#include "rloc/geometry.hpp"

namespace rloc {

/// How a solver picks its starting iterate. Algebraic means the solver's
/// closed-form linearization (ToA/TDoA); WeightedCentroid is a
/// measurement-weighted centroid of the connected anchors.
enum class InitStrategy { WeightedCentroid, Algebraic };

struct SolverOptions {
  double tol = 1e-3;     // absolute objective change between iterations
  int max_iters = 100;
  InitStrategy init = InitStrategy::Algebraic;
  double damping = 1e-3;  // initial Levenberg-Marquardt lambda

  // Explicit starting iterate; overrides the strategy when set. Mostly for
  // tests and warm starts.
  std::vector<Point> init_positions;
  std::vector<double> init_powers;
};

struct SolveResult {
  std::vector<Point> positions;          // one per target victim
  std::vector<double> power_estimates;   // empty unless the solver estimates P_t
  int iterations = 0;
  std::vector<double> objective_trace;   // accepted objective values, F0 first
  double wall_time_s = 0.0;
  bool converged = false;

  double final_objective() const {
    return objective_trace.empty() ? 0.0 : objective_trace.back();
  }
};

}  // namespace rloc
