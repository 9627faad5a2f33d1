#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rloc/error.hpp"
#include "rloc/geometry.hpp"
#include "rloc/rng.hpp"

namespace rloc {

// Minimum node separation. Equal to the channel reference distance so the
// log-distance path loss is always evaluated at d >= d0.
inline constexpr double kMinSeparation = 1.0;
inline constexpr int kMaxPlacementAttempts = 10000;

inline constexpr double kTxPowerLoDbm = -10.0;
inline constexpr double kTxPowerHiDbm = 10.0;

/// Fixed network geometry: victim and rescuer positions plus per-victim
/// transmit powers. Immutable once generated; every Monte Carlo trial reuses
/// the same scenario and redraws only measurement noise.
struct Scenario {
  std::vector<Point> victims;
  std::vector<Point> rescuers;
  std::vector<double> tx_power_dbm;  // one per victim
  Rect bounds;
  std::uint64_t seed = 0;

  int n_victims() const { return static_cast<int>(victims.size()); }
  int n_rescuers() const { return static_cast<int>(rescuers.size()); }
};

namespace detail {

inline Point draw_separated_point(NoiseStream& stream, const Rect& bounds,
                                  const std::vector<Point>& placed,
                                  double d_min) {
  for (int attempt = 0; attempt < kMaxPlacementAttempts; ++attempt) {
    Point p{stream.uniform(bounds.x0, bounds.x1),
            stream.uniform(bounds.y0, bounds.y1)};
    bool ok = true;
    for (const Point& q : placed) {
      if (distance(p, q) < d_min) {
        ok = false;
        break;
      }
    }
    if (ok) return p;
  }
  throw precondition_error("infeasible density: could not place a node with " +
                           std::to_string(d_min) + " m separation after " +
                           std::to_string(kMaxPlacementAttempts) + " attempts");
}

}  // namespace detail

/// Draws a scenario with uniform-random node positions inside `bounds`,
/// rejection-resampled (offending point only) until every pair is at least
/// `d_min` apart, then uniform transmit powers in [-10, 10] dBm. One stream,
/// victims first, then rescuers, then powers; pure function of its arguments.
inline Scenario generate_scenario(int n_victims, int n_rescuers, Rect bounds,
                                  std::uint64_t seed,
                                  double d_min = kMinSeparation) {
  if (n_victims < 1) throw precondition_error("n_victims must be >= 1");
  if (n_rescuers < 3) throw precondition_error("n_rescuers must be >= 3");
  if (bounds.degenerate()) throw precondition_error("degenerate bounds");

  NoiseStream stream(seed, 0, StreamTag::Scenario);
  Scenario s;
  s.bounds = bounds;
  s.seed = seed;

  std::vector<Point> placed;
  placed.reserve(static_cast<std::size_t>(n_victims + n_rescuers));
  for (int i = 0; i < n_victims; ++i) {
    Point p = detail::draw_separated_point(stream, bounds, placed, d_min);
    placed.push_back(p);
    s.victims.push_back(p);
  }
  for (int i = 0; i < n_rescuers; ++i) {
    Point p = detail::draw_separated_point(stream, bounds, placed, d_min);
    placed.push_back(p);
    s.rescuers.push_back(p);
  }
  s.tx_power_dbm.reserve(static_cast<std::size_t>(n_victims));
  for (int i = 0; i < n_victims; ++i) {
    s.tx_power_dbm.push_back(stream.uniform(kTxPowerLoDbm, kTxPowerHiDbm));
  }
  return s;
}

struct ValidationReport {
  std::vector<std::string> violations;
  std::vector<std::string> warnings;

  bool pass() const { return violations.empty(); }
};

/// Reports violated scenario invariants instead of throwing. Collinear
/// rescuers are a warning (degenerate for trilateration) rather than a
/// violation.
inline ValidationReport validate_scenario(const Scenario& s) {
  ValidationReport rep;
  auto check_bounds = [&](const std::vector<Point>& pts, const char* kind) {
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (!s.bounds.contains(pts[i]) || !std::isfinite(pts[i].x) ||
          !std::isfinite(pts[i].y)) {
        rep.violations.push_back(std::string(kind) + " " + std::to_string(i) +
                                 " out of bounds");
      }
    }
  };
  check_bounds(s.victims, "victim");
  check_bounds(s.rescuers, "rescuer");

  if (s.n_rescuers() < 3) {
    rep.violations.push_back("fewer than 3 rescuers");
  }
  if (s.tx_power_dbm.size() != s.victims.size()) {
    rep.violations.push_back("tx_power_dbm length does not match victims");
  }
  for (std::size_t i = 0; i < s.tx_power_dbm.size(); ++i) {
    const double p = s.tx_power_dbm[i];
    if (!(p >= kTxPowerLoDbm && p <= kTxPowerHiDbm)) {
      rep.violations.push_back("tx power " + std::to_string(i) +
                               " outside [-10, 10] dBm");
    }
  }

  std::vector<Point> all(s.victims);
  all.insert(all.end(), s.rescuers.begin(), s.rescuers.end());
  auto too_close = [&all]() {
    for (std::size_t i = 0; i < all.size(); ++i) {
      for (std::size_t j = i + 1; j < all.size(); ++j) {
        if (distance(all[i], all[j]) < kMinSeparation) return true;
      }
    }
    return false;
  };
  if (too_close()) {
    rep.violations.push_back("nodes closer than minimum separation");
  }

  if (s.n_rescuers() >= 3 && collinear(s.rescuers)) {
    rep.warnings.push_back("collinear rescuers");
  }
  return rep;
}

// JSON round-trip so regression tests can pin exact geometries.

inline void to_json(nlohmann::json& j, const Point& p) {
  j = nlohmann::json::array({p.x, p.y});
}
inline void from_json(const nlohmann::json& j, Point& p) {
  p.x = j.at(0).get<double>();
  p.y = j.at(1).get<double>();
}

inline void to_json(nlohmann::json& j, const Rect& r) {
  j = {{"x0", r.x0}, {"y0", r.y0}, {"x1", r.x1}, {"y1", r.y1}};
}
inline void from_json(const nlohmann::json& j, Rect& r) {
  j.at("x0").get_to(r.x0);
  j.at("y0").get_to(r.y0);
  j.at("x1").get_to(r.x1);
  j.at("y1").get_to(r.y1);
}

inline void to_json(nlohmann::json& j, const Scenario& s) {
  j = {{"victims", s.victims},
       {"rescuers", s.rescuers},
       {"tx_power_dbm", s.tx_power_dbm},
       {"bounds", s.bounds},
       {"seed", s.seed}};
}
inline void from_json(const nlohmann::json& j, Scenario& s) {
  j.at("victims").get_to(s.victims);
  j.at("rescuers").get_to(s.rescuers);
  j.at("tx_power_dbm").get_to(s.tx_power_dbm);
  j.at("bounds").get_to(s.bounds);
  j.at("seed").get_to(s.seed);
}

}  // namespace rloc
