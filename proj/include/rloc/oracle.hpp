#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "rloc/channel.hpp"
#include "rloc/error.hpp"
#include "rloc/geometry.hpp"

namespace rloc {

struct GridSpec {
  Rect bounds;
  double resolution = 0.5;  // meters
};

inline constexpr double kMaxGridCells = 1e7;

struct GridOracleResult {
  Point point;
  double objective = 0.0;
};

namespace detail {

/// The oracle evaluates its objective from the raw measurement entries on
/// purpose, without calling into the solver helpers, so it stays an
/// independent check on them.
class OracleObjective {
 public:
  OracleObjective(const MeasurementSet& meas,
                  const std::vector<Point>& rescuers,
                  const ChannelParams& params)
      : params_(params) {
    int victim = -1;
    for (const Measurement& m : meas.entries) {
      if (m.link.kind != LinkKind::VictimRescuer)
        throw precondition_error(
            "grid_oracle: single-victim set must not contain victim-victim "
            "links");
      if (victim < 0) victim = m.link.src;
      if (m.link.src != victim)
        throw precondition_error("grid_oracle: multiple victims in set");
      anchors_.push_back(rescuers.at(static_cast<std::size_t>(m.link.dst)));
      values_.push_back(m.value);
    }
    if (anchors_.empty())
      throw precondition_error("grid_oracle: empty measurement set");
    modality_ = meas.modality;
    if (modality_ == Modality::TdoaRangeDiff) {
      if (meas.tdoa_reference < 0)
        throw precondition_error("grid_oracle: missing tdoa reference");
      ref_ = rescuers.at(static_cast<std::size_t>(meas.tdoa_reference));
    } else if (modality_ == Modality::Rssd) {
      if (meas.rssd_reference.empty())
        throw precondition_error("grid_oracle: missing rssd reference");
      ref_ = rescuers.at(static_cast<std::size_t>(
          meas.rssd_reference.at(static_cast<std::size_t>(victim))));
    }
  }

  double operator()(double x, double y) const {
    switch (modality_) {
      case Modality::ToaRange:
        return toa(x, y);
      case Modality::TdoaRangeDiff:
        return tdoa(x, y);
      case Modality::AoaBearing:
        return aoa(x, y);
      case Modality::Rssd:
        return rssd(x, y);
      case Modality::Rss:
        return rss_profiled(x, y);
    }
    throw precondition_error("grid_oracle: unsupported modality");
  }

 private:
  double toa(double x, double y) const {
    double f = 0.0;
    for (std::size_t j = 0; j < anchors_.size(); ++j) {
      const double e = values_[j] - std::hypot(x - anchors_[j].x,
                                               y - anchors_[j].y);
      f += e * e;
    }
    return f;
  }

  double tdoa(double x, double y) const {
    const double d0 = std::hypot(x - ref_.x, y - ref_.y);
    double f = 0.0;
    for (std::size_t j = 0; j < anchors_.size(); ++j) {
      const double d = std::hypot(x - anchors_[j].x, y - anchors_[j].y);
      const double e = values_[j] - (d - d0);
      f += e * e;
    }
    return f;
  }

  double aoa(double x, double y) const {
    double f = 0.0;
    for (std::size_t j = 0; j < anchors_.size(); ++j) {
      const double phi = std::atan2(y - anchors_[j].y, x - anchors_[j].x);
      const double e = wrap_angle(values_[j] - phi);
      f += e * e;
    }
    return f;
  }

  double rssd(double x, double y) const {
    const double d_ref =
        std::max(std::hypot(x - ref_.x, y - ref_.y), 1e-9);
    const double c = 10.0 * params_.ple;
    double f = 0.0;
    for (std::size_t j = 0; j < anchors_.size(); ++j) {
      const double d =
          std::max(std::hypot(x - anchors_[j].x, y - anchors_[j].y), 1e-9);
      const double e = values_[j] - c * std::log10(d / d_ref);
      f += e * e;
    }
    return f;
  }

  // Unknown transmit power is linear in the model, so the per-point optimum
  // is the mean of (measured + reference loss + path loss); substitute it
  // back to get the profiled objective.
  double rss_profiled(double x, double y) const {
    const double c = 10.0 * params_.ple;
    double mean = 0.0;
    std::vector<double> path(anchors_.size());
    for (std::size_t j = 0; j < anchors_.size(); ++j) {
      const double d =
          std::max(std::hypot(x - anchors_[j].x, y - anchors_[j].y), 1e-9);
      path[j] = params_.ref_loss_db + c * std::log10(d / params_.ref_dist_m);
      mean += values_[j] + path[j];
    }
    mean /= static_cast<double>(anchors_.size());
    double f = 0.0;
    for (std::size_t j = 0; j < anchors_.size(); ++j) {
      const double e = values_[j] - (mean - path[j]);
      f += e * e;
    }
    return f;
  }

  Modality modality_ = Modality::ToaRange;
  std::vector<Point> anchors_;
  std::vector<double> values_;
  Point ref_{0.0, 0.0};
  ChannelParams params_;
};

}  // namespace detail

/// Exhaustive grid search over the modality's residual-norm objective.
/// Scans rows bottom-up, columns left-to-right, keeping strictly lower
/// values only, so ties resolve to the lowest y then lowest x. The result
/// is independent of any row partitioning because each cell is compared
/// against the running minimum in a fixed order.
inline GridOracleResult grid_oracle(const MeasurementSet& meas,
                                    const GridSpec& grid,
                                    const std::vector<Point>& rescuers,
                                    const ChannelParams& params) {
  if (!(grid.resolution > 0.0))
    throw precondition_error("grid_oracle: resolution must be positive");
  if (grid.bounds.degenerate())
    throw precondition_error("grid_oracle: degenerate bounds");
  const double nx_d = std::floor(grid.bounds.width() / grid.resolution + 1e-9) + 1.0;
  const double ny_d = std::floor(grid.bounds.height() / grid.resolution + 1e-9) + 1.0;
  if (nx_d * ny_d > kMaxGridCells)
    throw precondition_error("grid_oracle: grid larger than the cell guard");
  const int nx = static_cast<int>(nx_d);
  const int ny = static_cast<int>(ny_d);

  const detail::OracleObjective objective(meas, rescuers, params);

  GridOracleResult best;
  bool first = true;
  for (int iy = 0; iy < ny; ++iy) {
    const double y = grid.bounds.y0 + iy * grid.resolution;
    for (int ix = 0; ix < nx; ++ix) {
      const double x = grid.bounds.x0 + ix * grid.resolution;
      const double f = objective(x, y);
      if (first || f < best.objective) {
        best.point = {x, y};
        best.objective = f;
        first = false;
      }
    }
  }
  return best;
}

}  // namespace rloc
