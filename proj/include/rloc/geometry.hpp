#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace rloc {

/// 2-D position in meters.
struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
inline Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
inline Point operator*(double s, Point p) { return {s * p.x, s * p.y}; }

/// Axis-aligned rectangle, corners (x0,y0) inclusive to (x1,y1) inclusive.
struct Rect {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  Point center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }
  bool contains(Point p) const {
    return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1;
  }
  bool degenerate() const { return !(x1 > x0) || !(y1 > y0); }

  static Rect square(double side) { return {0.0, 0.0, side, side}; }

  friend bool operator==(const Rect&, const Rect&) = default;
};

inline double distance(Point p, Point q) {
  return std::hypot(p.x - q.x, p.y - q.y);
}

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double theta) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  double w = std::fmod(theta + std::numbers::pi, two_pi);
  if (w <= 0.0) w += two_pi;
  return w - std::numbers::pi;
}

/// True when all points lie on one line within an angular tolerance.
/// The test compares the eigenvalues of the 2x2 scatter matrix: the point set
/// counts as collinear when the minor axis is below tan(tol)^2 of the major.
inline bool collinear(std::span<const Point> pts, double tol_rad = 1e-6) {
  if (pts.size() < 3) return true;
  double mx = 0.0, my = 0.0;
  for (const Point& p : pts) {
    mx += p.x;
    my += p.y;
  }
  mx /= static_cast<double>(pts.size());
  my /= static_cast<double>(pts.size());
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const Point& p : pts) {
    const double dx = p.x - mx, dy = p.y - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  // Eigenvalues of [[sxx, sxy], [sxy, syy]].
  const double tr = sxx + syy;
  const double det = sxx * syy - sxy * sxy;
  const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
  const double lam_max = 0.5 * tr + disc;
  const double lam_min = 0.5 * tr - disc;
  if (lam_max <= 0.0) return true;  // all points coincide
  const double t = std::tan(tol_rad);
  return lam_min <= t * t * lam_max;
}

}  // namespace rloc
