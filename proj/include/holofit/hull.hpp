#pragma once

// Planar convex hulls and point-to-hull distances, used for the
// flexion/abduction feasibility regions.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "holofit/error.hpp"
#include "holofit/linalg.hpp"

namespace holofit {

using Polygon = std::vector<Vec2<double>>;

inline double cross2(const Vec2<double>& o, const Vec2<double>& a, const Vec2<double>& b) {
  return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
}

/// Counterclockwise convex hull by Andrew's monotone chain. Points on the
/// boundary that are collinear with their neighbours are dropped.
inline Polygon convex_hull_2d(std::span<const Vec2<double>> points) {
  Polygon p(points.begin(), points.end());
  std::sort(p.begin(), p.end(), [](const auto& a, const auto& b) {
    return a.x < b.x || (a.x == b.x && a.y < b.y);
  });
  p.erase(std::unique(p.begin(), p.end(), [](const auto& a, const auto& b) { return a.x == b.x && a.y == b.y; }),
          p.end());
  if (p.size() < 3) fail(ErrorKind::DegenerateHull, "fewer than 3 distinct points");

  Polygon hull(2 * p.size());
  std::size_t k = 0;
  for (const auto& q : p) {
    while (k >= 2 && cross2(hull[k - 2], hull[k - 1], q) <= 0) --k;
    hull[k++] = q;
  }
  for (std::size_t i = p.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross2(hull[k - 2], hull[k - 1], p[i]) <= 0) --k;
    hull[k++] = p[i];
  }
  hull.resize(k - 1);
  if (hull.size() < 3) fail(ErrorKind::DegenerateHull, "all points are collinear");
  return hull;
}

/// True when `poly` has at least 3 vertices, is strictly convex and
/// counterclockwise.
inline bool is_ccw_convex(const Polygon& poly) {
  const std::size_t n = poly.size();
  if (n < 3) return false;
  for (std::size_t i = 0; i < n; ++i)
    if (cross2(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]) <= 0) return false;
  return true;
}

/// Squared Euclidean distance from `p` to a counterclockwise convex polygon;
/// zero inside or on the boundary.
template <class S>
S hull_distance_squared(const Vec2<S>& p, const Polygon& hull) {
  const std::size_t n = hull.size();
  bool inside = true;
  for (std::size_t i = 0; i < n && inside; ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % n];
    const double c = (b.x - a.x) * (value(p.y) - a.y) - (b.y - a.y) * (value(p.x) - a.x);
    if (c < 0) inside = false;
  }
  if (inside) return S(0.0);

  S best(0.0);
  double best_value = INFINITY;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = hull[i];
    const auto& b = hull[(i + 1) % n];
    const double ex = b.x - a.x, ey = b.y - a.y;
    const double len2 = ex * ex + ey * ey;
    S t = ((p.x - S(a.x)) * S(ex) + (p.y - S(a.y)) * S(ey)) / S(len2);
    if (value(t) < 0.0) t = S(0.0);
    if (value(t) > 1.0) t = S(1.0);
    const S dx = p.x - (S(a.x) + t * S(ex));
    const S dy = p.y - (S(a.y) + t * S(ey));
    const S d2 = dx * dx + dy * dy;
    if (value(d2) < best_value) {
      best_value = value(d2);
      best = d2;
    }
  }
  return best;
}

inline double hull_distance(const Vec2<double>& p, const Polygon& hull) {
  return std::sqrt(hull_distance_squared<double>(p, hull));
}

inline bool hull_contains(const Vec2<double>& p, const Polygon& hull, double tol = 1e-12) {
  return hull_distance(p, hull) <= tol;
}

}  // namespace holofit
