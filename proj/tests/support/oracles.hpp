#pragma once

// Test-only oracles. Everything here is implemented independently of the
// library code paths it is used to check, and deliberately favours the
// dumbest correct formulation (dense scans, textbook algorithms) over speed.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include <Eigen/Core>

#include "bezbot/geometry.hpp"
#include "bezbot/image.hpp"

namespace oracles {

// Dense-grid closest point: scan a fine uniform s-grid on every segment.
inline double dense_grid_min_distance(const bezbot::BezierChain& chain,
                                      const bezbot::Point2& target, int grid_per_segment) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < chain.segments(); ++i) {
    for (int j = 0; j <= grid_per_segment; ++j) {
      const double s = static_cast<double>(j) / grid_per_segment;
      best = std::min(best, (bezbot::eval_chain(chain, i, s) - target).norm());
    }
  }
  return best;
}

// Central finite differences of a vector-valued function.
inline Eigen::MatrixXd finite_difference_jacobian(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x, double eps) {
  const Eigen::VectorXd f0 = f(x);
  Eigen::MatrixXd jac(f0.size(), x.size());
  for (int j = 0; j < x.size(); ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp[j] += eps;
    xm[j] -= eps;
    jac.col(j) = (f(xp) - f(xm)) / (2.0 * eps);
  }
  return jac;
}

inline double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a,
                                     const Eigen::Vector2d& b) {
  const Eigen::Vector2d ab = b - a;
  const double len2 = ab.squaredNorm();
  if (len2 == 0.0) return (p - a).norm();
  const double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
  return (p - (a + t * ab)).norm();
}

inline double distance_to_polyline(const Eigen::Vector2d& p,
                                   const std::vector<Eigen::Vector2d>& poly) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < poly.size(); ++i)
    best = std::min(best, point_segment_distance(p, poly[i], poly[i + 1]));
  if (poly.size() == 1) best = (p - poly[0]).norm();
  return best;
}

// Symmetric Hausdorff distance between two polylines, each treated as a
// continuous curve on one side and a point sample on the other.
inline double hausdorff(const std::vector<Eigen::Vector2d>& a,
                        const std::vector<Eigen::Vector2d>& b) {
  double h = 0.0;
  for (const auto& p : a) h = std::max(h, distance_to_polyline(p, b));
  for (const auto& p : b) h = std::max(h, distance_to_polyline(p, a));
  return h;
}

// Resample a polyline at `count` points uniformly spaced in arc length.
// `chebyshev` measures length as max(|dx|,|dy|), the spacing of an
// 8-connected pixel run, which is what a skeleton walk produces.
inline std::vector<Eigen::Vector2d> resample_polyline(const std::vector<Eigen::Vector2d>& poly,
                                                      int count, bool chebyshev = false) {
  std::vector<double> cum{0.0};
  for (std::size_t i = 1; i < poly.size(); ++i) {
    const Eigen::Vector2d d = poly[i] - poly[i - 1];
    cum.push_back(cum.back() +
                  (chebyshev ? std::max(std::abs(d.x()), std::abs(d.y())) : d.norm()));
  }
  const double total = cum.back();
  std::vector<Eigen::Vector2d> out;
  out.reserve(count);
  std::size_t seg = 0;
  for (int k = 0; k < count; ++k) {
    const double target = total * k / (count - 1);
    while (seg + 2 < poly.size() && cum[seg + 1] < target) ++seg;
    const double span = cum[seg + 1] - cum[seg];
    const double t = span > 0.0 ? (target - cum[seg]) / span : 0.0;
    out.push_back(poly[seg] + t * (poly[seg + 1] - poly[seg]));
  }
  return out;
}

// Textbook Zhang-Suen thinning on a padded boolean grid; full-image scans,
// no pixel bookkeeping. Used as the reference the optimized library
// implementation is compared against.
inline bezbot::BinaryImage reference_zhang_suen(const bezbot::BinaryImage& src) {
  const int w = src.width, h = src.height;
  std::vector<uint8_t> g(src.pixels.begin(), src.pixels.end());
  auto at = [&](int x, int y) -> uint8_t {
    if (x < 0 || y < 0 || x >= w || y >= h) return 0;
    return g[static_cast<std::size_t>(y) * w + x];
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (int pass = 0; pass < 2; ++pass) {
      std::vector<std::pair<int, int>> kill;
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (!at(x, y)) continue;
          const uint8_t p2 = at(x, y - 1), p3 = at(x + 1, y - 1), p4 = at(x + 1, y),
                        p5 = at(x + 1, y + 1), p6 = at(x, y + 1), p7 = at(x - 1, y + 1),
                        p8 = at(x - 1, y), p9 = at(x - 1, y - 1);
          const int bsum = p2 + p3 + p4 + p5 + p6 + p7 + p8 + p9;
          if (bsum < 2 || bsum > 6) continue;
          const uint8_t seq[9] = {p2, p3, p4, p5, p6, p7, p8, p9, p2};
          int transitions = 0;
          for (int i = 0; i < 8; ++i)
            if (seq[i] == 0 && seq[i + 1] == 1) ++transitions;
          if (transitions != 1) continue;
          if (pass == 0) {
            if (p2 * p4 * p6 != 0 || p4 * p6 * p8 != 0) continue;
          } else {
            if (p2 * p4 * p8 != 0 || p2 * p6 * p8 != 0) continue;
          }
          kill.emplace_back(x, y);
        }
      }
      for (auto [x, y] : kill) g[static_cast<std::size_t>(y) * w + x] = 0;
      if (!kill.empty()) changed = true;
    }
  }
  bezbot::BinaryImage out{w, h, {}};
  out.pixels.assign(g.begin(), g.end());
  return out;
}

}  // namespace oracles
