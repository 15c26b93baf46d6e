#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>

#include "bezbot/errors.hpp"

namespace bezbot {

// Image-space point, pixels. Origin top-left, x rightward, y downward.
using Point2 = Eigen::Vector2d;

// Piecewise quadratic Bezier curve with C0 continuity: segment i uses
// control points p_{2i}, p_{2i+1}, p_{2i+2}, so M segments share 2M+1 points.
// p_0 is the fixed base anchor of the view the chain was fitted in.
struct BezierChain {
  std::vector<Point2> ctrl;

  int segments() const { return static_cast<int>((ctrl.size() - 1) / 2); }

  bool valid() const {
    return ctrl.size() >= 3 && ctrl.size() % 2 == 1;
  }
};

// A point on the chain together with the (segment, local parameter) that
// produced it.
struct ChainSample {
  Point2 point;
  int segment = 0;
  double s = 0.0;
};

inline std::array<double, 3> bernstein_weights(double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw DomainError("bernstein parameter outside [0,1]");
  const double t = 1.0 - s;
  return {t * t, 2.0 * t * s, s * s};
}

inline Point2 eval_segment(const Point2& p0, const Point2& p1, const Point2& p2, double s) {
  const auto w = bernstein_weights(s);
  return w[0] * p0 + w[1] * p1 + w[2] * p2;
}

inline Point2 eval_chain(const BezierChain& chain, int segment, double s) {
  if (segment < 0 || segment >= chain.segments())
    throw DomainError("segment index out of range");
  const std::size_t base = 2 * static_cast<std::size_t>(segment);
  return eval_segment(chain.ctrl[base], chain.ctrl[base + 1], chain.ctrl[base + 2], s);
}

// n_d samples, n_d/M per segment at equally spaced s, ordered base to tip.
// Shared segment endpoints are sampled by both neighbouring segments and
// retained; a distance search over the samples is unaffected by duplicates.
inline std::vector<ChainSample> discretize_chain(const BezierChain& chain, int n_d) {
  const int m = chain.segments();
  if (n_d < 2) throw DomainError("discretization count must be >= 2");
  if (n_d % m != 0) throw DomainError("discretization count must be divisible by segment count");

  const int per_seg = n_d / m;
  std::vector<ChainSample> out;
  out.reserve(static_cast<std::size_t>(n_d));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < per_seg; ++j) {
      const double s = per_seg == 1 ? 0.0 : static_cast<double>(j) / (per_seg - 1);
      out.push_back({eval_chain(chain, i, s), i, s});
    }
  }
  return out;
}

// Nearest discretized sample to `target`. Ties break toward the smallest
// (segment, s) so replays are deterministic.
inline std::pair<ChainSample, double> closest_point(const BezierChain& chain,
                                                    const Point2& target, int n_d) {
  const auto samples = discretize_chain(chain, n_d);
  const ChainSample* best = &samples.front();
  double best_d2 = (samples.front().point - target).squaredNorm();
  for (const auto& s : samples) {
    const double d2 = (s.point - target).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = &s;
    }
  }
  return {*best, std::sqrt(best_d2)};
}

// Derivative of the sampled point w.r.t. the per-view shape parameters
// [x(p_1..p_2M), y(p_1..p_2M)] (p_0 is pinned, so it has no columns).
// Rows are the point's (x, y); the nonzero entries are the Bernstein
// weights of the sample's segment.
inline Eigen::Matrix<double, 2, Eigen::Dynamic> chain_point_jacobian(const ChainSample& sample,
                                                                     int segment_count) {
  if (sample.segment < 0 || sample.segment >= segment_count)
    throw DomainError("sample segment out of range");
  const int n_params = 4 * segment_count;  // 2M points, x block then y block
  Eigen::Matrix<double, 2, Eigen::Dynamic> jac =
      Eigen::Matrix<double, 2, Eigen::Dynamic>::Zero(2, n_params);
  const auto w = bernstein_weights(sample.s);
  for (int b = 0; b < 3; ++b) {
    const int point_index = 2 * sample.segment + b;  // p_{2i+b}
    if (point_index == 0) continue;                  // base anchor is fixed
    const int col = point_index - 1;                 // p_1 -> column 0
    jac(0, col) = w[b];
    jac(1, col + 2 * segment_count) = w[b];
  }
  return jac;
}

// Per-view shape velocity realizing a desired velocity of the sampled
// point, via the damped pseudo-inverse of chain_point_jacobian. With zero
// damping, pushing the result back through the forward map recovers v_c
// exactly whenever the sample involves at least one free control point.
inline Eigen::VectorXd distribute_velocity(const ChainSample& sample, const Point2& v_c,
                                           int segment_count, double lambda_pinv) {
  const auto jac = chain_point_jacobian(sample, segment_count);
  if (jac.isZero())  // sample sits on the pinned base point; nothing to move
    return Eigen::VectorXd::Zero(jac.cols());
  Eigen::Matrix2d gram = jac * jac.transpose();
  gram += lambda_pinv * lambda_pinv * Eigen::Matrix2d::Identity();
  return jac.transpose() * gram.ldlt().solve(v_c);
}

}  // namespace bezbot
