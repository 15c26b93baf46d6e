#pragma once

#include <utility>

#include <Eigen/Core>

#include "bezbot/control.hpp"
#include "bezbot/encoding.hpp"
#include "bezbot/errors.hpp"
#include "bezbot/geometry.hpp"

namespace bezbot {

struct AvoidanceConfig {
  double d_w = 25.0;       // warning distance, px
  double alpha = 0.001;    // escape gain
  int n_d = 300;           // closest-point discretization
  double lambda_pinv = 1e-6;  // damping for the point-velocity distribution
};

struct ViewDistance {
  double d = 0.0;
  ChainSample sample;
};

inline ViewDistance view_distance(const BezierChain& chain, const Point2& p_obs, int n_d) {
  auto [sample, d] = closest_point(chain, p_obs, n_d);
  return {d, sample};
}

// Unit vector pushing the closest point away from the obstacle.
inline Point2 escape_velocity(const ChainSample& sample, const Point2& p_obs) {
  const Point2 diff = sample.point - p_obs;
  const double n = diff.norm();
  if (n == 0.0) throw DegenerateContact();
  return diff / n;
}

// Escape command for one view: distribute the point velocity over that
// view's control points, embed with the other view zeroed so the escape
// disturbs it as little as possible, map to actuation through the
// transpose of the shape Jacobian, and scale by the penetration gain
// alpha (d_w - d). The transpose is the gradient-style force mapping: the
// realized shape motion always has a nonnegative component along v_s. A
// pseudo-inverse here would instead solve a tracking problem whose many
// hold-still coordinates swamp the few escape coordinates and produce
// almost no motion of the closest point.
inline Eigen::VectorXd escape_control_step(double d, const AvoidanceConfig& cfg,
                                           const JacobianEstimate& j_s,
                                           const ChainSample& sample, const Point2& v_c,
                                           int view, int segments) {
  const Eigen::VectorXd v_view = distribute_velocity(sample, v_c, segments, cfg.lambda_pinv);
  const Eigen::VectorXd v_s = embed_view(v_view, view, segments);
  return cfg.alpha * (cfg.d_w - d) * (j_s.matrix.transpose() * v_s);
}

// Eq-style selector between the two views' escape commands: escape in the
// view that is farther from the obstacle, ties to view 2.
template <typename T>
inline const T& select_escape_view(double d1, double d2, const T& escape1, const T& escape2) {
  return d1 > d2 ? escape1 : escape2;
}

inline int selected_view(double d1, double d2) { return d1 > d2 ? 1 : 2; }

// Direction-preserving saturation: a per-component clamp on a strongly
// saturated escape command would reduce it to its sign pattern and lose
// the balance the pseudo-inverse computed.
inline Eigen::VectorXd scale_to_rate(const Eigen::VectorXd& v, double bound) {
  const double peak = v.cwiseAbs().maxCoeff();
  return peak > bound ? Eigen::VectorXd(v * (bound / peak)) : v;
}

// Overall command: regular shape-position control while at least one view
// is clear of the warning distance; otherwise the selected escape command
// plus position control, saturated without changing direction.
inline Eigen::VectorXd overall_step(double d1, double d2, double d_w,
                                    const Eigen::VectorXd& shape_cmd,
                                    const Eigen::VectorXd& position_cmd,
                                    const Eigen::VectorXd& obstacle_cmd, double u_dot_max) {
  if (d1 > d_w || d2 > d_w) return clamp_rate(shape_cmd + position_cmd, u_dot_max);
  const Eigen::VectorXd escape = scale_to_rate(obstacle_cmd, 0.9 * u_dot_max);
  return scale_to_rate(escape + position_cmd, u_dot_max);
}

inline bool avoidance_active(double d1, double d2, double d_w) {
  return !(d1 > d_w || d2 > d_w);
}

}  // namespace bezbot
