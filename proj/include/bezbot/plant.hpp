#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "bezbot/errors.hpp"
#include "bezbot/geometry.hpp"
#include "bezbot/image.hpp"

namespace bezbot {

// Synthetic cable-driven continuum robot: three 0.1 m segments, each bent
// by an antagonistic cable pair per axis, modelled as piecewise constant
// curvature. The robot hangs from the origin toward world -Y; world X is
// the view-1 image axis, world Z the view-2 image axis.
struct PlantParams {
  int segments = 3;
  double seg_len = 0.1;          // m
  double curvature_gain = 4.5;   // rad/m per unit input; keeps total bend under 90 deg
                                 // so neither view projection can fold onto itself
  double cubic_eps = 0.08;       // input nonlinearity strength
  double tau = 0.05;             // actuator lag time constant, s (0 disables)
  double u_dot_max = 0.8;        // per-component rate limit, 1/s
  int pts_per_seg = 40;          // backbone samples per segment

  int actuators() const { return 2 * segments; }
  double total_len() const { return seg_len * segments; }
};

struct PlantState {
  Eigen::VectorXd u_cmd;   // commanded cable differentials, in [-1, 1]
  Eigen::VectorXd u_eff;   // lag-filtered value actually driving the body
  Eigen::VectorXd q;       // per-segment (kappa_x, kappa_y)
  std::vector<Eigen::Vector3d> backbone;
  Eigen::Vector3d tip = Eigen::Vector3d::Zero();
};

// kappa = gain * (u + eps * u^3), componentwise; the cubic term keeps the
// plant from being exactly linear in the inputs.
inline Eigen::VectorXd cable_to_config(const PlantParams& p, const Eigen::VectorXd& u) {
  Eigen::VectorXd q(u.size());
  for (int i = 0; i < u.size(); ++i)
    q[i] = p.curvature_gain * (u[i] + p.cubic_eps * u[i] * u[i] * u[i]);
  return q;
}

namespace detail {

// Constant-curvature arc in a local frame with the segment initially along
// +z and bending toward the direction (cos phi, sin phi, 0).
inline Eigen::Vector3d arc_point(double curvature, double phi, double arclen) {
  const double theta = curvature * arclen;
  double f_lat, f_fwd;  // (1-cos)/k and sin/k, series-expanded near zero
  if (std::abs(theta) < 1e-6) {
    f_lat = arclen * theta / 2.0 * (1.0 - theta * theta / 12.0);
    f_fwd = arclen * (1.0 - theta * theta / 6.0);
  } else {
    f_lat = (1.0 - std::cos(theta)) / curvature;
    f_fwd = std::sin(theta) / curvature;
  }
  return {std::cos(phi) * f_lat, std::sin(phi) * f_lat, f_fwd};
}

inline Eigen::Matrix3d arc_rotation(double curvature, double phi, double arclen) {
  const double theta = curvature * arclen;
  const Eigen::Matrix3d rz_phi = Eigen::AngleAxisd(phi, Eigen::Vector3d::UnitZ()).matrix();
  const Eigen::Matrix3d ry = Eigen::AngleAxisd(theta, Eigen::Vector3d::UnitY()).matrix();
  return rz_phi * ry * rz_phi.transpose();
}

}  // namespace detail

// Compose per-segment arcs. Base frame maps local +z to world -Y so the
// straight robot points down; local x -> world X, local y -> world Z.
inline std::vector<Eigen::Vector3d> forward_kinematics(const PlantParams& p,
                                                       const Eigen::VectorXd& q,
                                                       int pts_per_seg = -1) {
  if (pts_per_seg <= 0) pts_per_seg = p.pts_per_seg;
  Eigen::Matrix3d base;
  base << 1, 0, 0,
          0, 0, -1,
          0, 1, 0;  // columns: local x, y, z in world coordinates

  std::vector<Eigen::Vector3d> backbone;
  backbone.reserve(1 + static_cast<std::size_t>(p.segments) * pts_per_seg);
  backbone.emplace_back(Eigen::Vector3d::Zero());

  Eigen::Vector3d origin = Eigen::Vector3d::Zero();
  Eigen::Matrix3d rot = base;
  for (int i = 0; i < p.segments; ++i) {
    const double kx = q[2 * i], ky = q[2 * i + 1];
    const double k = std::hypot(kx, ky);
    const double phi = (k > 0.0) ? std::atan2(ky, kx) : 0.0;
    for (int j = 1; j <= pts_per_seg; ++j) {
      const double ell = p.seg_len * j / pts_per_seg;
      backbone.push_back(origin + rot * detail::arc_point(k, phi, ell));
    }
    origin += rot * detail::arc_point(k, phi, p.seg_len);
    rot = rot * detail::arc_rotation(k, phi, p.seg_len);
  }
  return backbone;
}

inline PlantState make_state(const PlantParams& p, const Eigen::VectorXd& u) {
  PlantState s;
  s.u_cmd = u.cwiseMax(-1.0).cwiseMin(1.0);
  s.u_eff = s.u_cmd;
  s.q = cable_to_config(p, s.u_eff);
  s.backbone = forward_kinematics(p, s.q);
  s.tip = s.backbone.back();
  return s;
}

// One control period: integrate the commanded rate (rate-limited, clamped
// to [-1,1]), relax the effective actuation toward the command with time
// constant tau, recompute the body.
inline PlantState step(const PlantParams& p, const PlantState& state,
                       const Eigen::VectorXd& u_dot, double dt) {
  if (dt <= 0.0) throw DomainError("step requires dt > 0");
  PlantState next;
  const Eigen::VectorXd rate = u_dot.cwiseMax(-p.u_dot_max).cwiseMin(p.u_dot_max);
  next.u_cmd = (state.u_cmd + rate * dt).cwiseMax(-1.0).cwiseMin(1.0);
  if (p.tau > 0.0) {
    const double a = std::exp(-dt / p.tau);
    next.u_eff = next.u_cmd + (state.u_eff - next.u_cmd) * a;
  } else {
    next.u_eff = next.u_cmd;
  }
  next.q = cable_to_config(p, next.u_eff);
  next.backbone = forward_kinematics(p, next.q);
  next.tip = next.backbone.back();
  return next;
}

inline Eigen::Vector3d measure_tip(const PlantState& state, double noise_std,
                                   std::mt19937_64& rng) {
  if (noise_std <= 0.0) return state.tip;
  std::normal_distribution<double> n(0.0, noise_std);
  return state.tip + Eigen::Vector3d(n(rng), n(rng), n(rng));
}

// Orthographic camera. View 1 images the world X-Y plane, view 2 the
// Z-Y plane; both share the scale and map the robot base to `anchor`.
struct ViewSpec {
  int view_id = 1;
  double scale = 600.0;  // px per metre
  Point2 anchor = Point2(128.0, 24.0);
  double stroke_width = 9.0;  // px
  int width = 256;
  int height = 256;

  Point2 project(const Eigen::Vector3d& p) const {
    const double lateral = view_id == 1 ? p.x() : p.z();
    return {anchor.x() + scale * lateral, anchor.y() - scale * p.y()};
  }
};

struct RenderResult {
  GrayImage image;
  std::vector<Point2> centerline;  // projected backbone, px
  BinaryImage stroke_mask;         // pixels within stroke_width/2 of the centerline
};

// Rasterize the projected backbone as an anti-aliased stroke: per pixel,
// distance to the centerline polyline, one-pixel linear edge ramp,
// quantized to 8 bits. Background 0, stroke core 255.
inline RenderResult render(const PlantState& state, const ViewSpec& view) {
  RenderResult out;
  out.centerline.reserve(state.backbone.size());
  const double half = view.stroke_width / 2.0;
  for (const auto& p : state.backbone) {
    const Point2 px = view.project(p);
    if (px.x() < half || px.y() < half || px.x() > view.width - 1 - half ||
        px.y() > view.height - 1 - half)
      throw ViewportOverflow("backbone leaves view " + std::to_string(view.view_id));
    out.centerline.push_back(px);
  }

  std::vector<float> dist(static_cast<std::size_t>(view.width) * view.height,
                          std::numeric_limits<float>::infinity());
  const double reach = half + 1.5;
  for (std::size_t i = 0; i + 1 < out.centerline.size(); ++i) {
    const Point2& a = out.centerline[i];
    const Point2& b = out.centerline[i + 1];
    const int x0 = std::max(0, static_cast<int>(std::floor(std::min(a.x(), b.x()) - reach)));
    const int x1 = std::min(view.width - 1, static_cast<int>(std::ceil(std::max(a.x(), b.x()) + reach)));
    const int y0 = std::max(0, static_cast<int>(std::floor(std::min(a.y(), b.y()) - reach)));
    const int y1 = std::min(view.height - 1, static_cast<int>(std::ceil(std::max(a.y(), b.y()) + reach)));
    const Point2 ab = b - a;
    const double len2 = ab.squaredNorm();
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Point2 p(x, y);
        double t = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double d = (p - (a + t * ab)).norm();
        auto& cell = dist[static_cast<std::size_t>(y) * view.width + x];
        cell = std::min(cell, static_cast<float>(d));
      }
    }
  }

  out.image = GrayImage::zeros(view.width, view.height);
  out.stroke_mask = BinaryImage::zeros(view.width, view.height);
  for (std::size_t i = 0; i < dist.size(); ++i) {
    const double cov = std::clamp(half + 0.5 - dist[i], 0.0, 1.0);
    out.image.pixels[i] = static_cast<uint8_t>(std::lround(255.0 * cov));
    out.stroke_mask.pixels[i] = dist[i] <= half;
  }
  return out;
}

}  // namespace bezbot
