#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

#include "bezbot/errors.hpp"
#include "bezbot/geometry.hpp"
#include "bezbot/image.hpp"
#include "bezbot/morphology.hpp"

namespace bezbot {

constexpr int kViews = 2;

// Dimension of the stacked multi-view shape state: 2 coordinates for each
// of the 2M free control points in each view.
constexpr int shape_state_dim(int segments) { return 4 * segments * kViews; }

// Fit an M-segment quadratic chain to an ordered point run. The run is
// split into M equal ordered subsets (remainder to the last); segment
// endpoints come from the subset boundaries except p_0, which is pinned to
// the view's base anchor. Each intermediate point has the closed-form
// least-squares solution p = (sum w_j r_j) / (sum w_j^2) with
// w_j = 2(1-s_j)s_j and r_j the endpoint-stripped residual.
inline BezierChain fit_chain(const std::vector<Point2>& points, int segments,
                             const Point2& base_anchor) {
  const int n = static_cast<int>(points.size());
  // every segment needs an interior sample, so 3 points per subset
  if (n < 3 * segments)
    throw FitUnderdetermined("need at least " + std::to_string(3 * segments) +
                             " skeleton points, got " + std::to_string(n));

  BezierChain chain;
  chain.ctrl.assign(2 * segments + 1, Point2::Zero());
  chain.ctrl[0] = base_anchor;

  const int base_count = n / segments;
  int offset = 0;
  for (int i = 0; i < segments; ++i) {
    const int n_i = (i == segments - 1) ? n - offset : base_count;
    chain.ctrl[2 * i + 2] = points[offset + n_i - 1];

    const Point2& a = chain.ctrl[2 * i];
    const Point2& c = chain.ctrl[2 * i + 2];
    double denom = 0.0;
    Point2 numer = Point2::Zero();
    for (int j = 0; j < n_i; ++j) {
      const double s = static_cast<double>(j) / (n_i - 1);
      const double w = 2.0 * (1.0 - s) * s;
      const Point2 r = points[offset + j] - (1.0 - s) * (1.0 - s) * a - s * s * c;
      numer += w * r;
      denom += w * w;
    }
    if (denom <= 0.0) throw FitUnderdetermined("segment has no interior samples");
    chain.ctrl[2 * i + 1] = numer / denom;
    offset += n_i;
  }
  return chain;
}

inline std::vector<Point2> to_points(const std::vector<PixelCoord>& px) {
  std::vector<Point2> out;
  out.reserve(px.size());
  for (const auto& p : px) out.push_back(p.cast<double>());
  return out;
}

struct EncodeConfig {
  int segments = 3;
  BinarizeOptions binarize;
  int close_radius = 2;
  int spur_len = 3;
  int end_extension = 24;  // max ridge-following pixels walked back into the mask per end
  Point2 anchor_view1 = Point2(128.0, 24.0);
  Point2 anchor_view2 = Point2(128.0, 24.0);

  const Point2& anchor(int view) const { return view == 1 ? anchor_view1 : anchor_view2; }
};

// Full single-view pipeline: binarize, keep largest component, close,
// thin, order, extend eroded ends back into the mask, fit.
inline BezierChain encode_view(const GrayImage& img, const Point2& anchor,
                               const EncodeConfig& cfg) {
  const BinaryImage fg = binarize(img, cfg.binarize);
  const BinaryImage robot = largest_component(fg);
  const BinaryImage closed = close(robot, cfg.close_radius);
  const BinaryImage skel = skeletonize(closed);
  const auto path = order_skeleton(skel, anchor, cfg.spur_len);
  const auto pts = extend_into_mask(path, closed, cfg.end_extension);
  return fit_chain(pts, cfg.segments, anchor);
}

// x_s layout (M segments, 2 views):
//   [ x(v1 p_1..p_2M) | x(v2 p_1..p_2M) | y(v1 p_1..p_2M) | y(v2 p_1..p_2M) ]
// i.e. the stacked columns of [S_1, S_2]^T with S_k = [p_1 ... p_2M].
inline Eigen::VectorXd shape_state_from_chains(const BezierChain& view1,
                                               const BezierChain& view2) {
  const int m = view1.segments();
  if (view2.segments() != m) throw DomainError("view chains disagree on segment count");
  Eigen::VectorXd xs(shape_state_dim(m));
  const int n = 2 * m;
  for (int k = 1; k <= n; ++k) {
    xs[k - 1] = view1.ctrl[k].x();
    xs[n + k - 1] = view2.ctrl[k].x();
    xs[2 * n + k - 1] = view1.ctrl[k].y();
    xs[3 * n + k - 1] = view2.ctrl[k].y();
  }
  return xs;
}

inline std::pair<BezierChain, BezierChain> chains_from_state(const Eigen::VectorXd& xs,
                                                             const Point2& anchor1,
                                                             const Point2& anchor2,
                                                             int segments) {
  if (xs.size() != shape_state_dim(segments))
    throw DomainError("shape state has wrong dimension");
  const int n = 2 * segments;
  BezierChain c1, c2;
  c1.ctrl.assign(n + 1, Point2::Zero());
  c2.ctrl.assign(n + 1, Point2::Zero());
  c1.ctrl[0] = anchor1;
  c2.ctrl[0] = anchor2;
  for (int k = 1; k <= n; ++k) {
    c1.ctrl[k] = Point2(xs[k - 1], xs[2 * n + k - 1]);
    c2.ctrl[k] = Point2(xs[n + k - 1], xs[3 * n + k - 1]);
  }
  return {c1, c2};
}

// Per-view parameter vector [x(p_1..p_2M), y(p_1..p_2M)] — the layout
// chain_point_jacobian and distribute_velocity use.
inline Eigen::VectorXd extract_view(const Eigen::VectorXd& xs, int view, int segments) {
  const int n = 2 * segments;
  Eigen::VectorXd v(2 * n);
  const int xoff = (view - 1) * n, yoff = 2 * n + (view - 1) * n;
  v.head(n) = xs.segment(xoff, n);
  v.tail(n) = xs.segment(yoff, n);
  return v;
}

// Embed a per-view parameter velocity into the full state, other view zero.
inline Eigen::VectorXd embed_view(const Eigen::VectorXd& view_vec, int view, int segments) {
  const int n = 2 * segments;
  if (view_vec.size() != 2 * n) throw DomainError("per-view vector has wrong dimension");
  Eigen::VectorXd xs = Eigen::VectorXd::Zero(shape_state_dim(segments));
  const int xoff = (view - 1) * n, yoff = 2 * n + (view - 1) * n;
  xs.segment(xoff, n) = view_vec.head(n);
  xs.segment(yoff, n) = view_vec.tail(n);
  return xs;
}

// Encode both views into the stacked shape state. Per-view failures are
// re-thrown tagged with the view id.
inline Eigen::VectorXd encode_views(const GrayImage& img1, const GrayImage& img2,
                                    const EncodeConfig& cfg,
                                    std::pair<BezierChain, BezierChain>* chains_out = nullptr) {
  BezierChain c1, c2;
  try {
    c1 = encode_view(img1, cfg.anchor_view1, cfg);
  } catch (const Error& e) {
    throw EncodingError(1, e.what());
  }
  try {
    c2 = encode_view(img2, cfg.anchor_view2, cfg);
  } catch (const Error& e) {
    throw EncodingError(2, e.what());
  }
  if (chains_out) *chains_out = {c1, c2};
  return shape_state_from_chains(c1, c2);
}

}  // namespace bezbot
