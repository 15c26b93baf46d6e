#pragma once

// Plant-side oracles used by closed-loop tests: a noiseless shape
// measurement that fits the exact projected centerline (no pixels), and
// finite-difference Jacobians of the lag-free static plant maps.

#include <Eigen/Core>

#include "bezbot/encoding.hpp"
#include "bezbot/plant.hpp"
#include "support/oracles.hpp"

namespace plant_oracles {

struct BypassViews {
  bezbot::ViewSpec v1;
  bezbot::ViewSpec v2;
  bezbot::EncodeConfig enc;

  BypassViews() {
    v1.view_id = 1;
    v2.view_id = 2;
  }
};

// Continuous shape measurement: project the backbone and fit the chains to
// the exact centerlines, resampled like a pixel run.
inline Eigen::VectorXd bypass_shape(const bezbot::PlantState& state, const BypassViews& views,
                                    std::pair<bezbot::BezierChain, bezbot::BezierChain>* chains = nullptr) {
  std::vector<Eigen::Vector2d> cl1, cl2;
  for (const auto& p : state.backbone) {
    cl1.push_back(views.v1.project(p));
    cl2.push_back(views.v2.project(p));
  }
  const auto s1 = oracles::resample_polyline(cl1, 300, true);
  const auto s2 = oracles::resample_polyline(cl2, 300, true);
  const auto c1 = bezbot::fit_chain(s1, views.enc.segments, views.enc.anchor_view1);
  const auto c2 = bezbot::fit_chain(s2, views.enc.segments, views.enc.anchor_view2);
  if (chains) *chains = {c1, c2};
  return bezbot::shape_state_from_chains(c1, c2);
}

// d(measured shape)/du of the lag-free plant, central differences.
inline Eigen::MatrixXd shape_jacobian_fd(const bezbot::PlantParams& params,
                                         const Eigen::VectorXd& u, const BypassViews& views,
                                         double du = 1e-4) {
  Eigen::MatrixXd jac(bezbot::shape_state_dim(views.enc.segments), u.size());
  for (int j = 0; j < u.size(); ++j) {
    Eigen::VectorXd up = u, dn = u;
    up[j] += du;
    dn[j] -= du;
    jac.col(j) = (bypass_shape(bezbot::make_state(params, up), views) -
                  bypass_shape(bezbot::make_state(params, dn), views)) /
                 (2.0 * du);
  }
  return jac;
}

// d(tip)/du of the lag-free plant, central differences.
inline Eigen::MatrixXd tip_jacobian_fd(const bezbot::PlantParams& params,
                                       const Eigen::VectorXd& u, double du = 1e-4) {
  Eigen::MatrixXd jac(3, u.size());
  for (int j = 0; j < u.size(); ++j) {
    Eigen::VectorXd up = u, dn = u;
    up[j] += du;
    dn[j] -= du;
    jac.col(j) = (bezbot::make_state(params, up).tip - bezbot::make_state(params, dn).tip) /
                 (2.0 * du);
  }
  return jac;
}

}  // namespace plant_oracles
