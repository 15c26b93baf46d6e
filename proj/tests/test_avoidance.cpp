#include <catch2/catch.hpp>

#include <random>

#include "bezbot/avoidance.hpp"
#include "bezbot/plant.hpp"
#include "support/plant_oracles.hpp"

using bezbot::AvoidanceConfig;
using bezbot::BezierChain;
using bezbot::ChainSample;
using bezbot::Point2;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

BezierChain straight_chain() {
  BezierChain c;
  c.ctrl.resize(7);
  for (int i = 0; i < 7; ++i) c.ctrl[i] = Point2(128, 24 + 30 * i);
  return c;
}

bezbot::JacobianEstimate wrap(const MatrixXd& j) {
  bezbot::JacobianEstimate e;
  e.matrix = j;
  e.one_sided.assign(j.cols(), 0);
  return e;
}

}  // namespace

TEST_CASE("view_distance: on-curve obstacle and lateral offset", "[avoidance]") {
  const auto chain = straight_chain();
  const auto on = bezbot::view_distance(chain, Point2(128, 100), 300);
  CHECK(on.d < 1.0);  // within one grid step

  const auto off = bezbot::view_distance(chain, Point2(170, 100), 300);
  CHECK(off.d == Approx(42.0).margin(1.0));
  CHECK(off.sample.point.x() == Approx(128.0).margin(1e-9));
}

TEST_CASE("escape_velocity: direction, unit norm, degenerate contact", "[avoidance]") {
  ChainSample s{Point2(10, 0), 0, 0.5};
  const Point2 v = bezbot::escape_velocity(s, Point2(0, 0));
  CHECK(v.x() == Approx(1.0));
  CHECK(v.y() == Approx(0.0).margin(1e-15));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> d(-50.0, 50.0);
  for (int i = 0; i < 50; ++i) {
    ChainSample r{Point2(d(rng), d(rng)), 1, 0.3};
    const Point2 obs(d(rng), d(rng));
    if ((r.point - obs).norm() == 0.0) continue;
    REQUIRE(bezbot::escape_velocity(r, obs).norm() == Approx(1.0).margin(1e-12));
  }

  ChainSample touching{Point2(5, 5), 0, 0.5};
  CHECK_THROWS_AS(bezbot::escape_velocity(touching, Point2(5, 5)), bezbot::DegenerateContact);
}

TEST_CASE("escape_control_step: zero at the warning distance, linear in penetration",
          "[avoidance]") {
  AvoidanceConfig cfg;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  MatrixXd js(24, 6);
  for (int r = 0; r < 24; ++r)
    for (int c = 0; c < 6; ++c) js(r, c) = d(rng);
  const ChainSample sample{Point2(140, 80), 1, 0.4};
  const Point2 v_c(0.6, -0.8);

  const VectorXd at_dw =
      bezbot::escape_control_step(cfg.d_w, cfg, wrap(js), sample, v_c, 1, 3);
  CHECK(at_dw.norm() == Approx(0.0).margin(1e-15));

  const VectorXd pen10 =
      bezbot::escape_control_step(cfg.d_w - 10.0, cfg, wrap(js), sample, v_c, 1, 3);
  const VectorXd pen5 =
      bezbot::escape_control_step(cfg.d_w - 5.0, cfg, wrap(js), sample, v_c, 1, 3);
  CHECK((pen10 - 2.0 * pen5).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("escape command leaves the untouched view's block out of the task", "[avoidance]") {
  // with the identity as a fake Jacobian pseudo-inverse path, the command
  // must not involve the other view's rows; verify via the embedded task
  const ChainSample sample{Point2(140, 80), 2, 1.0};  // weight on p_6 only
  const Point2 v_c(1.0, 0.0);
  const VectorXd v_view = bezbot::distribute_velocity(sample, v_c, 3, 0.0);
  for (int view : {1, 2}) {
    const VectorXd v_s = bezbot::embed_view(v_view, view, 3);
    const VectorXd other = bezbot::extract_view(v_s, view == 1 ? 2 : 1, 3);
    REQUIRE(other.norm() == 0.0);
    REQUIRE(bezbot::extract_view(v_s, view, 3).isApprox(v_view));
  }
}

TEST_CASE("view selector follows the distance comparison", "[avoidance]") {
  const VectorXd e1 = VectorXd::Constant(6, 1.0);
  const VectorXd e2 = VectorXd::Constant(6, 2.0);
  CHECK(bezbot::select_escape_view(30.0, 10.0, e1, e2) == e1);
  CHECK(bezbot::selected_view(30.0, 10.0) == 1);
  CHECK(bezbot::select_escape_view(10.0, 30.0, e1, e2) == e2);
  CHECK(bezbot::selected_view(10.0, 30.0) == 2);
  CHECK(bezbot::select_escape_view(10.0, 10.0, e1, e2) == e2);  // tie -> else arm
  CHECK(bezbot::selected_view(10.0, 10.0) == 2);
}

TEST_CASE("overall_step switches exactly on the warning predicate", "[avoidance]") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> d(-0.3, 0.3);
  const VectorXd us = VectorXd::NullaryExpr(6, [&] { return d(rng); });
  const VectorXd up = VectorXd::NullaryExpr(6, [&] { return d(rng); });
  const VectorXd uo = VectorXd::NullaryExpr(6, [&] { return d(rng); });
  const double d_w = 25.0, bound = 0.6;

  // at least one view clear: obstacle terms contribute nothing
  for (auto [d1, d2] : {std::pair{80.0, 80.0}, std::pair{80.0, 10.0}, std::pair{10.0, 26.0}}) {
    const VectorXd out = bezbot::overall_step(d1, d2, d_w, us, up, uo, bound);
    REQUIRE((out - bezbot::clamp_rate(us + up, bound)).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(!bezbot::avoidance_active(d1, d2, d_w));
  }

  // both views inside the warning distance: escape replaces the shape task;
  // saturation preserves direction in this branch
  const VectorXd out = bezbot::overall_step(10.0, 20.0, d_w, us, up, uo, bound);
  const VectorXd expected = bezbot::scale_to_rate(
      Eigen::VectorXd(bezbot::scale_to_rate(uo, 0.9 * bound) + up), bound);
  CHECK((out - expected).cwiseAbs().maxCoeff() == 0.0);
  CHECK(bezbot::avoidance_active(10.0, 20.0, d_w));
  // boundary: d == d_w is not "clear"
  CHECK(bezbot::avoidance_active(d_w, d_w, d_w));
}

TEST_CASE("one escape tick strictly increases the obstacle distance", "[avoidance]") {
  bezbot::PlantParams params;
  params.tau = 0.0;
  plant_oracles::BypassViews views;

  VectorXd u0 = VectorXd::Zero(6);
  u0 << 0.2, -0.1, 0.1, 0.15, -0.05, 0.1;
  auto state = bezbot::make_state(params, u0);

  std::pair<BezierChain, BezierChain> chains;
  plant_oracles::bypass_shape(state, views, &chains);

  // obstacle close to mid-body in view 1, just inside the warning distance
  const Point2 probe = bezbot::eval_chain(chains.first, 1, 0.5);
  const Point2 p_obs = probe + Point2(20.0, 0.0);
  AvoidanceConfig cfg;
  const auto vd = bezbot::view_distance(chains.first, p_obs, cfg.n_d);
  REQUIRE(vd.d < cfg.d_w);
  REQUIRE(vd.d > 0.0);

  const MatrixXd j_s = plant_oracles::shape_jacobian_fd(params, state.u_cmd, views);
  const Point2 v_c = bezbot::escape_velocity(vd.sample, p_obs);
  const VectorXd u_dot =
      bezbot::escape_control_step(vd.d, cfg, wrap(j_s), vd.sample, v_c, 1, 3);
  REQUIRE(u_dot.norm() > 0.0);

  state = bezbot::step(params, state, u_dot, 0.05);
  std::pair<BezierChain, BezierChain> after;
  plant_oracles::bypass_shape(state, views, &after);
  const auto vd_after = bezbot::view_distance(after.first, p_obs, cfg.n_d);
  CHECK(vd_after.d > vd.d);
}
