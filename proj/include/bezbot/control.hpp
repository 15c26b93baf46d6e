#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Dense>

#include "bezbot/errors.hpp"

namespace bezbot {

struct ControllerGains {
  double lambda_s = 1.3;     // 1/s, shape error gain
  double lambda_p = 2.0;     // 1/s, position error gain
  double lambda_damp = 3e-2; // pseudo-inverse damping
  double u_dot_max = 0.8;    // per-component command rate bound
};

struct Reference {
  Eigen::VectorXd x_d;
  Eigen::VectorXd x_d_rate;  // zero for regulation, backward difference for tracking

  static Reference hold(const Eigen::VectorXd& target) {
    return {target, Eigen::VectorXd::Zero(target.size())};
  }
};

struct JacobianEstimate {
  Eigen::MatrixXd matrix;          // state_dim x m
  double delta_u = 0.0;
  std::vector<uint8_t> one_sided;  // per column: central difference was infeasible
  long tick = 0;
};

// Central-difference Jacobian through a model's integrate(x, u, t0, t1).
// Columns where u +- delta_u leaves [u_lo, u_hi] fall back to a one-sided
// difference and are flagged. 2m integrations per call.
template <typename Model>
JacobianEstimate estimate_jacobian(const Model& model, const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& u, double delta_u,
                                   double u_lo = -1.0, double u_hi = 1.0) {
  if (delta_u <= 0.0) throw DomainError("jacobian probe step must be positive");
  const int m = static_cast<int>(u.size());
  const double horizon = model.spec.horizon;
  JacobianEstimate est;
  est.delta_u = delta_u;
  est.matrix.resize(x.size(), m);
  est.one_sided.assign(m, 0);

  Eigen::VectorXd base;  // computed lazily, only one-sided columns need it
  bool have_base = false;
  for (int j = 0; j < m; ++j) {
    const bool up_ok = u[j] + delta_u <= u_hi;
    const bool dn_ok = u[j] - delta_u >= u_lo;
    try {
      if (up_ok && dn_ok) {
        Eigen::VectorXd up = u, dn = u;
        up[j] += delta_u;
        dn[j] -= delta_u;
        est.matrix.col(j) = (model.integrate(x, up, 0.0, horizon) -
                             model.integrate(x, dn, 0.0, horizon)) /
                            (2.0 * delta_u);
      } else {
        if (!have_base) {
          base = model.integrate(x, u, 0.0, horizon);
          have_base = true;
        }
        Eigen::VectorXd probe = u;
        probe[j] += up_ok ? delta_u : -delta_u;
        const Eigen::VectorXd shifted = model.integrate(x, probe, 0.0, horizon);
        est.matrix.col(j) = (up_ok ? shifted - base : base - shifted) / delta_u;
        est.one_sided[j] = 1;
      }
    } catch (const DivergedIntegration& e) {
      throw DivergedIntegration("jacobian column " + std::to_string(j) + ": " + e.what());
    }
  }
  return est;
}

// Damped pseudo-inverse: J^T (J J^T + l^2 I)^-1 for wide J, the transposed
// form for tall J. Exact Moore-Penrose at l = 0 for full-rank J.
inline Eigen::MatrixXd damped_pinv(const Eigen::MatrixXd& j, double lambda_damp) {
  if (lambda_damp < 0.0) throw DomainError("damping must be >= 0");
  const double l2 = lambda_damp * lambda_damp;
  if (j.rows() <= j.cols()) {
    Eigen::MatrixXd gram = j * j.transpose();
    gram.diagonal().array() += l2;
    return j.transpose() * gram.ldlt().solve(Eigen::MatrixXd::Identity(j.rows(), j.rows()));
  }
  Eigen::MatrixXd gram = j.transpose() * j;
  gram.diagonal().array() += l2;
  return gram.ldlt().solve(Eigen::MatrixXd::Identity(j.cols(), j.cols())) * j.transpose();
}

inline Eigen::VectorXd clamp_rate(const Eigen::VectorXd& v, double bound) {
  return v.cwiseMax(-bound).cwiseMin(bound);
}

// Resolved-rate command before clamping: J^+ (x_d_rate + lambda e).
inline Eigen::VectorXd tracking_command(const Eigen::VectorXd& x, const Reference& ref,
                                        const JacobianEstimate& jac, double lambda,
                                        double lambda_damp) {
  if (ref.x_d.size() != x.size() || jac.matrix.rows() != x.size())
    throw DomainError("controller dimensions disagree");
  const Eigen::VectorXd task = ref.x_d_rate + lambda * (ref.x_d - x);
  if (!task.allFinite()) throw DomainError("non-finite controller input");
  return damped_pinv(jac.matrix, lambda_damp) * task;
}

inline Eigen::VectorXd shape_command(const Eigen::VectorXd& x_s, const Reference& ref,
                                     const JacobianEstimate& j_s, const ControllerGains& g) {
  return tracking_command(x_s, ref, j_s, g.lambda_s, g.lambda_damp);
}

inline Eigen::VectorXd position_command(const Eigen::VectorXd& x_p, const Reference& ref,
                                        const JacobianEstimate& j_p, const ControllerGains& g) {
  return tracking_command(x_p, ref, j_p, g.lambda_p, g.lambda_damp);
}

inline Eigen::VectorXd shape_control_step(const Eigen::VectorXd& x_s, const Reference& ref,
                                          const JacobianEstimate& j_s,
                                          const ControllerGains& g) {
  return clamp_rate(shape_command(x_s, ref, j_s, g), g.u_dot_max);
}

inline Eigen::VectorXd position_control_step(const Eigen::VectorXd& x_p, const Reference& ref,
                                             const JacobianEstimate& j_p,
                                             const ControllerGains& g) {
  return clamp_rate(position_command(x_p, ref, j_p, g), g.u_dot_max);
}

// Shape and position commands summed, clamped after summation.
inline Eigen::VectorXd hybrid_step(const Eigen::VectorXd& x_s, const Reference& ref_s,
                                   const JacobianEstimate& j_s, const Eigen::VectorXd& x_p,
                                   const Reference& ref_p, const JacobianEstimate& j_p,
                                   const ControllerGains& g) {
  return clamp_rate(shape_command(x_s, ref_s, j_s, g) + position_command(x_p, ref_p, j_p, g),
                    g.u_dot_max);
}

}  // namespace bezbot
