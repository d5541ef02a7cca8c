#pragma once

#include <iostream>
#include <vector>

#include <Eigen/Cholesky>

#include "pvio/geometry.hpp"

namespace pvio {

using Vec9 = Eigen::Matrix<double, 9, 1>;
using Vec15 = Eigen::Matrix<double, 15, 1>;
using Mat9 = Eigen::Matrix<double, 9, 9>;
using Mat15 = Eigen::Matrix<double, 15, 15>;

struct EmptyStream : std::runtime_error {
  EmptyStream() : std::runtime_error("imu stream has no sample interval") {}
};
struct NonMonotonicTimestamps : std::runtime_error {
  NonMonotonicTimestamps() : std::runtime_error("imu timestamps not strictly increasing") {}
};

struct ImuSample {
  double timestamp = 0;  // s
  Vec3 gyro = Vec3::Zero();   // rad/s
  Vec3 accel = Vec3::Zero();  // m/s^2
};

struct ImuBias {
  Vec3 bg = Vec3::Zero();
  Vec3 ba = Vec3::Zero();

  Vec6 vector() const {
    Vec6 v;
    v << bg, ba;
    return v;
  }
};

struct ImuNoise {
  double sigma_g = 1.7e-4;    // rad/s/sqrt(Hz)
  double sigma_a = 2.0e-3;    // m/s^2/sqrt(Hz)
  double sigma_bg = 1.9e-5;   // rad/s^2/sqrt(Hz)
  double sigma_ba = 3.0e-3;   // m/s^3/sqrt(Hz)
  Vec3 gravity = Vec3(0, 0, -9.81);
};

/// Relative motion between two keyframes integrated in the body frame of the
/// first one. Covariance order: rotation, velocity, position.
struct PreintegratedImu {
  Mat3 delta_R = Mat3::Identity();
  Vec3 delta_v = Vec3::Zero();
  Vec3 delta_p = Vec3::Zero();
  double dt_total = 0;
  Mat9 covariance = Mat9::Zero();
  Mat3 dR_dbg = Mat3::Zero();
  Mat3 dv_dbg = Mat3::Zero();
  Mat3 dv_dba = Mat3::Zero();
  Mat3 dp_dbg = Mat3::Zero();
  Mat3 dp_dba = Mat3::Zero();
  ImuBias linearization_bias;
  ImuNoise noise;
};

struct BodyState {
  Pose pose;                   // T_wi
  Vec3 velocity = Vec3::Zero();  // world frame
  ImuBias bias;

  /// Retraction used everywhere: pose on the left, the rest additive.
  /// Local layout: [pose twist (trans, rot), dv, dbg, dba].
  BodyState retract(const Vec15& delta) const {
    BodyState out;
    out.pose = se3_exp(delta.head<6>()) * pose;
    out.velocity = velocity + delta.segment<3>(6);
    out.bias.bg = bias.bg + delta.segment<3>(9);
    out.bias.ba = bias.ba + delta.segment<3>(12);
    return out;
  }
};

inline PreintegratedImu preintegrate(const std::vector<ImuSample>& samples,
                                     const ImuBias& bias, const ImuNoise& noise) {
  if (samples.size() < 2) throw EmptyStream();
  PreintegratedImu pre;
  pre.linearization_bias = bias;
  pre.noise = noise;

  for (size_t k = 0; k + 1 < samples.size(); ++k) {
    const ImuSample& s0 = samples[k];
    const ImuSample& s1 = samples[k + 1];
    const double dt = s1.timestamp - s0.timestamp;
    if (dt <= 0) throw NonMonotonicTimestamps();

    const Vec3 w = 0.5 * (s0.gyro + s1.gyro) - bias.bg;
    const Vec3 a0 = s0.accel - bias.ba;
    const Vec3 a1 = s1.accel - bias.ba;

    const Mat3 dR = so3_exp(w * dt);
    const Mat3 R0 = pre.delta_R;
    const Mat3 R1 = R0 * dR;
    const Vec3 a_mid = 0.5 * (R0 * a0 + R1 * a1);

    // covariance propagation, error state (dtheta, dv, dp) with
    // delta_R Exp(dtheta) right perturbation
    const Mat3 Jr = so3_right_jacobian(w * dt);
    const Mat3 A_tt = dR.transpose();
    const Mat3 da_dt = -0.5 * (R0 * skew(a0) + R1 * skew(a1) * A_tt);
    Mat9 A = Mat9::Identity();
    A.block<3, 3>(0, 0) = A_tt;
    A.block<3, 3>(3, 0) = da_dt * dt;
    A.block<3, 3>(6, 0) = 0.5 * da_dt * dt * dt;
    A.block<3, 3>(6, 3) = Mat3::Identity() * dt;
    Eigen::Matrix<double, 9, 6> B = Eigen::Matrix<double, 9, 6>::Zero();
    B.block<3, 3>(0, 0) = Jr * dt;
    const Mat3 da_dng = -0.5 * R1 * skew(a1) * Jr * dt;
    B.block<3, 3>(3, 0) = da_dng * dt;
    B.block<3, 3>(6, 0) = 0.5 * da_dng * dt * dt;
    const Mat3 da_dna = 0.5 * (R0 + R1);
    B.block<3, 3>(3, 3) = da_dna * dt;
    B.block<3, 3>(6, 3) = 0.5 * da_dna * dt * dt;
    Eigen::Matrix<double, 6, 6> Q = Eigen::Matrix<double, 6, 6>::Zero();
    Q.topLeftCorner<3, 3>() = (noise.sigma_g * noise.sigma_g / dt) * Mat3::Identity();
    Q.bottomRightCorner<3, 3>() = (noise.sigma_a * noise.sigma_a / dt) * Mat3::Identity();
    pre.covariance = A * pre.covariance * A.transpose() + B * Q * B.transpose();

    // first-order bias jacobians, old values on the right-hand side
    const Mat3 dR_dbg_new = A_tt * pre.dR_dbg - Jr * dt;
    const Mat3 da_dbg = -0.5 * (R0 * skew(a0) * pre.dR_dbg + R1 * skew(a1) * dR_dbg_new);
    const Mat3 da_dba = -0.5 * (R0 + R1);
    pre.dp_dbg += pre.dv_dbg * dt + 0.5 * da_dbg * dt * dt;
    pre.dp_dba += pre.dv_dba * dt + 0.5 * da_dba * dt * dt;
    pre.dv_dbg += da_dbg * dt;
    pre.dv_dba += da_dba * dt;
    pre.dR_dbg = dR_dbg_new;

    pre.delta_p += pre.delta_v * dt + 0.5 * a_mid * dt * dt;
    pre.delta_v += a_mid * dt;
    pre.delta_R = R1;
    pre.dt_total += dt;
  }
  return pre;
}

/// First-order update of the deltas to a new bias, no re-integration.
inline PreintegratedImu bias_correct(const PreintegratedImu& pre, const ImuBias& new_bias) {
  const Vec3 dbg = new_bias.bg - pre.linearization_bias.bg;
  const Vec3 dba = new_bias.ba - pre.linearization_bias.ba;
  if (dbg.norm() > 0.1 || dba.norm() > 0.1) {
    std::cerr << "bias_correct: large bias change, first-order update inaccurate\n";
  }
  PreintegratedImu out = pre;
  out.delta_R = pre.delta_R * so3_exp(pre.dR_dbg * dbg);
  out.delta_v = pre.delta_v + pre.dv_dbg * dbg + pre.dv_dba * dba;
  out.delta_p = pre.delta_p + pre.dp_dbg * dbg + pre.dp_dba * dba;
  out.linearization_bias = new_bias;
  return out;
}

/// Delta composition of two consecutive blocks (same linearization bias).
inline PreintegratedImu compose(const PreintegratedImu& a, const PreintegratedImu& b) {
  PreintegratedImu out = a;
  out.delta_p = a.delta_p + a.delta_v * b.dt_total + a.delta_R * b.delta_p;
  out.delta_v = a.delta_v + a.delta_R * b.delta_v;
  out.delta_R = a.delta_R * b.delta_R;
  out.dt_total = a.dt_total + b.dt_total;
  return out;
}

struct InertialFactor {
  // residual order: (dtheta, dv, dp, dbg, dba)
  Vec15 residual = Vec15::Zero();
  Mat15 J_i = Mat15::Zero();  // w.r.t. BodyState i local coords
  Mat15 J_j = Mat15::Zero();
  Mat15 information = Mat15::Zero();
};

inline InertialFactor inertial_residual(const BodyState& state_i, const BodyState& state_j,
                                        const PreintegratedImu& pre, const Vec3& gravity) {
  const PreintegratedImu cor = bias_correct(pre, state_i.bias);
  const Mat3 R_i = state_i.pose.rotation();
  const Mat3 R_it = R_i.transpose();
  const Mat3 R_j = state_j.pose.rotation();
  const Vec3 p_i = state_i.pose.translation();
  const Vec3 p_j = state_j.pose.translation();
  const double dt = pre.dt_total;

  InertialFactor f;
  const Mat3 E = cor.delta_R.transpose() * R_it * R_j;
  const Vec3 r_theta = so3_log(E);
  const Vec3 u = state_j.velocity - state_i.velocity - gravity * dt;
  const Vec3 w = p_j - p_i - state_i.velocity * dt - 0.5 * gravity * dt * dt;
  f.residual.segment<3>(0) = r_theta;
  f.residual.segment<3>(3) = R_it * u - cor.delta_v;
  f.residual.segment<3>(6) = R_it * w - cor.delta_p;
  f.residual.segment<3>(9) = state_j.bias.bg - state_i.bias.bg;
  f.residual.segment<3>(12) = state_j.bias.ba - state_i.bias.ba;

  // jacobians w.r.t. the BodyState retraction (left SE(3) pose perturbation)
  const Mat3 Jr_inv = so3_right_jacobian_inv(r_theta);
  const Mat3 Jl_inv = so3_right_jacobian_inv(-r_theta);
  const Vec3 bias_rot = pre.dR_dbg * (state_i.bias.bg - pre.linearization_bias.bg);
  f.J_i.block<3, 3>(0, 3) = -Jr_inv * R_j.transpose();
  f.J_i.block<3, 3>(0, 9) = -Jl_inv * so3_right_jacobian(bias_rot) * pre.dR_dbg;
  f.J_j.block<3, 3>(0, 3) = Jr_inv * R_j.transpose();

  f.J_i.block<3, 3>(3, 3) = R_it * skew(u);
  f.J_i.block<3, 3>(3, 6) = -R_it;
  f.J_i.block<3, 3>(3, 9) = -pre.dv_dbg;
  f.J_i.block<3, 3>(3, 12) = -pre.dv_dba;
  f.J_j.block<3, 3>(3, 6) = R_it;

  f.J_i.block<3, 3>(6, 0) = -R_it;
  f.J_i.block<3, 3>(6, 3) = R_it * (skew(w) + skew(p_i));
  f.J_i.block<3, 3>(6, 6) = -R_it * dt;
  f.J_i.block<3, 3>(6, 9) = -pre.dp_dbg;
  f.J_i.block<3, 3>(6, 12) = -pre.dp_dba;
  f.J_j.block<3, 3>(6, 0) = R_it;
  f.J_j.block<3, 3>(6, 3) = -R_it * skew(p_j);

  f.J_i.block<3, 3>(9, 9) = -Mat3::Identity();
  f.J_j.block<3, 3>(9, 9) = Mat3::Identity();
  f.J_i.block<3, 3>(12, 12) = -Mat3::Identity();
  f.J_j.block<3, 3>(12, 12) = Mat3::Identity();

  // information: inverse of the conditioned preintegration covariance plus
  // random-walk terms scaled by the block duration
  Mat9 cov = pre.covariance + 1e-12 * Mat9::Identity();
  f.information.topLeftCorner<9, 9>() = cov.llt().solve(Mat9::Identity());
  const double ig = 1.0 / (pre.noise.sigma_bg * pre.noise.sigma_bg * dt);
  const double ia = 1.0 / (pre.noise.sigma_ba * pre.noise.sigma_ba * dt);
  f.information.block<3, 3>(9, 9) = ig * Mat3::Identity();
  f.information.block<3, 3>(12, 12) = ia * Mat3::Identity();
  return f;
}

}  // namespace pvio
