#pragma once

#include <Eigen/Cholesky>

#include "pvio/frame.hpp"
#include "pvio/geometry.hpp"

namespace pvio {

struct KindMismatch : std::runtime_error {
  KindMismatch() : std::runtime_error("plane kind does not match prior kind") {}
};

struct RobustWeights {
  double huber_gamma = 9.0;       // intensity units
  double grad_const = 50.0;       // intensity-gradient units
  double photometric_sigma = 11.0;  // intensity units
};

struct HuberResult {
  double cost = 0;
  double weight = 0;  // IRLS weight d(cost)/d(r^2)
};

inline HuberResult huber(double r, double gamma) {
  const double a = std::abs(r);
  if (a <= gamma) return {r * r, 1.0};
  return {gamma * (2 * a - gamma), gamma / a};
}

inline double gradient_weight(const Vec2& grad, double c) {
  const double c2 = c * c;
  return c2 / (c2 + grad.squaredNorm());
}

/// Energy charged for a pattern row that cannot be evaluated (projection out
/// of view, intersection behind the camera, ...). Set to the Huber cost of a
/// full-range intensity mismatch so the optimizer can never lower the energy
/// by pushing observations out of their valid domain.
inline double row_drop_penalty(const RobustWeights& rw) {
  const double r_max = 255.0;
  return rw.huber_gamma * (2.0 * r_max - rw.huber_gamma) /
         (rw.photometric_sigma * rw.photometric_sigma);
}

/// One host-target observation of an 8-pixel pattern. Rows of dropped
/// sub-residuals are zero with valid[k] = false.
struct PhotometricResidual {
  Eigen::Matrix<double, 8, 1> residuals = Eigen::Matrix<double, 8, 1>::Zero();
  Eigen::Matrix<double, 8, 8> J_host = Eigen::Matrix<double, 8, 8>::Zero();
  Eigen::Matrix<double, 8, 8> J_target = Eigen::Matrix<double, 8, 8>::Zero();
  Eigen::Matrix<double, 8, 1> J_inv_depth = Eigen::Matrix<double, 8, 1>::Zero();
  Eigen::Matrix<double, 8, 2> J_plane = Eigen::Matrix<double, 8, 2>::Zero();  // [phi, d]
  std::array<bool, 8> valid{};
  int num_valid = 0;
  double energy = 0;  // robust cost with 1/sigma^2 whitening applied

  // below this, the whole observation is dropped
  bool usable() const { return num_valid >= 5; }
};

namespace detail {

struct AffineRatio {
  double s;       // (t_t e^{a_t}) / (t_h e^{a_h})
  double host_v;  // I_h - b_h at the current pattern pixel
};

// Fills residual, energy and the photometric (a, b) columns for row k;
// returns the row scale and the image-gradient row for the geometric chain.
inline bool finish_row(PhotometricResidual& out, int k, const Keyframe& target,
                       const Vec3& X_t, const IntensitySample& host_s,
                       const AffineRatio& ar, const RobustWeights& rw,
                       Eigen::RowVector3d* g_Xt) {
  if (X_t.z() <= 1e-9) return false;
  const Vec2 p_t = project(target.cam, X_t);
  if (!target.cam.contains(p_t) || !target.image->in_domain(p_t.x(), p_t.y()))
    return false;
  const IntensitySample ts = target.image->sample(p_t.x(), p_t.y());

  const double raw = (ts.value - target.affine_b) - ar.s * ar.host_v;
  const double w_p = gradient_weight(Vec2(host_s.gx, host_s.gy), rw.grad_const);
  const HuberResult h = huber(raw, rw.huber_gamma);
  const double inv_s2 = 1.0 / (rw.photometric_sigma * rw.photometric_sigma);
  const double scale = std::sqrt(w_p * h.weight) / rw.photometric_sigma;

  out.energy += w_p * h.cost * inv_s2;
  out.residuals[k] = scale * raw;
  *g_Xt = scale * Eigen::RowVector2d(ts.gx, ts.gy) * projection_jacobian(target.cam, X_t);

  out.J_host(k, 6) = scale * ar.s * ar.host_v;   // d/da_h
  out.J_host(k, 7) = scale * ar.s;               // d/db_h
  out.J_target(k, 6) = -scale * ar.s * ar.host_v;
  out.J_target(k, 7) = -scale;
  out.valid[k] = true;
  ++out.num_valid;
  return true;
}

}  // namespace detail

/// Photometric residual of a non-coplanar point with inverse depth d_p.
/// Jacobian column layout: [pose twist (trans, rot), a, b] per frame, pose
/// perturbations multiplicative on the left of T_wi.
inline PhotometricResidual photometric_point_residual(const Keyframe& host,
                                                      const Keyframe& target,
                                                      const PointFeature& pt, double d_p,
                                                      const RobustWeights& rw = {}) {
  if (d_p <= 0) throw NonPositiveInverseDepth();
  PhotometricResidual out;
  const Pose T_wh = host.T_wc();
  const Pose T_wt = target.T_wc();
  const Mat3 R_tw = T_wt.rotation().transpose();
  const Mat3 R_th = R_tw * T_wh.rotation();
  detail::AffineRatio ar;
  ar.s = (target.exposure * std::exp(target.affine_a)) /
         (host.exposure * std::exp(host.affine_a));

  for (int k = 0; k < 8; ++k) {
    const Vec2 pk = pt.pixel + Vec2(kResidualPattern[k][0], kResidualPattern[k][1]);
    if (!host.image->in_domain(pk.x(), pk.y())) continue;
    const IntensitySample hs = host.image->sample(pk.x(), pk.y());
    ar.host_v = hs.value - host.affine_b;

    const Vec3 X_h = backproject(host.cam, pk, d_p);
    const Vec3 X_w = T_wh * X_h;
    const Vec3 X_t = R_tw * (X_w - T_wt.translation());

    Eigen::RowVector3d g_Xt;
    if (!detail::finish_row(out, k, target, X_t, hs, ar, rw, &g_Xt)) continue;

    out.J_host.block<1, 3>(k, 0) = g_Xt * R_tw;
    out.J_host.block<1, 3>(k, 3) = -g_Xt * R_tw * skew(X_w);
    out.J_target.block<1, 3>(k, 0) = -g_Xt * R_tw;
    out.J_target.block<1, 3>(k, 3) = g_Xt * R_tw * skew(X_w);
    out.J_inv_depth(k) = g_Xt * (R_th * (-X_h / d_p));
  }
  return out;
}

/// Photometric residual of a coplanar point: the depth comes from the plane,
/// no per-point state exists. J_plane columns are [phi, d]; the phi column is
/// zero for horizontal planes.
inline PhotometricResidual photometric_coplanar_residual(const Keyframe& host,
                                                         const Keyframe& target,
                                                         const PointFeature& pt,
                                                         const MinimalPlane& plane,
                                                         const RobustWeights& rw = {}) {
  PhotometricResidual out;
  const GeneralPlane pi_w = minimal_plane_to_general(plane);
  const Pose T_wh = host.T_wc();
  const Pose T_wt = target.T_wc();
  const Mat3 R_wh = T_wh.rotation();
  const Mat3 R_tw = T_wt.rotation().transpose();
  const Vec3 c = T_wh.translation();
  const bool vertical = plane.kind == MinimalPlane::Kind::Vertical;
  const Vec3 dn_dphi =
      vertical ? Vec3(-std::sin(plane.phi), std::cos(plane.phi), 0) : Vec3::Zero();
  detail::AffineRatio ar;
  ar.s = (target.exposure * std::exp(target.affine_a)) /
         (host.exposure * std::exp(host.affine_a));

  // the op's precondition is stated for the point's center ray
  {
    const Vec3 D0 = R_wh * pixel_ray(host.cam, pt.pixel);
    if (std::abs(pi_w.n.dot(D0)) <= 1e-9) throw RayParallelToPlane();
  }

  for (int k = 0; k < 8; ++k) {
    const Vec2 pk = pt.pixel + Vec2(kResidualPattern[k][0], kResidualPattern[k][1]);
    if (!host.image->in_domain(pk.x(), pk.y())) continue;
    const IntensitySample hs = host.image->sample(pk.x(), pk.y());
    ar.host_v = hs.value - host.affine_b;

    const Vec3 D = R_wh * pixel_ray(host.cam, pk);
    const double g = pi_w.n.dot(D);
    if (std::abs(g) <= 1e-9) continue;
    const double s_ray = -(pi_w.n.dot(c) + pi_w.d) / g;
    if (s_ray <= 1e-9) continue;  // plane intersection behind the host camera
    const Vec3 X_w = c + s_ray * D;
    const Vec3 X_t = R_tw * (X_w - T_wt.translation());

    Eigen::RowVector3d g_Xt;
    if (!detail::finish_row(out, k, target, X_t, hs, ar, rw, &g_Xt)) continue;

    // host pose: X_w = c + s D with c, D and s all functions of T_wh
    const Eigen::RowVector3d nT = pi_w.n.transpose();
    const Mat3 dXw_dtrans = Mat3::Identity() - (D * nT) / g;
    const Mat3 dc_dw = -skew(c);
    const Mat3 dD_dw = -skew(D);
    const Eigen::RowVector3d ds_dw = -(nT * dc_dw) / g - s_ray * (nT * dD_dw) / g;
    const Mat3 dXw_drot = dc_dw + D * ds_dw + s_ray * dD_dw;
    out.J_host.block<1, 3>(k, 0) = g_Xt * R_tw * dXw_dtrans;
    out.J_host.block<1, 3>(k, 3) = g_Xt * R_tw * dXw_drot;
    out.J_target.block<1, 3>(k, 0) = -g_Xt * R_tw;
    out.J_target.block<1, 3>(k, 3) = g_Xt * R_tw * skew(X_w);

    const double row_d = g_Xt * (R_tw * (D * (-1.0 / g)));
    out.J_plane(k, 1) = row_d;
    if (vertical) {
      const double ds_dphi =
          -(dn_dphi.dot(c)) / g - s_ray * (dn_dphi.dot(D)) / g;
      out.J_plane(k, 0) = g_Xt * (R_tw * (D * ds_dphi));
    }
  }
  return out;
}

/// Quadratic anchor on a retired plane's minimal parameters.
struct PlanePriorFactor {
  int plane_id = -1;
  MinimalPlane::Kind kind = MinimalPlane::Kind::Horizontal;
  double phi_prior = 0;  // elevation is identically zero and carries no state
  double d_prior = 0;
  double w_n = 1;  // member point count
  Eigen::Matrix2d sigma = Eigen::Matrix2d::Identity() * 1e-4;  // [phi, d] block
};

struct PlanePriorResidual {
  Eigen::Vector2d residual = Eigen::Vector2d::Zero();
  Eigen::Matrix2d J = Eigen::Matrix2d::Zero();  // w.r.t. [phi, d]
  int dim = 0;
  double energy = 0;
};

/// r = sqrt(w_n) * Sigma^{-1/2} (prior - current); 1-dim for horizontal.
inline PlanePriorResidual plane_prior_residual(const MinimalPlane& plane,
                                               const PlanePriorFactor& prior) {
  if (plane.kind != prior.kind) throw KindMismatch();
  PlanePriorResidual out;
  const double sw = std::sqrt(prior.w_n);
  if (plane.kind == MinimalPlane::Kind::Horizontal) {
    const double sqrt_info = 1.0 / std::sqrt(prior.sigma(1, 1));
    out.dim = 1;
    out.residual(0) = sw * sqrt_info * (prior.d_prior - plane.d);
    out.J(0, 1) = -sw * sqrt_info;
  } else {
    const Eigen::Matrix2d L = prior.sigma.llt().matrixL();
    const Eigen::Matrix2d sqrt_info = L.inverse();
    out.dim = 2;
    const Eigen::Vector2d diff(angle_diff(prior.phi_prior, plane.phi),
                               prior.d_prior - plane.d);
    out.residual = sw * sqrt_info * diff;
    out.J = -sw * sqrt_info;
  }
  out.energy = out.residual.squaredNorm();
  return out;
}

}  // namespace pvio
