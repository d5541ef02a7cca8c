#pragma once

#include <cmath>
#include <stdexcept>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace pvio {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

// Taylor branch threshold for all exp/log maps.
inline constexpr double kSmallAngle = 1e-8;

struct NonPositiveDepth : std::runtime_error {
  NonPositiveDepth() : std::runtime_error("point depth <= 0") {}
};
struct NonPositiveInverseDepth : std::runtime_error {
  NonPositiveInverseDepth() : std::runtime_error("inverse depth <= 0") {}
};
struct BehindCamera : std::runtime_error {
  BehindCamera() : std::runtime_error("transferred point behind camera") {}
};
struct RayParallelToPlane : std::runtime_error {
  RayParallelToPlane() : std::runtime_error("viewing ray parallel to plane") {}
};
struct NegativeDepth : std::runtime_error {
  NegativeDepth() : std::runtime_error("ray hits plane behind camera") {}
};

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

inline Mat3 so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 W = skew(omega);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + W + 0.5 * W * W;
  }
  const double s = std::sin(theta) / theta;
  const double c = (1.0 - std::cos(theta)) / (theta * theta);
  return Mat3::Identity() + s * W + c * W * W;
}

inline Vec3 so3_log(const Mat3& R) {
  // Quaternion-based log; stable over the whole angle range below pi.
  Eigen::Quaterniond q(R);
  q.normalize();
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  const Vec3 v = q.vec();
  const double nv = v.norm();
  if (nv < kSmallAngle) {
    return 2.0 * v / q.w();
  }
  return 2.0 * std::atan2(nv, q.w()) * v / nv;
}

// Right Jacobian of SO(3): Exp(w + dw) ~ Exp(w) Exp(Jr(w) dw).
inline Mat3 so3_right_jacobian(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 W = skew(omega);
  if (theta < kSmallAngle) {
    return Mat3::Identity() - 0.5 * W + (1.0 / 6.0) * W * W;
  }
  const double t2 = theta * theta;
  const double a = (1.0 - std::cos(theta)) / t2;
  const double b = (theta - std::sin(theta)) / (t2 * theta);
  return Mat3::Identity() - a * W + b * W * W;
}

inline Mat3 so3_right_jacobian_inv(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 W = skew(omega);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + 0.5 * W + (1.0 / 12.0) * W * W;
  }
  const double b =
      1.0 / (theta * theta) - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta));
  return Mat3::Identity() + 0.5 * W + b * W * W;
}

// Left Jacobian V of SE(3): translation of exp([v, w]) is V(w) v.
inline Mat3 se3_left_jacobian(const Vec3& omega) {
  const double theta = omega.norm();
  const Mat3 W = skew(omega);
  if (theta < kSmallAngle) {
    return Mat3::Identity() + 0.5 * W + (1.0 / 6.0) * W * W;
  }
  const double t2 = theta * theta;
  const double a = (1.0 - std::cos(theta)) / t2;
  const double b = (theta - std::sin(theta)) / (t2 * theta);
  return Mat3::Identity() + a * W + b * W * W;
}

/// Rigid transform. Acting on points: x_out = R * x + t.
/// Tangent layout is [translation, rotation] (rotation in the last three).
class Pose {
 public:
  Pose() : q_(Eigen::Quaterniond::Identity()), t_(Vec3::Zero()) {}
  Pose(const Eigen::Quaterniond& q, const Vec3& t) : q_(q.normalized()), t_(t) {}
  Pose(const Mat3& R, const Vec3& t) : q_(R), t_(t) { q_.normalize(); }

  static Pose Identity() { return Pose(); }

  const Eigen::Quaterniond& quaternion() const { return q_; }
  Mat3 rotation() const { return q_.toRotationMatrix(); }
  const Vec3& translation() const { return t_; }

  Mat4 matrix() const {
    Mat4 T = Mat4::Identity();
    T.topLeftCorner<3, 3>() = rotation();
    T.topRightCorner<3, 1>() = t_;
    return T;
  }

  Pose inverse() const {
    const Eigen::Quaterniond qi = q_.conjugate();
    return Pose(qi, qi * (-t_));
  }

  Pose operator*(const Pose& rhs) const {
    return Pose(q_ * rhs.q_, q_ * rhs.t_ + t_);
  }

  Vec3 operator*(const Vec3& x) const { return q_ * x + t_; }

  bool isApprox(const Pose& other, double tol = 1e-9) const {
    return (rotation() - other.rotation()).norm() < tol &&
           (t_ - other.t_).norm() < tol;
  }

 private:
  Eigen::Quaterniond q_;
  Vec3 t_;
};

inline Pose se3_exp(const Vec6& xi) {
  const Vec3 v = xi.head<3>();
  const Vec3 w = xi.tail<3>();
  return Pose(so3_exp(w), se3_left_jacobian(w) * v);
}

inline Vec6 se3_log(const Pose& pose) {
  const Vec3 w = so3_log(pose.rotation());
  Vec6 xi;
  xi.tail<3>() = w;
  xi.head<3>() = se3_left_jacobian(w).inverse() * pose.translation();
  return xi;
}

struct CameraIntrinsics {
  double fx = 1, fy = 1, cx = 0, cy = 0;
  int width = 0, height = 0;

  Vec2 principal_point() const { return Vec2(cx, cy); }

  bool contains(const Vec2& p, double border = 0.0) const {
    return p.x() >= border && p.y() >= border && p.x() <= width - 1 - border &&
           p.y() <= height - 1 - border;
  }
};

inline Vec2 project(const CameraIntrinsics& cam, const Vec3& X) {
  if (X.z() <= 1e-9) throw NonPositiveDepth();
  return Vec2(cam.fx * X.x() / X.z() + cam.cx, cam.fy * X.y() / X.z() + cam.cy);
}

/// Unit-depth ray through pixel p (z component is 1).
inline Vec3 pixel_ray(const CameraIntrinsics& cam, const Vec2& p) {
  return Vec3((p.x() - cam.cx) / cam.fx, (p.y() - cam.cy) / cam.fy, 1.0);
}

inline Vec3 backproject(const CameraIntrinsics& cam, const Vec2& p, double inv_depth) {
  if (inv_depth <= 0) throw NonPositiveInverseDepth();
  return pixel_ray(cam, p) / inv_depth;
}

// Jacobian of project() w.r.t. the camera-frame point.
inline Eigen::Matrix<double, 2, 3> projection_jacobian(const CameraIntrinsics& cam,
                                                       const Vec3& X) {
  const double iz = 1.0 / X.z();
  Eigen::Matrix<double, 2, 3> J;
  J << cam.fx * iz, 0, -cam.fx * X.x() * iz * iz,
       0, cam.fy * iz, -cam.fy * X.y() * iz * iz;
  return J;
}

struct TransferResult {
  Vec2 pixel;
  double depth = 0;  // depth in the target frame
  bool in_image = true;
};

/// Maps a host pixel with inverse depth through T_th into the target image.
inline TransferResult transfer_point(const Vec2& p, double inv_depth, const Pose& T_th,
                                     const CameraIntrinsics& cam) {
  const Vec3 X_t = T_th * backproject(cam, p, inv_depth);
  if (X_t.z() <= 1e-9) throw BehindCamera();
  TransferResult out;
  out.pixel = project(cam, X_t);
  out.depth = X_t.z();
  out.in_image = cam.contains(out.pixel);
  return out;
}

/// Plane as n.X + d = 0 with unit n; "distance from origin" is |d|.
struct GeneralPlane {
  Vec3 n = Vec3::UnitZ();
  double d = 0;

  double incidence(const Vec3& X) const { return n.dot(X) + d; }
};

struct HorizontalPlane {
  double d = 0;  // implied normal (0,0,1)
};

inline double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a < 0) a += 2.0 * M_PI;
  a -= M_PI;
  if (a == -M_PI) a = M_PI;  // store in (-pi, pi]
  return a;
}

/// Minimal difference a - b on the circle, in (-pi, pi].
inline double angle_diff(double a, double b) { return wrap_angle(a - b); }

struct VerticalPlane {
  double phi = 0;  // azimuth, wrapped to (-pi, pi]
  double d = 0;
};

/// Tagged minimal parameterization: horizontal planes carry 1 DoF (d),
/// vertical planes 2 DoF (phi, d). phi is ignored for horizontal planes.
struct MinimalPlane {
  enum class Kind { Horizontal, Vertical };
  Kind kind = Kind::Horizontal;
  double phi = 0;
  double d = 0;

  int dof() const { return kind == Kind::Vertical ? 2 : 1; }
};

/// Vertical planes have two equivalent parameterizations, (phi, d) and
/// (phi + pi, -d). Fix the representative with phi in (-pi/2, pi/2] so plane
/// comparisons and priors always see the same coordinates.
inline void canonicalize_vertical(MinimalPlane& p) {
  if (p.kind != MinimalPlane::Kind::Vertical) return;
  p.phi = wrap_angle(p.phi);
  if (p.phi > M_PI / 2) {
    p.phi -= M_PI;
    p.d = -p.d;
  } else if (p.phi <= -M_PI / 2) {
    p.phi += M_PI;
    p.d = -p.d;
  }
}

inline GeneralPlane horizontal_plane_to_general(const HorizontalPlane& hp) {
  return GeneralPlane{Vec3(0, 0, 1), hp.d};
}

inline GeneralPlane vertical_plane_to_general(const VerticalPlane& vp) {
  return GeneralPlane{Vec3(std::cos(vp.phi), std::sin(vp.phi), 0.0), vp.d};
}

/// pi_c = T_cw^{-T} pi_w, renormalized to unit normal.
inline GeneralPlane plane_world_to_camera(const GeneralPlane& pi_w, const Pose& T_cw) {
  const Pose T_wc = T_cw.inverse();
  GeneralPlane pi_c;
  pi_c.n = T_wc.rotation().transpose() * pi_w.n;
  pi_c.d = pi_w.n.dot(T_wc.translation()) + pi_w.d;
  const double norm = pi_c.n.norm();
  pi_c.n /= norm;
  pi_c.d /= norm;
  return pi_c;
}

/// Depth z along the pixel ray so that z * n_c.ray + d_c = 0.
inline double depth_from_plane(const Vec2& p, const GeneralPlane& pi_c,
                               const CameraIntrinsics& cam) {
  const Vec3 ray = pixel_ray(cam, p);
  const double g = pi_c.n.dot(ray);
  if (std::abs(g) <= 1e-9) throw RayParallelToPlane();
  const double z = -pi_c.d / g;
  if (z <= 0) throw NegativeDepth();
  return z;
}

inline GeneralPlane minimal_plane_to_general(const MinimalPlane& mp) {
  if (mp.kind == MinimalPlane::Kind::Horizontal) {
    return horizontal_plane_to_general({mp.d});
  }
  return vertical_plane_to_general({mp.phi, mp.d});
}

/// Transfers a pixel on a world plane from host to target view.
inline TransferResult transfer_coplanar_point(const Vec2& p, const GeneralPlane& pi_w,
                                              const Pose& T_wh, const Pose& T_wt,
                                              const CameraIntrinsics& cam) {
  const GeneralPlane pi_h = plane_world_to_camera(pi_w, T_wh.inverse());
  const double z = depth_from_plane(p, pi_h, cam);
  const Pose T_th = T_wt.inverse() * T_wh;
  return transfer_point(p, 1.0 / z, T_th, cam);
}

}  // namespace pvio
