#pragma once

#include <vector>

#include <Eigen/SVD>

#include "pvio/geometry.hpp"

namespace pvio {

struct TooFewMatches : std::runtime_error {
  TooFewMatches() : std::runtime_error("not enough timestamp-matched pose pairs") {}
};
struct ZeroVariance : std::runtime_error {
  ZeroVariance() : std::runtime_error("trajectory has no positional spread, scale undefined") {}
};
struct EmptyErrorSet : std::runtime_error {
  EmptyErrorSet() : std::runtime_error("no errors to aggregate") {}
};

struct TrajectoryPose {
  double t = 0;
  Pose pose;
};

using Trajectory = std::vector<TrajectoryPose>;  // timestamps strictly increasing

/// Alignment of est onto gt. scale is the estimate's scale relative to
/// ground truth, so the aligned position is (R p) / scale + t and an
/// estimate inflated by 1.011 reports scale 1.011.
struct AlignmentResult {
  Pose transform;
  double scale = 1.0;
  double rmse = 0;
  double scale_error = 0;
  double rot_rmse = 0;  // geodesic rotation error after alignment, radians

  Vec3 apply(const Vec3& p) const {
    return transform.rotation() * p / scale + transform.translation();
  }
};

/// Nearest-neighbor timestamp association; pairs farther than tol apart are
/// dropped.
inline std::vector<std::pair<size_t, size_t>> match_timestamps(const Trajectory& est,
                                                               const Trajectory& gt,
                                                               double tol = 0.01) {
  std::vector<std::pair<size_t, size_t>> out;
  size_t j = 0;
  for (size_t i = 0; i < est.size(); ++i) {
    while (j + 1 < gt.size() &&
           std::abs(gt[j + 1].t - est[i].t) <= std::abs(gt[j].t - est[i].t))
      ++j;
    if (!gt.empty() && std::abs(gt[j].t - est[i].t) <= tol) out.push_back({i, j});
  }
  return out;
}

namespace detail {

inline AlignmentResult umeyama_align(const Trajectory& est, const Trajectory& gt,
                                     bool with_scale) {
  const auto matches = match_timestamps(est, gt);
  const size_t n = matches.size();
  if (n < 3) throw TooFewMatches();

  Vec3 mu_e = Vec3::Zero(), mu_g = Vec3::Zero();
  for (const auto& [ie, ig] : matches) {
    mu_e += est[ie].pose.translation();
    mu_g += gt[ig].pose.translation();
  }
  mu_e /= static_cast<double>(n);
  mu_g /= static_cast<double>(n);

  Mat3 cov = Mat3::Zero();
  double var_e = 0;
  for (const auto& [ie, ig] : matches) {
    const Vec3 de = est[ie].pose.translation() - mu_e;
    const Vec3 dg = gt[ig].pose.translation() - mu_g;
    cov += dg * de.transpose();
    var_e += de.squaredNorm();
  }
  cov /= static_cast<double>(n);
  var_e /= static_cast<double>(n);

  const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 d = Vec3::Ones();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0) d(2) = -1;
  const Mat3 R = svd.matrixU() * d.asDiagonal() * svd.matrixV().transpose();
  const double sv_sum = svd.singularValues().dot(d);
  if (with_scale && (var_e <= 1e-18 || sv_sum <= 1e-18)) throw ZeroVariance();

  AlignmentResult res;
  res.scale = with_scale ? var_e / sv_sum : 1.0;
  res.transform = Pose(R, mu_g - (R * mu_e) / res.scale);
  res.scale_error = std::abs(1.0 - res.scale);

  double se = 0, sr = 0;
  for (const auto& [ie, ig] : matches) {
    se += (gt[ig].pose.translation() - res.apply(est[ie].pose.translation())).squaredNorm();
    const Mat3 dR = gt[ig].pose.rotation().transpose() * res.transform.rotation() *
                    est[ie].pose.rotation();
    sr += so3_log(dR).squaredNorm();
  }
  res.rmse = std::sqrt(se / static_cast<double>(n));
  res.rot_rmse = std::sqrt(sr / static_cast<double>(n));
  return res;
}

}  // namespace detail

inline AlignmentResult align_se3(const Trajectory& est, const Trajectory& gt) {
  return detail::umeyama_align(est, gt, false);
}

inline AlignmentResult align_sim3(const Trajectory& est, const Trajectory& gt) {
  return detail::umeyama_align(est, gt, true);
}

inline double rmse_ate(const std::vector<Vec3>& errors) {
  if (errors.empty()) throw EmptyErrorSet();
  double s = 0;
  for (const Vec3& e : errors) s += e.squaredNorm();
  return std::sqrt(s / static_cast<double>(errors.size()));
}

}  // namespace pvio
