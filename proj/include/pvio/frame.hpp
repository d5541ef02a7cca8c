#pragma once

#include <algorithm>
#include <array>
#include <memory>
#include <vector>

#include "pvio/geometry.hpp"
#include "pvio/image.hpp"

namespace pvio {

// DSO-style 8-pixel residual pattern around the point.
inline constexpr std::array<std::array<double, 2>, 8> kResidualPattern = {{
    {0, -2}, {-1, -1}, {1, -1}, {-2, 0}, {0, 0}, {2, 0}, {-1, 1}, {0, 2}}};

struct Keyframe {
  int id = -1;
  double timestamp = 0;
  Pose T_wi;           // body to world
  Pose T_ic;           // camera to body, calibrated and fixed
  double affine_a = 0;  // log-gain
  double affine_b = 0;  // intensity offset
  double exposure = 1;  // s
  CameraIntrinsics cam;
  std::shared_ptr<const IntensityField> image;

  Pose T_wc() const { return T_wi * T_ic; }
};

enum class PointStatus { Active, Marginalized };

/// Host-anchored landmark. Non-coplanar points own an inverse depth; coplanar
/// points reference a plane and own no depth state.
struct PointFeature {
  int id = -1;
  int host_kf = -1;
  Vec2 pixel = Vec2::Zero();
  double inv_depth = 0;  // valid iff plane_id < 0
  int plane_id = -1;     // >= 0 marks the point coplanar
  PointStatus status = PointStatus::Active;
  std::vector<int> target_kfs;  // empty means every non-host keyframe

  bool coplanar() const { return plane_id >= 0; }

  bool observes(int kf_id) const {
    if (target_kfs.empty()) return true;
    return std::find(target_kfs.begin(), target_kfs.end(), kf_id) != target_kfs.end();
  }
};

}  // namespace pvio
