#pragma once

#include <optional>
#include <vector>

#include "pvio/frame.hpp"
#include "pvio/imu.hpp"
#include "pvio/residuals.hpp"

namespace pvio {

using Vec17 = Eigen::Matrix<double, 17, 1>;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

struct UnknownKeyframe : std::runtime_error {
  explicit UnknownKeyframe(int id)
      : std::runtime_error("keyframe " + std::to_string(id) + " not in window") {}
};
struct InactivePlane : std::runtime_error {
  explicit InactivePlane(int id)
      : std::runtime_error("plane " + std::to_string(id) + " not active in window") {}
};

struct WindowPlane {
  int id = -1;
  MinimalPlane plane;
};

/// Anchors the gauge freedoms left by camera + IMU: absolute position and yaw
/// of one keyframe. Roll and pitch stay free so gravity can resolve them.
struct GaugeAnchor {
  int kf_id = -1;
  Vec3 position = Vec3::Zero();
  double yaw = 0;
  double weight = 1e6;
};

inline double rotation_yaw(const Mat3& R) { return std::atan2(R(1, 0), R(0, 0)); }

// d yaw / d(left rotation perturbation), exact
inline Eigen::RowVector3d yaw_jacobian(const Mat3& R) {
  const double r00 = R(0, 0), r10 = R(1, 0), r20 = R(2, 0);
  const double den = r00 * r00 + r10 * r10;
  return Eigen::RowVector3d(-r00 * r20 / den, -r10 * r20 / den, 1.0);
}

/// Dense quadratic prior left behind by marginalization. Residual model:
/// E(x) = d' H d + 2 b' d with d the stacked local difference to the stored
/// linearization states, evaluated with the pose difference on the left.
struct MarginalizationPrior {
  struct FejState {
    Pose pose;
    double affine_a = 0, affine_b = 0;
    Vec3 velocity = Vec3::Zero();
    ImuBias bias;
  };

  std::vector<int> kf_ids;
  std::vector<FejState> fej;
  MatX H;
  VecX b;

  int dim() const { return static_cast<int>(kf_ids.size()) * 17; }
};

/// The joint optimization state: bounded keyframe set, their inertial states,
/// landmarks, active planes and the priors accumulated while sliding.
struct SlidingWindow {
  std::vector<Keyframe> keyframes;  // time order
  std::vector<Vec3> velocities;     // parallel to keyframes
  std::vector<ImuBias> biases;
  std::vector<PreintegratedImu> preints;  // preints[i] spans keyframes[i] -> [i+1]
  std::vector<PointFeature> points;
  std::vector<WindowPlane> planes;
  std::vector<PlanePriorFactor> plane_priors;  // for currently active planes
  std::optional<MarginalizationPrior> marg_prior;
  std::optional<GaugeAnchor> gauge;
  RobustWeights weights;
  Vec3 gravity = Vec3(0, 0, -9.81);
  int max_keyframes = 7;

  int kf_index(int id) const {
    for (size_t i = 0; i < keyframes.size(); ++i)
      if (keyframes[i].id == id) return static_cast<int>(i);
    throw UnknownKeyframe(id);
  }

  BodyState body_state(int i) const {
    BodyState s;
    s.pose = keyframes[i].T_wi;
    s.velocity = velocities[i];
    s.bias = biases[i];
    return s;
  }

  const WindowPlane* find_plane(int plane_id) const {
    for (const WindowPlane& p : planes)
      if (p.id == plane_id) return &p;
    return nullptr;
  }
};

namespace detail {

inline Vec17 kf_local_diff(const Keyframe& kf, const Vec3& v, const ImuBias& bias,
                           const MarginalizationPrior::FejState& fej) {
  Vec17 d;
  d.head<6>() = se3_log(kf.T_wi * fej.pose.inverse());
  d(6) = kf.affine_a - fej.affine_a;
  d(7) = kf.affine_b - fej.affine_b;
  d.segment<3>(8) = v - fej.velocity;
  d.segment<3>(11) = bias.bg - fej.bias.bg;
  d.segment<3>(14) = bias.ba - fej.bias.ba;
  return d;
}

}  // namespace detail

/// Weak prior on the first keyframe's velocity, biases and roll/pitch,
/// expressed through the marginalization-prior machinery. The velocity/bias
/// block stops the window from trading a common tilt against a shared
/// accelerometer bias; the roll/pitch block anchors the global tilt mode,
/// which is exactly unobservable while the window holds only two keyframes
/// (a rigid rotation of the pair leaves the photometric energy unchanged and
/// the single inertial link absorbs the gravity mismatch into the free
/// second velocity).
inline MarginalizationPrior initial_state_prior(const SlidingWindow& w, double sigma_v = 0.02,
                                                double sigma_bg = 5e-4,
                                                double sigma_ba = 5e-3,
                                                double sigma_rp = 2e-3) {
  MarginalizationPrior prior;
  prior.kf_ids = {w.keyframes.front().id};
  MarginalizationPrior::FejState f;
  f.pose = w.keyframes.front().T_wi;
  f.affine_a = w.keyframes.front().affine_a;
  f.affine_b = w.keyframes.front().affine_b;
  f.velocity = w.velocities.front();
  f.bias = w.biases.front();
  prior.fej = {f};
  prior.H = MatX::Zero(17, 17);
  for (int i = 0; i < 3; ++i) {
    prior.H(8 + i, 8 + i) = 1.0 / (sigma_v * sigma_v);
    prior.H(11 + i, 11 + i) = 1.0 / (sigma_bg * sigma_bg);
    prior.H(14 + i, 14 + i) = 1.0 / (sigma_ba * sigma_ba);
  }
  // world-frame x/y rotation components of the left-perturbation log
  prior.H(3, 3) = prior.H(4, 4) = 1.0 / (sigma_rp * sigma_rp);
  prior.b = VecX::Zero(17);
  return prior;
}

inline VecX marginalization_prior_delta(const MarginalizationPrior& prior,
                                        const SlidingWindow& w) {
  VecX d(prior.dim());
  for (size_t k = 0; k < prior.kf_ids.size(); ++k) {
    const int i = w.kf_index(prior.kf_ids[k]);
    d.segment<17>(17 * k) =
        detail::kf_local_diff(w.keyframes[i], w.velocities[i], w.biases[i], prior.fej[k]);
  }
  return d;
}

inline double total_energy(const SlidingWindow& w) {
  double e = 0;
  const double drop = row_drop_penalty(w.weights);
  for (const PointFeature& pt : w.points) {
    if (pt.status != PointStatus::Active) continue;
    const int h = w.kf_index(pt.host_kf);
    const WindowPlane* plane = pt.coplanar() ? w.find_plane(pt.plane_id) : nullptr;
    if (pt.coplanar() && plane == nullptr) continue;
    for (size_t t = 0; t < w.keyframes.size(); ++t) {
      if (static_cast<int>(t) == h || !pt.observes(w.keyframes[t].id)) continue;
      try {
        const PhotometricResidual r =
            plane ? photometric_coplanar_residual(w.keyframes[h], w.keyframes[t], pt,
                                                  plane->plane, w.weights)
                  : photometric_point_residual(w.keyframes[h], w.keyframes[t], pt,
                                               pt.inv_depth, w.weights);
        e += r.energy + drop * (8 - r.num_valid);
      } catch (const std::runtime_error&) {
        e += drop * 8;  // whole observation out of its valid domain
      }
    }
  }
  for (size_t i = 0; i + 1 < w.keyframes.size() && i < w.preints.size(); ++i) {
    const InertialFactor f =
        inertial_residual(w.body_state(i), w.body_state(i + 1), w.preints[i], w.gravity);
    e += f.residual.dot(f.information * f.residual);
  }
  for (const PlanePriorFactor& prior : w.plane_priors) {
    const WindowPlane* p = w.find_plane(prior.plane_id);
    if (p) e += plane_prior_residual(p->plane, prior).energy;
  }
  if (w.marg_prior) {
    const VecX d = marginalization_prior_delta(*w.marg_prior, w);
    e += d.dot(w.marg_prior->H * d) + 2.0 * w.marg_prior->b.dot(d);
  }
  if (w.gauge) {
    const int i = w.kf_index(w.gauge->kf_id);
    const Vec3 dp = w.keyframes[i].T_wi.translation() - w.gauge->position;
    const double dy = angle_diff(rotation_yaw(w.keyframes[i].T_wi.rotation()), w.gauge->yaw);
    e += w.gauge->weight * (dp.squaredNorm() + dy * dy);
  }
  return e;
}

}  // namespace pvio
