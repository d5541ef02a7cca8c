#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "pvio/frame.hpp"
#include "pvio/imu.hpp"
#include "pvio/window.hpp"

namespace pvio {

struct NoVisibleGeometry : std::runtime_error {
  NoVisibleGeometry() : std::runtime_error("no scene plane visible from this pose") {}
};

/// Smooth product-of-sines texture over a plane's 2D chart. C-infinity, so
/// finite differences against renders are meaningful.
struct PlaneTexture {
  struct Term {
    double amplitude, wu, wv, pu, pv;
  };
  std::vector<Term> terms;
  double offset = 128.0;

  double value(double u, double v) const {
    double s = offset;
    for (const Term& t : terms)
      s += t.amplitude * std::sin(t.wu * u + t.pu) * std::sin(t.wv * v + t.pv);
    return s;
  }
};

/// Anisotropic frequency bands: surfaces seen at grazing angles have pixel
/// footprints stretched along one chart axis, so that axis gets the lower
/// band to keep bilinear renders photoconsistent across views.
inline PlaneTexture make_texture(uint32_t seed, double freq_u_max = 6.0,
                                 double freq_v_max = 6.0) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> amp(8.0, 18.0);
  std::uniform_real_distribution<double> fu(0.5, freq_u_max);
  std::uniform_real_distribution<double> fv(0.5, freq_v_max);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * M_PI);
  PlaneTexture tex;
  for (int k = 0; k < 6; ++k)
    tex.terms.push_back({amp(gen), fu(gen), fv(gen), phase(gen), phase(gen)});
  return tex;
}

/// One bounded textured plane. The chart (u, v) spans the plane: for a
/// horizontal plane u = x, v = y; for a vertical plane u runs along the wall
/// and v is the world z.
struct ScenePlaneSpec {
  MinimalPlane plane;
  double u_min = -10, u_max = 10, v_min = -10, v_max = 10;
  uint32_t texture_seed = 1;
  PlaneTexture texture;
};

struct SceneSpec {
  std::vector<ScenePlaneSpec> planes;
};

inline void plane_chart(const MinimalPlane& p, Vec3* origin, Vec3* u_axis, Vec3* v_axis) {
  const GeneralPlane g = minimal_plane_to_general(p);
  *origin = -g.d * g.n;
  if (p.kind == MinimalPlane::Kind::Horizontal) {
    *u_axis = Vec3::UnitX();
    *v_axis = Vec3::UnitY();
  } else {
    *u_axis = Vec3(-std::sin(p.phi), std::cos(p.phi), 0);
    *v_axis = Vec3::UnitZ();
  }
}

inline Vec2 plane_uv(const MinimalPlane& p, const Vec3& X_w) {
  Vec3 o, u, v;
  plane_chart(p, &o, &u, &v);
  return Vec2(u.dot(X_w - o), v.dot(X_w - o));
}

/// Corridor along +y: floor at height -1 and walls at x = +-2.
inline SceneSpec corridor_scene(uint32_t seed = 7) {
  SceneSpec scene;
  ScenePlaneSpec floor;
  floor.plane = {MinimalPlane::Kind::Horizontal, 0.0, 1.0};  // n=(0,0,1), height -1
  floor.u_min = -2.5;
  floor.u_max = 2.5;
  floor.v_min = -3.0;
  floor.v_max = 40.0;
  floor.texture_seed = seed;
  ScenePlaneSpec left;
  left.plane = {MinimalPlane::Kind::Vertical, 0.0, 2.0};  // x = -2
  left.u_min = -3.0;
  left.u_max = 40.0;
  left.v_min = -1.5;
  left.v_max = 3.0;
  left.texture_seed = seed + 1;
  ScenePlaneSpec right = left;
  right.plane = {MinimalPlane::Kind::Vertical, 0.0, -2.0};  // x = +2
  right.texture_seed = seed + 2;
  // v runs down the corridor on the floor chart, u runs down it on the walls
  floor.texture = make_texture(floor.texture_seed, 7.0, 1.6);
  left.texture = make_texture(left.texture_seed, 1.6, 7.0);
  right.texture = make_texture(right.texture_seed, 1.6, 7.0);
  scene.planes.push_back(floor);
  scene.planes.push_back(left);
  scene.planes.push_back(right);
  return scene;
}

struct SceneHit {
  int plane_index = -1;
  double depth = 0;   // z in the camera frame
  Vec3 point = Vec3::Zero();
  double intensity = 0;  // scene radiance before the exposure/affine model
};

/// Nearest bounded-plane intersection of a pixel ray.
inline SceneHit trace_ray(const SceneSpec& scene, const CameraIntrinsics& cam,
                          const Pose& T_wc, const Vec2& pixel) {
  const Vec3 ray = pixel_ray(cam, pixel);
  SceneHit best;
  for (size_t i = 0; i < scene.planes.size(); ++i) {
    const ScenePlaneSpec& sp = scene.planes[i];
    const GeneralPlane pi_c =
        plane_world_to_camera(minimal_plane_to_general(sp.plane), T_wc.inverse());
    const double denom = pi_c.n.dot(ray);
    if (std::abs(denom) <= 1e-12) continue;
    const double z = -pi_c.d / denom;
    if (z <= 1e-6) continue;
    if (best.plane_index >= 0 && z >= best.depth) continue;
    const Vec3 X_w = T_wc * (ray * z);
    const Vec2 uv = plane_uv(sp.plane, X_w);
    if (uv.x() < sp.u_min || uv.x() > sp.u_max || uv.y() < sp.v_min || uv.y() > sp.v_max)
      continue;
    best.plane_index = static_cast<int>(i);
    best.depth = z;
    best.point = X_w;
    best.intensity = sp.texture.value(uv.x(), uv.y());
  }
  return best;
}

struct RenderedKeyframe {
  Keyframe keyframe;
  std::vector<double> depth;     // row-major, -1 where no geometry
  std::vector<int> plane_index;  // -1 where no geometry
  double at_depth(int x, int y) const { return depth[y * keyframe.cam.width + x]; }
  int at_plane(int x, int y) const { return plane_index[y * keyframe.cam.width + x]; }
};

/// Renders the scene through the exposure/affine measurement model
/// I = t e^a B + b (+ noise), recording ground-truth depth and plane id.
inline RenderedKeyframe render(const SceneSpec& scene, const CameraIntrinsics& cam,
                               const Pose& T_wc, double exposure = 1.0, double affine_a = 0.0,
                               double affine_b = 0.0, double noise_sigma = 0.0,
                               uint32_t seed = 0) {
  RenderedKeyframe out;
  out.keyframe.cam = cam;
  out.keyframe.T_wi = T_wc;  // caller re-targets T_wi/T_ic as needed
  out.keyframe.exposure = exposure;
  out.keyframe.affine_a = affine_a;
  out.keyframe.affine_b = affine_b;
  out.depth.assign(static_cast<size_t>(cam.width) * cam.height, -1.0);
  out.plane_index.assign(static_cast<size_t>(cam.width) * cam.height, -1);

  auto img = std::make_shared<RasterImage>(cam.width, cam.height);
  std::mt19937 gen(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double gain = exposure * std::exp(affine_a);
  bool any = false;
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const SceneHit hit = trace_ray(scene, cam, T_wc, Vec2(x, y));
      double value = affine_b;
      if (hit.plane_index >= 0) {
        any = true;
        value = gain * hit.intensity + affine_b;
        out.depth[y * cam.width + x] = hit.depth;
        out.plane_index[y * cam.width + x] = hit.plane_index;
      }
      if (noise_sigma > 0) value += noise_sigma * noise(gen);
      img->at(x, y) = value;
    }
  if (!any) throw NoVisibleGeometry();
  out.keyframe.image = img;
  return out;
}

/// Analytic trajectory: constant base velocity plus sinusoidal sway, with
/// sinusoidal yaw/pitch/roll on top of a fixed base orientation. Everything
/// needed by the IMU model is available in closed form.
struct TrajectorySpec {
  Vec3 start = Vec3(0, 0, 0.2);
  Vec3 base_velocity = Vec3(0, 0.5, 0);
  double amp_x = 0.20, freq_x = 1.8;  // angular frequencies, rad/s
  double amp_z = 0.12, freq_z = 2.2;
  double yaw_amp = 0.12, yaw_freq = 0.7;
  double pitch_amp = 0.06, pitch_freq = 1.1;
  double roll_amp = 0.05, roll_freq = 1.7;
  double duration = 6.0;
  double keyframe_rate = 5.0;
  double imu_rate = 200.0;
  Pose T_ic;  // camera in body

  // base orientation: camera optical axis down the corridor (+y), x right
  Mat3 base_R_wi() const {
    Mat3 R_wc0;
    R_wc0.col(0) = Vec3::UnitX();
    R_wc0.col(1) = -Vec3::UnitZ();
    R_wc0.col(2) = Vec3::UnitY();
    return R_wc0 * T_ic.rotation().transpose();
  }

  Vec3 position(double t) const {
    return start + base_velocity * t +
           Vec3(amp_x * std::sin(freq_x * t), 0, amp_z * std::sin(freq_z * t));
  }
  Vec3 velocity(double t) const {
    return base_velocity + Vec3(amp_x * freq_x * std::cos(freq_x * t), 0,
                                amp_z * freq_z * std::cos(freq_z * t));
  }
  Vec3 acceleration(double t) const {
    return Vec3(-amp_x * freq_x * freq_x * std::sin(freq_x * t), 0,
                -amp_z * freq_z * freq_z * std::sin(freq_z * t));
  }

  double yaw(double t) const { return yaw_amp * std::sin(yaw_freq * t); }
  double pitch(double t) const { return pitch_amp * std::sin(pitch_freq * t); }
  double roll(double t) const { return roll_amp * std::sin(roll_freq * t); }

  Mat3 R_wi(double t) const {
    return (Eigen::AngleAxisd(yaw(t), Vec3::UnitZ()) *
            Eigen::AngleAxisd(pitch(t), Vec3::UnitY()) *
            Eigen::AngleAxisd(roll(t), Vec3::UnitX()))
               .toRotationMatrix() *
           base_R_wi();
  }

  // world-frame angular velocity of R(t) = Rz(psi) Ry(theta) Rx(phi) R0:
  // omega = psi' ez + theta' Rz ey + phi' Rz Ry ex
  Vec3 omega_world(double t) const {
    const double dpsi = yaw_amp * yaw_freq * std::cos(yaw_freq * t);
    const double dtheta = pitch_amp * pitch_freq * std::cos(pitch_freq * t);
    const double dphi = roll_amp * roll_freq * std::cos(roll_freq * t);
    const Mat3 Rz = Eigen::AngleAxisd(yaw(t), Vec3::UnitZ()).toRotationMatrix();
    const Mat3 Ry = Eigen::AngleAxisd(pitch(t), Vec3::UnitY()).toRotationMatrix();
    return dpsi * Vec3::UnitZ() + dtheta * (Rz * Vec3::UnitY()) +
           dphi * (Rz * Ry * Vec3::UnitX());
  }

  Pose body_pose(double t) const { return Pose(R_wi(t), position(t)); }
  Pose camera_pose(double t) const { return body_pose(t) * T_ic; }
};

/// Samples the exact IMU model of the trajectory with additive discrete
/// noise (density / sqrt(dt)) and the given constant bias.
inline std::vector<ImuSample> simulate_imu(const TrajectorySpec& traj, const ImuBias& bias,
                                           const ImuNoise& noise, uint32_t seed,
                                           double t0 = 0.0, double t1 = -1.0) {
  if (t1 < 0) t1 = traj.duration;
  const double dt = 1.0 / traj.imu_rate;
  std::mt19937 gen(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  const double sg = noise.sigma_g / std::sqrt(dt);
  const double sa = noise.sigma_a / std::sqrt(dt);
  std::vector<ImuSample> out;
  for (double t = t0; t <= t1 + 1e-9; t += dt) {
    const Mat3 R_iw = traj.R_wi(t).transpose();
    ImuSample s;
    s.timestamp = t;
    s.gyro = R_iw * traj.omega_world(t) + bias.bg;
    s.accel = R_iw * (traj.acceleration(t) - noise.gravity) + bias.ba;
    if (sg > 0)
      for (int k = 0; k < 3; ++k) s.gyro(k) += sg * n01(gen);
    if (sa > 0)
      for (int k = 0; k < 3; ++k) s.accel(k) += sa * n01(gen);
    out.push_back(s);
  }
  return out;
}

struct PerturbSigmas {
  double position = 0.01;      // m
  double rotation = 0.5 * M_PI / 180.0;  // rad
  double depth_rel = 0.05;
  double velocity = 0.02;      // m/s
  double plane_d = 0.01;       // m
  double plane_phi = 0.2 * M_PI / 180.0;
};

/// Deterministic seeded perturbation of an initial window around ground truth.
inline void perturb_init(SlidingWindow& w, const PerturbSigmas& s, uint32_t seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  auto n3 = [&](double sigma) -> Vec3 {
    return Vec3(n01(gen), n01(gen), n01(gen)) * sigma;
  };
  for (size_t i = 0; i < w.keyframes.size(); ++i) {
    Vec6 xi;
    xi.head<3>() = n3(s.position);
    xi.tail<3>() = n3(s.rotation);
    w.keyframes[i].T_wi = se3_exp(xi) * w.keyframes[i].T_wi;
    w.velocities[i] += n3(s.velocity);
  }
  for (PointFeature& pt : w.points)
    if (!pt.coplanar()) pt.inv_depth *= 1.0 + s.depth_rel * n01(gen);
  for (WindowPlane& p : w.planes) {
    if (p.plane.kind == MinimalPlane::Kind::Vertical)
      p.plane.phi = wrap_angle(p.plane.phi + s.plane_phi * n01(gen));
    p.plane.d += s.plane_d * n01(gen);
    canonicalize_vertical(p.plane);
  }
}

/// Gradient-ranked pixel selection with a coarse occupancy grid so points
/// spread across the image. Only pixels whose whole residual pattern sits on
/// one surface vote; seam pixels and far geometry make poor anchors.
inline std::vector<Vec2> select_points(const RenderedKeyframe& rk, int count,
                                       int grid_cell = 12, int border = 3,
                                       double max_depth = 10.0) {
  const CameraIntrinsics& cam = rk.keyframe.cam;
  struct Cand {
    double mag;
    int x, y;
  };
  std::vector<Cand> cands;
  for (int y = border; y < cam.height - border; ++y)
    for (int x = border; x < cam.width - border; ++x) {
      const int k = rk.at_plane(x, y);
      if (k < 0 || rk.at_depth(x, y) > max_depth) continue;
      bool clean = true;
      for (int dy = -2; dy <= 2 && clean; ++dy)
        for (int dx = -2; dx <= 2; ++dx)
          if (rk.at_plane(x + dx, y + dy) != k) {
            clean = false;
            break;
          }
      if (!clean) continue;
      const IntensitySample s = rk.keyframe.image->sample(x, y);
      cands.push_back({std::hypot(s.gx, s.gy), x, y});
    }
  std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
    if (a.mag != b.mag) return a.mag > b.mag;
    return a.y != b.y ? a.y < b.y : a.x < b.x;
  });
  const int gw = (cam.width + grid_cell - 1) / grid_cell;
  const int gh = (cam.height + grid_cell - 1) / grid_cell;
  std::vector<int> occupancy(static_cast<size_t>(gw) * gh, 0);
  std::vector<Vec2> out;
  std::vector<char> taken(cands.size(), 0);
  for (int pass = 0; pass < 8 && static_cast<int>(out.size()) < count; ++pass) {
    for (size_t i = 0; i < cands.size(); ++i) {
      if (static_cast<int>(out.size()) >= count) break;
      if (taken[i]) continue;
      const Cand& c = cands[i];
      int& occ = occupancy[(c.y / grid_cell) * gw + c.x / grid_cell];
      if (occ > pass) continue;
      ++occ;
      taken[i] = 1;
      out.emplace_back(c.x, c.y);
    }
  }
  return out;
}

}  // namespace pvio
