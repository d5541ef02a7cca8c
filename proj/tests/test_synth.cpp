#include "pvio/synth.hpp"

#include <gtest/gtest.h>

#include <algorithm>

#include "test_util.hpp"

namespace pvio {
namespace {

CameraIntrinsics small_cam() { return {120, 120, 80, 60, 160, 120}; }

TEST(Render, FrontoParallelPlaneConstantDepth) {
  SceneSpec scene;
  ScenePlaneSpec floor;
  floor.plane = {MinimalPlane::Kind::Horizontal, 0.0, 1.0};
  floor.u_min = -50;
  floor.u_max = 50;
  floor.v_min = -50;
  floor.v_max = 50;
  floor.texture = make_texture(3);
  scene.planes.push_back(floor);

  Mat3 R_wc;  // straight down, fronto-parallel to the floor
  R_wc.col(0) = Vec3::UnitX();
  R_wc.col(1) = -Vec3::UnitY();
  R_wc.col(2) = -Vec3::UnitZ();
  const RenderedKeyframe rk = render(scene, small_cam(), Pose(R_wc, Vec3(0, 0, 1)));
  for (int y = 0; y < 120; y += 7)
    for (int x = 0; x < 160; x += 7) {
      ASSERT_EQ(rk.at_plane(x, y), 0);
      EXPECT_NEAR(rk.at_depth(x, y), 2.0, 1e-9);
    }
}

TEST(Render, DoubledGainDoublesIntensity) {
  const SceneSpec scene = corridor_scene();
  const TrajectorySpec traj;
  const Pose T_wc = traj.camera_pose(0.5);
  const RenderedKeyframe a = render(scene, small_cam(), T_wc, 1.0, 0.0, 0.0);
  const RenderedKeyframe b = render(scene, small_cam(), T_wc, 1.0, std::log(2.0), 0.0);
  for (int y = 0; y < 120; y += 9)
    for (int x = 0; x < 160; x += 9) {
      if (a.at_plane(x, y) < 0) continue;
      EXPECT_NEAR(b.keyframe.image->sample(x, y).value,
                  2.0 * a.keyframe.image->sample(x, y).value, 1e-9);
    }
}

TEST(Render, DepthConsistentWithPlaneIntersection) {
  const SceneSpec scene = corridor_scene();
  const TrajectorySpec traj;
  const Pose T_wc = traj.camera_pose(1.0);
  const RenderedKeyframe rk = render(scene, small_cam(), T_wc);
  for (int y = 0; y < 120; y += 5)
    for (int x = 0; x < 160; x += 5) {
      const int k = rk.at_plane(x, y);
      if (k < 0) continue;
      const GeneralPlane pi_c = plane_world_to_camera(
          minimal_plane_to_general(scene.planes[k].plane), T_wc.inverse());
      EXPECT_NEAR(rk.at_depth(x, y), depth_from_plane(Vec2(x, y), pi_c, small_cam()), 1e-9);
    }
}

TEST(Render, CrossViewPhotometricConsistency) {
  const SceneSpec scene = corridor_scene();
  const TrajectorySpec traj;
  const Pose T_wc_a = traj.camera_pose(0.6);
  const Pose T_wc_b = traj.camera_pose(0.8);
  const RenderedKeyframe a = render(scene, small_cam(), T_wc_a);
  const RenderedKeyframe b = render(scene, small_cam(), T_wc_b);
  std::vector<double> errs;
  for (int y = 4; y < 116; y += 3)
    for (int x = 4; x < 156; x += 3) {
      const int k = a.at_plane(x, y);
      if (k < 0 || a.at_depth(x, y) > 8.0) continue;  // horizon pixels have huge footprints
      const GeneralPlane pi_w = minimal_plane_to_general(scene.planes[k].plane);
      TransferResult tr;
      try {
        tr = transfer_coplanar_point(Vec2(x, y), pi_w, T_wc_a, T_wc_b, small_cam());
      } catch (const std::runtime_error&) {
        continue;
      }
      if (!tr.in_image || !b.keyframe.image->in_domain(tr.pixel.x(), tr.pixel.y())) continue;
      // the bilinear cell must lie entirely on the same plane in both views
      const int bx = static_cast<int>(tr.pixel.x());
      const int by = static_cast<int>(tr.pixel.y());
      bool clean = bx + 1 < 160 && by + 1 < 120;
      for (int dy = 0; dy <= 1 && clean; ++dy)
        for (int dx = 0; dx <= 1; ++dx)
          if (b.at_plane(bx + dx, by + dy) != k) clean = false;
      for (int dy = -1; dy <= 1 && clean; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          if (a.at_plane(x + dx, y + dy) != k) clean = false;
      if (!clean) continue;  // seam or occlusion
      errs.push_back(std::abs(b.keyframe.image->sample(tr.pixel.x(), tr.pixel.y()).value -
                              a.keyframe.image->sample(x, y).value));
    }
  ASSERT_GT(errs.size(), 500u);
  std::sort(errs.begin(), errs.end());
  EXPECT_LT(errs[static_cast<size_t>(0.95 * errs.size())], 0.5);
}

TEST(SimulateImu, StaticPose) {
  TrajectorySpec traj;
  traj.base_velocity = Vec3::Zero();
  traj.amp_x = traj.amp_z = traj.yaw_amp = traj.pitch_amp = traj.roll_amp = 0;
  traj.duration = 0.5;
  const ImuNoise noise;
  const auto samples = simulate_imu(traj, ImuBias{}, ImuNoise{.sigma_g = 0, .sigma_a = 0,
                                                              .sigma_bg = 0, .sigma_ba = 0,
                                                              .gravity = noise.gravity},
                                    1);
  ASSERT_GT(samples.size(), 10u);
  const Vec3 expected = traj.base_R_wi().transpose() * Vec3(0, 0, 9.81);
  for (const ImuSample& s : samples) {
    EXPECT_NEAR(s.gyro.norm(), 0, 1e-12);
    EXPECT_NEAR((s.accel - expected).norm(), 0, 1e-12);
  }
}

TEST(SimulateImu, ConstantVelocityMeasuresOnlyGravity) {
  TrajectorySpec traj;
  traj.base_velocity = Vec3(0.3, 0.8, -0.1);
  traj.amp_x = traj.amp_z = traj.yaw_amp = traj.pitch_amp = traj.roll_amp = 0;
  traj.duration = 0.5;
  ImuNoise quiet;
  quiet.sigma_g = quiet.sigma_a = 0;
  const auto samples = simulate_imu(traj, ImuBias{}, quiet, 1);
  for (const ImuSample& s : samples)
    EXPECT_NEAR((s.accel - traj.base_R_wi().transpose() * Vec3(0, 0, 9.81)).norm(), 0, 1e-12);
}

TEST(SimulateImu, PreintegrationMatchesTrajectory) {
  TrajectorySpec traj;
  traj.imu_rate = 400.0;
  ImuNoise quiet;
  quiet.sigma_g = quiet.sigma_a = 0;
  for (double t0 : {0.0, 0.8, 2.2}) {
    const double t1 = t0 + 0.2;
    const auto samples = simulate_imu(traj, ImuBias{}, quiet, 1, t0, t1);
    const PreintegratedImu pre = preintegrate(samples, ImuBias{}, quiet);
    BodyState si, sj;
    si.pose = traj.body_pose(t0);
    si.velocity = traj.velocity(t0);
    sj.pose = traj.body_pose(t1);
    sj.velocity = traj.velocity(t1);
    const InertialFactor f = inertial_residual(si, sj, pre, quiet.gravity);
    EXPECT_LT(f.residual.head<9>().norm(), 1e-5);
  }
}

TEST(PerturbInit, ZeroSigmasKeepGroundTruth) {
  SlidingWindow w;
  Keyframe kf;
  kf.id = 0;
  kf.T_wi = testing::random_pose(0.5, 1.0);
  w.keyframes.push_back(kf);
  w.velocities.push_back(Vec3(1, 2, 3));
  w.biases.push_back({});
  PointFeature pt;
  pt.inv_depth = 0.7;
  w.points.push_back(pt);
  const Pose before = kf.T_wi;
  perturb_init(w, PerturbSigmas{0, 0, 0, 0, 0, 0}, 5);
  EXPECT_TRUE(w.keyframes[0].T_wi.isApprox(before, 1e-14));
  EXPECT_DOUBLE_EQ(w.points[0].inv_depth, 0.7);
}

TEST(PerturbInit, SeededAndRepeatable) {
  auto build = [] {
    SlidingWindow w;
    for (int i = 0; i < 3; ++i) {
      Keyframe kf;
      kf.id = i;
      w.keyframes.push_back(kf);
      w.velocities.push_back(Vec3::Zero());
      w.biases.push_back({});
    }
    return w;
  };
  SlidingWindow a = build(), b = build(), c = build();
  perturb_init(a, PerturbSigmas{}, 11);
  perturb_init(b, PerturbSigmas{}, 11);
  perturb_init(c, PerturbSigmas{}, 12);
  for (int i = 0; i < 3; ++i) {
    EXPECT_TRUE(a.keyframes[i].T_wi.isApprox(b.keyframes[i].T_wi, 1e-15));
    EXPECT_EQ(a.velocities[i], b.velocities[i]);
  }
  EXPECT_FALSE(a.keyframes[0].T_wi.isApprox(c.keyframes[0].T_wi, 1e-12));
}

TEST(SelectPoints, DeterministicAndOnGeometry) {
  const SceneSpec scene = corridor_scene();
  const TrajectorySpec traj;
  const RenderedKeyframe rk = render(scene, small_cam(), traj.camera_pose(0.4));
  const auto a = select_points(rk, 200);
  const auto b = select_points(rk, 200);
  ASSERT_EQ(a.size(), 200u);
  ASSERT_EQ(a.size(), b.size());
  for (size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i], b[i]);
    EXPECT_GE(rk.at_plane(static_cast<int>(a[i].x()), static_cast<int>(a[i].y())), 0);
  }
}

}  // namespace
}  // namespace pvio
