#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pvio/eval.hpp"
#include "pvio/io.hpp"
#include "pvio/optimizer.hpp"
#include "pvio/plane_detect.hpp"
#include "pvio/synth.hpp"

namespace pvio {

struct BadConfig : std::runtime_error {
  explicit BadConfig(const std::string& what) : std::runtime_error("bad config: " + what) {}
};
struct BadBundle : std::runtime_error {
  explicit BadBundle(const std::string& what) : std::runtime_error("bad bundle: " + what) {}
};
struct DivergedOptimization : std::runtime_error {
  explicit DivergedOptimization(int window)
      : std::runtime_error("optimization diverged in window " + std::to_string(window)) {}
};

/// Experiment constants; every field can be overridden from the plain-text
/// config ([section] headers, key = value entries).
struct ExperimentConfig {
  // [scene]
  std::string scene_kind = "corridor";
  uint32_t scene_seed = 7;
  // [trajectory]
  double duration = 6.0;
  double keyframe_rate = 5.0;
  double imu_rate = 200.0;
  double speed = 0.5;
  // [noise]
  double photometric_sigma = 5.0;
  double gyro_sigma = 1.7e-4;
  double accel_sigma = 2.0e-3;
  double init_position_sigma = 0.01;
  double init_rotation_sigma = 0.5 * M_PI / 180.0;
  double init_depth_sigma = 0.05;
  // [estimator]
  int window_size = 7;
  int point_budget = 800;  // active points across the whole window
  double sigma_t = 20.0;
  double height_bin = 0.05;
  double azimuth_bin = 2.0 * M_PI / 180.0;
  double distance_bin = 0.05;
  double huber_gamma = 9.0;
  bool plane_enabled = true;
  bool plane_prior_enabled = true;
  int max_iterations = 8;
  double init_damping = 1e-4;
  int threads = 1;
  // [run]
  uint32_t seed = 1;

  CameraIntrinsics camera{120, 120, 80, 60, 160, 120};

  Pose T_ic() const {
    return Pose(so3_exp(Vec3(0.02, -0.015, 0.03)), Vec3(0.05, -0.02, 0.01));
  }

  TrajectorySpec trajectory() const {
    TrajectorySpec t;
    t.duration = duration;
    t.keyframe_rate = keyframe_rate;
    t.imu_rate = imu_rate;
    t.base_velocity = Vec3(0, speed, 0);
    t.T_ic = T_ic();
    return t;
  }

  PlaneDetectParams detect_params() const {
    PlaneDetectParams p;
    p.sigma_t = sigma_t;
    p.height_bin = height_bin;
    p.azimuth_bin = azimuth_bin;
    p.distance_bin = distance_bin;
    return p;
  }

  int keyframe_count() const {
    return static_cast<int>(std::floor(duration * keyframe_rate + 1e-9)) + 1;
  }
};

inline ExperimentConfig parse_experiment_config(const ConfigFile& file) {
  ExperimentConfig c;
  auto fail = [](const std::string& where, const std::string& what) -> double {
    throw BadConfig(where + ": " + what);
  };
  for (const ConfigSection& s : file.sections) {
    for (const auto& [key, val] : s.entries) {
      const std::string where = "[" + s.name + "] " + key;
      try {
        if (s.name == "scene") {
          if (key == "kind")
            c.scene_kind = val;
          else if (key == "seed")
            c.scene_seed = static_cast<uint32_t>(config_int(val));
          else
            fail(where, "unknown key");
        } else if (s.name == "trajectory") {
          if (key == "duration")
            c.duration = config_double(val);
          else if (key == "keyframe_rate")
            c.keyframe_rate = config_double(val);
          else if (key == "imu_rate")
            c.imu_rate = config_double(val);
          else if (key == "speed")
            c.speed = config_double(val);
          else
            fail(where, "unknown key");
        } else if (s.name == "noise") {
          if (key == "photometric_sigma")
            c.photometric_sigma = config_double(val);
          else if (key == "gyro_sigma")
            c.gyro_sigma = config_double(val);
          else if (key == "accel_sigma")
            c.accel_sigma = config_double(val);
          else if (key == "init_position_sigma")
            c.init_position_sigma = config_double(val);
          else if (key == "init_rotation_sigma")
            c.init_rotation_sigma = config_double(val);
          else if (key == "init_depth_sigma")
            c.init_depth_sigma = config_double(val);
          else
            fail(where, "unknown key");
        } else if (s.name == "estimator") {
          if (key == "window_size")
            c.window_size = config_int(val);
          else if (key == "point_budget")
            c.point_budget = config_int(val);
          else if (key == "sigma_t")
            c.sigma_t = config_double(val);
          else if (key == "height_bin")
            c.height_bin = config_double(val);
          else if (key == "azimuth_bin")
            c.azimuth_bin = config_double(val);
          else if (key == "distance_bin")
            c.distance_bin = config_double(val);
          else if (key == "huber_gamma")
            c.huber_gamma = config_double(val);
          else if (key == "plane_enabled")
            c.plane_enabled = config_bool(val);
          else if (key == "plane_prior_enabled")
            c.plane_prior_enabled = config_bool(val);
          else if (key == "max_iterations")
            c.max_iterations = config_int(val);
          else if (key == "init_damping")
            c.init_damping = config_double(val);
          else if (key == "threads")
            c.threads = config_int(val);
          else
            fail(where, "unknown key");
        } else if (s.name == "run") {
          if (key == "seed")
            c.seed = static_cast<uint32_t>(config_int(val));
          else
            fail(where, "unknown key");
        } else {
          fail("[" + s.name + "]", "unknown section");
        }
      } catch (const ParseError& e) {
        throw BadConfig(where + ": " + e.what());
      }
    }
  }
  if (c.scene_kind != "corridor") throw BadConfig("unsupported scene kind " + c.scene_kind);
  if (c.window_size < 2) throw BadConfig("window_size must be >= 2");
  if (c.keyframe_rate <= 0 || c.imu_rate <= 0 || c.duration <= 0)
    throw BadConfig("trajectory rates and duration must be positive");
  if (c.point_budget < 1) throw BadConfig("point_budget must be >= 1");
  if (c.max_iterations < 1) throw BadConfig("max_iterations must be >= 1");
  if (c.threads < 1) throw BadConfig("threads must be >= 1");
  return c;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  try {
    return parse_experiment_config(parse_config_file(path));
  } catch (const ParseError& e) {
    throw BadConfig(e.what());
  }
}

// ---------------------------------------------------------------------------
// Scene bundle on disk: manifest + keyframe PGMs + gt.tum + imu.csv.

namespace detail {

inline std::string kf_image_name(int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "kf_%03d.pgm", i);
  return buf;
}

inline nlohmann::json pose_json(const Pose& p) {
  Eigen::Quaterniond q(p.rotation());
  if (q.w() < 0) q.coeffs() = -q.coeffs();
  return {p.translation().x(), p.translation().y(), p.translation().z(),
          q.x(), q.y(), q.z(), q.w()};
}

inline Pose pose_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 7) throw BadBundle("malformed pose");
  Eigen::Quaterniond q(j[6].get<double>(), j[3].get<double>(), j[4].get<double>(),
                       j[5].get<double>());
  q.normalize();
  return Pose(q.toRotationMatrix(), Vec3(j[0], j[1], j[2]));
}

}  // namespace detail

inline void cmd_synth(const ExperimentConfig& cfg, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoFailure("cannot create " + out_dir);

  const SceneSpec scene = corridor_scene(cfg.scene_seed);
  const TrajectorySpec traj = cfg.trajectory();
  const int n_kf = cfg.keyframe_count();

  nlohmann::json manifest;
  manifest["kind"] = cfg.scene_kind;
  manifest["scene_seed"] = cfg.scene_seed;
  manifest["seed"] = cfg.seed;
  manifest["photometric_sigma"] = cfg.photometric_sigma;
  manifest["gyro_sigma"] = cfg.gyro_sigma;
  manifest["accel_sigma"] = cfg.accel_sigma;
  manifest["camera"] = {{"fx", cfg.camera.fx}, {"fy", cfg.camera.fy}, {"cx", cfg.camera.cx},
                        {"cy", cfg.camera.cy}, {"width", cfg.camera.width},
                        {"height", cfg.camera.height}};
  manifest["t_ic"] = detail::pose_json(cfg.T_ic());
  manifest["trajectory"] = {{"duration", traj.duration},
                            {"keyframe_rate", traj.keyframe_rate},
                            {"imu_rate", traj.imu_rate},
                            {"speed", cfg.speed}};

  Trajectory gt;
  nlohmann::json kfs = nlohmann::json::array();
  for (int i = 0; i < n_kf; ++i) {
    const double t = i / traj.keyframe_rate;
    const RenderedKeyframe rk = render(scene, cfg.camera, traj.camera_pose(t), 1.0, 0.0, 0.0,
                                       cfg.photometric_sigma, cfg.seed * 1000 + i);
    const std::string name = detail::kf_image_name(i);
    write_pgm_file((fs::path(out_dir) / name).string(),
                   *std::static_pointer_cast<const RasterImage>(rk.keyframe.image), 65535);
    kfs.push_back({{"id", i}, {"t", t}, {"image", name}});
    gt.push_back({t, traj.body_pose(t)});
  }
  manifest["keyframes"] = kfs;
  manifest["files"] = {{"gt", "gt.tum"}, {"imu", "imu.csv"}};

  write_tum_file((fs::path(out_dir) / "gt.tum").string(), gt);
  ImuNoise noise;
  noise.sigma_g = cfg.gyro_sigma;
  noise.sigma_a = cfg.accel_sigma;
  write_imu_csv_file((fs::path(out_dir) / "imu.csv").string(),
                     simulate_imu(traj, ImuBias{}, noise, cfg.seed * 77 + 5, 0.0, cfg.duration));

  std::ofstream mf(fs::path(out_dir) / "manifest.json", std::ios::binary);
  if (!mf) throw IoFailure("cannot write manifest.json");
  mf << manifest.dump(2) << "\n";
}

struct Bundle {
  SceneSpec scene;
  TrajectorySpec traj;
  CameraIntrinsics cam;
  Pose T_ic;
  uint32_t seed = 0;
  double photometric_sigma = 0;
  double gyro_sigma = 0, accel_sigma = 0;
  struct Kf {
    int id;
    double t;
    std::string image_path;
  };
  std::vector<Kf> keyframes;
  Trajectory gt;                 // body poses
  std::vector<ImuSample> imu;
};

inline Bundle load_bundle(const std::string& dir) {
  namespace fs = std::filesystem;
  Bundle b;
  nlohmann::json m;
  {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw BadBundle("missing manifest.json in " + dir);
    try {
      in >> m;
    } catch (const nlohmann::json::exception& e) {
      throw BadBundle(std::string("manifest.json: ") + e.what());
    }
  }
  try {
    if (m.at("kind") != "corridor") throw BadBundle("unsupported scene kind");
    b.scene = corridor_scene(m.at("scene_seed").get<uint32_t>());
    b.seed = m.at("seed").get<uint32_t>();
    b.photometric_sigma = m.at("photometric_sigma").get<double>();
    b.gyro_sigma = m.at("gyro_sigma").get<double>();
    b.accel_sigma = m.at("accel_sigma").get<double>();
    const auto& c = m.at("camera");
    b.cam.fx = c.at("fx");
    b.cam.fy = c.at("fy");
    b.cam.cx = c.at("cx");
    b.cam.cy = c.at("cy");
    b.cam.width = c.at("width");
    b.cam.height = c.at("height");
    b.T_ic = detail::pose_from_json(m.at("t_ic"));
    const auto& t = m.at("trajectory");
    b.traj.duration = t.at("duration");
    b.traj.keyframe_rate = t.at("keyframe_rate");
    b.traj.imu_rate = t.at("imu_rate");
    b.traj.base_velocity = Vec3(0, t.at("speed").get<double>(), 0);
    b.traj.T_ic = b.T_ic;
    for (const auto& k : m.at("keyframes"))
      b.keyframes.push_back({k.at("id").get<int>(), k.at("t").get<double>(),
                             (fs::path(dir) / k.at("image").get<std::string>()).string()});
    b.gt = read_tum_file((fs::path(dir) / m.at("files").at("gt").get<std::string>()).string());
    b.imu =
        read_imu_csv_file((fs::path(dir) / m.at("files").at("imu").get<std::string>()).string());
  } catch (const nlohmann::json::exception& e) {
    throw BadBundle(std::string("manifest.json: ") + e.what());
  } catch (const IoFailure& e) {
    throw BadBundle(e.what());
  } catch (const ParseError& e) {
    throw BadBundle(e.what());
  }
  if (b.keyframes.size() != b.gt.size()) throw BadBundle("keyframe/gt count mismatch");
  if (b.imu.size() < 2) throw BadBundle("imu stream too short");
  return b;
}

// ---------------------------------------------------------------------------
// Sliding-window run over a bundle.

struct WindowPlaneLog {
  int id = -1;
  MinimalPlane plane;
  int members = 0;
};

struct WindowLog {
  int window = 0;
  std::vector<int> kf_ids;
  int state_dim = 0;
  int n_points = 0;
  int n_coplanar = 0;
  int n_planes = 0;
  double energy_initial = 0;
  double energy_final = 0;
  std::vector<IterationTrace> iterations;
  std::vector<WindowPlaneLog> planes;
};

struct RunResult {
  Trajectory est;  // body poses at keyframe timestamps
  std::vector<WindowLog> logs;
  std::map<int, PlanePriorFactor> plane_priors;     // final retired-plane priors
  std::map<int, DetectedPlane> registry_snapshot;   // final registry estimates
};

namespace detail {

/// Keeps only observations whose full residual pattern projects comfortably
/// inside the target frame at the current state. Deciding the observation set
/// up front keeps the window energy landscape free of border effects.
inline void gate_observations(SlidingWindow& w, double margin = 5.0) {
  for (PointFeature& pt : w.points) {
    pt.target_kfs.clear();
    const int h = w.kf_index(pt.host_kf);
    const Keyframe& host = w.keyframes[h];
    double z = 0;
    if (pt.coplanar()) {
      const WindowPlane* plane = w.find_plane(pt.plane_id);
      if (plane == nullptr) continue;
      try {
        const GeneralPlane pi_c = plane_world_to_camera(minimal_plane_to_general(plane->plane),
                                                        host.T_wc().inverse());
        z = depth_from_plane(pt.pixel, pi_c, host.cam);
      } catch (const std::runtime_error&) {
        pt.target_kfs.push_back(-1);  // matches no keyframe
        continue;
      }
    } else {
      z = 1.0 / pt.inv_depth;
    }
    if (!(z > 0) || !std::isfinite(z)) {
      pt.target_kfs.push_back(-1);
      continue;
    }
    const Vec3 X_w = host.T_wc() * backproject(host.cam, pt.pixel, 1.0 / z);
    for (size_t t = 0; t < w.keyframes.size(); ++t) {
      if (static_cast<int>(t) == h) continue;
      const Keyframe& target = w.keyframes[t];
      const Vec3 X_t = target.T_wc().inverse() * X_w;
      if (X_t.z() < 0.1) continue;
      if (!target.cam.contains(project(target.cam, X_t), margin)) continue;
      pt.target_kfs.push_back(target.id);
    }
    if (pt.target_kfs.empty()) pt.target_kfs.push_back(-1);
  }
}

inline RenderedKeyframe ground_truth_view(const Bundle& b, int i, const Keyframe& kf) {
  RenderedKeyframe rk;
  rk.keyframe = kf;
  const Pose T_wc_gt = b.gt[i].pose * b.T_ic;
  rk.depth.assign(static_cast<size_t>(b.cam.width) * b.cam.height, -1.0);
  rk.plane_index.assign(static_cast<size_t>(b.cam.width) * b.cam.height, -1);
  for (int y = 0; y < b.cam.height; ++y)
    for (int x = 0; x < b.cam.width; ++x) {
      const SceneHit hit = trace_ray(b.scene, b.cam, T_wc_gt, Vec2(x, y));
      if (hit.plane_index < 0) continue;
      rk.depth[y * b.cam.width + x] = hit.depth;
      rk.plane_index[y * b.cam.width + x] = hit.plane_index;
    }
  return rk;
}

inline std::vector<ImuSample> imu_slice(const std::vector<ImuSample>& all, double t0, double t1) {
  std::vector<ImuSample> out;
  for (const ImuSample& s : all)
    if (s.timestamp >= t0 - 1e-9 && s.timestamp <= t1 + 1e-9) out.push_back(s);
  return out;
}

/// Detects planes in the newest keyframe's landmark mesh, merges them into
/// the registry and binds supporting points hosted by that keyframe.
inline void detect_and_bind(SlidingWindow& w, int host_id, PlaneRegistry& registry,
                            const PlaneDetectParams& det, int min_members = 6) {
  std::vector<MeshVertex> verts;
  std::map<int, double> inv_depths;
  std::map<int, PointFeature*> by_id;
  for (PointFeature& pt : w.points) {
    if (pt.host_kf != host_id || pt.status != PointStatus::Active || pt.coplanar()) continue;
    verts.push_back({pt.pixel, pt.id});
    inv_depths[pt.id] = pt.inv_depth;
    by_id[pt.id] = &pt;
  }
  if (verts.size() < 10) return;
  const Keyframe& host = w.keyframes[w.kf_index(host_id)];
  Mesh3D mesh;
  try {
    // sparse landmark meshes have metre-scale faces; the default edge cap is
    // sized for dense meshes and would reject nearly everything here
    mesh = lift_to_3d(delaunay2d(verts), inv_depths, host.T_wc(), host.cam, 2.0);
  } catch (const std::runtime_error&) {
    return;
  }
  const FaceClasses classes = classify_faces(mesh, det.angle_tol);

  std::vector<MinimalPlane> found;
  for (const HorizontalPlane& h : detect_horizontal(classes.horizontal, det))
    found.push_back({MinimalPlane::Kind::Horizontal, 0.0, h.d});
  for (const VerticalPlane& v : detect_vertical(classes.vertical, det)) {
    MinimalPlane mp{MinimalPlane::Kind::Vertical, v.phi, v.d};
    canonicalize_vertical(mp);
    found.push_back(mp);
  }

  for (const MinimalPlane& mp : found) {
    DetectedPlane dp;
    dp.plane = mp;
    dp.member_points = associate_points(mesh, mp, det.point_dist_tol, det.angle_tol);
    dp.support = static_cast<double>(dp.member_points.size());
    if (static_cast<int>(dp.member_points.size()) < min_members) continue;
    const int id = registry.merge_or_insert(dp, det);

    WindowPlane* wp = nullptr;
    for (WindowPlane& p : w.planes)
      if (p.id == id) wp = &p;
    if (wp == nullptr) {
      MinimalPlane init = registry.find(id)->plane.plane;
      canonicalize_vertical(init);
      w.planes.push_back({id, init});
    }
    for (int pid : dp.member_points) {
      auto it = by_id.find(pid);
      if (it != by_id.end()) it->second->plane_id = id;
    }
  }
}

}  // namespace detail

inline RunResult run_experiment(const Bundle& bundle, const ExperimentConfig& cfg) {
  RunResult out;
  std::mt19937 rng(bundle.seed * 9973 + cfg.seed * 101 + 17);
  std::normal_distribution<double> n01(0.0, 1.0);
  auto n3 = [&](double sigma) { return Vec3(n01(rng), n01(rng), n01(rng)) * sigma; };

  SlidingWindow w;
  w.weights.huber_gamma = cfg.huber_gamma;
  w.max_keyframes = cfg.window_size;
  // noise model floor: on noise-free streams the residual error budget is the
  // integrator's own discretization error, not zero
  ImuNoise inoise;
  inoise.sigma_g = std::max(bundle.gyro_sigma, 2e-5);
  inoise.sigma_a = std::max(bundle.accel_sigma, 2e-4);
  // the simulated IMU has constant bias, so the walk model can be tight;
  // loose walk sigmas let a bias ramp absorb the (IMU-only) scale mode
  inoise.sigma_bg = 1e-6;
  inoise.sigma_ba = 1e-5;

  PlaneRegistry registry;
  // detection on sparse photometrically-estimated meshes needs looser face
  // tolerances than exact-depth detection: normals of metre-scale faces with
  // percent-level vertex depth noise scatter by tens of degrees
  PlaneDetectParams det = cfg.detect_params();
  det.angle_tol = 20.0 * M_PI / 180.0;
  det.height_bin = std::max(det.height_bin, 0.1);
  det.distance_bin = std::max(det.distance_bin, 0.1);
  det.point_dist_tol = 0.15;
  OptimizeParams params;
  params.max_iterations = cfg.max_iterations;
  params.init_damping = cfg.init_damping;

  const int per_kf_budget = std::max(1, cfg.point_budget / cfg.window_size);
  int next_pt_id = 0;
  bool optimized_once = false;

  for (size_t i = 0; i < bundle.keyframes.size(); ++i) {
    const Bundle::Kf& bk = bundle.keyframes[i];
    Keyframe kf;
    kf.id = bk.id;
    kf.timestamp = bk.t;
    kf.T_ic = bundle.T_ic;
    kf.cam = bundle.cam;
    kf.image = std::make_shared<BicubicImage>(read_pgm_file(bk.image_path));

    if (i == 0) {
      Vec6 xi;
      xi.head<3>() = n3(cfg.init_position_sigma);
      xi.tail<3>() = n3(cfg.init_rotation_sigma);
      kf.T_wi = se3_exp(xi) * bundle.gt[0].pose;
      w.keyframes.push_back(kf);
      w.velocities.push_back(bundle.traj.velocity(bk.t) + n3(cfg.init_position_sigma));
      w.biases.push_back({});
      w.marg_prior = initial_state_prior(w, 5e-4, 1e-5, 5e-5,
                                         std::max(cfg.init_rotation_sigma, 1e-4));
      GaugeAnchor g;
      g.kf_id = kf.id;
      g.position = kf.T_wi.translation();
      g.yaw = rotation_yaw(kf.T_wi.rotation());
      w.gauge = g;
    } else {
      const double t_prev = w.keyframes.back().timestamp;
      const auto samples = detail::imu_slice(bundle.imu, t_prev, bk.t);
      const PreintegratedImu pre = preintegrate(samples, w.biases.back(), inoise);
      const Pose& T_prev = w.keyframes.back().T_wi;
      const Vec3& v_prev = w.velocities.back();
      const double dt = pre.dt_total;
      kf.T_wi = Pose(T_prev.rotation() * pre.delta_R,
                     T_prev.translation() + v_prev * dt + 0.5 * w.gravity * dt * dt +
                         T_prev.rotation() * pre.delta_p);
      w.keyframes.push_back(kf);
      w.velocities.push_back(v_prev + w.gravity * dt + T_prev.rotation() * pre.delta_v);
      w.biases.push_back(w.biases.back());
      w.preints.push_back(pre);
    }

    // new landmarks for this keyframe, depths seeded from perturbed ground truth
    const RenderedKeyframe view = detail::ground_truth_view(bundle, static_cast<int>(i), kf);
    for (const Vec2& px : select_points(view, per_kf_budget)) {
      PointFeature pt;
      pt.id = next_pt_id++;
      pt.host_kf = kf.id;
      pt.pixel = px;
      const double z = view.at_depth(static_cast<int>(px.x()), static_cast<int>(px.y()));
      pt.inv_depth = (1.0 / z) * (1.0 + cfg.init_depth_sigma * n01(rng));
      w.points.push_back(pt);
    }

    // detection runs on depths refined by earlier windows; freshly seeded
    // depths are too noisy to give usable face normals, so the first pass
    // over a keyframe set that never went through the optimizer finds nothing
    if (cfg.plane_enabled && optimized_once)
      for (const Keyframe& host : w.keyframes)
        detail::detect_and_bind(w, host.id, registry, det);

    w.plane_priors.clear();
    if (cfg.plane_enabled && cfg.plane_prior_enabled)
      for (const WindowPlane& wp : w.planes) {
        auto it = out.plane_priors.find(wp.id);
        if (it != out.plane_priors.end()) w.plane_priors.push_back(it->second);
      }

    detail::gate_observations(w);

    WindowLog log;
    log.window = static_cast<int>(i);
    for (const Keyframe& k : w.keyframes) log.kf_ids.push_back(k.id);

    // the global tilt mode only becomes observable with several keyframes of
    // photometric parallax; optimizing smaller windows bakes an arbitrary
    // tilt into the marginalization prior, so hold off until the window fills
    // (or the bundle ends, for short batch runs)
    const int optimize_from =
        std::min<int>(cfg.window_size, static_cast<int>(bundle.keyframes.size()));
    if (static_cast<int>(w.keyframes.size()) >= std::max(2, optimize_from)) {
      log.energy_initial = total_energy(w);
      log.energy_final = optimize(w, params, &log.iterations);
      if (log.energy_final > 10.0 * std::max(log.energy_initial, 1.0))
        throw DivergedOptimization(log.window);
      optimized_once = true;
    }

    log.state_dim = state_dimension(w);
    log.n_points = static_cast<int>(w.points.size());
    for (const PointFeature& pt : w.points)
      if (pt.coplanar()) ++log.n_coplanar;
    log.n_planes = static_cast<int>(w.planes.size());

    // refresh the standing prior of every active plane from the optimized
    // window (window-only information; the attached prior is excluded first).
    // Unit member weight: the covariance of the window marginal already
    // carries the members' combined information, so weighting by the member
    // count again would freeze the plane at its first estimate.
    if (cfg.plane_enabled)
      for (const WindowPlane& wp : w.planes) {
        int members = 0;
        for (const PointFeature& pt : w.points)
          if (pt.plane_id == wp.id && pt.status == PointStatus::Active) ++members;
        if (members == 0) continue;
        SlidingWindow probe = w;
        probe.plane_priors.erase(
            std::remove_if(probe.plane_priors.begin(), probe.plane_priors.end(),
                           [&](const PlanePriorFactor& f) { return f.plane_id == wp.id; }),
            probe.plane_priors.end());
        try {
          out.plane_priors[wp.id] = retire_plane(probe, wp.id, 1.0);
        } catch (const std::runtime_error&) {
        }
      }

    for (const WindowPlane& wp : w.planes) {
      WindowPlaneLog pl;
      pl.id = wp.id;
      pl.plane = wp.plane;
      for (const PointFeature& pt : w.points)
        if (pt.plane_id == wp.id && pt.status == PointStatus::Active) ++pl.members;
      log.planes.push_back(pl);
    }
    out.logs.push_back(std::move(log));

    if (static_cast<int>(w.keyframes.size()) > cfg.window_size) {
      const Keyframe& oldest = w.keyframes.front();
      out.est.push_back({oldest.timestamp, oldest.T_wi});
      marginalize_keyframe(w, oldest.id);
      // planes whose members all left the window carry no factors; drop them
      for (auto it = w.planes.begin(); it != w.planes.end();) {
        int members = 0;
        for (const PointFeature& pt : w.points)
          if (pt.plane_id == it->id && pt.status == PointStatus::Active) ++members;
        if (members == 0) {
          w.plane_priors.erase(
              std::remove_if(w.plane_priors.begin(), w.plane_priors.end(),
                             [&](const PlanePriorFactor& f) { return f.plane_id == it->id; }),
              w.plane_priors.end());
          it = w.planes.erase(it);
        } else {
          ++it;
        }
      }
    }
  }

  for (const Keyframe& k : w.keyframes) out.est.push_back({k.timestamp, k.T_wi});
  for (const auto& e : registry.entries())
    if (e.active) out.registry_snapshot[e.id] = e.plane;
  return out;
}

namespace detail {

inline const char* kind_name(MinimalPlane::Kind k) {
  return k == MinimalPlane::Kind::Horizontal ? "horizontal" : "vertical";
}

}  // namespace detail

inline void cmd_run(const std::string& bundle_dir, const ExperimentConfig& cfg,
                    const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoFailure("cannot create " + out_dir);

  const Bundle bundle = load_bundle(bundle_dir);
  const RunResult res = run_experiment(bundle, cfg);

  write_tum_file((fs::path(out_dir) / "est.tum").string(), res.est);

  std::ofstream trace(fs::path(out_dir) / "trace.jsonl", std::ios::binary);
  std::ofstream dims(fs::path(out_dir) / "state_dim.csv", std::ios::binary);
  if (!trace || !dims) throw IoFailure("cannot write run outputs in " + out_dir);
  dims << "window,n_keyframes,n_points,n_coplanar,n_planes,state_dim\n";
  for (const WindowLog& log : res.logs) {
    nlohmann::json j;
    j["window"] = log.window;
    j["kf_ids"] = log.kf_ids;
    j["state_dim"] = log.state_dim;
    j["n_points"] = log.n_points;
    j["n_coplanar"] = log.n_coplanar;
    j["n_planes"] = log.n_planes;
    j["energy_initial"] = log.energy_initial;
    j["energy_final"] = log.energy_final;
    nlohmann::json iters = nlohmann::json::array();
    for (const IterationTrace& it : log.iterations)
      iters.push_back({{"iter", it.iter}, {"energy", it.energy}, {"damping", it.damping},
                       {"step_norm", it.step_norm}, {"accepted", it.accepted}});
    j["iterations"] = iters;
    nlohmann::json planes = nlohmann::json::array();
    for (const WindowPlaneLog& pl : log.planes)
      planes.push_back({{"id", pl.id}, {"kind", detail::kind_name(pl.plane.kind)},
                        {"phi", pl.plane.phi}, {"d", pl.plane.d}, {"members", pl.members}});
    j["planes"] = planes;
    trace << j.dump() << "\n";
    dims << log.window << "," << log.kf_ids.size() << "," << log.n_points << ","
         << log.n_coplanar << "," << log.n_planes << "," << log.state_dim << "\n";
  }

  nlohmann::json report = nlohmann::json::array();
  for (const auto& [id, dp] : res.registry_snapshot) {
    nlohmann::json j;
    j["id"] = id;
    j["kind"] = detail::kind_name(dp.plane.kind);
    j["phi"] = dp.plane.phi;
    j["d"] = dp.plane.d;
    j["support"] = dp.support;
    j["n_points"] = dp.member_points.size();
    auto it = res.plane_priors.find(id);
    if (it != res.plane_priors.end()) {
      j["prior"] = {{"phi", it->second.phi_prior}, {"d", it->second.d_prior},
                    {"w_n", it->second.w_n}};
    }
    report.push_back(j);
  }
  std::ofstream planes(fs::path(out_dir) / "planes.json", std::ios::binary);
  if (!planes) throw IoFailure("cannot write planes.json");
  planes << report.dump(2) << "\n";
}

/// Runs meshing + histogram detection on one keyframe's landmark set using
/// exact bundle depths; reports every detected plane.
inline nlohmann::json cmd_detect(const std::string& bundle_dir, const ExperimentConfig& cfg,
                                 int frame = -1) {
  const Bundle bundle = load_bundle(bundle_dir);
  const int n = static_cast<int>(bundle.keyframes.size());
  if (frame < 0) frame = n / 2;
  if (frame >= n) throw BadBundle("frame index out of range");

  Keyframe kf;
  kf.id = bundle.keyframes[frame].id;
  kf.timestamp = bundle.keyframes[frame].t;
  kf.T_ic = bundle.T_ic;
  kf.T_wi = bundle.gt[frame].pose;
  kf.cam = bundle.cam;
  kf.image = std::make_shared<RasterImage>(read_pgm_file(bundle.keyframes[frame].image_path));

  const RenderedKeyframe view = detail::ground_truth_view(bundle, frame, kf);
  const int per_kf_budget = std::max(1, cfg.point_budget / cfg.window_size);
  std::vector<MeshVertex> verts;
  std::map<int, double> inv_depths;
  int next_id = 0;
  for (const Vec2& px : select_points(view, per_kf_budget)) {
    verts.push_back({px, next_id});
    inv_depths[next_id] = 1.0 / view.at_depth(static_cast<int>(px.x()),
                                              static_cast<int>(px.y()));
    ++next_id;
  }

  nlohmann::json out = nlohmann::json::array();
  if (verts.size() < 10) return out;
  Mesh3D mesh;
  try {
    mesh = lift_to_3d(delaunay2d(verts), inv_depths, kf.T_wc(), kf.cam, 2.0);
  } catch (const std::runtime_error&) {
    return out;
  }
  const PlaneDetectParams det = cfg.detect_params();
  const FaceClasses classes = classify_faces(mesh, det.angle_tol);

  auto emit = [&](const MinimalPlane& mp) {
    const auto members = associate_points(mesh, mp, det.point_dist_tol, det.angle_tol);
    nlohmann::json j;
    j["kind"] = detail::kind_name(mp.kind);
    j["phi"] = mp.phi;
    j["d"] = mp.d;
    j["support"] = members.size();
    j["n_points"] = members.size();
    out.push_back(j);
  };
  for (const HorizontalPlane& h : detect_horizontal(classes.horizontal, det))
    emit({MinimalPlane::Kind::Horizontal, 0.0, h.d});
  for (const VerticalPlane& v : detect_vertical(classes.vertical, det)) {
    MinimalPlane mp{MinimalPlane::Kind::Vertical, v.phi, v.d};
    canonicalize_vertical(mp);
    emit(mp);
  }
  return out;
}

inline nlohmann::json cmd_eval(const std::string& est_path, const std::string& gt_path) {
  Trajectory est, gt;
  try {
    est = read_tum_file(est_path);
    gt = read_tum_file(gt_path);
  } catch (const IoFailure& e) {
    throw ParseError(e.what());
  }
  const AlignmentResult se3 = align_se3(est, gt);
  const AlignmentResult sim3 = align_sim3(est, gt);
  nlohmann::json j;
  j["rmse"] = se3.rmse;
  j["rmse_gt_scaled"] = sim3.rmse;
  j["scale_error"] = sim3.scale_error;
  j["rot_rmse"] = sim3.rot_rmse;
  return j;
}

}  // namespace pvio
