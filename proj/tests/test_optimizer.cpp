#include "pvio/optimizer.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <map>

#include "test_util.hpp"
#include "test_world.hpp"

namespace pvio {
namespace {

using testing::make_world;
using testing::World;
using testing::WorldOptions;

int count_coplanar(const SlidingWindow& w) {
  int n = 0;
  for (const PointFeature& pt : w.points)
    if (pt.status == PointStatus::Active && pt.coplanar()) ++n;
  return n;
}

TEST(StateLayout, CoplanarPlanesReplaceDepthVariables) {
  WorldOptions opt;
  opt.n_kf = 3;
  opt.points_per_kf = 10;
  opt.coplanar = true;
  World w = make_world(opt);

  int plane_dofs = 0;
  for (const WindowPlane& p : w.window.planes) plane_dofs += p.plane.dof();
  EXPECT_EQ(plane_dofs, 5);  // floor d, two walls (phi, d)

  const StateLayout layout = make_layout(w.window);
  EXPECT_EQ(layout.dim, 17 * 3 + plane_dofs);
  EXPECT_EQ(state_dimension(w.window), layout.dim);

  // same geometry treated as free points costs one inverse depth each
  opt.coplanar = false;
  World wf = make_world(opt);
  ASSERT_EQ(wf.window.points.size(), w.window.points.size());
  const int n_pts = static_cast<int>(wf.window.points.size());
  EXPECT_EQ(state_dimension(wf.window), 17 * 3 + n_pts);
  EXPECT_EQ(state_dimension(wf.window) - state_dimension(w.window),
            count_coplanar(w.window) - plane_dofs);
}

// Assembles the photometric-only normal equations with explicit inverse-depth
// columns and eliminates them densely; the production builder must agree.
TEST(NormalEquations, SchurMatchesDenseElimination) {
  WorldOptions opt;
  opt.n_kf = 2;
  opt.points_per_kf = 3;
  World world = make_world(opt);
  SlidingWindow& w = world.window;
  w.preints.clear();
  w.gauge.reset();
  w.marg_prior.reset();
  const int n_pts = static_cast<int>(w.points.size());
  ASSERT_GE(n_pts, 4);
  const int nx = 17 * 2;
  const int dim = nx + n_pts;
  const double damping = 1e-3;

  MatX Hf = MatX::Zero(dim, dim);
  VecX gf = VecX::Zero(dim);
  for (int p = 0; p < n_pts; ++p) {
    const PointFeature& pt = w.points[p];
    const int h = w.kf_index(pt.host_kf);
    for (int t = 0; t < 2; ++t) {
      if (t == h) continue;
      PhotometricResidual r;
      try {
        r = photometric_point_residual(w.keyframes[h], w.keyframes[t], pt, pt.inv_depth,
                                       w.weights);
      } catch (const std::runtime_error&) {
        continue;
      }
      if (!r.usable()) continue;
      MatX J = MatX::Zero(8, dim);
      J.block<8, 8>(0, 17 * h) = r.J_host;
      J.block<8, 8>(0, 17 * t) = r.J_target;
      J.col(nx + p) = r.J_inv_depth;
      Hf += J.transpose() * J;
      gf += J.transpose() * r.residuals;
    }
  }
  Hf.diagonal().array() += damping;

  const NormalEquations neq = build_normal_equations(w, damping);
  ASSERT_EQ(neq.layout.dim, nx);
  ASSERT_EQ(static_cast<int>(neq.schur.size()), n_pts);

  // reduced system must equal the dense elimination of the depth block
  const MatX Hxx = Hf.topLeftCorner(nx, nx);
  const MatX Hxd = Hf.topRightCorner(nx, n_pts);
  const MatX Hdd = Hf.bottomRightCorner(n_pts, n_pts);
  const VecX gx = gf.head(nx);
  const VecX gd = gf.tail(n_pts);
  const MatX Hred = Hxx - Hxd * Hdd.inverse() * Hxd.transpose();
  const VecX gred = gx - Hxd * Hdd.inverse() * gd;
  EXPECT_LT((neq.H - Hred).cwiseAbs().maxCoeff(), 1e-10 * Hred.cwiseAbs().maxCoeff());
  EXPECT_LT((neq.g - gred).cwiseAbs().maxCoeff(), 1e-10 * gred.cwiseAbs().maxCoeff());

  // and the reduced solve plus back-substitution must equal the full solve
  // the two factorization orders agree up to the system's conditioning
  const VecX full = Hf.ldlt().solve(-gf);
  const VecX dx = neq.H.ldlt().solve(-neq.g);
  EXPECT_LT((dx - full.head(nx)).cwiseAbs().maxCoeff(),
            1e-7 * std::max(1.0, full.cwiseAbs().maxCoeff()));
  for (const PointSchurCache& c : neq.schur) {
    const double dd = -(c.gd + c.Hxd.dot(dx)) / c.denom;
    bool found = false;
    for (int q = 0; q < n_pts; ++q) {
      if (w.points[c.point_index].id != w.points[q].id) continue;
      EXPECT_NEAR(dd, full(nx + q), 1e-7 * std::max(1.0, full.cwiseAbs().maxCoeff()));
      found = true;
    }
    EXPECT_TRUE(found);
  }
}

TEST(NormalEquations, ReducedHessianSymmetricAndPositiveDefinite) {
  WorldOptions opt;
  opt.n_kf = 3;
  opt.points_per_kf = 20;
  opt.coplanar = true;
  World world = make_world(opt);
  SlidingWindow& w = world.window;
  for (size_t i = 0; i < w.points.size(); i += 2) w.points[i].plane_id = -1;  // mixed problem

  const NormalEquations neq = build_normal_equations(w, 1e-4);
  EXPECT_LT((neq.H - neq.H.transpose()).cwiseAbs().maxCoeff(), 1e-9);
  const Eigen::SelfAdjointEigenSolver<MatX> es(neq.H);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
}

TEST(Optimize, RecoversPosesFromPerturbedInit) {
  WorldOptions opt;
  opt.n_kf = 4;
  opt.points_per_kf = 50;
  World world = make_world(opt);
  SlidingWindow& w = world.window;
  std::vector<Pose> gt;
  for (const Keyframe& kf : w.keyframes) gt.push_back(kf.T_wi);

  perturb_init(w, PerturbSigmas{}, 3);
  double worst_before = 0;
  for (size_t i = 0; i < gt.size(); ++i)
    worst_before = std::max(
        worst_before, (w.keyframes[i].T_wi.translation() - gt[i].translation()).norm());
  EXPECT_GT(worst_before, 2e-3);

  std::vector<IterationTrace> trace;
  OptimizeParams params;
  params.max_iterations = 20;
  optimize(w, params, &trace);

  double prev = std::numeric_limits<double>::infinity();
  for (const IterationTrace& t : trace) {
    if (!t.accepted) continue;
    EXPECT_LE(t.energy, prev);
    prev = t.energy;
  }
  // a small common tilt of the whole window is the softest remaining mode;
  // raw per-pose errors are therefore looser than aligned trajectory error
  for (size_t i = 0; i < gt.size(); ++i) {
    EXPECT_LT((w.keyframes[i].T_wi.translation() - gt[i].translation()).norm(), 8e-3)
        << "keyframe " << i;
    EXPECT_LT(so3_log(w.keyframes[i].T_wi.rotation().transpose() * gt[i].rotation()).norm(),
              5e-3)
        << "keyframe " << i;
  }
}

TEST(Optimize, RecoversPlaneParameters) {
  WorldOptions opt;
  opt.n_kf = 4;
  opt.points_per_kf = 50;
  opt.coplanar = true;
  World world = make_world(opt);
  SlidingWindow& w = world.window;
  const std::vector<WindowPlane> gt_planes = w.planes;

  perturb_init(w, PerturbSigmas{}, 9);
  bool moved = false;
  for (size_t k = 0; k < w.planes.size(); ++k)
    if (std::abs(w.planes[k].plane.d - gt_planes[k].plane.d) > 1e-3) moved = true;
  EXPECT_TRUE(moved);

  OptimizeParams params;
  params.max_iterations = 20;
  optimize(w, params);

  // plane distances sit on a soft mode (scene scale vs. accelerometer), so
  // the recoverable accuracy is centimetric, not at the photometric floor
  for (size_t k = 0; k < w.planes.size(); ++k) {
    EXPECT_NEAR(w.planes[k].plane.d, gt_planes[k].plane.d, 3e-2) << "plane " << k;
    if (w.planes[k].plane.kind == MinimalPlane::Kind::Vertical)
      EXPECT_NEAR(angle_diff(w.planes[k].plane.phi, gt_planes[k].plane.phi), 0, 5e-3);
    else
      EXPECT_DOUBLE_EQ(w.planes[k].plane.phi, 0.0);  // never parameterized
  }
}

SlidingWindow bare_window(int n_kf) {
  SlidingWindow w;
  for (int i = 0; i < n_kf; ++i) {
    Keyframe kf;
    kf.id = i;
    kf.T_wi = testing::random_pose(0.5, 0.8);
    kf.affine_a = 0.01 * i;
    kf.affine_b = 0.5 * i;
    w.keyframes.push_back(kf);
    w.velocities.push_back(testing::random_vec3(0.5));
    ImuBias b;
    b.bg = testing::random_vec3(0.01);
    b.ba = testing::random_vec3(0.05);
    w.biases.push_back(b);
  }
  return w;
}

MarginalizationPrior::FejState fej_of(const SlidingWindow& w, int i) {
  MarginalizationPrior::FejState f;
  f.pose = w.keyframes[i].T_wi;
  f.affine_a = w.keyframes[i].affine_a;
  f.affine_b = w.keyframes[i].affine_b;
  f.velocity = w.velocities[i];
  f.bias = w.biases[i];
  return f;
}

TEST(Marginalize, UntouchedKeyframeIsSimplyRemoved) {
  SlidingWindow w = bare_window(2);
  GaugeAnchor g;
  g.kf_id = 1;
  w.gauge = g;
  marginalize_keyframe(w, 0);
  EXPECT_FALSE(w.marg_prior.has_value());
  ASSERT_EQ(w.keyframes.size(), 1u);
  EXPECT_EQ(w.keyframes[0].id, 1);
  EXPECT_TRUE(w.gauge.has_value());
}

TEST(Marginalize, MatchesGaussianConditioning) {
  SlidingWindow w = bare_window(3);
  const int dim = 17 * 3;
  MatX A(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) A(i, j) = testing::uniform(-1.0, 1.0);
  MarginalizationPrior prior;
  prior.kf_ids = {0, 1, 2};
  for (int i = 0; i < 3; ++i) prior.fej.push_back(fej_of(w, i));
  prior.H = A * A.transpose() + MatX::Identity(dim, dim);
  prior.b = VecX::Zero(dim);
  for (int i = 0; i < dim; ++i) prior.b(i) = 1e-2 * testing::uniform(-1.0, 1.0);
  const MatX H0 = prior.H;
  const VecX b0 = prior.b;
  w.marg_prior = prior;

  marginalize_keyframe(w, 1);
  ASSERT_TRUE(w.marg_prior.has_value());
  ASSERT_EQ(w.marg_prior->kf_ids, (std::vector<int>{0, 2}));

  // oracle: condition the Gaussian via its covariance form
  std::vector<int> keep, drop;
  for (int i = 0; i < dim; ++i)
    (i >= 17 && i < 34 ? drop : keep).push_back(i);
  const MatX cov = H0.inverse();
  const VecX mean = -cov * b0;
  MatX cov_ss(34, 34);
  VecX mean_s(34);
  for (int a = 0; a < 34; ++a) {
    mean_s(a) = mean(keep[a]);
    for (int b = 0; b < 34; ++b) cov_ss(a, b) = cov(keep[a], keep[b]);
  }
  const MatX H_oracle = cov_ss.inverse();
  const VecX b_oracle = -H_oracle * mean_s;
  EXPECT_LT((w.marg_prior->H - H_oracle).cwiseAbs().maxCoeff(),
            1e-8 * H_oracle.cwiseAbs().maxCoeff());
  EXPECT_LT((w.marg_prior->b - b_oracle).cwiseAbs().maxCoeff(),
            1e-8 * std::max(1.0, b_oracle.cwiseAbs().maxCoeff()));

  // optimizing the survivor-only window must land on the conditioned mean
  OptimizeParams params;
  params.max_iterations = 40;
  params.min_step_norm = 1e-12;
  optimize(w, params);
  const VecX d = marginalization_prior_delta(*w.marg_prior, w);
  EXPECT_LT((d - mean_s).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Marginalize, PriorEnergyInvariantAlongNullDirection) {
  SlidingWindow w = bare_window(2);
  const int dim = 34;
  VecX v(dim);
  for (int i = 0; i < dim; ++i) v(i) = testing::uniform(-1.0, 1.0);
  v.normalize();
  const MatX P = MatX::Identity(dim, dim) - v * v.transpose();
  MatX A(dim, dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) A(i, j) = testing::uniform(-1.0, 1.0);
  MarginalizationPrior prior;
  prior.kf_ids = {0, 1};
  prior.fej = {fej_of(w, 0), fej_of(w, 1)};
  prior.H = P * (A * A.transpose()) * P;
  VecX c(dim);
  for (int i = 0; i < dim; ++i) c(i) = testing::uniform(-1.0, 1.0);
  prior.b = P * c;
  w.marg_prior = prior;

  auto move_along = [&](const VecX& dir, double alpha) {
    SlidingWindow m = w;
    for (int i = 0; i < 2; ++i) {
      const int off = 17 * i;
      m.keyframes[i].T_wi = se3_exp(alpha * dir.segment<6>(off)) * m.keyframes[i].T_wi;
      m.keyframes[i].affine_a += alpha * dir(off + 6);
      m.keyframes[i].affine_b += alpha * dir(off + 7);
      m.velocities[i] += alpha * dir.segment<3>(off + 8);
      m.biases[i].bg += alpha * dir.segment<3>(off + 11);
      m.biases[i].ba += alpha * dir.segment<3>(off + 14);
    }
    return total_energy(m);
  };

  EXPECT_NEAR(total_energy(w), 0.0, 1e-12);
  EXPECT_NEAR(move_along(v, 0.3), 0.0, 1e-9);
  EXPECT_NEAR(move_along(v, 1.7), 0.0, 1e-8);
  VecX u(dim);
  for (int i = 0; i < dim; ++i) u(i) = testing::uniform(-1.0, 1.0);
  u = (P * u).normalized();  // constrained direction
  EXPECT_GT(move_along(u, 0.3), 1e-3);
}

TEST(RetirePlane, ShrinksStateAndCapturesEstimate) {
  WorldOptions opt;
  opt.n_kf = 3;
  opt.points_per_kf = 30;
  opt.coplanar = true;
  World world = make_world(opt);
  SlidingWindow& w = world.window;
  ASSERT_NE(w.find_plane(0), nullptr);
  ASSERT_EQ(w.find_plane(0)->plane.kind, MinimalPlane::Kind::Horizontal);
  const int dim_before = state_dimension(w);
  int floor_members = 0;
  for (const PointFeature& pt : w.points)
    if (pt.plane_id == 0) ++floor_members;
  ASSERT_GT(floor_members, 0);

  const PlanePriorFactor f = retire_plane(w, 0, 40.0);
  EXPECT_EQ(f.plane_id, 0);
  EXPECT_EQ(f.kind, MinimalPlane::Kind::Horizontal);
  EXPECT_NEAR(f.d_prior, 1.0, 1e-9);
  EXPECT_DOUBLE_EQ(f.w_n, 40.0);
  EXPECT_GT(f.sigma(1, 1), 0.0);
  EXPECT_LT(f.sigma(1, 1), 1.0);
  EXPECT_TRUE(f.sigma.allFinite());

  EXPECT_EQ(state_dimension(w), dim_before - 1);
  EXPECT_EQ(w.find_plane(0), nullptr);
  for (const PointFeature& pt : w.points) EXPECT_NE(pt.plane_id, 0);
  EXPECT_THROW(retire_plane(w, 0, 1.0), InactivePlane);
}

TEST(RetirePlane, PriorPullsDistanceInLaterWindows) {
  WorldOptions opt;
  opt.n_kf = 3;
  opt.points_per_kf = 40;
  opt.coplanar = true;
  World world = make_world(opt);
  SlidingWindow& w = world.window;
  PlanePriorFactor f = retire_plane(w, 0, 50.0);

  // re-detect the floor in a later window with a biased estimate
  World later = make_world(opt);
  SlidingWindow& w2 = later.window;
  for (WindowPlane& p : w2.planes)
    if (p.id == 0) p.plane.d = 1.05;
  SlidingWindow with_prior = w2;
  with_prior.plane_priors.push_back(f);

  OptimizeParams params;
  params.max_iterations = 8;
  optimize(w2, params);
  optimize(with_prior, params);
  const double err_free = std::abs(w2.find_plane(0)->plane.d - 1.0);
  const double err_prior = std::abs(with_prior.find_plane(0)->plane.d - 1.0);
  EXPECT_LE(err_prior, err_free + 1e-9);
}

}  // namespace
}  // namespace pvio
