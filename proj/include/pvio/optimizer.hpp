#pragma once

#include <algorithm>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "pvio/window.hpp"

namespace pvio {

struct FactorizationFailure : std::runtime_error {
  FactorizationFailure() : std::runtime_error("normal equations could not be factorized") {}
};

/// Column layout of the reduced system: one 17-wide block per keyframe
/// [pose twist 6, affine a, affine b, velocity 3, gyro bias 3, accel bias 3],
/// then the minimal parameters of each active plane. Inverse depths are
/// Schur-eliminated and never appear here.
struct StateLayout {
  static constexpr int kKfDim = 17;
  int n_kf = 0;
  std::vector<int> plane_ids;
  std::vector<int> plane_offsets;
  std::vector<int> plane_dofs;
  int dim = 0;

  int kf_off(int i) const { return kKfDim * i; }
  int plane_off(int plane_id) const {
    for (size_t k = 0; k < plane_ids.size(); ++k)
      if (plane_ids[k] == plane_id) return plane_offsets[k];
    return -1;
  }
};

inline StateLayout make_layout(const SlidingWindow& w) {
  StateLayout l;
  l.n_kf = static_cast<int>(w.keyframes.size());
  int off = StateLayout::kKfDim * l.n_kf;
  for (const WindowPlane& p : w.planes) {
    l.plane_ids.push_back(p.id);
    l.plane_offsets.push_back(off);
    l.plane_dofs.push_back(p.plane.dof());
    off += p.plane.dof();
  }
  l.dim = off;
  return l;
}

/// Total number of free variables the window optimizes, counting the
/// Schur-eliminated inverse depths.
inline int state_dimension(const SlidingWindow& w) {
  int n = StateLayout::kKfDim * static_cast<int>(w.keyframes.size());
  for (const WindowPlane& p : w.planes) n += p.plane.dof();
  for (const PointFeature& pt : w.points)
    if (pt.status == PointStatus::Active && !pt.coplanar()) n += 1;
  return n;
}

struct PointSchurCache {
  size_t point_index = 0;
  double denom = 0;  // H_dd plus depth damping
  double gd = 0;
  VecX Hxd;
};

struct NormalEquations {
  StateLayout layout;
  MatX H;
  VecX g;
  double energy = 0;
  double damping = 0;
  std::vector<PointSchurCache> schur;
};

namespace detail {

// scatter-accumulates J' J and J' r for a residual block with an explicit
// global column map
inline void scatter(MatX& H, VecX& g, const MatX& J, const VecX& r,
                    const std::vector<int>& cols) {
  const MatX JtJ = J.transpose() * J;
  const VecX Jtr = J.transpose() * r;
  for (size_t a = 0; a < cols.size(); ++a) {
    g(cols[a]) += Jtr(a);
    for (size_t b = 0; b < cols.size(); ++b) H(cols[a], cols[b]) += JtJ(a, b);
  }
}

inline std::vector<int> body_cols(const StateLayout& l, int kf) {
  // inertial local order [pose 6, v 3, bg 3, ba 3] -> kf block skips affine
  std::vector<int> cols(15);
  const int off = l.kf_off(kf);
  for (int i = 0; i < 6; ++i) cols[i] = off + i;
  for (int i = 0; i < 9; ++i) cols[6 + i] = off + 8 + i;
  return cols;
}

}  // namespace detail

inline NormalEquations build_normal_equations(const SlidingWindow& w, double damping) {
  NormalEquations neq;
  neq.layout = make_layout(w);
  neq.damping = damping;
  const int dim = neq.layout.dim;
  neq.H = MatX::Zero(dim, dim);
  neq.g = VecX::Zero(dim);
  const double drop = row_drop_penalty(w.weights);

  for (size_t pi = 0; pi < w.points.size(); ++pi) {
    const PointFeature& pt = w.points[pi];
    if (pt.status != PointStatus::Active) continue;
    const int h = w.kf_index(pt.host_kf);
    const int off_h = neq.layout.kf_off(h);

    if (!pt.coplanar()) {
      double Hdd = 0, gd = 0;
      VecX Hxd = VecX::Zero(dim);
      for (size_t t = 0; t < w.keyframes.size(); ++t) {
        if (static_cast<int>(t) == h || !pt.observes(w.keyframes[t].id)) continue;
        PhotometricResidual r;
        try {
          r = photometric_point_residual(w.keyframes[h], w.keyframes[t], pt, pt.inv_depth,
                                         w.weights);
        } catch (const std::runtime_error&) {
          neq.energy += drop * 8;
          continue;
        }
        neq.energy += r.energy + drop * (8 - r.num_valid);
        if (!r.usable()) continue;
        const int off_t = neq.layout.kf_off(static_cast<int>(t));
        std::vector<int> cols(16);
        for (int i = 0; i < 8; ++i) cols[i] = off_h + i;
        for (int i = 0; i < 8; ++i) cols[8 + i] = off_t + i;
        MatX J(8, 16);
        J.leftCols<8>() = r.J_host;
        J.rightCols<8>() = r.J_target;
        detail::scatter(neq.H, neq.g, J, r.residuals, cols);
        for (int i = 0; i < 16; ++i) Hxd(cols[i]) += J.col(i).dot(r.J_inv_depth);
        Hdd += r.J_inv_depth.squaredNorm();
        gd += r.J_inv_depth.dot(r.residuals);
      }
      if (Hdd > 1e-12) {
        PointSchurCache c;
        c.point_index = pi;
        c.denom = Hdd + damping;
        c.gd = gd;
        c.Hxd = Hxd;
        neq.H -= (Hxd * Hxd.transpose()) / c.denom;
        neq.g -= Hxd * (gd / c.denom);
        neq.schur.push_back(std::move(c));
      }
    } else {
      const WindowPlane* plane = w.find_plane(pt.plane_id);
      if (!plane) continue;
      const int off_p = neq.layout.plane_off(pt.plane_id);
      const int dof = plane->plane.dof();
      for (size_t t = 0; t < w.keyframes.size(); ++t) {
        if (static_cast<int>(t) == h || !pt.observes(w.keyframes[t].id)) continue;
        PhotometricResidual r;
        try {
          r = photometric_coplanar_residual(w.keyframes[h], w.keyframes[t], pt, plane->plane,
                                            w.weights);
        } catch (const std::runtime_error&) {
          neq.energy += drop * 8;
          continue;
        }
        neq.energy += r.energy + drop * (8 - r.num_valid);
        if (!r.usable()) continue;
        const int off_t = neq.layout.kf_off(static_cast<int>(t));
        std::vector<int> cols(16 + dof);
        for (int i = 0; i < 8; ++i) cols[i] = off_h + i;
        for (int i = 0; i < 8; ++i) cols[8 + i] = off_t + i;
        MatX J(8, 16 + dof);
        J.leftCols<8>() = r.J_host;
        J.block<8, 8>(0, 8) = r.J_target;
        if (dof == 2) {
          cols[16] = off_p;
          cols[17] = off_p + 1;
          J.col(16) = r.J_plane.col(0);
          J.col(17) = r.J_plane.col(1);
        } else {
          cols[16] = off_p;
          J.col(16) = r.J_plane.col(1);
        }
        detail::scatter(neq.H, neq.g, J, r.residuals, cols);
      }
    }
  }

  for (size_t i = 0; i + 1 < w.keyframes.size() && i < w.preints.size(); ++i) {
    const InertialFactor f =
        inertial_residual(w.body_state(i), w.body_state(i + 1), w.preints[i], w.gravity);
    const Mat15 L = f.information.llt().matrixL();
    const Vec15 wr = L.transpose() * f.residual;
    MatX J(15, 30);
    J.leftCols<15>() = L.transpose() * f.J_i;
    J.rightCols<15>() = L.transpose() * f.J_j;
    std::vector<int> cols = detail::body_cols(neq.layout, static_cast<int>(i));
    const std::vector<int> cj = detail::body_cols(neq.layout, static_cast<int>(i) + 1);
    cols.insert(cols.end(), cj.begin(), cj.end());
    detail::scatter(neq.H, neq.g, J, wr, cols);
    neq.energy += wr.squaredNorm();
  }

  for (const PlanePriorFactor& prior : w.plane_priors) {
    const WindowPlane* p = w.find_plane(prior.plane_id);
    if (!p) continue;
    const int off_p = neq.layout.plane_off(prior.plane_id);
    const PlanePriorResidual r = plane_prior_residual(p->plane, prior);
    if (p->plane.dof() == 2) {
      detail::scatter(neq.H, neq.g, r.J, r.residual, {off_p, off_p + 1});
    } else {
      MatX J(1, 1);
      J(0, 0) = r.J(0, 1);
      VecX rv(1);
      rv(0) = r.residual(0);
      detail::scatter(neq.H, neq.g, J, rv, {off_p});
    }
    neq.energy += r.energy;
  }

  if (w.marg_prior) {
    const MarginalizationPrior& mp = *w.marg_prior;
    const VecX d = marginalization_prior_delta(mp, w);
    const VecX grad = mp.b + mp.H * d;
    std::vector<int> cols;
    for (int id : mp.kf_ids) {
      const int off = neq.layout.kf_off(w.kf_index(id));
      for (int i = 0; i < 17; ++i) cols.push_back(off + i);
    }
    for (size_t a = 0; a < cols.size(); ++a) {
      neq.g(cols[a]) += grad(a);
      for (size_t b = 0; b < cols.size(); ++b) neq.H(cols[a], cols[b]) += mp.H(a, b);
    }
    neq.energy += d.dot(mp.H * d) + 2.0 * mp.b.dot(d);
  }

  if (w.gauge) {
    const int i = w.kf_index(w.gauge->kf_id);
    const int off = neq.layout.kf_off(i);
    const double sw = std::sqrt(w.gauge->weight);
    {
      MatX J = MatX::Identity(3, 3) * sw;
      const VecX r = sw * (w.keyframes[i].T_wi.translation() - w.gauge->position);
      detail::scatter(neq.H, neq.g, J, r, {off, off + 1, off + 2});
      neq.energy += r.squaredNorm();
    }
    {
      MatX J = sw * yaw_jacobian(w.keyframes[i].T_wi.rotation());
      VecX r(1);
      r(0) = sw * angle_diff(rotation_yaw(w.keyframes[i].T_wi.rotation()), w.gauge->yaw);
      detail::scatter(neq.H, neq.g, J, r, {off + 3, off + 4, off + 5});
      neq.energy += r.squaredNorm();
    }
  }

  neq.H.diagonal().array() += damping;
  return neq;
}

inline void apply_step(SlidingWindow& w, const NormalEquations& neq, const VecX& dx) {
  for (size_t i = 0; i < w.keyframes.size(); ++i) {
    const int off = neq.layout.kf_off(static_cast<int>(i));
    Keyframe& kf = w.keyframes[i];
    kf.T_wi = se3_exp(dx.segment<6>(off)) * kf.T_wi;
    kf.affine_a += dx(off + 6);
    kf.affine_b += dx(off + 7);
    w.velocities[i] += dx.segment<3>(off + 8);
    w.biases[i].bg += dx.segment<3>(off + 11);
    w.biases[i].ba += dx.segment<3>(off + 14);
  }
  for (size_t k = 0; k < neq.layout.plane_ids.size(); ++k) {
    for (WindowPlane& p : w.planes) {
      if (p.id != neq.layout.plane_ids[k]) continue;
      const int off = neq.layout.plane_offsets[k];
      if (neq.layout.plane_dofs[k] == 2) {
        p.plane.phi = wrap_angle(p.plane.phi + dx(off));
        p.plane.d += dx(off + 1);
        canonicalize_vertical(p.plane);
      } else {
        p.plane.d += dx(off);
      }
    }
  }
  for (const PointSchurCache& c : neq.schur) {
    const double dd = -(c.gd + c.Hxd.dot(dx)) / c.denom;
    double& rho = w.points[c.point_index].inv_depth;
    rho = std::max(rho + dd, 1e-4);
  }
}

struct StepResult {
  bool accepted = false;
  double step_norm = 0;
  double energy_before = 0;
  double energy_after = 0;
  double damping = 0;
  int retries = 0;
};

/// One damped Gauss-Newton step with the standard accept/reject loop:
/// damping is multiplied by 10 on rejection (at most 5 retries) and halved
/// on acceptance.
inline StepResult solve_and_update(SlidingWindow& w, double& damping) {
  StepResult res;
  res.energy_before = total_energy(w);
  int factorization_failures = 0;
  for (int attempt = 0; attempt < 6; ++attempt) {
    res.retries = attempt;
    const NormalEquations neq = build_normal_equations(w, damping);
    const Eigen::LDLT<MatX> ldlt(neq.H);
    VecX dx;
    bool ok = ldlt.info() == Eigen::Success;
    if (ok) {
      dx = ldlt.solve(-neq.g);
      ok = dx.allFinite();
    }
    if (!ok) {
      ++factorization_failures;
      damping = std::max(damping, 1e-9) * 10.0;
      continue;
    }
    SlidingWindow candidate = w;
    apply_step(candidate, neq, dx);
    const double e_new = total_energy(candidate);
    if (e_new < res.energy_before) {
      w = std::move(candidate);
      res.accepted = true;
      res.step_norm = dx.norm();
      res.energy_after = e_new;
      res.damping = damping;
      damping = std::max(damping * 0.5, 1e-12);
      return res;
    }
    damping = std::max(damping, 1e-9) * 10.0;
  }
  if (factorization_failures >= 6) throw FactorizationFailure();
  res.energy_after = res.energy_before;
  res.damping = damping;
  return res;
}

struct IterationTrace {
  int iter = 0;
  double energy = 0;
  double damping = 0;
  double step_norm = 0;
  bool accepted = false;
};

struct OptimizeParams {
  int max_iterations = 10;
  double min_step_norm = 1e-8;
  double init_damping = 1e-4;
};

inline double optimize(SlidingWindow& w, const OptimizeParams& params = {},
                       std::vector<IterationTrace>* trace = nullptr) {
  double damping = params.init_damping;
  double energy = total_energy(w);
  for (int it = 0; it < params.max_iterations; ++it) {
    const StepResult r = solve_and_update(w, damping);
    if (trace) {
      IterationTrace t;
      t.iter = it;
      t.energy = r.accepted ? r.energy_after : r.energy_before;
      t.damping = r.damping;
      t.step_norm = r.step_norm;
      t.accepted = r.accepted;
      trace->push_back(t);
    }
    if (!r.accepted) break;
    energy = r.energy_after;
    if (r.step_norm < params.min_step_norm) break;
  }
  return energy;
}

namespace detail {

inline MatX psd_project(const MatX& H, double eig_tol = 1e-10) {
  const Eigen::SelfAdjointEigenSolver<MatX> es(0.5 * (H + H.transpose()));
  VecX ev = es.eigenvalues();
  for (int i = 0; i < ev.size(); ++i)
    if (ev(i) < eig_tol) ev(i) = 0;
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// Removes one keyframe, folding every factor that touches it (its hosted
/// points, adjacent inertial links, the gauge anchor and the previous prior)
/// into a dense prior over the survivors. Linearization states of the
/// survivors are frozen in the prior.
inline void marginalize_keyframe(SlidingWindow& w, int kf_id) {
  const int m = w.kf_index(kf_id);
  const int n = static_cast<int>(w.keyframes.size());

  const bool inertial_before = m > 0 && static_cast<size_t>(m - 1) < w.preints.size();
  const bool inertial_after = static_cast<size_t>(m) < w.preints.size() && m + 1 < n;
  bool hosts_points = false;
  for (const PointFeature& pt : w.points)
    if (pt.status == PointStatus::Active && pt.host_kf == kf_id && !pt.coplanar())
      hosts_points = true;
  const bool prior_touches =
      w.marg_prior && std::find(w.marg_prior->kf_ids.begin(), w.marg_prior->kf_ids.end(),
                                kf_id) != w.marg_prior->kf_ids.end();
  const bool gauge_touches = w.gauge && w.gauge->kf_id == kf_id;
  const bool touched = inertial_before || inertial_after || hosts_points || prior_touches ||
                       gauge_touches;

  auto erase_state = [&] {
    w.keyframes.erase(w.keyframes.begin() + m);
    w.velocities.erase(w.velocities.begin() + m);
    w.biases.erase(w.biases.begin() + m);
    if (static_cast<size_t>(m) < w.preints.size())
      w.preints.erase(w.preints.begin() + m);
    else if (inertial_before)
      w.preints.erase(w.preints.begin() + (m - 1));
    w.points.erase(std::remove_if(w.points.begin(), w.points.end(),
                                  [&](const PointFeature& p) { return p.host_kf == kf_id; }),
                   w.points.end());
    if (gauge_touches) w.gauge.reset();
  };

  if (!touched) {
    erase_state();
    return;
  }

  const int dim = 17 * n;
  MatX H = MatX::Zero(dim, dim);
  VecX g = VecX::Zero(dim);
  StateLayout full;
  full.n_kf = n;
  full.dim = dim;

  // hosted non-coplanar points: marginalize those still seen from >= 2
  // surviving frames, drop the rest
  for (const PointFeature& pt : w.points) {
    if (pt.status != PointStatus::Active || pt.host_kf != kf_id || pt.coplanar()) continue;
    double Hdd = 0, gd = 0;
    VecX Hxd = VecX::Zero(dim);
    MatX Hacc = MatX::Zero(dim, dim);
    VecX gacc = VecX::Zero(dim);
    int n_obs = 0;
    for (int t = 0; t < n; ++t) {
      if (t == m || !pt.observes(w.keyframes[t].id)) continue;
      PhotometricResidual r;
      try {
        r = photometric_point_residual(w.keyframes[m], w.keyframes[t], pt, pt.inv_depth,
                                       w.weights);
      } catch (const std::runtime_error&) {
        continue;
      }
      if (!r.usable()) continue;
      ++n_obs;
      std::vector<int> cols(16);
      for (int i = 0; i < 8; ++i) cols[i] = full.kf_off(m) + i;
      for (int i = 0; i < 8; ++i) cols[8 + i] = full.kf_off(t) + i;
      MatX J(8, 16);
      J.leftCols<8>() = r.J_host;
      J.rightCols<8>() = r.J_target;
      detail::scatter(Hacc, gacc, J, r.residuals, cols);
      for (int i = 0; i < 16; ++i) Hxd(cols[i]) += J.col(i).dot(r.J_inv_depth);
      Hdd += r.J_inv_depth.squaredNorm();
      gd += r.J_inv_depth.dot(r.residuals);
    }
    if (n_obs < 2 || Hdd <= 1e-12) continue;  // dropped, not marginalized
    H += Hacc - (Hxd * Hxd.transpose()) / Hdd;
    g += gacc - Hxd * (gd / Hdd);
  }

  auto add_inertial = [&](int i) {
    const InertialFactor f =
        inertial_residual(w.body_state(i), w.body_state(i + 1), w.preints[i], w.gravity);
    const Mat15 L = f.information.llt().matrixL();
    const Vec15 wr = L.transpose() * f.residual;
    MatX J(15, 30);
    J.leftCols<15>() = L.transpose() * f.J_i;
    J.rightCols<15>() = L.transpose() * f.J_j;
    std::vector<int> cols = detail::body_cols(full, i);
    const std::vector<int> cj = detail::body_cols(full, i + 1);
    cols.insert(cols.end(), cj.begin(), cj.end());
    detail::scatter(H, g, J, wr, cols);
  };
  if (inertial_before) add_inertial(m - 1);
  if (inertial_after) add_inertial(m);

  if (w.marg_prior) {
    const MarginalizationPrior& mp = *w.marg_prior;
    const VecX d = marginalization_prior_delta(mp, w);
    const VecX grad = mp.b + mp.H * d;
    std::vector<int> cols;
    for (int id : mp.kf_ids) {
      const int off = full.kf_off(w.kf_index(id));
      for (int i = 0; i < 17; ++i) cols.push_back(off + i);
    }
    for (size_t a = 0; a < cols.size(); ++a) {
      g(cols[a]) += grad(a);
      for (size_t b = 0; b < cols.size(); ++b) H(cols[a], cols[b]) += mp.H(a, b);
    }
  }

  if (gauge_touches) {
    const int off = full.kf_off(m);
    const double sw = std::sqrt(w.gauge->weight);
    MatX Jp = MatX::Identity(3, 3) * sw;
    const VecX rp = sw * (w.keyframes[m].T_wi.translation() - w.gauge->position);
    detail::scatter(H, g, Jp, rp, {off, off + 1, off + 2});
    MatX Jy = sw * yaw_jacobian(w.keyframes[m].T_wi.rotation());
    VecX ry(1);
    ry(0) = sw * angle_diff(rotation_yaw(w.keyframes[m].T_wi.rotation()), w.gauge->yaw);
    detail::scatter(H, g, Jy, ry, {off + 3, off + 4, off + 5});
  }

  // Schur-eliminate the 17 columns of the marginalized keyframe
  std::vector<int> keep, drop;
  for (int i = 0; i < dim; ++i) {
    if (i >= full.kf_off(m) && i < full.kf_off(m) + 17)
      drop.push_back(i);
    else
      keep.push_back(i);
  }
  MatX Hmm(17, 17), Hsm(dim - 17, 17);
  VecX gm(17), gs(dim - 17);
  MatX Hss(dim - 17, dim - 17);
  for (size_t a = 0; a < drop.size(); ++a) {
    gm(a) = g(drop[a]);
    for (size_t b = 0; b < drop.size(); ++b) Hmm(a, b) = H(drop[a], drop[b]);
  }
  for (size_t a = 0; a < keep.size(); ++a) {
    gs(a) = g(keep[a]);
    for (size_t b = 0; b < drop.size(); ++b) Hsm(a, b) = H(keep[a], drop[b]);
    for (size_t b = 0; b < keep.size(); ++b) Hss(a, b) = H(keep[a], keep[b]);
  }
  Hmm.diagonal().array() += 1e-10;  // unconstrained directions drop out cleanly
  const Eigen::LDLT<MatX> ldlt(Hmm);
  const MatX Hmm_inv_Hms = ldlt.solve(Hsm.transpose());
  MarginalizationPrior prior;
  prior.H = detail::psd_project(Hss - Hsm * Hmm_inv_Hms);
  prior.b = gs - Hsm * ldlt.solve(gm);
  for (int i = 0; i < n; ++i) {
    if (i == m) continue;
    prior.kf_ids.push_back(w.keyframes[i].id);
    MarginalizationPrior::FejState f;
    f.pose = w.keyframes[i].T_wi;
    f.affine_a = w.keyframes[i].affine_a;
    f.affine_b = w.keyframes[i].affine_b;
    f.velocity = w.velocities[i];
    f.bias = w.biases[i];
    prior.fej.push_back(f);
  }
  w.marg_prior = std::move(prior);
  erase_state();
}

/// Converts an active plane into a standalone quadratic prior on its minimal
/// parameters and removes the plane (and its coplanar bindings) from the
/// window. The prior covariance comes from the reduced system's marginal if
/// that block is usable, else a configured default.
inline PlanePriorFactor retire_plane(SlidingWindow& w, int plane_id, double lifetime_members,
                                     double default_sigma = 1e-4) {
  const WindowPlane* plane = w.find_plane(plane_id);
  if (!plane) throw InactivePlane(plane_id);

  PlanePriorFactor f;
  f.plane_id = plane_id;
  f.kind = plane->plane.kind;
  f.phi_prior = plane->plane.phi;
  f.d_prior = plane->plane.d;
  f.w_n = std::max(lifetime_members, 1.0);
  f.sigma = Eigen::Matrix2d::Identity() * default_sigma;

  const NormalEquations neq = build_normal_equations(w, 0.0);
  const int off = neq.layout.plane_off(plane_id);
  const int dof = plane->plane.dof();
  const Eigen::LDLT<MatX> ldlt(neq.H);
  if (ldlt.info() == Eigen::Success && off >= 0) {
    MatX rhs = MatX::Zero(neq.layout.dim, dof);
    for (int i = 0; i < dof; ++i) rhs(off + i, i) = 1.0;
    const MatX cov_cols = ldlt.solve(rhs);
    Eigen::Matrix2d sigma = Eigen::Matrix2d::Identity() * default_sigma;
    bool ok = cov_cols.allFinite();
    if (ok && dof == 2) {
      sigma = cov_cols.block<2, 2>(off, 0);
      sigma = 0.5 * (sigma + sigma.transpose());
      ok = sigma(0, 0) > 0 && sigma(1, 1) > 0 && sigma.determinant() > 0;
    } else if (ok) {
      const double var = cov_cols(off, 0);
      ok = var > 0;
      if (ok) sigma(1, 1) = var;
    }
    if (ok) f.sigma = sigma;
  }

  w.points.erase(std::remove_if(w.points.begin(), w.points.end(),
                                [&](const PointFeature& p) { return p.plane_id == plane_id; }),
                 w.points.end());
  w.plane_priors.erase(
      std::remove_if(w.plane_priors.begin(), w.plane_priors.end(),
                     [&](const PlanePriorFactor& p) { return p.plane_id == plane_id; }),
      w.plane_priors.end());
  w.planes.erase(std::remove_if(w.planes.begin(), w.planes.end(),
                                [&](const WindowPlane& p) { return p.id == plane_id; }),
                 w.planes.end());
  return f;
}

}  // namespace pvio
