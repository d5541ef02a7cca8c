#pragma once

#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "pvio/meshing.hpp"

namespace pvio {

struct PlaneDetectParams {
  double sigma_t = 20;            // smoothed-count threshold for a peak
  double height_bin = 0.05;       // m
  double azimuth_bin = 2.0 * M_PI / 180.0;
  double distance_bin = 0.05;     // m
  double smooth_sigma = 1.5;      // bins, kernel truncated at 3 sigma
  double angle_tol = 5.0 * M_PI / 180.0;
  double dist_thresh = 0.1;       // m, plane merging
  double point_dist_tol = 0.05;   // m, point association
};

struct FaceClasses {
  std::vector<MeshFace> horizontal;
  std::vector<MeshFace> vertical;
  std::vector<MeshFace> other;
};

inline FaceClasses classify_faces(const Mesh3D& mesh, double angle_tol) {
  FaceClasses out;
  const double cos_tol = std::cos(angle_tol);
  const double sin_tol = std::sin(angle_tol);
  for (const MeshFace& f : mesh.faces) {
    if (f.normal.z() >= cos_tol)
      out.horizontal.push_back(f);
    else if (std::abs(f.normal.z()) <= sin_tol)
      out.vertical.push_back(f);
    else
      out.other.push_back(f);
  }
  return out;
}

namespace detail {

// Unnormalized Gaussian taps so an isolated bin keeps its raw count at the
// peak; the threshold then compares against face counts directly.
inline std::vector<double> gaussian_taps(double sigma) {
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> taps(2 * r + 1);
  for (int j = -r; j <= r; ++j) taps[j + r] = std::exp(-0.5 * j * j / (sigma * sigma));
  return taps;
}

}  // namespace detail

/// Height-histogram peaks over near-horizontal faces.
inline std::vector<HorizontalPlane> detect_horizontal(const std::vector<MeshFace>& faces,
                                                      const PlaneDetectParams& p = {}) {
  std::map<int, double> counts;
  std::map<int, std::vector<double>> heights;
  for (const MeshFace& f : faces) {
    const int i = static_cast<int>(std::floor(f.height / p.height_bin));
    counts[i] += 1.0;
    heights[i].push_back(f.height);
  }
  std::vector<HorizontalPlane> out;
  if (counts.empty()) return out;

  const auto taps = detail::gaussian_taps(p.smooth_sigma);
  const int r = static_cast<int>(taps.size()) / 2;
  const int lo = counts.begin()->first - r;
  const int hi = counts.rbegin()->first + r;
  std::map<int, double> smooth;
  for (int i = lo; i <= hi; ++i) {
    double s = 0;
    for (int j = -r; j <= r; ++j) {
      auto it = counts.find(i + j);
      if (it != counts.end()) s += taps[j + r] * it->second;
    }
    smooth[i] = s;
  }
  auto sval = [&](int i) {
    auto it = smooth.find(i);
    return it == smooth.end() ? 0.0 : it->second;
  };
  for (int i = lo; i <= hi; ++i) {
    const double v = sval(i);
    if (v <= p.sigma_t) continue;
    // plateaus report their leftmost bin
    if (sval(i - 1) >= v) continue;
    int j = i + 1;
    while (sval(j) == v) ++j;
    if (sval(j) > v) continue;
    double wsum = 0, hsum = 0;
    for (int j = -1; j <= 1; ++j) {
      auto it = heights.find(i + j);
      if (it == heights.end()) continue;
      for (double h : it->second) {
        wsum += 1.0;
        hsum += h;
      }
    }
    out.push_back({-(hsum / wsum)});  // d = -height under n=(0,0,1), n.X + d = 0
  }
  return out;
}

/// Azimuth-distance histogram peaks over near-vertical faces. The azimuth
/// axis is cyclic over (-pi, pi]: smoothing, neighborhoods and the refinement
/// mean all wrap around.
inline std::vector<VerticalPlane> detect_vertical(const std::vector<MeshFace>& faces,
                                                  const PlaneDetectParams& p = {}) {
  const int n_az = std::max(4, static_cast<int>(std::lround(2.0 * M_PI / p.azimuth_bin)));
  const double az_bin = 2.0 * M_PI / n_az;

  struct Vote {
    double phi, d;
  };
  std::map<std::pair<int, int>, double> counts;
  std::map<std::pair<int, int>, std::vector<Vote>> votes;
  for (const MeshFace& f : faces) {
    const double phi = std::atan2(f.normal.y(), f.normal.x());
    const double d = -f.normal.dot(f.centroid);
    const int ia = ((static_cast<int>(std::floor((phi + M_PI) / az_bin)) % n_az) + n_az) % n_az;
    const int id = static_cast<int>(std::floor(d / p.distance_bin));
    counts[{ia, id}] += 1.0;
    votes[{ia, id}].push_back({phi, d});
  }
  std::vector<VerticalPlane> out;
  if (counts.empty()) return out;

  const auto taps = detail::gaussian_taps(p.smooth_sigma);
  const int r = static_cast<int>(taps.size()) / 2;
  int dlo = counts.begin()->first.second, dhi = dlo;
  for (const auto& kv : counts) {
    dlo = std::min(dlo, kv.first.second);
    dhi = std::max(dhi, kv.first.second);
  }
  dlo -= r;
  dhi += r;

  auto smoothed = [&](int ia, int id) {
    double s = 0;
    for (int ja = -r; ja <= r; ++ja)
      for (int jd = -r; jd <= r; ++jd) {
        const int wa = ((ia + ja) % n_az + n_az) % n_az;
        auto it = counts.find({wa, id + jd});
        if (it != counts.end()) s += taps[ja + r] * taps[jd + r] * it->second;
      }
    return s;
  };

  std::map<std::pair<int, int>, double> smooth;
  for (int ia = 0; ia < n_az; ++ia)
    for (int id = dlo; id <= dhi; ++id) {
      const double v = smoothed(ia, id);
      if (v > 0) smooth[{ia, id}] = v;
    }

  auto value = [&](int ia, int id) {
    auto it = smooth.find({((ia % n_az) + n_az) % n_az, id});
    return it == smooth.end() ? 0.0 : it->second;
  };

  for (const auto& kv : smooth) {
    const int ia = kv.first.first, id = kv.first.second;
    const double v = kv.second;
    if (v <= p.sigma_t) continue;
    bool is_max = true;
    for (int ja = -1; ja <= 1 && is_max; ++ja)
      for (int jd = -1; jd <= 1 && is_max; ++jd) {
        if (ja == 0 && jd == 0) continue;
        const double nv = value(ia + ja, id + jd);
        // ties go to the cell that comes first in scan order
        if (nv > v || (nv == v && (ja < 0 || (ja == 0 && jd < 0)))) is_max = false;
      }
    if (!is_max) continue;

    double cx = 0, cy = 0, dsum = 0, wsum = 0;
    for (int ja = -1; ja <= 1; ++ja)
      for (int jd = -1; jd <= 1; ++jd) {
        auto it = votes.find({((ia + ja) % n_az + n_az) % n_az, id + jd});
        if (it == votes.end()) continue;
        for (const Vote& vv : it->second) {
          cx += std::cos(vv.phi);
          cy += std::sin(vv.phi);
          dsum += vv.d;
          wsum += 1.0;
        }
      }
    if (wsum == 0) continue;
    MinimalPlane mp{MinimalPlane::Kind::Vertical, std::atan2(cy, cx), dsum / wsum};
    canonicalize_vertical(mp);
    out.push_back({mp.phi, mp.d});
  }
  return out;
}

struct DetectedPlane {
  MinimalPlane plane;
  double support = 0;  // face count behind the histogram peak
  std::set<int> member_points;
};

/// Registry of all planes ever detected; ids are stable, merged candidates
/// fold into the existing entry.
class PlaneRegistry {
 public:
  struct Entry {
    int id;
    DetectedPlane plane;
    bool active = true;
  };

  const std::vector<Entry>& entries() const { return entries_; }

  Entry* find(int id) {
    for (Entry& e : entries_)
      if (e.id == id) return &e;
    return nullptr;
  }
  const Entry* find(int id) const {
    return const_cast<PlaneRegistry*>(this)->find(id);
  }

  int merge_or_insert(const DetectedPlane& cand, double angle_thresh, double dist_thresh) {
    int idx = -1;
    for (size_t i = 0; i < entries_.size(); ++i)
      if (entries_[i].active &&
          close(entries_[i].plane, cand.plane, angle_thresh, dist_thresh)) {
        idx = static_cast<int>(i);
        break;
      }
    if (idx < 0) {
      Entry e;
      e.id = next_id_++;
      e.plane = cand;
      entries_.push_back(std::move(e));
      return entries_.back().id;
    }
    fold(entries_[idx].plane, cand);
    // the updated parameters may have drifted into another entry's band;
    // keep folding until the active set is threshold-separated again
    bool changed = true;
    while (changed) {
      changed = false;
      for (size_t j = 0; j < entries_.size(); ++j) {
        if (static_cast<int>(j) == idx || !entries_[j].active) continue;
        if (!close(entries_[j].plane, entries_[idx].plane.plane, angle_thresh, dist_thresh))
          continue;
        const size_t keep = std::min<size_t>(j, idx);
        const size_t drop = std::max<size_t>(j, idx);
        fold(entries_[keep].plane, entries_[drop].plane);
        entries_[drop].active = false;
        idx = static_cast<int>(keep);
        changed = true;
        break;
      }
    }
    return entries_[idx].id;
  }

  int merge_or_insert(const DetectedPlane& cand, const PlaneDetectParams& p = {}) {
    return merge_or_insert(cand, p.angle_tol, p.dist_thresh);
  }

 private:
  static bool close(const DetectedPlane& a, const MinimalPlane& b, double angle_thresh,
                    double dist_thresh) {
    if (a.plane.kind != b.kind) return false;
    const bool angle_ok = b.kind == MinimalPlane::Kind::Horizontal ||
                          std::abs(angle_diff(a.plane.phi, b.phi)) <= angle_thresh;
    return angle_ok && std::abs(a.plane.d - b.d) <= dist_thresh;
  }

  static void fold(DetectedPlane& dst, const DetectedPlane& src) {
    const double w0 = dst.support, w1 = src.support, w = w0 + w1;
    if (dst.plane.kind == MinimalPlane::Kind::Vertical) {
      const double cx = w0 * std::cos(dst.plane.phi) + w1 * std::cos(src.plane.phi);
      const double cy = w0 * std::sin(dst.plane.phi) + w1 * std::sin(src.plane.phi);
      dst.plane.phi = wrap_angle(std::atan2(cy, cx));
    }
    dst.plane.d = (w0 * dst.plane.d + w1 * src.plane.d) / w;
    dst.support = w;
    dst.member_points.insert(src.member_points.begin(), src.member_points.end());
  }

  std::vector<Entry> entries_;
  int next_id_ = 0;
};

/// A landmark joins the plane if some face it belongs to has a compatible
/// normal and all three of that face's vertices lie close to the plane.
inline std::set<int> associate_points(const Mesh3D& mesh, const MinimalPlane& plane,
                                      double point_dist_tol, double angle_tol) {
  const GeneralPlane pi = minimal_plane_to_general(plane);
  const double cos_tol = std::cos(angle_tol);
  std::set<int> out;
  for (const MeshFace& f : mesh.faces) {
    if (std::abs(f.normal.dot(pi.n)) < cos_tol) continue;
    bool on_plane = true;
    for (const Vec3& v : f.vertices)
      if (std::abs(pi.incidence(v)) > point_dist_tol) on_plane = false;
    if (!on_plane) continue;
    for (int id : f.landmark_ids) out.insert(id);
  }
  return out;
}

}  // namespace pvio
