#pragma once

#include <algorithm>
#include <map>
#include <ostream>
#include <stdexcept>
#include <vector>

#include "pvio/geometry.hpp"

namespace pvio {

struct TooFewPoints : std::runtime_error {
  TooFewPoints() : std::runtime_error("triangulation needs at least 3 distinct points") {}
};
struct AllCollinear : std::runtime_error {
  AllCollinear() : std::runtime_error("all input points are collinear") {}
};
struct MissingDepth : std::runtime_error {
  explicit MissingDepth(int id)
      : std::runtime_error("no positive inverse depth for landmark " + std::to_string(id)) {}
};

struct MeshVertex {
  Vec2 pixel = Vec2::Zero();
  int landmark_id = -1;
};

struct Triangulation2D {
  std::vector<MeshVertex> vertices;
  std::vector<std::array<int, 3>> triangles;  // CCW in image coordinates
};

namespace detail {

inline double orient2d(const Vec2& a, const Vec2& b, const Vec2& c) {
  return (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
}

// > 0 means d strictly inside the circumcircle of CCW triangle (a, b, c).
inline double incircle(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  const double adx = a.x() - d.x(), ady = a.y() - d.y();
  const double bdx = b.x() - d.x(), bdy = b.y() - d.y();
  const double cdx = c.x() - d.x(), cdy = c.y() - d.y();
  const double ad2 = adx * adx + ady * ady;
  const double bd2 = bdx * bdx + bdy * bdy;
  const double cd2 = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd2 - cdy * bd2) - ady * (bdx * cd2 - cdx * bd2) +
         ad2 * (bdx * cdy - cdx * bdy);
}

}  // namespace detail

/// Incremental Bowyer-Watson triangulation. Inputs are pre-sorted
/// lexicographically so the result is independent of the caller's ordering;
/// near-duplicate pixels (within 1e-6 px) keep only the first occurrence.
inline Triangulation2D delaunay2d(std::vector<MeshVertex> points,
                                  double incircle_tol = 1e-9) {
  std::sort(points.begin(), points.end(), [](const MeshVertex& a, const MeshVertex& b) {
    if (a.pixel.x() != b.pixel.x()) return a.pixel.x() < b.pixel.x();
    if (a.pixel.y() != b.pixel.y()) return a.pixel.y() < b.pixel.y();
    return a.landmark_id < b.landmark_id;
  });
  std::vector<MeshVertex> pts;
  for (const MeshVertex& v : points) {
    bool dup = false;
    for (const MeshVertex& u : pts)
      if ((u.pixel - v.pixel).lpNorm<Eigen::Infinity>() <= 1e-6) {
        dup = true;
        break;
      }
    if (!dup) pts.push_back(v);
  }
  if (pts.size() < 3) throw TooFewPoints();
  bool spanning = false;
  for (size_t i = 2; i < pts.size() && !spanning; ++i)
    if (std::abs(detail::orient2d(pts[0].pixel, pts[1].pixel, pts[i].pixel)) > 1e-9)
      spanning = true;
  if (!spanning) throw AllCollinear();

  Vec2 lo = pts[0].pixel, hi = pts[0].pixel;
  for (const MeshVertex& v : pts) {
    lo = lo.cwiseMin(v.pixel);
    hi = hi.cwiseMax(v.pixel);
  }
  const Vec2 mid = 0.5 * (lo + hi);
  const double span = std::max((hi - lo).maxCoeff(), 1.0) * 64.0;

  // working vertex array: real points first, then the 3 super-triangle corners
  std::vector<Vec2> verts;
  verts.reserve(pts.size() + 3);
  for (const MeshVertex& v : pts) verts.push_back(v.pixel);
  const int s0 = static_cast<int>(verts.size());
  verts.push_back(mid + Vec2(-span, -span));
  verts.push_back(mid + Vec2(span, -span));
  verts.push_back(mid + Vec2(0, span));

  std::vector<std::array<int, 3>> tris;
  tris.push_back({s0, s0 + 1, s0 + 2});

  struct Edge {
    int a, b;
  };
  for (size_t p = 0; p < pts.size(); ++p) {
    const Vec2& x = verts[p];
    std::vector<std::array<int, 3>> keep;
    std::vector<Edge> boundary;
    for (const auto& t : tris) {
      if (detail::incircle(verts[t[0]], verts[t[1]], verts[t[2]], x) > incircle_tol) {
        // cavity triangle: collect its edges, cancelling shared ones
        const Edge es[3] = {{t[0], t[1]}, {t[1], t[2]}, {t[2], t[0]}};
        for (const Edge& e : es) {
          auto it = std::find_if(boundary.begin(), boundary.end(), [&](const Edge& o) {
            return o.a == e.b && o.b == e.a;
          });
          if (it != boundary.end())
            boundary.erase(it);
          else
            boundary.push_back(e);
        }
      } else {
        keep.push_back(t);
      }
    }
    tris = std::move(keep);
    for (const Edge& e : boundary) {
      std::array<int, 3> t = {e.a, e.b, static_cast<int>(p)};
      if (detail::orient2d(verts[t[0]], verts[t[1]], verts[t[2]]) < 0)
        std::swap(t[1], t[2]);
      tris.push_back(t);
    }
  }

  Triangulation2D out;
  out.vertices = std::move(pts);
  for (const auto& t : tris) {
    if (t[0] >= s0 || t[1] >= s0 || t[2] >= s0) continue;
    std::array<int, 3> s = t;
    // rotate so the smallest index leads, orientation preserved
    while (s[0] > s[1] || s[0] > s[2]) {
      const int tmp = s[0];
      s[0] = s[1];
      s[1] = s[2];
      s[2] = tmp;
    }
    out.triangles.push_back(s);
  }
  std::sort(out.triangles.begin(), out.triangles.end());
  return out;
}

struct MeshFace {
  std::array<Vec3, 3> vertices;  // world frame
  std::array<int, 3> landmark_ids;
  Vec3 normal = Vec3::UnitZ();
  Vec3 centroid = Vec3::Zero();
  double height = 0;  // centroid.z
};

struct Mesh3D {
  std::vector<MeshFace> faces;
};

/// Backprojects triangulation vertices with their inverse depths, maps them to
/// the world frame and keeps faces whose 3D edges are all short enough to not
/// bridge depth discontinuities. Normals are canonicalized to n.z >= 0, ties
/// broken by n.x >= 0 then n.y >= 0.
inline Mesh3D lift_to_3d(const Triangulation2D& tri, const std::map<int, double>& inv_depths,
                         const Pose& T_wc, const CameraIntrinsics& cam,
                         double max_edge_3d = 0.5) {
  std::vector<Vec3> world(tri.vertices.size());
  for (size_t i = 0; i < tri.vertices.size(); ++i) {
    const MeshVertex& v = tri.vertices[i];
    auto it = inv_depths.find(v.landmark_id);
    if (it == inv_depths.end() || !(it->second > 0) || !std::isfinite(it->second))
      throw MissingDepth(v.landmark_id);
    world[i] = T_wc * backproject(cam, v.pixel, it->second);
  }

  Mesh3D mesh;
  for (const auto& t : tri.triangles) {
    MeshFace f;
    for (int k = 0; k < 3; ++k) {
      f.vertices[k] = world[t[k]];
      f.landmark_ids[k] = tri.vertices[t[k]].landmark_id;
    }
    bool long_edge = false;
    for (int k = 0; k < 3; ++k)
      if ((f.vertices[k] - f.vertices[(k + 1) % 3]).norm() > max_edge_3d) long_edge = true;
    if (long_edge) continue;

    Vec3 n = (f.vertices[1] - f.vertices[0]).cross(f.vertices[2] - f.vertices[0]);
    const double len = n.norm();
    if (len < 1e-12) continue;  // degenerate sliver
    n /= len;
    if (n.z() < 0 || (n.z() == 0 && (n.x() < 0 || (n.x() == 0 && n.y() < 0)))) n = -n;
    f.normal = n;
    f.centroid = (f.vertices[0] + f.vertices[1] + f.vertices[2]) / 3.0;
    f.height = f.centroid.z();
    mesh.faces.push_back(f);
  }
  return mesh;
}

/// ASCII PLY dump for external inspection.
inline void write_ply(std::ostream& os, const Mesh3D& mesh) {
  os << "ply\nformat ascii 1.0\n";
  os << "element vertex " << mesh.faces.size() * 3 << "\n";
  os << "property float x\nproperty float y\nproperty float z\n";
  os << "element face " << mesh.faces.size() << "\n";
  os << "property list uchar int vertex_indices\nend_header\n";
  for (const MeshFace& f : mesh.faces)
    for (const Vec3& v : f.vertices) os << v.x() << " " << v.y() << " " << v.z() << "\n";
  for (size_t i = 0; i < mesh.faces.size(); ++i)
    os << "3 " << 3 * i << " " << 3 * i + 1 << " " << 3 * i + 2 << "\n";
}

}  // namespace pvio
