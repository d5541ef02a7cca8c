#include "pvio/plane_detect.hpp"

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace pvio {
namespace {

using testing::uniform;

MeshFace face_at_height(double h) {
  MeshFace f;
  f.normal = Vec3::UnitZ();
  f.centroid = Vec3(0, 0, h);
  f.height = h;
  return f;
}

MeshFace wall_face(double phi, double dist, double along = 0, double up = 0) {
  MeshFace f;
  f.normal = Vec3(std::cos(phi), std::sin(phi), 0);
  const Vec3 tangent(-std::sin(phi), std::cos(phi), 0);
  f.centroid = -dist * f.normal + along * tangent + up * Vec3::UnitZ();
  f.height = f.centroid.z();
  return f;
}

TEST(ClassifyFaces, AxisAlignedAndOblique) {
  Mesh3D mesh;
  MeshFace f;
  f.normal = Vec3(0, 0, 1);
  mesh.faces.push_back(f);
  f.normal = Vec3(1, 0, 0);
  mesh.faces.push_back(f);
  f.normal = Vec3(1, 0, 1).normalized();
  mesh.faces.push_back(f);
  const FaceClasses c = classify_faces(mesh, 10.0 * M_PI / 180.0);
  EXPECT_EQ(c.horizontal.size(), 1u);
  EXPECT_EQ(c.vertical.size(), 1u);
  EXPECT_EQ(c.other.size(), 1u);
}

TEST(DetectHorizontal, SingleClusterAboveThreshold) {
  std::vector<MeshFace> faces;
  for (int i = 0; i < 25; ++i) faces.push_back(face_at_height(-1.00));
  const auto planes = detect_horizontal(faces);
  ASSERT_EQ(planes.size(), 1u);
  EXPECT_NEAR(planes[0].d, 1.00, 1e-12);
}

TEST(DetectHorizontal, BelowThresholdIgnored) {
  std::vector<MeshFace> faces;
  for (int i = 0; i < 10; ++i) faces.push_back(face_at_height(-1.00));
  EXPECT_TRUE(detect_horizontal(faces).empty());
}

TEST(DetectHorizontal, TwoFloors) {
  std::vector<MeshFace> faces;
  for (int i = 0; i < 30; ++i) faces.push_back(face_at_height(-1.0 + uniform(-0.01, 0.01)));
  for (int i = 0; i < 30; ++i) faces.push_back(face_at_height(-2.5 + uniform(-0.01, 0.01)));
  auto planes = detect_horizontal(faces);
  ASSERT_EQ(planes.size(), 2u);
  std::sort(planes.begin(), planes.end(),
            [](const HorizontalPlane& a, const HorizontalPlane& b) { return a.d < b.d; });
  EXPECT_NEAR(planes[0].d, 1.0, 0.02);
  EXPECT_NEAR(planes[1].d, 2.5, 0.02);
}

TEST(DetectHorizontal, TranslationAlongPlaneLeavesDistanceUnchanged) {
  std::vector<MeshFace> faces, shifted;
  for (int i = 0; i < 40; ++i) {
    MeshFace f = face_at_height(-1.0 + uniform(-0.02, 0.02));
    faces.push_back(f);
    f.centroid += Vec3(3.7, -1.2, 0);  // parallel to the plane, height untouched
    shifted.push_back(f);
  }
  const auto a = detect_horizontal(faces);
  const auto b = detect_horizontal(shifted);
  ASSERT_EQ(a.size(), 1u);
  ASSERT_EQ(b.size(), 1u);
  EXPECT_DOUBLE_EQ(a[0].d, b[0].d);
}

TEST(DetectVertical, PlantedWall) {
  std::vector<MeshFace> faces;
  for (int i = 0; i < 30; ++i) faces.push_back(wall_face(0.0, -2.0, uniform(-1, 1), uniform(-1, 1)));
  const auto planes = detect_vertical(faces);
  ASSERT_EQ(planes.size(), 1u);
  EXPECT_NEAR(planes[0].phi, 0.0, 0.5 * 2.0 * M_PI / 180.0);
  EXPECT_NEAR(planes[0].d, -2.0, 0.025);
}

TEST(DetectVertical, PerpendicularCorner) {
  std::vector<MeshFace> faces;
  for (int i = 0; i < 30; ++i) faces.push_back(wall_face(uniform(-0.01, 0.01), -2.0));
  for (int i = 0; i < 30; ++i)
    faces.push_back(wall_face(M_PI / 2 + uniform(-0.01, 0.01), 1.0));
  auto planes = detect_vertical(faces);
  ASSERT_EQ(planes.size(), 2u);
  // the second wall sits on the canonical phi = pi/2 boundary, so compare up
  // to the (phi, d) ~ (phi + pi, -d) equivalence
  auto gap = [](const VerticalPlane& a, double phi, double d) {
    const double g1 = std::abs(angle_diff(a.phi, phi)) + std::abs(a.d - d);
    const double g2 = std::abs(angle_diff(a.phi, phi + M_PI)) + std::abs(a.d + d);
    return std::min(g1, g2);
  };
  for (const auto& [phi, d] : {std::pair{0.0, -2.0}, std::pair{M_PI / 2, 1.0}}) {
    int hits = 0;
    for (const VerticalPlane& p : planes)
      if (gap(p, phi, d) < 0.04) ++hits;
    EXPECT_EQ(hits, 1) << "planted wall phi=" << phi;
  }
}

TEST(DetectVertical, AzimuthWraparound) {
  // votes straddle the +-pi seam; cyclic smoothing must see one wall
  std::vector<MeshFace> faces;
  for (int i = 0; i < 40; ++i)
    faces.push_back(wall_face(M_PI - 0.005 + uniform(-0.02, 0.02), -1.5));
  const auto planes = detect_vertical(faces);
  ASSERT_EQ(planes.size(), 1u);
  // reported in the canonical half-circle representation
  EXPECT_LT(std::abs(angle_diff(planes[0].phi, -0.005)), 0.03);
  EXPECT_NEAR(planes[0].d, 1.5, 0.025);
}

TEST(DetectVertical, ShiftByTwoPiIsIdentical) {
  std::vector<MeshFace> a, b;
  for (int i = 0; i < 30; ++i) {
    const double phi = 0.7 + uniform(-0.01, 0.01);
    a.push_back(wall_face(phi, -1.0));
    MeshFace f = a.back();
    f.normal = Vec3(std::cos(phi + 2 * M_PI), std::sin(phi + 2 * M_PI), 0);
    b.push_back(f);
  }
  const auto pa = detect_vertical(a);
  const auto pb = detect_vertical(b);
  ASSERT_EQ(pa.size(), 1u);
  ASSERT_EQ(pb.size(), 1u);
  EXPECT_NEAR(pa[0].phi, pb[0].phi, 1e-12);
  EXPECT_NEAR(pa[0].d, pb[0].d, 1e-12);
}

DetectedPlane horizontal_candidate(double d, double support) {
  DetectedPlane p;
  p.plane.kind = MinimalPlane::Kind::Horizontal;
  p.plane.d = d;
  p.support = support;
  return p;
}

DetectedPlane vertical_candidate(double phi, double d, double support) {
  DetectedPlane p;
  p.plane.kind = MinimalPlane::Kind::Vertical;
  p.plane.phi = phi;
  p.plane.d = d;
  p.support = support;
  return p;
}

TEST(PlaneRegistry, InsertAndMerge) {
  PlaneRegistry reg;
  auto c0 = horizontal_candidate(1.00, 30);
  c0.member_points = {1, 2, 3};
  EXPECT_EQ(reg.merge_or_insert(c0, 0.1, 0.05), 0);

  auto c1 = horizontal_candidate(1.01, 30);
  c1.member_points = {3, 4};
  EXPECT_EQ(reg.merge_or_insert(c1, 0.1, 0.05), 0);
  const auto* e = reg.find(0);
  ASSERT_NE(e, nullptr);
  EXPECT_DOUBLE_EQ(e->plane.support, 60);
  EXPECT_NEAR(e->plane.plane.d, 1.005, 1e-12);
  EXPECT_EQ(e->plane.member_points.size(), 4u);

  EXPECT_EQ(reg.merge_or_insert(vertical_candidate(0.0, -2.0, 25), 0.1, 0.05), 1);
  EXPECT_EQ(reg.merge_or_insert(vertical_candidate(0.3, -2.0, 25), 0.1, 0.05), 2);
  EXPECT_EQ(reg.merge_or_insert(vertical_candidate(0.02, -2.01, 25), 0.1, 0.05), 1);
}

TEST(PlaneRegistry, NoActivePairWithinThresholds) {
  PlaneRegistry reg;
  for (int i = 0; i < 200; ++i) {
    if (uniform(0, 1) < 0.5)
      reg.merge_or_insert(horizontal_candidate(uniform(0.5, 2.0), 21), 0.1, 0.05);
    else
      reg.merge_or_insert(vertical_candidate(uniform(-M_PI, M_PI), uniform(-2, 2), 21), 0.1,
                          0.05);
  }
  const auto& es = reg.entries();
  for (size_t i = 0; i < es.size(); ++i)
    for (size_t j = i + 1; j < es.size(); ++j) {
      if (!es[i].active || !es[j].active) continue;
      const auto& a = es[i].plane.plane;
      const auto& b = es[j].plane.plane;
      if (a.kind != b.kind) continue;
      const bool angle_close = a.kind == MinimalPlane::Kind::Horizontal ||
                               std::abs(angle_diff(a.phi, b.phi)) <= 0.1;
      EXPECT_FALSE(angle_close && std::abs(a.d - b.d) <= 0.05)
          << "planes " << es[i].id << " and " << es[j].id << " overlap";
    }
}

Mesh3D plane_patch_mesh(const GeneralPlane& pi, int n_faces, int first_id, double offset = 0) {
  // small triangles tiled on the plane, optionally pushed off along the normal
  Mesh3D mesh;
  const Vec3 u = pi.n.cross(std::abs(pi.n.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX()).normalized();
  const Vec3 v = pi.n.cross(u);
  const Vec3 origin = -pi.d * pi.n + offset * pi.n;
  for (int i = 0; i < n_faces; ++i) {
    MeshFace f;
    const Vec3 base = origin + u * (0.3 * i);
    f.vertices = {base, base + 0.1 * u, base + 0.1 * v};
    f.landmark_ids = {first_id + 3 * i, first_id + 3 * i + 1, first_id + 3 * i + 2};
    Vec3 n = (f.vertices[1] - f.vertices[0]).cross(f.vertices[2] - f.vertices[0]).normalized();
    if (n.z() < 0 || (n.z() == 0 && (n.x() < 0 || (n.x() == 0 && n.y() < 0)))) n = -n;
    f.normal = n;
    f.centroid = (f.vertices[0] + f.vertices[1] + f.vertices[2]) / 3.0;
    f.height = f.centroid.z();
    mesh.faces.push_back(f);
  }
  return mesh;
}

TEST(AssociatePoints, OnPlaneFacesJoin) {
  MinimalPlane plane;
  plane.kind = MinimalPlane::Kind::Horizontal;
  plane.d = 1.0;
  const Mesh3D mesh = plane_patch_mesh(minimal_plane_to_general(plane), 5, 0);
  const auto ids = associate_points(mesh, plane, 0.05, 5.0 * M_PI / 180.0);
  EXPECT_EQ(ids.size(), 15u);
}

TEST(AssociatePoints, OffsetFaceExcluded) {
  MinimalPlane plane;
  plane.kind = MinimalPlane::Kind::Horizontal;
  plane.d = 1.0;
  Mesh3D mesh = plane_patch_mesh(minimal_plane_to_general(plane), 3, 0);
  const Mesh3D off = plane_patch_mesh(minimal_plane_to_general(plane), 2, 100, 0.1);
  mesh.faces.insert(mesh.faces.end(), off.faces.begin(), off.faces.end());
  const auto ids = associate_points(mesh, plane, 0.02, 5.0 * M_PI / 180.0);
  EXPECT_EQ(ids.size(), 9u);
  for (int id : ids) EXPECT_LT(id, 100);
}

TEST(AssociatePoints, PlantedMembershipRecovered) {
  MinimalPlane wall;
  wall.kind = MinimalPlane::Kind::Vertical;
  wall.phi = 0.4;
  wall.d = -1.7;
  Mesh3D mesh = plane_patch_mesh(minimal_plane_to_general(wall), 12, 0);
  MinimalPlane floor_plane;
  floor_plane.kind = MinimalPlane::Kind::Horizontal;
  floor_plane.d = 1.0;
  const Mesh3D fl = plane_patch_mesh(minimal_plane_to_general(floor_plane), 12, 500);
  mesh.faces.insert(mesh.faces.end(), fl.faces.begin(), fl.faces.end());

  const auto wall_ids = associate_points(mesh, wall, 0.05, 5.0 * M_PI / 180.0);
  const auto floor_ids = associate_points(mesh, floor_plane, 0.05, 5.0 * M_PI / 180.0);
  EXPECT_EQ(wall_ids.size(), 36u);
  EXPECT_EQ(floor_ids.size(), 36u);
  for (int id : wall_ids) EXPECT_LT(id, 500);
  for (int id : floor_ids) EXPECT_GE(id, 500);
}

}  // namespace
}  // namespace pvio
