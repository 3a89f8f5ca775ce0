#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Geometry>

#include "clickseg/geometry.hpp"

namespace clickseg {

enum class PrimitiveKind { Plane, Sphere, Cylinder, Cone, Torus };

std::string_view to_string(PrimitiveKind kind);
PrimitiveKind primitive_kind_from_string(std::string_view name);

/// Rigid pose plus uniform scale: world = scale * rotation * local + translation.
struct Pose {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Vec3 translation = Vec3::Zero();
  double scale = 1.0;

  Vec3 to_world(const Vec3& local) const { return scale * (rotation * local) + translation; }
  Vec3 to_local(const Vec3& world) const { return rotation.conjugate() * (world - translation) / scale; }
};

/// A parametric surface patch in its local frame.
///
///   Plane    : rectangle [-a/2, a/2] x [-b/2, b/2] in z = 0, normal +z  (a, b)
///   Sphere   : radius r about the origin                                 (r)
///   Cylinder : lateral surface, radius r, z in [-h/2, h/2]               (r, h)
///   Cone     : lateral surface, base radius r at z = -h/2, apex at h/2   (r, h)
///   Torus    : major radius R about the z axis, tube radius t < R        (R, t)
struct PrimitiveSpec {
  PrimitiveKind kind = PrimitiveKind::Plane;
  double a = 1.0;  ///< width / radius / major radius
  double b = 1.0;  ///< height / height / tube radius (unused for spheres)
  Pose pose;

  /// Throws GeometryError on a non-positive parameter, a torus with t >= R,
  /// or a rotation quaternion further than 1e-6 from unit norm.
  void validate() const;

  double local_area() const;
  /// Radius of a sphere about the local origin that encloses the patch.
  double local_bounding_radius() const;
  double world_bounding_radius() const { return pose.scale * local_bounding_radius(); }

  /// Distance from a world-space point to the surface patch (world units).
  double surface_distance(const Vec3& world) const;
};

struct PointPatch {
  std::vector<Vec3> positions;
  std::vector<Vec3> normals;
};

/// Area-uniform samples in the local frame with outward analytic normals.
PointPatch sample_primitive_local(const PrimitiveSpec& spec, std::size_t n, std::uint64_t seed);

/// sample_primitive_local mapped through spec.pose (normals rotated only).
/// Requires n >= 16 and a valid spec.
PointPatch sample_primitive(const PrimitiveSpec& spec, std::size_t n, std::uint64_t seed);

}  // namespace clickseg
