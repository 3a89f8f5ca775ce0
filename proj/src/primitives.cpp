#include "clickseg/primitives.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "clickseg/rng.hpp"

namespace clickseg {

namespace {
constexpr double kPi = std::numbers::pi;
}

std::string_view to_string(PrimitiveKind kind) {
  switch (kind) {
    case PrimitiveKind::Plane: return "plane";
    case PrimitiveKind::Sphere: return "sphere";
    case PrimitiveKind::Cylinder: return "cylinder";
    case PrimitiveKind::Cone: return "cone";
    case PrimitiveKind::Torus: return "torus";
  }
  return "plane";
}

PrimitiveKind primitive_kind_from_string(std::string_view name) {
  for (auto k : {PrimitiveKind::Plane, PrimitiveKind::Sphere, PrimitiveKind::Cylinder, PrimitiveKind::Cone,
                 PrimitiveKind::Torus}) {
    if (to_string(k) == name) return k;
  }
  throw GeometryError("unknown primitive kind '" + std::string(name) + "'");
}

void PrimitiveSpec::validate() const {
  const bool uses_b = kind != PrimitiveKind::Sphere;
  if (!(a > 0.0) || (uses_b && !(b > 0.0))) {
    throw GeometryError(std::string(to_string(kind)) + ": intrinsic parameters must be positive");
  }
  if (kind == PrimitiveKind::Torus && !(b < a)) throw GeometryError("torus: tube radius must be below major radius");
  if (!(pose.scale > 0.0)) throw GeometryError("pose scale must be positive");
  if (std::abs(pose.rotation.norm() - 1.0) > 1e-6) throw GeometryError("pose rotation is not a unit quaternion");
  if (!pose.translation.allFinite()) throw GeometryError("pose translation is not finite");
}

double PrimitiveSpec::local_area() const {
  switch (kind) {
    case PrimitiveKind::Plane: return a * b;
    case PrimitiveKind::Sphere: return 4.0 * kPi * a * a;
    case PrimitiveKind::Cylinder: return 2.0 * kPi * a * b;
    case PrimitiveKind::Cone: return kPi * a * std::hypot(a, b);
    case PrimitiveKind::Torus: return 4.0 * kPi * kPi * a * b;
  }
  return 0.0;
}

double PrimitiveSpec::local_bounding_radius() const {
  switch (kind) {
    case PrimitiveKind::Plane: return 0.5 * std::hypot(a, b);
    case PrimitiveKind::Sphere: return a;
    case PrimitiveKind::Cylinder:
    case PrimitiveKind::Cone: return std::hypot(a, 0.5 * b);
    case PrimitiveKind::Torus: return a + b;
  }
  return 0.0;
}

double PrimitiveSpec::surface_distance(const Vec3& world) const {
  const Vec3 p = pose.to_local(world);
  double d = 0.0;
  switch (kind) {
    case PrimitiveKind::Plane: {
      const double dx = std::max(std::abs(p.x()) - 0.5 * a, 0.0);
      const double dy = std::max(std::abs(p.y()) - 0.5 * b, 0.0);
      d = std::sqrt(dx * dx + dy * dy + p.z() * p.z());
      break;
    }
    case PrimitiveKind::Sphere:
      d = std::abs(p.norm() - a);
      break;
    case PrimitiveKind::Cylinder: {
      const double radial = std::abs(std::hypot(p.x(), p.y()) - a);
      const double axial = std::max(std::abs(p.z()) - 0.5 * b, 0.0);
      d = std::hypot(radial, axial);
      break;
    }
    case PrimitiveKind::Cone: {
      // Distance in the (rho, z) half-plane to the generator segment.
      const Eigen::Vector2d q(std::hypot(p.x(), p.y()), p.z());
      const Eigen::Vector2d base(a, -0.5 * b);
      const Eigen::Vector2d apex(0.0, 0.5 * b);
      const Eigen::Vector2d seg = apex - base;
      const double t = std::clamp((q - base).dot(seg) / seg.squaredNorm(), 0.0, 1.0);
      d = (q - (base + t * seg)).norm();
      break;
    }
    case PrimitiveKind::Torus: {
      const double ring = std::hypot(p.x(), p.y()) - a;
      d = std::abs(std::hypot(ring, p.z()) - b);
      break;
    }
  }
  return d * pose.scale;
}

PointPatch sample_primitive_local(const PrimitiveSpec& spec, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  PointPatch patch;
  patch.positions.reserve(n);
  patch.normals.reserve(n);
  const double a = spec.a;
  const double b = spec.b;
  for (std::size_t i = 0; i < n; ++i) {
    Vec3 p;
    Vec3 nrm;
    switch (spec.kind) {
      case PrimitiveKind::Plane:
        p = Vec3(rng.uniform(-0.5, 0.5) * a, rng.uniform(-0.5, 0.5) * b, 0.0);
        nrm = Vec3::UnitZ();
        break;
      case PrimitiveKind::Sphere: {
        const double z = rng.uniform(-1.0, 1.0);
        const double phi = rng.uniform(0.0, 2.0 * kPi);
        const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
        nrm = Vec3(s * std::cos(phi), s * std::sin(phi), z);
        p = a * nrm;
        break;
      }
      case PrimitiveKind::Cylinder: {
        const double phi = rng.uniform(0.0, 2.0 * kPi);
        nrm = Vec3(std::cos(phi), std::sin(phi), 0.0);
        p = Vec3(a * nrm.x(), a * nrm.y(), rng.uniform(-0.5, 0.5) * b);
        break;
      }
      case PrimitiveKind::Cone: {
        // Lateral area density grows linearly with the distance from the apex.
        const double s = std::sqrt(rng.uniform());
        const double phi = rng.uniform(0.0, 2.0 * kPi);
        const double rho = a * s;
        p = Vec3(rho * std::cos(phi), rho * std::sin(phi), 0.5 * b - s * b);
        nrm = Vec3(b * std::cos(phi), b * std::sin(phi), a).normalized();
        break;
      }
      case PrimitiveKind::Torus: {
        // Rejection on the tube angle: density proportional to R + t cos(theta).
        double theta = 0.0;
        for (;;) {
          theta = rng.uniform(0.0, 2.0 * kPi);
          if (rng.uniform() * (a + b) <= a + b * std::cos(theta)) break;
        }
        const double phi = rng.uniform(0.0, 2.0 * kPi);
        nrm = Vec3(std::cos(phi) * std::cos(theta), std::sin(phi) * std::cos(theta), std::sin(theta));
        const double ring = a + b * std::cos(theta);
        p = Vec3(ring * std::cos(phi), ring * std::sin(phi), b * std::sin(theta));
        break;
      }
    }
    patch.positions.push_back(p);
    patch.normals.push_back(nrm);
  }
  return patch;
}

PointPatch sample_primitive(const PrimitiveSpec& spec, std::size_t n, std::uint64_t seed) {
  spec.validate();
  if (n < 16) throw GeometryError("sample_primitive: at least 16 points required");
  PointPatch patch = sample_primitive_local(spec, n, seed);
  const Eigen::Matrix3d rot = spec.pose.rotation.toRotationMatrix();
  for (std::size_t i = 0; i < n; ++i) {
    patch.positions[i] = spec.pose.scale * (rot * patch.positions[i]) + spec.pose.translation;
    patch.normals[i] = (rot * patch.normals[i]).normalized();
  }
  return patch;
}

}  // namespace clickseg
