#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace clickseg {

using Vec3 = Eigen::Vector3d;
using PointIndex = std::int32_t;

/// Raised for violated preconditions on geometric inputs.
class GeometryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Points with unit normals. Immutable after construction.
class PointCloud {
 public:
  PointCloud() = default;

  /// Throws GeometryError when empty, when sizes differ, or when any normal
  /// is more than 1e-4 away from unit length.
  PointCloud(std::vector<Vec3> positions, std::vector<Vec3> normals);

  std::size_t size() const { return positions_.size(); }
  bool empty() const { return positions_.empty(); }

  const Vec3& position(std::size_t i) const { return positions_[i]; }
  const Vec3& normal(std::size_t i) const { return normals_[i]; }
  std::span<const Vec3> positions() const { return positions_; }
  std::span<const Vec3> normals() const { return normals_; }

  bool operator==(const PointCloud&) const = default;

 private:
  std::vector<Vec3> positions_;
  std::vector<Vec3> normals_;
};

/// Rescales normals to unit length. Throws GeometryError on a zero normal.
std::vector<Vec3> unit_normals(std::vector<Vec3> normals);

/// Translates the centroid to the origin and scales so the farthest point has
/// norm 1. Throws GeometryError("zero extent") when all points coincide.
PointCloud normalize_cloud(const PointCloud& cloud);

/// Translation and scale applied by normalize_cloud: p' = (p - center) * scale.
struct NormalizeTransform {
  Vec3 center = Vec3::Zero();
  double scale = 1.0;
};

NormalizeTransform normalize_transform(const PointCloud& cloud);
PointCloud apply_transform(const PointCloud& cloud, const NormalizeTransform& t);

inline double squared_distance(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x();
  const double dy = a.y() - b.y();
  const double dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

/// One flag per point of an associated cloud.
class SegmentMask {
 public:
  SegmentMask() = default;
  explicit SegmentMask(std::size_t n, bool value = false) : flags_(n, value ? 1 : 0) {}

  static SegmentMask from_indices(std::size_t n, std::span<const PointIndex> indices);

  std::size_t size() const { return flags_.size(); }
  bool operator[](std::size_t i) const { return flags_[i] != 0; }
  bool test(std::size_t i) const { return flags_.at(i) != 0; }
  void set(std::size_t i, bool value = true) { flags_[i] = value ? 1 : 0; }

  std::size_t count() const;
  bool none() const { return count() == 0; }
  std::vector<PointIndex> indices() const;

  bool operator==(const SegmentMask&) const = default;

 private:
  std::vector<std::uint8_t> flags_;
};

/// |a & b| / |a | b|, and 1.0 when both masks are empty.
double iou(const SegmentMask& a, const SegmentMask& b);

/// Indices set in `after` but not in `before`, and vice versa.
struct MaskDelta {
  std::vector<PointIndex> added;
  std::vector<PointIndex> removed;
};
MaskDelta mask_delta(const SegmentMask& before, const SegmentMask& after);

}  // namespace clickseg
