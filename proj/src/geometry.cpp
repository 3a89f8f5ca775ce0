#include "clickseg/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace clickseg {

PointCloud::PointCloud(std::vector<Vec3> positions, std::vector<Vec3> normals)
    : positions_(std::move(positions)), normals_(std::move(normals)) {
  if (positions_.empty()) throw GeometryError("point cloud is empty");
  if (positions_.size() != normals_.size()) {
    throw GeometryError("point cloud has " + std::to_string(positions_.size()) +
                        " positions but " + std::to_string(normals_.size()) + " normals");
  }
  for (std::size_t i = 0; i < normals_.size(); ++i) {
    if (!positions_[i].allFinite() || !normals_[i].allFinite()) {
      throw GeometryError("non-finite coordinate at point " + std::to_string(i));
    }
    if (std::abs(normals_[i].norm() - 1.0) > 1e-4) {
      throw GeometryError("normal of point " + std::to_string(i) + " is not unit length");
    }
  }
}

std::vector<Vec3> unit_normals(std::vector<Vec3> normals) {
  for (std::size_t i = 0; i < normals.size(); ++i) {
    const double len = normals[i].norm();
    if (!(len > 0.0) || !std::isfinite(len)) {
      throw GeometryError("zero normal at point " + std::to_string(i));
    }
    normals[i] /= len;
  }
  return normals;
}

NormalizeTransform normalize_transform(const PointCloud& cloud) {
  if (cloud.empty()) throw GeometryError("point cloud is empty");
  Vec3 center = Vec3::Zero();
  for (const Vec3& p : cloud.positions()) center += p;
  center /= static_cast<double>(cloud.size());
  double max_norm = 0.0;
  for (const Vec3& p : cloud.positions()) max_norm = std::max(max_norm, (p - center).norm());
  // Relative threshold: a cloud of identical points yields rounding noise only.
  const double magnitude = std::max(1.0, center.norm());
  if (!(max_norm > 1e-12 * magnitude)) throw GeometryError("zero extent");
  return {center, 1.0 / max_norm};
}

PointCloud apply_transform(const PointCloud& cloud, const NormalizeTransform& t) {
  std::vector<Vec3> positions;
  positions.reserve(cloud.size());
  for (const Vec3& p : cloud.positions()) positions.push_back((p - t.center) * t.scale);
  std::vector<Vec3> normals(cloud.normals().begin(), cloud.normals().end());
  return PointCloud(std::move(positions), unit_normals(std::move(normals)));
}

PointCloud normalize_cloud(const PointCloud& cloud) {
  return apply_transform(cloud, normalize_transform(cloud));
}

SegmentMask SegmentMask::from_indices(std::size_t n, std::span<const PointIndex> indices) {
  SegmentMask mask(n);
  for (PointIndex i : indices) {
    if (i < 0 || static_cast<std::size_t>(i) >= n) {
      throw GeometryError("mask index " + std::to_string(i) + " out of range");
    }
    mask.set(static_cast<std::size_t>(i));
  }
  return mask;
}

std::size_t SegmentMask::count() const {
  return static_cast<std::size_t>(std::count(flags_.begin(), flags_.end(), std::uint8_t{1}));
}

std::vector<PointIndex> SegmentMask::indices() const {
  std::vector<PointIndex> out;
  for (std::size_t i = 0; i < flags_.size(); ++i) {
    if (flags_[i]) out.push_back(static_cast<PointIndex>(i));
  }
  return out;
}

double iou(const SegmentMask& a, const SegmentMask& b) {
  if (a.size() != b.size()) {
    throw GeometryError("iou: mask sizes differ (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
  }
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    inter += (a[i] && b[i]) ? 1 : 0;
    uni += (a[i] || b[i]) ? 1 : 0;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

MaskDelta mask_delta(const SegmentMask& before, const SegmentMask& after) {
  if (before.size() != after.size()) throw GeometryError("mask_delta: mask sizes differ");
  MaskDelta d;
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (!before[i] && after[i]) d.added.push_back(static_cast<PointIndex>(i));
    if (before[i] && !after[i]) d.removed.push_back(static_cast<PointIndex>(i));
  }
  return d;
}

}  // namespace clickseg
