#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "clickseg/geometry.hpp"

namespace clickseg {

/// k-d tree over point positions. Neighbors come back sorted by ascending
/// distance, ties broken by ascending point index, so results match an
/// exhaustive stable sort exactly.
class NeighborIndex {
 public:
  explicit NeighborIndex(std::span<const Vec3> positions, std::size_t leaf_size = 12);
  explicit NeighborIndex(const PointCloud& cloud) : NeighborIndex(cloud.positions()) {}

  std::size_t size() const { return points_.size(); }

  /// min(k, N-1) nearest neighbors of point i, excluding i itself.
  /// Throws std::out_of_range when i is not a valid index.
  std::vector<PointIndex> knn_query(std::size_t i, std::size_t k) const;

  /// k nearest points to an arbitrary location (no exclusion).
  std::vector<PointIndex> knn_point(const Vec3& query, std::size_t k) const;

  /// Points within `radius` of point i (excluding i), nearest first, at most
  /// `max_count` of them.
  std::vector<PointIndex> radius_query(std::size_t i, double radius,
                                       std::size_t max_count = std::numeric_limits<std::size_t>::max()) const;

 private:
  struct Node {
    Vec3 lo;
    Vec3 hi;
    std::size_t begin = 0;
    std::size_t end = 0;
    int left = -1;
    int right = -1;
  };
  struct Candidate {
    double dist2;
    PointIndex index;
    bool operator<(const Candidate& o) const {
      return dist2 < o.dist2 || (dist2 == o.dist2 && index < o.index);
    }
  };

  int build(std::size_t begin, std::size_t end);
  void search(int node, const Vec3& q, std::size_t k, double max_dist2, PointIndex exclude,
              std::vector<Candidate>& heap) const;
  std::vector<PointIndex> query(const Vec3& q, std::size_t k, double max_dist2, PointIndex exclude) const;

  std::vector<Vec3> points_;
  std::vector<PointIndex> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_;
};

/// Dense table of the first k neighbors of every point (k clipped to N-1).
class KnnTable {
 public:
  KnnTable() = default;
  KnnTable(const NeighborIndex& index, std::size_t k);

  std::size_t size() const { return n_; }
  std::size_t k() const { return k_; }
  std::span<const PointIndex> neighbors(std::size_t i) const { return {data_.data() + i * k_, k_}; }
  /// First `k` neighbors of point i; k must not exceed k().
  std::span<const PointIndex> neighbors(std::size_t i, std::size_t k) const {
    return {data_.data() + i * k_, k};
  }

 private:
  std::size_t n_ = 0;
  std::size_t k_ = 0;
  std::vector<PointIndex> data_;
};

}  // namespace clickseg
