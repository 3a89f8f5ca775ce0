#include "clickseg/neighbor_index.hpp"

#include <algorithm>
#include <numeric>
#include <string>

namespace clickseg {

NeighborIndex::NeighborIndex(std::span<const Vec3> positions, std::size_t leaf_size)
    : points_(positions.begin(), positions.end()), order_(positions.size()), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
  std::iota(order_.begin(), order_.end(), PointIndex{0});
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / leaf_size_ + 1);
    build(0, points_.size());
  }
}

int NeighborIndex::build(std::size_t begin, std::size_t end) {
  Node node;
  node.begin = begin;
  node.end = end;
  node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  node.hi = Vec3::Constant(-std::numeric_limits<double>::infinity());
  for (std::size_t i = begin; i < end; ++i) {
    node.lo = node.lo.cwiseMin(points_[order_[i]]);
    node.hi = node.hi.cwiseMax(points_[order_[i]]);
  }
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  if (end - begin <= leaf_size_) return id;

  Eigen::Index axis = 0;
  (node.hi - node.lo).maxCoeff(&axis);
  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](PointIndex a, PointIndex b) {
                     const double va = points_[a][axis];
                     const double vb = points_[b][axis];
                     return va < vb || (va == vb && a < b);
                   });
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

namespace {

double box_distance2(const Vec3& q, const Vec3& lo, const Vec3& hi) {
  double d2 = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double d = q[a] < lo[a] ? lo[a] - q[a] : (q[a] > hi[a] ? q[a] - hi[a] : 0.0);
    d2 += d * d;
  }
  return d2;
}

}  // namespace

void NeighborIndex::search(int node_id, const Vec3& q, std::size_t k, double max_dist2, PointIndex exclude,
                           std::vector<Candidate>& heap) const {
  const Node& node = nodes_[node_id];
  const double bound = heap.size() == k ? heap.front().dist2 : max_dist2;
  // Equal distance may still hide a lower-index tie, so prune only on strict excess.
  if (box_distance2(q, node.lo, node.hi) > bound) return;

  if (node.left < 0) {
    for (std::size_t i = node.begin; i < node.end; ++i) {
      const PointIndex j = order_[i];
      if (j == exclude) continue;
      const Candidate c{squared_distance(q, points_[j]), j};
      if (c.dist2 > max_dist2) continue;
      if (heap.size() < k) {
        heap.push_back(c);
        std::push_heap(heap.begin(), heap.end());
      } else if (c < heap.front()) {
        std::pop_heap(heap.begin(), heap.end());
        heap.back() = c;
        std::push_heap(heap.begin(), heap.end());
      }
    }
    return;
  }
  const Node& l = nodes_[node.left];
  const Node& r = nodes_[node.right];
  const bool left_first = box_distance2(q, l.lo, l.hi) <= box_distance2(q, r.lo, r.hi);
  search(left_first ? node.left : node.right, q, k, max_dist2, exclude, heap);
  search(left_first ? node.right : node.left, q, k, max_dist2, exclude, heap);
}

std::vector<PointIndex> NeighborIndex::query(const Vec3& q, std::size_t k, double max_dist2,
                                             PointIndex exclude) const {
  std::vector<PointIndex> out;
  if (k == 0 || nodes_.empty()) return out;
  std::vector<Candidate> heap;
  heap.reserve(std::min(k, points_.size()));
  search(0, q, k, max_dist2, exclude, heap);
  std::sort_heap(heap.begin(), heap.end());
  out.reserve(heap.size());
  for (const Candidate& c : heap) out.push_back(c.index);
  return out;
}

std::vector<PointIndex> NeighborIndex::knn_query(std::size_t i, std::size_t k) const {
  if (i >= points_.size()) {
    throw std::out_of_range("knn_query: point index " + std::to_string(i) + " out of range [0, " +
                            std::to_string(points_.size()) + ")");
  }
  k = std::min(k, points_.size() - 1);
  return query(points_[i], k, std::numeric_limits<double>::infinity(), static_cast<PointIndex>(i));
}

std::vector<PointIndex> NeighborIndex::knn_point(const Vec3& q, std::size_t k) const {
  return query(q, std::min(k, points_.size()), std::numeric_limits<double>::infinity(), -1);
}

std::vector<PointIndex> NeighborIndex::radius_query(std::size_t i, double radius, std::size_t max_count) const {
  if (i >= points_.size()) {
    throw std::out_of_range("radius_query: point index " + std::to_string(i) + " out of range");
  }
  const std::size_t k = std::min(max_count, points_.size() - 1);
  return query(points_[i], k, radius * radius, static_cast<PointIndex>(i));
}

KnnTable::KnnTable(const NeighborIndex& index, std::size_t k)
    : n_(index.size()), k_(index.size() > 0 ? std::min(k, index.size() - 1) : 0) {
  data_.resize(n_ * k_);
  for (std::size_t i = 0; i < n_; ++i) {
    const auto nb = index.knn_query(i, k_);
    std::copy(nb.begin(), nb.end(), data_.begin() + static_cast<std::ptrdiff_t>(i * k_));
  }
}

}  // namespace clickseg
