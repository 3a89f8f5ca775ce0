#include "clickseg/postprocess.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

namespace clickseg {

void PostProcessConfig::validate() const {
  if (n_neighbor < 1) throw std::invalid_argument("n_neighbor must be at least 1");
  if (n_smooth < 1) throw std::invalid_argument("n_smooth must be at least 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
  if (n_iter < 0) throw std::invalid_argument("n_iter must be non-negative");
}

void to_json(nlohmann::json& j, const PostProcessConfig& c) {
  j = nlohmann::json{{"outlier_removal", c.outlier_removal},
                     {"smoothing", c.smoothing},
                     {"n_neighbor", c.n_neighbor},
                     {"n_smooth", c.n_smooth},
                     {"gamma", c.gamma},
                     {"n_iter", c.n_iter}};
}

void from_json(const nlohmann::json& j, PostProcessConfig& c) {
  c.outlier_removal = j.value("outlier_removal", c.outlier_removal);
  c.smoothing = j.value("smoothing", c.smoothing);
  c.n_neighbor = j.value("n_neighbor", c.n_neighbor);
  c.n_smooth = j.value("n_smooth", c.n_smooth);
  c.gamma = j.value("gamma", c.gamma);
  c.n_iter = j.value("n_iter", c.n_iter);
}

namespace {

std::size_t clamp_k(const KnnTable& knn, int k) {
  return std::min(knn.k(), static_cast<std::size_t>(std::max(k, 0)));
}

void check_sizes(const KnnTable& knn, const SegmentMask& mask) {
  if (knn.size() != mask.size()) throw std::invalid_argument("mask length differs from the neighbour table");
}

PointIndex find_root(std::vector<PointIndex>& parent, PointIndex x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

}  // namespace

SegmentMask outlier_removal(const KnnTable& knn, const SegmentMask& mask, std::span<const PointIndex> positives,
                            int n_neighbor) {
  check_sizes(knn, mask);
  if (positives.empty()) {
    spdlog::warn("outlier removal without positive clicks; mask left unchanged");
    return mask;
  }
  const std::size_t k = clamp_k(knn, n_neighbor);
  const std::size_t n = mask.size();
  std::vector<PointIndex> parent(n);
  std::iota(parent.begin(), parent.end(), PointIndex{0});
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    for (PointIndex j : knn.neighbors(i, k)) {
      if (!mask[static_cast<std::size_t>(j)]) continue;
      const PointIndex a = find_root(parent, static_cast<PointIndex>(i));
      const PointIndex b = find_root(parent, j);
      if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
  }
  std::vector<char> keep_root(n, 0);
  for (PointIndex p : positives) {
    if (p < 0 || static_cast<std::size_t>(p) >= n) throw std::out_of_range("positive click out of range");
    if (mask[static_cast<std::size_t>(p)]) keep_root[static_cast<std::size_t>(find_root(parent, p))] = 1;
  }
  SegmentMask out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i] && keep_root[static_cast<std::size_t>(find_root(parent, static_cast<PointIndex>(i)))]) out.set(i);
  }
  return out;
}

SegmentMask outlier_removal(const PointCloud& cloud, const SegmentMask& mask, std::span<const PointIndex> positives,
                            int n_neighbor) {
  const KnnTable knn(NeighborIndex(cloud), static_cast<std::size_t>(std::max(n_neighbor, 1)));
  return outlier_removal(knn, mask, positives, n_neighbor);
}

SegmentMask segment_smoothing(const KnnTable& knn, const SegmentMask& mask, int n_smooth, double gamma, int n_iter) {
  check_sizes(knn, mask);
  if (!(gamma > 0.0 && gamma <= 1.0)) throw std::invalid_argument("gamma must lie in (0, 1]");
  const std::size_t k = clamp_k(knn, n_smooth);
  if (k == 0) return mask;
  SegmentMask current = mask;
  std::vector<std::size_t> additions;
  for (int round = 0; round < n_iter; ++round) {
    additions.clear();
    for (std::size_t i = 0; i < current.size(); ++i) {
      if (current[i]) continue;
      std::size_t flagged = 0;
      for (PointIndex j : knn.neighbors(i, k)) flagged += current[static_cast<std::size_t>(j)] ? 1 : 0;
      if (static_cast<double>(flagged) / static_cast<double>(k) > gamma) additions.push_back(i);
    }
    if (additions.empty()) break;
    for (std::size_t i : additions) current.set(i);
  }
  return current;
}

SegmentMask segment_smoothing(const PointCloud& cloud, const SegmentMask& mask, int n_smooth, double gamma,
                              int n_iter) {
  const KnnTable knn(NeighborIndex(cloud), static_cast<std::size_t>(std::max(n_smooth, 1)));
  return segment_smoothing(knn, mask, n_smooth, gamma, n_iter);
}

KnnTable postprocess_neighbors(const PointCloud& cloud, const PostProcessConfig& config) {
  config.validate();
  return KnnTable(NeighborIndex(cloud), static_cast<std::size_t>(std::max(config.n_neighbor, config.n_smooth)));
}

SegmentMask postprocess(const KnnTable& knn, const SegmentMask& mask, std::span<const PointIndex> positives,
                        const PostProcessConfig& config) {
  SegmentMask out = mask;
  if (config.outlier_removal && !positives.empty()) out = outlier_removal(knn, out, positives, config.n_neighbor);
  if (config.smoothing) out = segment_smoothing(knn, out, config.n_smooth, config.gamma, config.n_iter);
  return out;
}

}  // namespace clickseg
