#include "clickseg/descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Geometry>

namespace clickseg {

std::array<double, 3> pair_features(const Vec3& ps, const Vec3& ns, const Vec3& pt, const Vec3& nt) {
  Vec3 dp = pt - ps;
  const double dist = dp.norm();
  if (dist <= 0.0) return {0.0, 0.0, 0.0};
  dp /= dist;
  const Vec3 v_raw = dp.cross(ns);
  const double v_norm = v_raw.norm();
  if (v_norm <= 1e-12) return {0.0, ns.dot(dp), 0.0};
  const Vec3 v = v_raw / v_norm;
  const Vec3 w = ns.cross(v);
  return {v.dot(nt), ns.dot(dp), std::atan2(w.dot(nt), ns.dot(nt))};
}

namespace {

void soft_bin(double value, double lo, double hi, int bins, double weight, double* hist) {
  double t = (value - lo) / (hi - lo) * (bins - 1);
  t = std::clamp(t, 0.0, static_cast<double>(bins - 1));
  const int i = std::min(static_cast<int>(t), bins - 2);
  const double frac = t - i;
  hist[i] += (1.0 - frac) * weight;
  hist[i + 1] += frac * weight;
}

}  // namespace

EmbeddingMatrix compute_descriptors(const PointCloud& cloud, const NeighborIndex& index,
                                    const DescriptorConfig& config) {
  const auto n = static_cast<Eigen::Index>(cloud.size());
  const int block = 3 * config.bins;
  EmbeddingMatrix out = EmbeddingMatrix::Zero(n, config.dim());
  constexpr double pi = std::numbers::pi;

  for (std::size_t r = 0; r < config.radii.size(); ++r) {
    const double radius = config.radii[r];
    std::vector<std::vector<PointIndex>> neighbors(cloud.size());
    EmbeddingMatrix spfh = EmbeddingMatrix::Zero(n, block);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      neighbors[i] = index.radius_query(i, radius, config.max_neighbors);
      if (neighbors[i].empty()) continue;
      double* h = spfh.row(static_cast<Eigen::Index>(i)).data();
      // Both pair orderings at half weight: symmetric without an ordering rule.
      const double weight = 0.5 / static_cast<double>(neighbors[i].size());
      for (PointIndex j : neighbors[i]) {
        const auto ju = static_cast<std::size_t>(j);
        for (int order = 0; order < 2; ++order) {
          const auto f = order == 0
                             ? pair_features(cloud.position(i), cloud.normal(i), cloud.position(ju), cloud.normal(ju))
                             : pair_features(cloud.position(ju), cloud.normal(ju), cloud.position(i), cloud.normal(i));
          soft_bin(f[0], -1.0, 1.0, config.bins, weight, h);
          soft_bin(f[1], -1.0, 1.0, config.bins, weight, h + config.bins);
          soft_bin(f[2], -pi, pi, config.bins, weight, h + 2 * config.bins);
        }
      }
    }
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      Eigen::RowVectorXd f = spfh.row(static_cast<Eigen::Index>(i));
      if (!neighbors[i].empty()) {
        Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(block);
        for (PointIndex j : neighbors[i]) {
          const double d = (cloud.position(i) - cloud.position(static_cast<std::size_t>(j))).norm();
          acc += spfh.row(j) / std::max(d, 1e-9);
        }
        f += acc / static_cast<double>(neighbors[i].size());
      }
      const double norm = f.norm();
      if (norm > 0.0) f /= norm;
      out.block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r) * block, 1, block) = f;
    }
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = out.row(i).norm();
    if (norm > 0.0) out.row(i) /= norm;
  }
  return out;
}

EmbeddingMatrix compute_descriptors(const PointCloud& cloud, const DescriptorConfig& config) {
  const NeighborIndex index(cloud);
  return compute_descriptors(cloud, index, config);
}

}  // namespace clickseg
