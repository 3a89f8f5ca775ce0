#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <queue>
#include <string>
#include <vector>

#include <unistd.h>

#include "clickseg/geometry.hpp"
#include "clickseg/losses.hpp"
#include "clickseg/rng.hpp"
#include "clickseg/session.hpp"

namespace testing {

using namespace clickseg;

inline Vec3 random_unit(Rng& rng) {
  Vec3 v(rng.normal(), rng.normal(), rng.normal());
  while (v.norm() < 1e-6) v = Vec3(rng.normal(), rng.normal(), rng.normal());
  return v.normalized();
}

/// Uniform points in [-1,1]^3 with random unit normals.
inline PointCloud random_cloud(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec3> p(n), nrm(n);
  for (std::size_t i = 0; i < n; ++i) {
    p[i] = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    nrm[i] = random_unit(rng);
  }
  return PointCloud(std::move(p), std::move(nrm));
}

/// Integer grid points, so exact distance ties are common.
inline PointCloud grid_cloud(std::size_t n, int side, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Vec3> p(n), nrm(n, Vec3::UnitZ());
  for (auto& q : p) q = Vec3(rng.uniform_int(0, side), rng.uniform_int(0, side), rng.uniform_int(0, side));
  return PointCloud(std::move(p), std::move(nrm));
}

inline EmbeddingMatrix random_embedding(std::size_t n, int d, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  EmbeddingMatrix z(static_cast<Eigen::Index>(n), d);
  for (Eigen::Index i = 0; i < z.size(); ++i) z.data()[i] = scale * rng.normal();
  return z;
}

/// Every label in [0, k) occurs at least once.
inline std::vector<int> random_labels(std::size_t n, int k, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i < static_cast<std::size_t>(k) ? static_cast<int>(i) : rng.uniform_int(0, k - 1);
  for (std::size_t i = n; i > 1; --i) std::swap(labels[i - 1], labels[rng.uniform_index(i)]);
  return labels;
}

inline SegmentMask random_mask(std::size_t n, double density, Rng& rng) {
  SegmentMask m(n);
  for (std::size_t i = 0; i < n; ++i)
    if (rng.uniform() < density) m.set(i);
  return m;
}

/// Exhaustive neighbour list: stable sort by distance, self excluded.
inline std::vector<PointIndex> brute_knn(std::span<const Vec3> pts, std::size_t i, std::size_t k) {
  std::vector<PointIndex> idx;
  for (std::size_t j = 0; j < pts.size(); ++j)
    if (j != i) idx.push_back(static_cast<PointIndex>(j));
  std::stable_sort(idx.begin(), idx.end(), [&](PointIndex a, PointIndex b) {
    return squared_distance(pts[i], pts[a]) < squared_distance(pts[i], pts[b]);
  });
  idx.resize(std::min(k, idx.size()));
  return idx;
}

inline std::vector<std::vector<PointIndex>> brute_knn_all(std::span<const Vec3> pts, std::size_t k) {
  std::vector<std::vector<PointIndex>> out(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) out[i] = brute_knn(pts, i, k);
  return out;
}

/// BFS over the symmetric masked kNN graph from every masked positive.
inline SegmentMask brute_outlier_removal(const std::vector<std::vector<PointIndex>>& nbrs, const SegmentMask& mask,
                                         const std::vector<PointIndex>& positives, std::size_t k) {
  const std::size_t n = mask.size();
  if (positives.empty()) return mask;
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!mask[i]) continue;
    for (std::size_t t = 0; t < std::min(k, nbrs[i].size()); ++t) {
      const auto j = static_cast<std::size_t>(nbrs[i][t]);
      if (!mask[j]) continue;
      adj[i].push_back(j);
      adj[j].push_back(i);
    }
  }
  SegmentMask out(n);
  std::queue<std::size_t> q;
  for (PointIndex p : positives) {
    const auto s = static_cast<std::size_t>(p);
    if (mask[s] && !out[s]) {
      out.set(s);
      q.push(s);
    }
  }
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop();
    for (std::size_t v : adj[u])
      if (!out[v]) {
        out.set(v);
        q.push(v);
      }
  }
  return out;
}

/// Round-by-round simulation on a copy of the mask.
inline SegmentMask brute_smoothing(const std::vector<std::vector<PointIndex>>& nbrs, const SegmentMask& mask,
                                   std::size_t k, double gamma, int rounds) {
  SegmentMask cur = mask;
  for (int r = 0; r < rounds; ++r) {
    SegmentMask next = cur;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (cur[i]) continue;
      const std::size_t kk = std::min(k, nbrs[i].size());
      std::size_t c = 0;
      for (std::size_t t = 0; t < kk; ++t) c += cur[static_cast<std::size_t>(nbrs[i][t])] ? 1 : 0;
      if (kk > 0 && static_cast<double>(c) / static_cast<double>(kk) > gamma) next.set(i);
    }
    cur = next;
  }
  return cur;
}

/// Direct transcription of the annotation rule, independent of the library.
inline SegmentMask brute_annotate(const EmbeddingMatrix& z, const ClickSet& c) {
  const std::size_t n = static_cast<std::size_t>(z.rows());
  SegmentMask m(n);
  for (PointIndex p : c.positives) {
    double r = c.alpha;
    for (PointIndex q : c.negatives) r = std::min(r, (z.row(p) - z.row(q)).norm());
    for (std::size_t i = 0; i < n; ++i)
      if ((z.row(static_cast<Eigen::Index>(i)) - z.row(p)).norm() < r) m.set(i);
  }
  for (PointIndex p : c.positives) m.set(static_cast<std::size_t>(p));
  for (PointIndex q : c.negatives) m.set(static_cast<std::size_t>(q), false);
  return m;
}

inline bool subset_of(const SegmentMask& a, const SegmentMask& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] && !b[i]) return false;
  return true;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("clickseg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Brute-force evaluators written from the loss definitions, sharing no code with the library.
struct BruteLoss {
  double intra, inter, reg;
};

inline BruteLoss brute_loss(const EmbeddingMatrix& z, const std::vector<int>& labels, double eps_ctr, double eps_cte) {
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<double>> centers(static_cast<std::size_t>(k), std::vector<double>(static_cast<std::size_t>(z.cols()), 0.0));
  std::vector<int> count(static_cast<std::size_t>(k), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    ++count[static_cast<std::size_t>(labels[i])];
    for (int c = 0; c < z.cols(); ++c) centers[static_cast<std::size_t>(labels[i])][static_cast<std::size_t>(c)] += z(static_cast<Eigen::Index>(i), c);
  }
  for (int s = 0; s < k; ++s)
    for (auto& v : centers[static_cast<std::size_t>(s)]) v /= count[static_cast<std::size_t>(s)];
  auto dist = [&](auto get_a, auto get_b) {
    double acc = 0;
    for (int c = 0; c < z.cols(); ++c) acc += (get_a(c) - get_b(c)) * (get_a(c) - get_b(c));
    return std::sqrt(acc);
  };
  std::vector<double> seg_sum(static_cast<std::size_t>(k), 0.0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto& ctr = centers[static_cast<std::size_t>(labels[i])];
    const double d = dist([&](int c) { return z(static_cast<Eigen::Index>(i), c); },
                          [&](int c) { return ctr[static_cast<std::size_t>(c)]; });
    seg_sum[static_cast<std::size_t>(labels[i])] += std::max(d - eps_ctr, 0.0);
  }
  BruteLoss out{0, 0, 0};
  for (int s = 0; s < k; ++s) out.intra += seg_sum[static_cast<std::size_t>(s)] / count[static_cast<std::size_t>(s)] / k;
  if (k > 1) {
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b) {
        if (a == b) continue;
        const double d = dist([&](int c) { return centers[static_cast<std::size_t>(a)][static_cast<std::size_t>(c)]; },
                              [&](int c) { return centers[static_cast<std::size_t>(b)][static_cast<std::size_t>(c)]; });
        out.inter += std::max(eps_cte - d, 0.0) / (static_cast<double>(k) * (k - 1));
      }
  }
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double acc = 0;
    for (int c = 0; c < z.cols(); ++c) acc += z(i, c) * z(i, c);
    out.reg += std::sqrt(acc) / static_cast<double>(z.rows());
  }
  return out;
}

}  // namespace testing
