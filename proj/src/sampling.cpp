#include "clickseg/sampling.hpp"

#include <limits>
#include <numeric>

#include "clickseg/rng.hpp"

namespace clickseg {

std::vector<PointIndex> fps_subset(std::span<const Vec3> positions, std::span<const PointIndex> candidates,
                                   std::size_t n, std::uint64_t seed) {
  const std::size_t m = candidates.size();
  if (n >= m) return {candidates.begin(), candidates.end()};
  std::vector<PointIndex> picked;
  if (n == 0) return picked;
  picked.reserve(n);

  std::vector<double> min_d2(m, std::numeric_limits<double>::infinity());
  Rng rng(seed);
  std::size_t current = rng.uniform_index(m);
  for (std::size_t step = 0; step < n; ++step) {
    picked.push_back(candidates[current]);
    min_d2[current] = -1.0;
    const Vec3& c = positions[static_cast<std::size_t>(candidates[current])];
    std::size_t best = m;
    double best_d2 = -1.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (min_d2[j] < 0.0) continue;
      const double d2 = squared_distance(c, positions[static_cast<std::size_t>(candidates[j])]);
      if (d2 < min_d2[j]) min_d2[j] = d2;
      if (min_d2[j] > best_d2 ||
          (min_d2[j] == best_d2 && best < m && candidates[j] < candidates[best])) {
        best_d2 = min_d2[j];
        best = j;
      }
    }
    current = best;
  }
  return picked;
}

std::vector<PointIndex> fps_indices(std::span<const Vec3> positions, std::size_t n, std::uint64_t seed) {
  std::vector<PointIndex> all(positions.size());
  std::iota(all.begin(), all.end(), PointIndex{0});
  return fps_subset(positions, all, n, seed);
}

SampledCloud fps_sample(const PointCloud& cloud, std::size_t n, std::uint64_t seed) {
  if (cloud.empty()) throw GeometryError("fps_sample: empty cloud");
  if (n == 0) throw GeometryError("fps_sample: sample count must be at least 1");
  auto idx = fps_indices(cloud.positions(), n, seed);
  std::vector<Vec3> pos;
  std::vector<Vec3> nrm;
  pos.reserve(idx.size());
  nrm.reserve(idx.size());
  for (PointIndex i : idx) {
    pos.push_back(cloud.position(static_cast<std::size_t>(i)));
    nrm.push_back(cloud.normal(static_cast<std::size_t>(i)));
  }
  return {PointCloud(std::move(pos), std::move(nrm)), std::move(idx)};
}

}  // namespace clickseg
