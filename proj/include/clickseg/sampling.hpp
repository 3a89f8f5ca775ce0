#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "clickseg/geometry.hpp"

namespace clickseg {

/// Farthest point sampling over `positions`. The first pick is a seeded
/// uniform draw; each later pick maximizes the distance to the chosen set
/// (ties to the lowest index). Returns all indices when n >= positions.size().
std::vector<PointIndex> fps_indices(std::span<const Vec3> positions, std::size_t n, std::uint64_t seed);

/// FPS restricted to the subset `candidates` of `positions`; returns a subset
/// of `candidates` in pick order.
std::vector<PointIndex> fps_subset(std::span<const Vec3> positions, std::span<const PointIndex> candidates,
                                   std::size_t n, std::uint64_t seed);

struct SampledCloud {
  PointCloud cloud;
  std::vector<PointIndex> source_index;  ///< source_index[k] = index into the input cloud
};

SampledCloud fps_sample(const PointCloud& cloud, std::size_t n, std::uint64_t seed);

}  // namespace clickseg
