#pragma once

#include <span>

#include <json.hpp>

#include "clickseg/geometry.hpp"
#include "clickseg/neighbor_index.hpp"

namespace clickseg {

struct PostProcessConfig {
  bool outlier_removal = true;
  bool smoothing = true;
  int n_neighbor = 3;
  int n_smooth = 32;
  double gamma = 0.7;
  int n_iter = 5;

  void validate() const;
  bool operator==(const PostProcessConfig&) const = default;
};

void to_json(nlohmann::json& j, const PostProcessConfig& c);
void from_json(const nlohmann::json& j, PostProcessConfig& c);

/// Keeps the masked points whose component in the masked kNN graph holds a
/// positive click. Edges join each masked point to its masked points among
/// its `n_neighbor` nearest neighbours, in either direction.
/// `knn` must hold at least `n_neighbor` neighbours per point (or N-1).
SegmentMask outlier_removal(const KnnTable& knn, const SegmentMask& mask, std::span<const PointIndex> positives,
                            int n_neighbor);
SegmentMask outlier_removal(const PointCloud& cloud, const SegmentMask& mask, std::span<const PointIndex> positives,
                            int n_neighbor);

/// Up to `n_iter` synchronous rounds: an unmasked point joins when more than
/// `gamma` of its `n_smooth` nearest neighbours are masked at round start.
/// Stops early once a round adds nothing.
SegmentMask segment_smoothing(const KnnTable& knn, const SegmentMask& mask, int n_smooth, double gamma, int n_iter);
SegmentMask segment_smoothing(const PointCloud& cloud, const SegmentMask& mask, int n_smooth, double gamma,
                              int n_iter);

/// Neighbour table sized for both passes of one cloud.
KnnTable postprocess_neighbors(const PointCloud& cloud, const PostProcessConfig& config);

/// Outlier removal then smoothing, as enabled in `config`.
SegmentMask postprocess(const KnnTable& knn, const SegmentMask& mask, std::span<const PointIndex> positives,
                        const PostProcessConfig& config);

}  // namespace clickseg
