#pragma once

#include <array>
#include <vector>

#include "clickseg/geometry.hpp"
#include "clickseg/losses.hpp"
#include "clickseg/neighbor_index.hpp"

namespace clickseg {

/// Multi-radius fast point feature histograms.
///
/// For each radius, every point gets a simplified histogram (SPFH) of the
/// Darboux-frame angles (alpha, phi, theta) to its neighbours within the
/// radius, with soft (linear) binning so small perturbations move the
/// histogram continuously. The FPFH of a point is its SPFH plus the
/// inverse-distance weighted mean of its neighbours' SPFHs. Each radius block
/// is L2-normalized, then the concatenation is scaled to unit norm.
struct DescriptorConfig {
  std::vector<double> radii{0.05, 0.1, 0.2};
  int bins = 5;                   ///< per angle, three angles per radius
  std::size_t max_neighbors = 32; ///< nearest points kept inside each radius

  int dim() const { return static_cast<int>(radii.size()) * 3 * bins; }
};

/// Darboux-frame pair features of target (pt, nt) seen from source (ps, ns).
/// Descriptors bin both orderings of every pair.
/// Returns {alpha, phi, theta}; alpha and phi lie in [-1, 1], theta in [-pi, pi].
std::array<double, 3> pair_features(const Vec3& ps, const Vec3& ns, const Vec3& pt, const Vec3& nt);

EmbeddingMatrix compute_descriptors(const PointCloud& cloud, const NeighborIndex& index,
                                    const DescriptorConfig& config = {});
EmbeddingMatrix compute_descriptors(const PointCloud& cloud, const DescriptorConfig& config = {});

}  // namespace clickseg
