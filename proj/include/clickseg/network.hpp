#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "clickseg/descriptor.hpp"
#include "clickseg/geometry.hpp"
#include "clickseg/losses.hpp"
#include "clickseg/neighbor_index.hpp"

namespace clickseg {

struct NetworkShape {
  int input_dim = 6 + DescriptorConfig{}.dim();
  int hidden = 64;
  int output_dim = 64;
  int aggregate_k = 16;  ///< neighbours averaged with the point itself

  std::size_t parameter_count() const;
  bool operator==(const NetworkShape&) const = default;
};

/// Per-cloud network input: point features and the aggregation neighbourhoods.
struct NetworkInput {
  EmbeddingMatrix features;  ///< N x input_dim: position, normal, descriptor
  KnnTable neighbors;        ///< aggregate_k neighbours of each point

  std::size_t size() const { return static_cast<std::size_t>(features.rows()); }
};

NetworkInput prepare_input(const PointCloud& cloud, int aggregate_k, const DescriptorConfig& descriptor = {});

/// Activations kept from a forward pass for backpropagation.
struct ForwardCache {
  EmbeddingMatrix pre1, act1, cat1, pre2, act2, cat2;
};

/// Activations of a forward pass restricted to the receptive field of a
/// few output rows: s1 feeds layer one, s2 layer two, rows the output.
struct RowsCache {
  std::vector<PointIndex> rows, s1, s2;
  std::vector<int> local1, local2;  ///< point index -> position in s1 / s2, or -1
  EmbeddingMatrix x1, pre1, act1, cat1, pre2, act2, cat2;
};

/// Three pointwise layers; after each hidden layer the activations are
/// concatenated with their mean over the point's neighbourhood:
///
///   a1 = relu(x W1 + b1),  h1 = [a1, mean_nbr(a1)]
///   a2 = relu(h1 W2 + b2), h2 = [a2, mean_nbr(a2)]
///   z  = h2 W3 + b3
///
/// Parameters live in one flat vector (W1, b1, W2, b2, W3, b3; weights
/// row-major) so optimizers and checkpoints treat them uniformly.
class PointNetwork {
 public:
  PointNetwork() = default;
  explicit PointNetwork(NetworkShape shape);

  const NetworkShape& shape() const { return shape_; }
  const Eigen::VectorXd& parameters() const { return params_; }
  Eigen::VectorXd& parameters() { return params_; }
  void set_parameters(const Eigen::VectorXd& p);

  /// He-style Gaussian initialization, biases zero.
  void initialize(std::uint64_t seed);

  EmbeddingMatrix forward(const NetworkInput& input, ForwardCache* cache = nullptr) const;

  /// Gradient of a scalar loss w.r.t. the parameters, given dLoss/dz.
  Eigen::VectorXd backward(const NetworkInput& input, const ForwardCache& cache, const EmbeddingMatrix& grad_z) const;

  /// Output rows `rows` only, touching just their two-hop neighbourhood.
  /// Equal to the matching rows of forward().
  EmbeddingMatrix forward_rows(const NetworkInput& input, std::span<const PointIndex> rows, RowsCache* cache) const;

  /// Parameter gradient given dLoss/dz for the rows of a forward_rows pass.
  Eigen::VectorXd backward_rows(const NetworkInput& input, const RowsCache& cache,
                                const EmbeddingMatrix& grad_rows) const;

  bool operator==(const PointNetwork& o) const { return shape_ == o.shape_ && params_ == o.params_; }

 private:
  NetworkShape shape_;
  Eigen::VectorXd params_;
};

/// Binary checkpoint: "CSEGNET1" magic, uint32 version, uint32 input_dim,
/// hidden, output_dim, aggregate_k, uint64 parameter count, then float64
/// parameters, all little-endian.
void save_checkpoint(const std::filesystem::path& path, const PointNetwork& net);
PointNetwork load_checkpoint(const std::filesystem::path& path);

}  // namespace clickseg
