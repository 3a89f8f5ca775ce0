#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>

#include "clickseg/descriptor.hpp"
#include "clickseg/geometry.hpp"
#include "clickseg/losses.hpp"
#include "clickseg/network.hpp"

namespace clickseg {

/// Maps a normalized cloud to per-point embeddings. Implementations are
/// deterministic and safe to call concurrently.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  virtual std::string id() const = 0;
  virtual int dim() const = 0;
  virtual EmbeddingMatrix embed(const PointCloud& cloud) const = 0;
};

/// Multi-radius FPFH-style histograms used directly as embeddings.
class DescriptorBackend final : public EmbeddingBackend {
 public:
  explicit DescriptorBackend(DescriptorConfig config = {}) : config_(std::move(config)) {}
  std::string id() const override { return "descriptor"; }
  int dim() const override { return config_.dim(); }
  EmbeddingMatrix embed(const PointCloud& cloud) const override { return compute_descriptors(cloud, config_); }

 private:
  DescriptorConfig config_;
};

/// The learnable point network.
class TrainedBackend final : public EmbeddingBackend {
 public:
  explicit TrainedBackend(PointNetwork net, std::string name = "trained")
      : net_(std::move(net)), name_(std::move(name)) {}
  std::string id() const override { return name_; }
  int dim() const override { return net_.shape().output_dim; }
  EmbeddingMatrix embed(const PointCloud& cloud) const override;

  NetworkInput prepare(const PointCloud& cloud) const { return prepare_input(cloud, net_.shape().aggregate_k); }
  const PointNetwork& network() const { return net_; }

 private:
  PointNetwork net_;
  std::string name_;
};

/// A precomputed matrix, typically produced by an external model.
class ImportedBackend final : public EmbeddingBackend {
 public:
  ImportedBackend(EmbeddingMatrix matrix, std::string source)
      : matrix_(std::move(matrix)), source_(std::move(source)) {}
  std::string id() const override { return "import:" + source_; }
  int dim() const override { return static_cast<int>(matrix_.cols()); }
  /// Throws std::invalid_argument when the row count differs from the cloud size.
  EmbeddingMatrix embed(const PointCloud& cloud) const override;
  const EmbeddingMatrix& matrix() const { return matrix_; }

 private:
  EmbeddingMatrix matrix_;
  std::string source_;
};

/// I.i.d. Gaussian rows with unit expected norm; a floor for comparisons.
class RandomBackend final : public EmbeddingBackend {
 public:
  explicit RandomBackend(std::uint64_t seed, int dim = 64) : seed_(seed), dim_(dim) {}
  std::string id() const override { return "random"; }
  int dim() const override { return dim_; }
  EmbeddingMatrix embed(const PointCloud& cloud) const override;

 private:
  std::uint64_t seed_;
  int dim_;
};

/// One-hot rows of the given labels (d = K): same-label distance 0, otherwise sqrt(2).
EmbeddingMatrix one_hot_embedding(std::span<const int> labels);

/// Binary matrix file: uint32 rows, uint32 cols, then rows*cols float32
/// values in row-major order, all little-endian.
void save_embedding_matrix(const std::filesystem::path& path, const EmbeddingMatrix& m);
EmbeddingMatrix load_embedding_matrix(const std::filesystem::path& path);
std::string encode_embedding_matrix(const EmbeddingMatrix& m);
EmbeddingMatrix decode_embedding_matrix(std::string_view bytes);

/// "descriptor", "random[:seed]", "import:<file>", or a checkpoint path
/// (optionally prefixed "ckpt:").
std::shared_ptr<const EmbeddingBackend> make_backend(std::string_view spec, std::uint64_t seed = 0);

}  // namespace clickseg
