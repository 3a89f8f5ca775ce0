#include "clickseg/backend.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "clickseg/cloud_io.hpp"
#include "clickseg/rng.hpp"

namespace clickseg {

EmbeddingMatrix TrainedBackend::embed(const PointCloud& cloud) const { return net_.forward(prepare(cloud)); }

EmbeddingMatrix ImportedBackend::embed(const PointCloud& cloud) const {
  if (static_cast<std::size_t>(matrix_.rows()) != cloud.size()) {
    throw std::invalid_argument("imported embedding has " + std::to_string(matrix_.rows()) + " rows but the cloud has " +
                                std::to_string(cloud.size()) + " points");
  }
  return matrix_;
}

EmbeddingMatrix RandomBackend::embed(const PointCloud& cloud) const {
  Rng rng(mix_seed(seed_, cloud.size()));
  EmbeddingMatrix z(static_cast<Eigen::Index>(cloud.size()), dim_);
  const double sigma = 1.0 / std::sqrt(static_cast<double>(dim_));
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index j = 0; j < z.cols(); ++j) z(i, j) = sigma * rng.normal();
  }
  return z;
}

EmbeddingMatrix one_hot_embedding(std::span<const int> labels) {
  int k = 0;
  for (int l : labels) {
    if (l < 0) throw std::invalid_argument("one_hot_embedding: negative label");
    k = std::max(k, l + 1);
  }
  EmbeddingMatrix z = EmbeddingMatrix::Zero(static_cast<Eigen::Index>(labels.size()), k);
  for (std::size_t i = 0; i < labels.size(); ++i) z(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  return z;
}

std::string encode_embedding_matrix(const EmbeddingMatrix& m) {
  static_assert(std::endian::native == std::endian::little, "matrix writer assumes a little-endian host");
  std::string bytes;
  bytes.reserve(8 + static_cast<std::size_t>(m.size()) * 4);
  for (std::uint32_t v : {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())}) {
    char buf[4];
    std::memcpy(buf, &v, 4);
    bytes.append(buf, 4);
  }
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const float f = static_cast<float>(m(i, j));
      char buf[4];
      std::memcpy(buf, &f, 4);
      bytes.append(buf, 4);
    }
  }
  return bytes;
}

EmbeddingMatrix decode_embedding_matrix(std::string_view bytes) {
  if (bytes.size() < 8) throw std::invalid_argument("embedding matrix: missing header");
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::memcpy(&rows, bytes.data(), 4);
  std::memcpy(&cols, bytes.data() + 4, 4);
  const std::size_t expected = 8 + static_cast<std::size_t>(rows) * cols * 4;
  if (bytes.size() != expected) {
    throw std::invalid_argument("embedding matrix: expected " + std::to_string(expected) + " bytes, got " +
                                std::to_string(bytes.size()));
  }
  EmbeddingMatrix m(rows, cols);
  const char* p = bytes.data() + 8;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      float f = 0.0f;
      std::memcpy(&f, p, 4);
      p += 4;
      if (!std::isfinite(f)) throw std::invalid_argument("embedding matrix: non-finite entry");
      m(i, j) = f;
    }
  }
  return m;
}

void save_embedding_matrix(const std::filesystem::path& path, const EmbeddingMatrix& m) {
  write_file_atomic(path, encode_embedding_matrix(m));
}

EmbeddingMatrix load_embedding_matrix(const std::filesystem::path& path) {
  return decode_embedding_matrix(read_file(path));
}

std::shared_ptr<const EmbeddingBackend> make_backend(std::string_view spec, std::uint64_t seed) {
  if (spec == "descriptor") return std::make_shared<DescriptorBackend>();
  if (spec == "random") return std::make_shared<RandomBackend>(seed);
  if (spec.starts_with("random:")) {
    return std::make_shared<RandomBackend>(std::stoull(std::string(spec.substr(7))));
  }
  if (spec.starts_with("import:")) {
    const std::string file(spec.substr(7));
    return std::make_shared<ImportedBackend>(load_embedding_matrix(file), file);
  }
  std::string path(spec);
  if (spec.starts_with("ckpt:")) path = std::string(spec.substr(5));
  if (path.empty()) throw std::invalid_argument("empty backend specification");
  return std::make_shared<TrainedBackend>(load_checkpoint(path), "ckpt:" + path);
}

}  // namespace clickseg
