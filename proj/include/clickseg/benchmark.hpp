#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "clickseg/backend.hpp"
#include "clickseg/shape_forge.hpp"
#include "clickseg/simulate.hpp"

namespace clickseg {

struct BenchmarkConfig {
  SimulationConfig sim;
  InteractConfig interact;
  std::size_t max_shapes = 0;  ///< 0 = all
  unsigned threads = 1;
  std::optional<std::filesystem::path> partial_path;  ///< JSONL stream used to resume

  bool operator==(const BenchmarkConfig&) const = default;
};

void to_json(nlohmann::json& j, const BenchmarkConfig& c);
void from_json(const nlohmann::json& j, BenchmarkConfig& c);

struct PartResult {
  std::string shape;
  std::string category;
  int part = 0;
  std::size_t points = 0;
  std::vector<double> ious;  ///< after each click
  bool operator==(const PartResult&) const = default;
};

struct CategoryStats {
  std::string name;
  std::size_t parts = 0;
  double miou = 0.0;  ///< mean IoU at the click budget
  double noc80 = 0.0;  ///< failures counted as cap
  double noc85 = 0.0;
  std::optional<double> noc80_success;  ///< over parts that reached the threshold
  std::optional<double> noc85_success;
  std::size_t fail80 = 0;
  std::size_t fail85 = 0;
  std::vector<double> curve;  ///< mean IoU after k = 0..cap clicks

  double failure_rate80() const { return parts ? static_cast<double>(fail80) / static_cast<double>(parts) : 0.0; }
  double failure_rate85() const { return parts ? static_cast<double>(fail85) / static_cast<double>(parts) : 0.0; }
  bool operator==(const CategoryStats&) const = default;
};

struct BenchmarkReport {
  std::string backend;
  nlohmann::json config;
  int budget = 10;
  int cap = 15;
  std::vector<CategoryStats> categories;
  CategoryStats pooled;       ///< all parts together
  double mean_miou = 0.0;     ///< mean over categories
  std::size_t skipped_shapes = 0;
  std::vector<PartResult> parts;

  bool operator==(const BenchmarkReport&) const = default;
};

void to_json(nlohmann::json& j, const CategoryStats& c);
void from_json(const nlohmann::json& j, CategoryStats& c);
void to_json(nlohmann::json& j, const PartResult& p);
void from_json(const nlohmann::json& j, PartResult& p);
void to_json(nlohmann::json& j, const BenchmarkReport& r);
void from_json(const nlohmann::json& j, BenchmarkReport& r);

/// Embeddings for one shape; defaults to backend->embed(shape.cloud()).
using ShapeEmbedder = std::function<EmbeddingMatrix(const DatasetShape&)>;

/// Simulates every part of every shape in `shapes` (loaded lazily through
/// `load`, which may throw to skip a shape).
BenchmarkReport run_benchmark(std::size_t shape_count, const std::function<DatasetShape(std::size_t)>& load,
                              std::shared_ptr<const EmbeddingBackend> backend, const BenchmarkConfig& config,
                              const ShapeEmbedder& embedder = {});

BenchmarkReport run_benchmark(const std::filesystem::path& dataset_dir,
                              std::shared_ptr<const EmbeddingBackend> backend, const BenchmarkConfig& config);

/// Per-part simulation of one shape.
std::vector<PartResult> benchmark_shape(const DatasetShape& shape, const EmbeddingMatrix& embeddings,
                                        const EmbeddingBackend* backend, const BenchmarkConfig& config,
                                        std::uint64_t shape_seed);

/// Aggregates part results into per-category and pooled statistics.
BenchmarkReport summarize(std::vector<PartResult> parts, int budget, int cap);

/// Writes `path` as JSON plus a table and an IoU-per-click CSV next to it,
/// with the extension replaced by .txt and .csv.
/// Throws std::runtime_error("empty report") without categories.
void write_report(const BenchmarkReport& report, const std::filesystem::path& path);
BenchmarkReport read_report(const std::filesystem::path& path);
std::string format_report_table(const BenchmarkReport& report);
std::string format_report_csv(const BenchmarkReport& report);

}  // namespace clickseg
