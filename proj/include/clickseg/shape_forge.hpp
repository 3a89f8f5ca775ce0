#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "clickseg/geometry.hpp"
#include "clickseg/primitives.hpp"
#include "clickseg/rng.hpp"

namespace clickseg {

/// A cloud with a partition of its points into K labelled segments.
class LabeledShape {
 public:
  LabeledShape() = default;
  /// Throws GeometryError unless labels.size() == N and every value in
  /// [0, K) occurs, with K = max label + 1.
  LabeledShape(PointCloud cloud, std::vector<int> labels);

  const PointCloud& cloud() const { return cloud_; }
  const std::vector<int>& labels() const { return labels_; }
  int segment_count() const { return k_; }
  std::size_t size() const { return cloud_.size(); }

  /// Point indices of segment s.
  std::vector<PointIndex> segment(int s) const;

  bool operator==(const LabeledShape&) const = default;

 private:
  PointCloud cloud_;
  std::vector<int> labels_;
  int k_ = 0;
};

/// Draws a randomized primitive (intrinsic parameters only; pose is applied by
/// the composer).
using PrimitiveGenerator = std::function<PrimitiveSpec(Rng&)>;

/// One generator per primitive kind, parameter ranges kept within a factor of
/// about three of each other so no segment dwarfs its neighbours:
///   plane a,b in [0.5, 1.4]; sphere r in [0.25, 0.5];
///   cylinder r in [0.15, 0.35], h in [0.5, 1.4]; cone r in [0.2, 0.5], h in [0.4, 1.2];
///   torus R in [0.3, 0.5], t in [0.1, 0.2].
std::vector<PrimitiveGenerator> default_primitive_repository();
std::vector<PrimitiveGenerator> primitive_repository(const std::vector<PrimitiveKind>& kinds);

struct ForgeConfig {
  int k_min = 3;
  int k_max = 12;
  std::size_t n_points = 4096;
  double oversample = 4.0;     ///< pooled samples per output point before FPS
  double noise_sigma = 0.0;    ///< Gaussian position noise, applied before downsampling
  std::vector<PrimitiveKind> kinds{PrimitiveKind::Plane, PrimitiveKind::Sphere, PrimitiveKind::Cylinder,
                                   PrimitiveKind::Cone, PrimitiveKind::Torus};
  int max_part_primitives = 4;  ///< benchmark parts group 1..this many adjacent primitives

  void validate() const;
  nlohmann::json to_json() const;
  static ForgeConfig from_json(const nlohmann::json& j);
  bool operator==(const ForgeConfig&) const = default;
};

struct ComposedShape {
  LabeledShape shape;
  /// Generating primitives, posed in the normalized frame of `shape`.
  std::vector<PrimitiveSpec> primitives;
};

/// Random reshuffled shape: K primitives chained so each bounding sphere
/// overlaps an earlier one, pooled, FPS-downsampled to n_points and normalized.
/// Throws GeometryError("degenerate composition") after 10 failed retries.
ComposedShape reshuffle_compose(const std::vector<PrimitiveGenerator>& repo, const ForgeConfig& config,
                                std::uint64_t seed);

/// Groups primitives into parts of 1..max_size mutually adjacent primitives.
/// Two primitives are adjacent when a point of one has a point of the other
/// among its `contact_k` nearest neighbours. Returns one part id per point.
std::vector<int> group_parts(const LabeledShape& shape, int max_size, std::uint64_t seed, std::size_t contact_k = 8);

/// Coarse complexity bucket used as the category tag of synthetic shapes.
std::string complexity_category(int segment_count);

struct DatasetEntry {
  std::string name;
  std::string category = "default";
  int segment_count = 0;
  std::string hash;
  bool has_parts = false;
};

struct DatasetSummary {
  std::size_t generated = 0;
  std::size_t skipped = 0;
  std::filesystem::path manifest;
};

/// Writes shape_NNNNN.{xyzn,labels,parts} plus manifest.json. Shapes whose
/// files already hash to the manifest entry of an identical (seed, config)
/// run are not regenerated. Per-shape seed = mix_seed(seed, index).
DatasetSummary generate_dataset(std::size_t count, const ForgeConfig& config, const std::filesystem::path& out_dir,
                                std::uint64_t seed, unsigned threads = 1);

/// Reads manifest.json when present; otherwise lists every .xyzn/.ply file
/// that has a sibling .labels file.
std::vector<DatasetEntry> list_dataset(const std::filesystem::path& dir);

struct DatasetShape {
  LabeledShape shape;
  std::vector<int> parts;  ///< per-point part id; equals the labels when no .parts file exists
  std::string category;
  std::string name;
};

DatasetShape load_dataset_shape(const std::filesystem::path& dir, const DatasetEntry& entry);

/// .xyzn/.ply plus sibling .labels; the import path for externally produced shapes.
LabeledShape load_labeled_shape(const std::filesystem::path& cloud_path);

}  // namespace clickseg
