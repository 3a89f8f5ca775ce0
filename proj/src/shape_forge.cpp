#include "clickseg/shape_forge.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <set>

#include <spdlog/spdlog.h>

#include "clickseg/cloud_io.hpp"
#include "clickseg/neighbor_index.hpp"
#include "clickseg/parallel.hpp"
#include "clickseg/sampling.hpp"

namespace clickseg {

LabeledShape::LabeledShape(PointCloud cloud, std::vector<int> labels)
    : cloud_(std::move(cloud)), labels_(std::move(labels)) {
  if (labels_.size() != cloud_.size()) {
    throw GeometryError("labels length " + std::to_string(labels_.size()) + " does not match point count " +
                        std::to_string(cloud_.size()));
  }
  int max_label = -1;
  for (int l : labels_) {
    if (l < 0) throw GeometryError("negative segment label " + std::to_string(l));
    max_label = std::max(max_label, l);
  }
  k_ = max_label + 1;
  std::vector<char> seen(static_cast<std::size_t>(k_), 0);
  for (int l : labels_) seen[static_cast<std::size_t>(l)] = 1;
  for (int s = 0; s < k_; ++s) {
    if (!seen[static_cast<std::size_t>(s)]) throw GeometryError("segment " + std::to_string(s) + " is empty");
  }
}

std::vector<PointIndex> LabeledShape::segment(int s) const {
  std::vector<PointIndex> out;
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == s) out.push_back(static_cast<PointIndex>(i));
  }
  return out;
}

namespace {

PrimitiveGenerator generator_for(PrimitiveKind kind) {
  return [kind](Rng& rng) {
    PrimitiveSpec s;
    s.kind = kind;
    switch (kind) {
      case PrimitiveKind::Plane:
        s.a = rng.uniform(0.5, 1.4);
        s.b = rng.uniform(0.5, 1.4);
        break;
      case PrimitiveKind::Sphere:
        s.a = rng.uniform(0.25, 0.5);
        s.b = s.a;
        break;
      case PrimitiveKind::Cylinder:
        s.a = rng.uniform(0.15, 0.35);
        s.b = rng.uniform(0.5, 1.4);
        break;
      case PrimitiveKind::Cone:
        s.a = rng.uniform(0.2, 0.5);
        s.b = rng.uniform(0.4, 1.2);
        break;
      case PrimitiveKind::Torus:
        s.a = rng.uniform(0.3, 0.5);
        s.b = rng.uniform(0.1, 0.2);
        break;
    }
    return s;
  };
}

Eigen::Quaterniond random_rotation(Rng& rng) {
  const double u1 = rng.uniform();
  const double u2 = rng.uniform();
  const double u3 = rng.uniform();
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Eigen::Quaterniond q(std::sqrt(u1) * std::cos(two_pi * u3), std::sqrt(1.0 - u1) * std::sin(two_pi * u2),
                       std::sqrt(1.0 - u1) * std::cos(two_pi * u2), std::sqrt(u1) * std::sin(two_pi * u3));
  q.normalize();
  return q;
}

Vec3 random_direction(Rng& rng) {
  for (;;) {
    Vec3 v(rng.normal(), rng.normal(), rng.normal());
    const double n = v.norm();
    if (n > 1e-9) return v / n;
  }
}

std::optional<ComposedShape> compose_once(const std::vector<PrimitiveGenerator>& repo, const ForgeConfig& config,
                                          std::uint64_t seed) {
  Rng rng(seed);
  const int k = rng.uniform_int(config.k_min, config.k_max);
  std::vector<PrimitiveSpec> specs;
  specs.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) {
    PrimitiveSpec spec = repo[rng.uniform_index(repo.size())](rng);
    spec.pose.rotation = random_rotation(rng);
    spec.pose.scale = 1.0;
    if (i > 0) {
      const auto& anchor = specs[rng.uniform_index(specs.size())];
      const double reach = anchor.world_bounding_radius() + spec.world_bounding_radius();
      spec.pose.translation = anchor.pose.translation + random_direction(rng) * rng.uniform(0.25, 0.85) * reach;
    }
    spec.validate();
    specs.push_back(spec);
  }

  double total_area = 0.0;
  for (const auto& s : specs) total_area += s.local_area() * s.pose.scale * s.pose.scale;
  const double pool = config.oversample * static_cast<double>(config.n_points);

  std::vector<Vec3> pos;
  std::vector<Vec3> nrm;
  std::vector<int> labels;
  for (int i = 0; i < k; ++i) {
    const auto& s = specs[static_cast<std::size_t>(i)];
    const double share = s.local_area() * s.pose.scale * s.pose.scale / total_area;
    const auto n = std::max<std::size_t>(32, static_cast<std::size_t>(std::lround(pool * share)));
    const PointPatch patch = sample_primitive(s, n, mix_seed(seed, 1000 + static_cast<std::uint64_t>(i)));
    pos.insert(pos.end(), patch.positions.begin(), patch.positions.end());
    nrm.insert(nrm.end(), patch.normals.begin(), patch.normals.end());
    labels.insert(labels.end(), n, i);
  }
  if (config.noise_sigma > 0.0) {
    Rng noise(mix_seed(seed, 77));
    for (Vec3& p : pos) p += config.noise_sigma * Vec3(noise.normal(), noise.normal(), noise.normal());
  }

  const auto picked = fps_indices(pos, config.n_points, mix_seed(seed, 99));
  std::vector<Vec3> out_pos;
  std::vector<Vec3> out_nrm;
  std::vector<int> out_labels;
  std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
  for (PointIndex j : picked) {
    const auto u = static_cast<std::size_t>(j);
    out_pos.push_back(pos[u]);
    out_nrm.push_back(nrm[u]);
    out_labels.push_back(labels[u]);
    ++counts[static_cast<std::size_t>(labels[u])];
  }
  for (std::size_t c : counts) {
    if (c < 16) return std::nullopt;
  }

  const PointCloud raw(std::move(out_pos), std::move(out_nrm));
  const NormalizeTransform t = normalize_transform(raw);
  for (auto& s : specs) {
    s.pose.translation = (s.pose.translation - t.center) * t.scale;
    s.pose.scale *= t.scale;
  }
  return ComposedShape{LabeledShape(apply_transform(raw, t), std::move(out_labels)), std::move(specs)};
}

}  // namespace

std::vector<PrimitiveGenerator> primitive_repository(const std::vector<PrimitiveKind>& kinds) {
  std::vector<PrimitiveGenerator> repo;
  for (auto k : kinds) repo.push_back(generator_for(k));
  return repo;
}

std::vector<PrimitiveGenerator> default_primitive_repository() {
  return primitive_repository(ForgeConfig{}.kinds);
}

void ForgeConfig::validate() const {
  if (k_min < 2) throw GeometryError("k_min must be at least 2");
  if (k_max < k_min) throw GeometryError("k_max must not be below k_min");
  if (n_points < static_cast<std::size_t>(k_max) * 32) throw GeometryError("n_points must be at least 32 * k_max");
  if (!(oversample >= 1.0)) throw GeometryError("oversample must be at least 1");
  if (!(noise_sigma >= 0.0)) throw GeometryError("noise_sigma must be non-negative");
  if (kinds.empty()) throw GeometryError("no primitive kinds enabled");
  if (max_part_primitives < 1) throw GeometryError("max_part_primitives must be at least 1");
}

nlohmann::json ForgeConfig::to_json() const {
  nlohmann::json kinds_json = nlohmann::json::array();
  for (auto k : kinds) kinds_json.push_back(std::string(to_string(k)));
  return {{"k_min", k_min},           {"k_max", k_max},
          {"n_points", n_points},     {"oversample", oversample},
          {"noise_sigma", noise_sigma}, {"kinds", kinds_json},
          {"max_part_primitives", max_part_primitives}};
}

ForgeConfig ForgeConfig::from_json(const nlohmann::json& j) {
  ForgeConfig c;
  c.k_min = j.value("k_min", c.k_min);
  c.k_max = j.value("k_max", c.k_max);
  c.n_points = j.value("n_points", c.n_points);
  c.oversample = j.value("oversample", c.oversample);
  c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
  c.max_part_primitives = j.value("max_part_primitives", c.max_part_primitives);
  if (j.contains("kinds")) {
    c.kinds.clear();
    for (const auto& k : j.at("kinds")) c.kinds.push_back(primitive_kind_from_string(k.get<std::string>()));
  }
  return c;
}

ComposedShape reshuffle_compose(const std::vector<PrimitiveGenerator>& repo, const ForgeConfig& config,
                                std::uint64_t seed) {
  config.validate();
  if (repo.empty()) throw GeometryError("empty primitive repository");
  for (std::uint64_t attempt = 0; attempt <= 10; ++attempt) {
    if (auto shape = compose_once(repo, config, mix_seed(seed, attempt))) return std::move(*shape);
  }
  throw GeometryError("degenerate composition");
}

std::vector<int> group_parts(const LabeledShape& shape, int max_size, std::uint64_t seed, std::size_t contact_k) {
  const int k = shape.segment_count();
  const auto& labels = shape.labels();
  std::vector<std::set<int>> adj(static_cast<std::size_t>(k));
  const NeighborIndex index(shape.cloud());
  const KnnTable table(index, contact_k);
  for (std::size_t i = 0; i < shape.size(); ++i) {
    for (PointIndex j : table.neighbors(i)) {
      const int a = labels[i];
      const int b = labels[static_cast<std::size_t>(j)];
      if (a != b) {
        adj[static_cast<std::size_t>(a)].insert(b);
        adj[static_cast<std::size_t>(b)].insert(a);
      }
    }
  }

  Rng rng(seed);
  std::vector<int> order(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) order[static_cast<std::size_t>(i)] = i;
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);

  std::vector<int> part_of(static_cast<std::size_t>(k), -1);
  int next_part = 0;
  for (int seed_prim : order) {
    if (part_of[static_cast<std::size_t>(seed_prim)] >= 0) continue;
    const int target = rng.uniform_int(1, std::max(1, max_size));
    std::vector<int> members{seed_prim};
    part_of[static_cast<std::size_t>(seed_prim)] = next_part;
    while (static_cast<int>(members.size()) < target) {
      std::vector<int> frontier;
      for (int m : members) {
        for (int nb : adj[static_cast<std::size_t>(m)]) {
          if (part_of[static_cast<std::size_t>(nb)] < 0 &&
              std::find(frontier.begin(), frontier.end(), nb) == frontier.end()) {
            frontier.push_back(nb);
          }
        }
      }
      if (frontier.empty()) break;
      std::sort(frontier.begin(), frontier.end());
      const int pick = frontier[rng.uniform_index(frontier.size())];
      part_of[static_cast<std::size_t>(pick)] = next_part;
      members.push_back(pick);
    }
    ++next_part;
  }
  std::vector<int> parts(shape.size());
  for (std::size_t i = 0; i < shape.size(); ++i) parts[i] = part_of[static_cast<std::size_t>(labels[i])];
  return parts;
}

std::string complexity_category(int segment_count) {
  if (segment_count <= 5) return "simple";
  if (segment_count <= 8) return "moderate";
  return "complex";
}

namespace {

std::string shape_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "shape_%05zu", i);
  return buf;
}

std::string shape_hash(const std::filesystem::path& dir, const std::string& name, bool parts) {
  std::string bytes = read_file(dir / (name + ".xyzn"));
  bytes += read_file(dir / (name + ".labels"));
  if (parts) bytes += read_file(dir / (name + ".parts"));
  return hex64(fnv1a64(bytes));
}

}  // namespace

DatasetSummary generate_dataset(std::size_t count, const ForgeConfig& config, const std::filesystem::path& out_dir,
                                std::uint64_t seed, unsigned threads) {
  config.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  const auto manifest_path = out_dir / "manifest.json";
  std::map<std::string, std::string> previous;
  if (std::filesystem::exists(manifest_path)) {
    try {
      const auto old = nlohmann::json::parse(read_file(manifest_path));
      if (old.value("seed", std::uint64_t{0}) == seed && ForgeConfig::from_json(old.at("config")) == config) {
        for (const auto& e : old.at("shapes")) previous[e.at("name")] = e.at("hash");
      }
    } catch (const std::exception& e) {
      spdlog::warn("ignoring unreadable manifest {}: {}", manifest_path.string(), e.what());
    }
  }

  const auto repo = primitive_repository(config.kinds);
  std::vector<DatasetEntry> entries(count);
  std::vector<char> skipped(count, 0);
  parallel_for(count, threads, [&](std::size_t i) {
    DatasetEntry& e = entries[i];
    e.name = shape_name(i);
    e.has_parts = true;
    const auto it = previous.find(e.name);
    if (it != previous.end()) {
      try {
        if (shape_hash(out_dir, e.name, true) == it->second) {
          const auto labels = load_labels(out_dir / (e.name + ".labels"));
          e.segment_count = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
          e.category = complexity_category(e.segment_count);
          e.hash = it->second;
          skipped[i] = 1;
          return;
        }
      } catch (const IoError&) {
        // Missing or unreadable file: regenerate.
      }
    }
    const std::uint64_t shape_seed = mix_seed(seed, i);
    const ComposedShape composed = reshuffle_compose(repo, config, shape_seed);
    const auto parts = group_parts(composed.shape, config.max_part_primitives, mix_seed(shape_seed, 0xA11CE));
    save_cloud(out_dir / (e.name + ".xyzn"), composed.shape.cloud());
    save_labels(out_dir / (e.name + ".labels"), composed.shape.labels());
    save_labels(out_dir / (e.name + ".parts"), parts);
    e.segment_count = composed.shape.segment_count();
    e.category = complexity_category(e.segment_count);
    e.hash = shape_hash(out_dir, e.name, true);
  });

  nlohmann::json manifest;
  manifest["format"] = "clickseg-dataset";
  manifest["version"] = 1;
  manifest["seed"] = seed;
  manifest["config"] = config.to_json();
  manifest["shapes"] = nlohmann::json::array();
  for (const auto& e : entries) {
    manifest["shapes"].push_back(
        {{"name", e.name}, {"K", e.segment_count}, {"category", e.category}, {"hash", e.hash}, {"parts", true}});
  }
  const std::string text = manifest.dump(2) + "\n";
  bool unchanged = false;
  if (std::filesystem::exists(manifest_path)) {
    try {
      unchanged = read_file(manifest_path) == text;
    } catch (const IoError&) {
    }
  }
  if (!unchanged) write_file_atomic(manifest_path, text);

  DatasetSummary summary;
  summary.manifest = manifest_path;
  for (char s : skipped) (s ? summary.skipped : summary.generated)++;
  return summary;
}

std::vector<DatasetEntry> list_dataset(const std::filesystem::path& dir) {
  std::vector<DatasetEntry> entries;
  const auto manifest_path = dir / "manifest.json";
  if (std::filesystem::exists(manifest_path)) {
    const auto manifest = nlohmann::json::parse(read_file(manifest_path));
    for (const auto& e : manifest.at("shapes")) {
      DatasetEntry d;
      d.name = e.at("name").get<std::string>();
      d.category = e.value("category", std::string("default"));
      d.segment_count = e.value("K", 0);
      d.hash = e.value("hash", std::string());
      d.has_parts = e.value("parts", false);
      entries.push_back(std::move(d));
    }
    return entries;
  }
  if (!std::filesystem::is_directory(dir)) throw IoError("dataset directory not found: " + dir.string());
  for (const auto& f : std::filesystem::directory_iterator(dir)) {
    const auto ext = f.path().extension();
    if (ext != ".xyzn" && ext != ".ply") continue;
    auto labels = f.path();
    labels.replace_extension(".labels");
    if (!std::filesystem::exists(labels)) continue;
    DatasetEntry d;
    d.name = f.path().stem().string();
    auto parts = f.path();
    parts.replace_extension(".parts");
    d.has_parts = std::filesystem::exists(parts);
    entries.push_back(std::move(d));
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
  return entries;
}

LabeledShape load_labeled_shape(const std::filesystem::path& cloud_path) {
  auto labels_path = cloud_path;
  labels_path.replace_extension(".labels");
  return LabeledShape(load_cloud(cloud_path), load_labels(labels_path));
}

DatasetShape load_dataset_shape(const std::filesystem::path& dir, const DatasetEntry& entry) {
  auto cloud_path = dir / (entry.name + ".xyzn");
  if (!std::filesystem::exists(cloud_path)) cloud_path = dir / (entry.name + ".ply");
  DatasetShape out;
  out.shape = load_labeled_shape(cloud_path);
  out.name = entry.name;
  out.category = entry.category;
  const auto parts_path = dir / (entry.name + ".parts");
  if (std::filesystem::exists(parts_path)) {
    out.parts = load_labels(parts_path);
    if (out.parts.size() != out.shape.size()) throw GeometryError(entry.name + ": .parts length mismatch");
  } else {
    out.parts = out.shape.labels();
  }
  return out;
}

}  // namespace clickseg
