#include "clickseg/benchmark.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "clickseg/cloud_io.hpp"
#include "clickseg/parallel.hpp"
#include "clickseg/rng.hpp"

namespace clickseg {

void to_json(nlohmann::json& j, const BenchmarkConfig& c) {
  j = nlohmann::json{{"sim", c.sim}, {"interact", c.interact}, {"max_shapes", c.max_shapes}};
}

void from_json(const nlohmann::json& j, BenchmarkConfig& c) {
  if (j.contains("sim")) c.sim = j.at("sim").get<SimulationConfig>();
  if (j.contains("interact")) c.interact = j.at("interact").get<InteractConfig>();
  c.max_shapes = j.value("max_shapes", c.max_shapes);
}

namespace {

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

std::optional<double> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

void to_json(nlohmann::json& j, const CategoryStats& c) {
  j = nlohmann::json{{"name", c.name},
                     {"parts", c.parts},
                     {"miou", c.miou},
                     {"noc80", c.noc80},
                     {"noc85", c.noc85},
                     {"noc80_success", optional_json(c.noc80_success)},
                     {"noc85_success", optional_json(c.noc85_success)},
                     {"fail80", c.fail80},
                     {"fail85", c.fail85},
                     {"curve", c.curve}};
}

void from_json(const nlohmann::json& j, CategoryStats& c) {
  c.name = j.at("name").get<std::string>();
  c.parts = j.at("parts").get<std::size_t>();
  c.miou = j.at("miou").get<double>();
  c.noc80 = j.at("noc80").get<double>();
  c.noc85 = j.at("noc85").get<double>();
  c.noc80_success = optional_from(j, "noc80_success");
  c.noc85_success = optional_from(j, "noc85_success");
  c.fail80 = j.at("fail80").get<std::size_t>();
  c.fail85 = j.at("fail85").get<std::size_t>();
  c.curve = j.at("curve").get<std::vector<double>>();
}

void to_json(nlohmann::json& j, const PartResult& p) {
  j = nlohmann::json{
      {"shape", p.shape}, {"category", p.category}, {"part", p.part}, {"points", p.points}, {"ious", p.ious}};
}

void from_json(const nlohmann::json& j, PartResult& p) {
  p.shape = j.at("shape").get<std::string>();
  p.category = j.at("category").get<std::string>();
  p.part = j.at("part").get<int>();
  p.points = j.at("points").get<std::size_t>();
  p.ious = j.at("ious").get<std::vector<double>>();
}

void to_json(nlohmann::json& j, const BenchmarkReport& r) {
  j = nlohmann::json{{"backend", r.backend},     {"config", r.config},
                     {"budget", r.budget},       {"cap", r.cap},
                     {"categories", r.categories}, {"pooled", r.pooled},
                     {"mean_miou", r.mean_miou}, {"skipped_shapes", r.skipped_shapes},
                     {"parts", r.parts}};
}

void from_json(const nlohmann::json& j, BenchmarkReport& r) {
  r.backend = j.at("backend").get<std::string>();
  r.config = j.at("config");
  r.budget = j.at("budget").get<int>();
  r.cap = j.at("cap").get<int>();
  r.categories = j.at("categories").get<std::vector<CategoryStats>>();
  r.pooled = j.at("pooled").get<CategoryStats>();
  r.mean_miou = j.at("mean_miou").get<double>();
  r.skipped_shapes = j.at("skipped_shapes").get<std::size_t>();
  r.parts = j.at("parts").get<std::vector<PartResult>>();
}

std::vector<PartResult> benchmark_shape(const DatasetShape& shape, const EmbeddingMatrix& embeddings,
                                        const EmbeddingBackend* backend, const BenchmarkConfig& config,
                                        std::uint64_t shape_seed) {
  auto cloud = std::make_shared<const PointCloud>(shape.shape.cloud());
  auto z = std::make_shared<const EmbeddingMatrix>(embeddings);
  auto knn = std::make_shared<const KnnTable>(postprocess_neighbors(*cloud, config.interact.post));
  std::set<int> ids(shape.parts.begin(), shape.parts.end());
  std::vector<PartResult> out;
  for (int part : ids) {
    SegmentMask gt(cloud->size());
    for (std::size_t i = 0; i < shape.parts.size(); ++i) {
      if (shape.parts[i] == part) gt.set(i);
    }
    Session session(cloud, z, config.interact, knn);
    SimulationConfig sim = config.sim;
    sim.seed = mix_seed(shape_seed, static_cast<std::uint64_t>(part));
    const Trajectory traj = simulate_part(session, gt, sim, backend);
    out.push_back({shape.name, shape.category, part, gt.count(), traj.ious()});
  }
  return out;
}

namespace {

CategoryStats aggregate(const std::string& name, const std::vector<const PartResult*>& parts, int budget, int cap) {
  CategoryStats c;
  c.name = name;
  c.parts = parts.size();
  c.curve.assign(static_cast<std::size_t>(cap) + 1, 0.0);
  double s80 = 0.0;
  double s85 = 0.0;
  for (const PartResult* p : parts) {
    Trajectory t;
    for (double v : p->ious) t.steps.push_back({Click{}, v, 0.0, false});
    c.miou += t.iou_at(static_cast<std::size_t>(budget));
    for (int k = 0; k <= cap; ++k) c.curve[static_cast<std::size_t>(k)] += t.iou_at(static_cast<std::size_t>(k));
    if (auto n = noc(t, 80.0, cap)) {
      c.noc80 += *n;
      s80 += *n;
    } else {
      c.noc80 += cap;
      ++c.fail80;
    }
    if (auto n = noc(t, 85.0, cap)) {
      c.noc85 += *n;
      s85 += *n;
    } else {
      c.noc85 += cap;
      ++c.fail85;
    }
  }
  if (!parts.empty()) {
    const auto n = static_cast<double>(parts.size());
    c.miou /= n;
    c.noc80 /= n;
    c.noc85 /= n;
    for (double& v : c.curve) v /= n;
    if (c.fail80 < parts.size()) c.noc80_success = s80 / static_cast<double>(parts.size() - c.fail80);
    if (c.fail85 < parts.size()) c.noc85_success = s85 / static_cast<double>(parts.size() - c.fail85);
  }
  return c;
}

}  // namespace

BenchmarkReport summarize(std::vector<PartResult> parts, int budget, int cap) {
  BenchmarkReport r;
  r.budget = budget;
  r.cap = cap;
  std::map<std::string, std::vector<const PartResult*>> groups;
  std::vector<const PartResult*> all;
  for (const auto& p : parts) {
    groups[p.category].push_back(&p);
    all.push_back(&p);
  }
  for (const auto& [name, list] : groups) r.categories.push_back(aggregate(name, list, budget, cap));
  r.pooled = aggregate("all", all, budget, cap);
  for (const auto& c : r.categories) r.mean_miou += c.miou;
  if (!r.categories.empty()) r.mean_miou /= static_cast<double>(r.categories.size());
  r.parts = std::move(parts);
  return r;
}

BenchmarkReport run_benchmark(std::size_t shape_count, const std::function<DatasetShape(std::size_t)>& load,
                              std::shared_ptr<const EmbeddingBackend> backend, const BenchmarkConfig& config,
                              const ShapeEmbedder& embedder) {
  config.sim.validate();
  config.interact.validate();
  if (config.max_shapes > 0) shape_count = std::min(shape_count, config.max_shapes);
  if (shape_count == 0) throw std::invalid_argument("benchmark dataset is empty");
  const std::string backend_id = backend ? backend->id() : "custom";
  nlohmann::json config_echo = config;
  config_echo["backend"] = backend_id;
  const std::string fingerprint = hex64(fnv1a64(config_echo.dump()));

  std::vector<std::optional<std::vector<PartResult>>> results(shape_count);
  std::vector<char> skipped(shape_count, 0);
  std::unique_ptr<std::ofstream> stream;
  std::mutex stream_mutex;
  if (config.partial_path) {
    std::size_t resumed = 0;
    bool matches = false;
    if (std::ifstream in(*config.partial_path); in) {
      std::string line;
      if (std::getline(in, line)) {
        const auto header = nlohmann::json::parse(line, nullptr, false);
        matches = !header.is_discarded() && header.value("fingerprint", "") == fingerprint;
      }
      while (matches && std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) break;
        const auto i = j.at("index").get<std::size_t>();
        if (i >= shape_count) continue;
        if (j.value("skipped", false)) {
          skipped[i] = 1;
        } else {
          results[i] = j.at("parts").get<std::vector<PartResult>>();
        }
        ++resumed;
      }
    }
    if (matches) {
      spdlog::info("resuming benchmark: {} shapes already done", resumed);
      stream = std::make_unique<std::ofstream>(*config.partial_path, std::ios::app);
    } else {
      if (config.partial_path->has_parent_path()) std::filesystem::create_directories(config.partial_path->parent_path());
      stream = std::make_unique<std::ofstream>(*config.partial_path, std::ios::trunc);
      *stream << nlohmann::json{{"fingerprint", fingerprint}}.dump() << '\n' << std::flush;
    }
    if (!*stream) throw IoError("cannot write " + config.partial_path->string());
  }

  parallel_for(shape_count, config.threads, [&](std::size_t i) {
    if (results[i] || skipped[i]) return;
    nlohmann::json line{{"index", i}};
    try {
      const DatasetShape shape = load(i);
      const EmbeddingMatrix z = embedder ? embedder(shape) : backend->embed(shape.shape.cloud());
      results[i] = benchmark_shape(shape, z, backend.get(), config, mix_seed(config.sim.seed, i));
      line["parts"] = *results[i];
    } catch (const std::exception& e) {
      spdlog::warn("skipping shape {}: {}", i, e.what());
      skipped[i] = 1;
      line["skipped"] = true;
    }
    if (stream) {
      std::lock_guard lock(stream_mutex);
      *stream << line.dump() << '\n' << std::flush;
    }
  });

  std::vector<PartResult> parts;
  std::size_t skipped_count = 0;
  for (std::size_t i = 0; i < shape_count; ++i) {
    if (skipped[i]) ++skipped_count;
    if (results[i]) parts.insert(parts.end(), results[i]->begin(), results[i]->end());
  }
  BenchmarkReport report = summarize(std::move(parts), config.sim.budget, config.sim.cap);
  report.backend = backend_id;
  report.config = config_echo;
  report.skipped_shapes = skipped_count;
  return report;
}

BenchmarkReport run_benchmark(const std::filesystem::path& dataset_dir,
                              std::shared_ptr<const EmbeddingBackend> backend, const BenchmarkConfig& config) {
  const auto entries = list_dataset(dataset_dir);
  return run_benchmark(
      entries.size(), [&](std::size_t i) { return load_dataset_shape(dataset_dir, entries[i]); }, std::move(backend),
      config);
}

namespace {

std::string noc_cell(const CategoryStats& c, double value, std::size_t failures) {
  if (c.parts == 0 || failures == c.parts) return "-";
  return fmt::format("{:.1f}", value);
}

}  // namespace

std::string format_report_table(const BenchmarkReport& report) {
  if (report.categories.empty()) throw std::runtime_error("empty report");
  std::ostringstream out;
  out << fmt::format("backend: {}\n", report.backend);
  out << fmt::format("{:<12}", "");
  for (const auto& c : report.categories) out << fmt::format("{:>10}", c.name.substr(0, 10));
  out << fmt::format("{:>10}\n", "Mean");
  out << fmt::format("{:<12}", fmt::format("mIoU@{}", report.budget));
  for (const auto& c : report.categories) out << fmt::format("{:>10.1f}", 100.0 * c.miou);
  out << fmt::format("{:>10.1f}\n", 100.0 * report.mean_miou);
  auto noc_row = [&](const char* label, auto value, auto failures) {
    out << fmt::format("{:<12}", label);
    double sum = 0.0;
    bool all_failed = true;
    for (const auto& c : report.categories) {
      out << fmt::format("{:>10}", noc_cell(c, value(c), failures(c)));
      sum += value(c);
      all_failed = all_failed && failures(c) == c.parts;
    }
    out << fmt::format("{:>10}\n", all_failed ? "-" : fmt::format("{:.1f}", sum / report.categories.size()));
  };
  noc_row("NoC@80", [](const CategoryStats& c) { return c.noc80; }, [](const CategoryStats& c) { return c.fail80; });
  noc_row("NoC@85", [](const CategoryStats& c) { return c.noc85; }, [](const CategoryStats& c) { return c.fail85; });
  out << fmt::format("{:<12}", "parts");
  for (const auto& c : report.categories) out << fmt::format("{:>10}", c.parts);
  out << fmt::format("{:>10}\n", report.pooled.parts);
  if (report.skipped_shapes > 0) out << fmt::format("skipped shapes: {}\n", report.skipped_shapes);
  return out.str();
}

std::string format_report_csv(const BenchmarkReport& report) {
  if (report.categories.empty()) throw std::runtime_error("empty report");
  std::string out = "category,clicks,mean_iou\n";
  for (const auto& c : report.categories) {
    for (std::size_t k = 0; k < c.curve.size(); ++k) out += fmt::format("{},{},{}\n", c.name, k, c.curve[k]);
  }
  return out;
}

void write_report(const BenchmarkReport& report, const std::filesystem::path& path) {
  if (report.categories.empty()) throw std::runtime_error("empty report");
  const std::string table = format_report_table(report);
  const std::string csv = format_report_csv(report);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  write_file_atomic(path, nlohmann::json(report).dump(2) + "\n");
  auto sibling = path;
  write_file_atomic(sibling.replace_extension(".txt"), table);
  write_file_atomic(sibling.replace_extension(".csv"), csv);
}

BenchmarkReport read_report(const std::filesystem::path& path) {
  return nlohmann::json::parse(read_file(path)).get<BenchmarkReport>();
}

}  // namespace clickseg
