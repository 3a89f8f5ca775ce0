#include "clickseg/service.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstring>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "clickseg/cloud_io.hpp"
#include "clickseg/finetune.hpp"

namespace clickseg {

void FifoMutex::lock() {
  std::unique_lock lk(m_);
  const std::uint64_t ticket = next_++;
  cv_.wait(lk, [&] { return serving_ == ticket; });
}

void FifoMutex::unlock() {
  {
    std::lock_guard lk(m_);
    ++serving_;
  }
  cv_.notify_all();
}

namespace {

ServiceResponse error(int status, std::string message) {
  ServiceResponse r;
  r.status = status;
  r.body = {{"error", std::move(message)}};
  return r;
}

ServiceResponse ok(nlohmann::json body, int status = 200) {
  ServiceResponse r;
  r.status = status;
  r.body = std::move(body);
  return r;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  return fmt::format("{:%Y-%m-%dT%H:%M:%S}.{:03d}Z", fmt::gmtime(std::chrono::system_clock::to_time_t(now)), ms);
}

bool valid_id(const std::string& id) {
  return !id.empty() && id.size() <= 64 &&
         std::all_of(id.begin(), id.end(), [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '-'; });
}

std::vector<PointIndex> index_list(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_array()) throw std::invalid_argument(std::string("'") + key + "' must be an array");
  return j.at(key).get<std::vector<PointIndex>>();
}

}  // namespace

AnnotatorService::AnnotatorService(ServiceConfig config) : config_(std::move(config)) {
  config_.app.sync();
  config_.app.validate();
  std::filesystem::create_directories(config_.data_dir / "shapes");
  std::filesystem::create_directories(config_.data_dir / "annotations");
  std::filesystem::create_directories(config_.data_dir / "models");
}

std::filesystem::path AnnotatorService::shape_path(const std::string& shape_id) const {
  return config_.data_dir / "shapes" / (shape_id + ".xyzn");
}

std::filesystem::path AnnotatorService::annotation_dir(const std::string& shape_id) const {
  return config_.data_dir / "annotations" / shape_id;
}

ServiceResponse AnnotatorService::health() const { return ok({{"status", "ok"}}); }

ServiceResponse AnnotatorService::upload_shape(std::string_view body) {
  PointCloud cloud;
  try {
    cloud = parse_cloud(body);
  } catch (const ParseError& e) {
    auto r = error(422, e.what());
    r.body["line"] = e.line();
    return r;
  } catch (const std::exception& e) {
    return error(422, e.what());
  }
  if (cloud.size() > config_.max_points) {
    return error(413, fmt::format("{} points exceed the limit of {}", cloud.size(), config_.max_points));
  }
  try {
    cloud = normalize_cloud(cloud);
  } catch (const GeometryError& e) {
    return error(422, e.what());
  }
  const std::string id = hex64(fnv1a64(body));
  {
    std::lock_guard lock(registry_mutex_);
    if (!std::filesystem::exists(shape_path(id))) save_cloud(shape_path(id), cloud);
  }
  return ok({{"id", id}, {"points", cloud.size()}}, 201);
}

std::shared_ptr<AnnotatorService::ShapeEntry> AnnotatorService::find_shape(const std::string& shape_id) {
  if (!valid_id(shape_id)) return nullptr;
  std::lock_guard lock(registry_mutex_);
  if (auto it = shapes_.find(shape_id); it != shapes_.end()) return it->second;
  const auto path = shape_path(shape_id);
  if (!std::filesystem::exists(path)) return nullptr;
  auto entry = std::make_shared<ShapeEntry>();
  entry->id = shape_id;
  entry->cloud = std::make_shared<const PointCloud>(load_cloud(path));
  entry->knn = std::make_shared<const KnnTable>(postprocess_neighbors(*entry->cloud, config_.app.interact.post));
  shapes_[shape_id] = entry;
  return entry;
}

std::shared_ptr<AnnotatorService::SessionEntry> AnnotatorService::find_session(const std::string& session_id) {
  std::lock_guard lock(registry_mutex_);
  auto it = sessions_.find(session_id);
  return it == sessions_.end() ? nullptr : it->second;
}

std::shared_ptr<const EmbeddingBackend> AnnotatorService::backend(const std::string& spec) {
  std::lock_guard lock(registry_mutex_);
  if (auto it = backends_.find(spec); it != backends_.end()) return it->second;
  std::shared_ptr<const EmbeddingBackend> b;
  if (spec == "descriptor" || spec == "random" || spec.starts_with("random:")) {
    b = make_backend(spec, config_.app.seed);
  } else if (spec.starts_with("ckpt:")) {
    const std::string name = spec.substr(5);
    if (!valid_id(name)) throw std::invalid_argument("invalid model name '" + name + "'");
    b = make_backend("ckpt:" + (config_.data_dir / "models" / (name + ".ckpt")).string());
  } else {
    throw std::invalid_argument("unknown backend '" + spec + "'");
  }
  backends_[spec] = b;
  return b;
}

std::shared_ptr<const EmbeddingMatrix> AnnotatorService::embeddings(ShapeEntry& shape, const std::string& spec) {
  auto b = backend(spec);
  std::lock_guard lock(shape.mutex);
  if (auto it = shape.embeddings.find(spec); it != shape.embeddings.end()) return it->second;
  auto z = std::make_shared<const EmbeddingMatrix>(b->embed(*shape.cloud));
  shape.embeddings[spec] = z;
  return z;
}

ServiceResponse AnnotatorService::get_shape(const std::string& shape_id) {
  auto shape = find_shape(shape_id);
  if (!shape) return error(404, "unknown shape " + shape_id);
  static_assert(std::endian::native == std::endian::little, "binary cloud writer assumes a little-endian host");
  ServiceResponse r;
  r.content_type = "application/octet-stream";
  const auto n = static_cast<std::uint32_t>(shape->cloud->size());
  r.raw.resize(4 + static_cast<std::size_t>(n) * 24);
  std::memcpy(r.raw.data(), &n, 4);
  char* p = r.raw.data() + 4;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& x = shape->cloud->position(i);
    const Vec3& nn = shape->cloud->normal(i);
    const float v[6] = {static_cast<float>(x.x()),  static_cast<float>(x.y()),  static_cast<float>(x.z()),
                        static_cast<float>(nn.x()), static_cast<float>(nn.y()), static_cast<float>(nn.z())};
    std::memcpy(p, v, sizeof v);
    p += sizeof v;
  }
  return r;
}

ServiceResponse AnnotatorService::get_shape_meta(const std::string& shape_id) {
  auto shape = find_shape(shape_id);
  if (!shape) return error(404, "unknown shape " + shape_id);
  return ok({{"id", shape_id}, {"points", shape->cloud->size()}, {"annotations", load_records(shape_id).size()}});
}

ServiceResponse AnnotatorService::create_session(const nlohmann::json& request) {
  if (!request.is_object() || !request.contains("shape_id")) return error(400, "'shape_id' is required");
  const std::string shape_id = request.at("shape_id").get<std::string>();
  auto shape = find_shape(shape_id);
  if (!shape) return error(404, "unknown shape " + shape_id);
  const std::string spec = request.value("backend", config_.default_backend);
  auto entry = std::make_shared<SessionEntry>();
  try {
    entry->backend = backend(spec);
    entry->base_embeddings = embeddings(*shape, spec);
    if (request.contains("ground_truth")) {
      const auto gt = index_list(request, "ground_truth");
      for (PointIndex i : gt) {
        if (i < 0 || static_cast<std::size_t>(i) >= shape->cloud->size()) {
          throw std::invalid_argument("ground truth index out of range");
        }
      }
      entry->ground_truth = SegmentMask::from_indices(shape->cloud->size(), gt);
    }
  } catch (const std::exception& e) {
    return error(422, e.what());
  }
  entry->shape = shape;
  entry->backend_spec = spec;
  entry->session = std::make_unique<Session>(shape->cloud, entry->base_embeddings, config_.app.interact, shape->knn);
  {
    std::lock_guard lock(registry_mutex_);
    entry->id = fmt::format("s{:06d}-{}", ++session_counter_, shape_id.substr(0, 8));
    sessions_[entry->id] = entry;
  }
  return ok({{"id", entry->id}, {"shape_id", shape_id}, {"backend", spec}, {"points", shape->cloud->size()}}, 201);
}

nlohmann::json AnnotatorService::delta_json(const SessionEntry& s, const SegmentMask& before) const {
  const MaskDelta d = mask_delta(before, s.session->mask());
  nlohmann::json j{{"added", d.added},
                   {"removed", d.removed},
                   {"mask_size", s.session->mask().count()},
                   {"positives", s.session->clicks().positives.size()},
                   {"negatives", s.session->clicks().negatives.size()}};
  if (s.ground_truth) j["iou"] = iou(s.session->mask(), *s.ground_truth);
  return j;
}

ServiceResponse AnnotatorService::session_op(const std::string& session_id, const nlohmann::json& request) {
  auto s = find_session(session_id);
  if (!s) return error(404, "unknown session " + session_id);
  if (!request.is_object() || !request.contains("op") || !request.at("op").is_string()) {
    return error(409, "'op' is required");
  }
  const std::string op = request.at("op").get<std::string>();
  std::lock_guard lock(s->fifo);
  const SegmentMask before = s->session->mask();
  nlohmann::json extra = nlohmann::json::object();
  try {
    bool negative_added = false;
    if (op == "add") {
      const ClickKind kind = click_kind_from_string(request.value("kind", std::string("positive")));
      if (!request.contains("index")) throw std::invalid_argument("'index' is required");
      s->session->add_click(kind, request.at("index").get<PointIndex>());
      negative_added = kind == ClickKind::Negative;
    } else if (op == "remove") {
      if (!request.contains("index")) throw std::invalid_argument("'index' is required");
      s->session->remove_click(request.at("index").get<PointIndex>());
    } else if (op == "scribble") {
      const auto indices = index_list(request, "indices");
      const std::size_t added = s->session->add_scribble(indices);
      extra["scribbled"] = added;
      negative_added = added > 0;
    } else if (op == "undo") {
      if (!s->session->undo()) throw std::invalid_argument("nothing to undo");
    } else if (op == "finetune") {
      FinetuneOptions opt = config_.app.finetune;
      opt.steps = request.value("steps", opt.steps);
      const FinetuneResult r = finetune(*s->session, s->backend.get(), opt);
      extra["energy_before"] = r.energy_before;
      extra["energy_after"] = r.energy_after;
      extra["accepted_steps"] = r.accepted_steps;
    } else {
      return error(409, "unknown op '" + op + "'");
    }
    if (negative_added && config_.app.finetune.auto_on_negative && !s->session->clicks().positives.empty()) {
      const FinetuneResult r = finetune(*s->session, s->backend.get(), config_.app.finetune);
      extra["energy_after"] = r.energy_after;
    }
  } catch (const std::exception& e) {
    return error(409, e.what());
  }
  nlohmann::json body = delta_json(*s, before);
  body.update(extra);
  return ok(std::move(body));
}

ServiceResponse AnnotatorService::get_mask(const std::string& session_id) {
  auto s = find_session(session_id);
  if (!s) return error(404, "unknown session " + session_id);
  std::lock_guard lock(s->fifo);
  nlohmann::json body{{"indices", s->session->mask().indices()},
                      {"clicks", click_script_json(s->session->click_history())},
                      {"radii", s->session->radii()}};
  if (s->ground_truth) body["iou"] = iou(s->session->mask(), *s->ground_truth);
  return ok(std::move(body));
}

ServiceResponse AnnotatorService::finetune_session(const std::string& session_id, const nlohmann::json& request) {
  nlohmann::json op = request.is_object() ? request : nlohmann::json::object();
  op["op"] = "finetune";
  return session_op(session_id, op);
}

ServiceResponse AnnotatorService::commit(const std::string& session_id, const nlohmann::json& request) {
  auto s = find_session(session_id);
  if (!s) return error(404, "unknown session " + session_id);
  const std::string label = request.is_object() ? request.value("label", std::string()) : std::string();
  std::lock_guard lock(s->fifo);
  if (s->session->mask().none()) return error(409, "cannot commit an empty mask");
  nlohmann::json record;
  {
    std::lock_guard commit_lock(commit_mutex_);
    const auto dir = annotation_dir(s->shape->id);
    std::filesystem::create_directories(dir);
    const std::size_t label_id = load_records(s->shape->id).size();
    const std::string record_id = fmt::format("{}-{:04d}", s->shape->id, label_id);
    record = {{"id", record_id},
              {"shape_id", s->shape->id},
              {"label", label},
              {"label_id", label_id},
              {"indices", s->session->mask().indices()},
              {"clicks", click_script_json(s->session->click_history())},
              {"backend", s->backend->id()},
              {"committed_at", timestamp()}};
    write_file_atomic(dir / fmt::format("{:04d}.json", label_id), record.dump(2) + "\n");
  }
  s->session->reset(s->base_embeddings);
  return ok(record, 201);
}

std::vector<nlohmann::json> AnnotatorService::load_records(const std::string& shape_id) const {
  std::vector<nlohmann::json> out;
  const auto dir = annotation_dir(shape_id);
  if (!std::filesystem::exists(dir)) return out;
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) out.push_back(nlohmann::json::parse(read_file(f)));
  return out;
}

ServiceResponse AnnotatorService::list_annotations(const std::string& shape_id) {
  if (!find_shape(shape_id)) return error(404, "unknown shape " + shape_id);
  return ok({{"shape_id", shape_id}, {"annotations", load_records(shape_id)}});
}

ServiceResponse AnnotatorService::export_labels(const std::string& shape_id) {
  auto shape = find_shape(shape_id);
  if (!shape) return error(404, "unknown shape " + shape_id);
  std::vector<int> labels(shape->cloud->size(), -1);
  for (const auto& rec : load_records(shape_id)) {
    const int id = rec.at("label_id").get<int>();
    for (PointIndex i : rec.at("indices").get<std::vector<PointIndex>>()) labels[static_cast<std::size_t>(i)] = id;
  }
  ServiceResponse r;
  r.content_type = "text/plain";
  r.raw = format_labels(labels);
  return r;
}

}  // namespace clickseg
