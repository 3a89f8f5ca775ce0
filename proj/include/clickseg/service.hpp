#pragma once

#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "clickseg/backend.hpp"
#include "clickseg/config.hpp"
#include "clickseg/session.hpp"

namespace clickseg {

struct ServiceConfig {
  std::filesystem::path data_dir = "clickseg-data";
  std::size_t max_points = 200000;
  std::string default_backend = "descriptor";
  AppConfig app;
};

struct ServiceResponse {
  int status = 200;
  nlohmann::json body;
  std::string content_type = "application/json";
  std::string raw;  ///< used instead of `body` for non-JSON payloads

  std::string payload() const { return raw.empty() && content_type == "application/json" ? body.dump() : raw; }
};

/// Mutations on one session are served in arrival order.
class FifoMutex {
 public:
  void lock();
  void unlock();

 private:
  std::mutex m_;
  std::condition_variable cv_;
  std::uint64_t next_ = 0;
  std::uint64_t serving_ = 0;
};

/// Request handling behind the HTTP routes, independent of the transport.
/// Shapes and committed annotations live under data_dir; sessions are in memory.
class AnnotatorService {
 public:
  explicit AnnotatorService(ServiceConfig config);

  ServiceResponse health() const;
  /// POST /shapes: body is .xyzn or ASCII PLY text.
  ServiceResponse upload_shape(std::string_view body);
  /// GET /shapes/{id}: uint32 N, then N records of six float32 (position, normal), little-endian.
  ServiceResponse get_shape(const std::string& shape_id);
  ServiceResponse get_shape_meta(const std::string& shape_id);
  /// POST /sessions {shape_id, backend?, ground_truth?: [indices]}
  ServiceResponse create_session(const nlohmann::json& request);
  /// POST /sessions/{id}/ops {op: add|remove|scribble|undo|finetune, kind?, index?, indices?, steps?}
  ServiceResponse session_op(const std::string& session_id, const nlohmann::json& request);
  ServiceResponse get_mask(const std::string& session_id);
  /// POST /sessions/{id}/finetune {steps?}
  ServiceResponse finetune_session(const std::string& session_id, const nlohmann::json& request);
  /// POST /sessions/{id}/commit {label}
  ServiceResponse commit(const std::string& session_id, const nlohmann::json& request);
  /// GET /shapes/{id}/annotations
  ServiceResponse list_annotations(const std::string& shape_id);
  /// GET /shapes/{id}/labels: one label per point, committed parts numbered in
  /// commit order (later parts win on overlap), -1 elsewhere.
  ServiceResponse export_labels(const std::string& shape_id);

  const ServiceConfig& config() const { return config_; }

 private:
  struct ShapeEntry {
    std::string id;
    std::shared_ptr<const PointCloud> cloud;
    std::shared_ptr<const KnnTable> knn;
    std::map<std::string, std::shared_ptr<const EmbeddingMatrix>> embeddings;
    std::mutex mutex;
  };
  struct SessionEntry {
    std::string id;
    std::shared_ptr<ShapeEntry> shape;
    std::string backend_spec;
    std::shared_ptr<const EmbeddingBackend> backend;
    std::shared_ptr<const EmbeddingMatrix> base_embeddings;
    std::optional<SegmentMask> ground_truth;
    std::unique_ptr<Session> session;
    FifoMutex fifo;
  };

  std::shared_ptr<ShapeEntry> find_shape(const std::string& shape_id);
  std::shared_ptr<SessionEntry> find_session(const std::string& session_id);
  std::shared_ptr<const EmbeddingBackend> backend(const std::string& spec);
  std::shared_ptr<const EmbeddingMatrix> embeddings(ShapeEntry& shape, const std::string& spec);
  nlohmann::json delta_json(const SessionEntry& s, const SegmentMask& before) const;
  std::vector<nlohmann::json> load_records(const std::string& shape_id) const;
  std::filesystem::path shape_path(const std::string& shape_id) const;
  std::filesystem::path annotation_dir(const std::string& shape_id) const;

  ServiceConfig config_;
  std::mutex registry_mutex_;
  std::map<std::string, std::shared_ptr<ShapeEntry>> shapes_;
  std::map<std::string, std::shared_ptr<SessionEntry>> sessions_;
  std::map<std::string, std::shared_ptr<const EmbeddingBackend>> backends_;
  std::mutex commit_mutex_;
  std::uint64_t session_counter_ = 0;
};

/// HTTP+JSON routes over an AnnotatorService.
class HttpFrontend {
 public:
  explicit HttpFrontend(AnnotatorService& service);
  ~HttpFrontend();
  HttpFrontend(const HttpFrontend&) = delete;
  HttpFrontend& operator=(const HttpFrontend&) = delete;

  /// Port 0 picks a free port. Returns the bound port; throws on failure.
  int bind(const std::string& host, int port);
  /// Serves until stop() is called.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Blocks serving HTTP on host:port.
void serve_http(AnnotatorService& service, const std::string& host, int port);

}  // namespace clickseg
