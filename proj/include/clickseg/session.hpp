#pragma once

#include <cstddef>
#include <deque>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "clickseg/geometry.hpp"
#include "clickseg/losses.hpp"
#include "clickseg/network.hpp"
#include "clickseg/postprocess.hpp"

namespace clickseg {

enum class ClickKind { Positive, Negative };

std::string to_string(ClickKind kind);
ClickKind click_kind_from_string(std::string_view s);

struct Click {
  ClickKind kind = ClickKind::Positive;
  PointIndex index = 0;
  bool operator==(const Click&) const = default;
};

struct ClickSet {
  std::vector<PointIndex> positives;
  std::vector<PointIndex> negatives;
  double alpha = 0.35;

  bool contains(PointIndex i) const;
  bool operator==(const ClickSet&) const = default;
};

/// Per-positive radius min(alpha, distance to the nearest negative in embedding space).
std::vector<double> positive_radii(const EmbeddingMatrix& z, const ClickSet& clicks);

/// Points within some positive's radius (strictly), plus every positive click
/// point, minus every negative click point. Computed from scratch.
SegmentMask annotate(const EmbeddingMatrix& z, const ClickSet& clicks);

struct InteractConfig {
  double alpha = 0.35;
  PostProcessConfig post;
  std::size_t history_depth = 64;

  void validate() const;
  bool operator==(const InteractConfig&) const = default;
};

void to_json(nlohmann::json& j, const InteractConfig& c);
void from_json(const nlohmann::json& j, InteractConfig& c);

/// Raw annotation through post-processing, with negative clicks excluded again at the end.
SegmentMask refine_mask(const KnnTable& knn, const SegmentMask& raw, const ClickSet& clicks,
                        const PostProcessConfig& config);

/// Interactive annotation state for one part of one shape. Every mutation
/// either succeeds fully or throws and leaves the session untouched.
class Session {
 public:
  Session(std::shared_ptr<const PointCloud> cloud, std::shared_ptr<const EmbeddingMatrix> embeddings,
          InteractConfig config = {}, std::shared_ptr<const KnnTable> neighbors = nullptr);

  const PointCloud& cloud() const { return *cloud_; }
  std::shared_ptr<const PointCloud> cloud_ptr() const { return cloud_; }
  const EmbeddingMatrix& embeddings() const { return *state_.embeddings; }
  std::shared_ptr<const EmbeddingMatrix> embeddings_ptr() const { return state_.embeddings; }
  std::shared_ptr<const KnnTable> neighbors_ptr() const { return knn_; }
  const InteractConfig& config() const { return config_; }
  const ClickSet& clicks() const { return state_.clicks; }
  const std::vector<Click>& click_history() const { return state_.history; }
  /// Post-processed mask.
  const SegmentMask& mask() const { return state_.mask; }
  /// Annotation before post-processing.
  const SegmentMask& raw_mask() const { return state_.raw; }
  std::size_t size() const { return cloud_->size(); }

  double positive_radius(std::size_t t) const;
  std::vector<double> radii() const;

  /// Throws std::out_of_range or std::invalid_argument (duplicate click).
  void add_click(ClickKind kind, PointIndex index);
  /// Removes the click at `index`; throws std::invalid_argument if none.
  void remove_click(PointIndex index);
  /// Appends the new indices as negatives with a single recomputation and
  /// a single undo entry. Returns how many were added.
  std::size_t add_scribble(std::span<const PointIndex> indices);
  /// Replaces the embeddings (after fine-tuning); one undo entry.
  void replace_embeddings(std::shared_ptr<const EmbeddingMatrix> embeddings,
                          std::shared_ptr<const PointNetwork> tuned = nullptr);
  /// Clears clicks and any tuned embeddings; one undo entry.
  void reset(std::shared_ptr<const EmbeddingMatrix> embeddings);
  /// Mask the session would have after adding the click; the session is not modified.
  SegmentMask preview(ClickKind kind, PointIndex index) const;
  /// Returns false when there is nothing to undo.
  bool undo();
  std::size_t undo_depth() const { return undo_.size(); }

  /// Network parameters adjusted by fine-tuning in this session, if any.
  std::shared_ptr<const PointNetwork> tuned_network() const { return state_.tuned; }
  /// Cached network input for parameter fine-tuning.
  std::shared_ptr<const NetworkInput> network_input() const { return net_input_; }
  void set_network_input(std::shared_ptr<const NetworkInput> input) { net_input_ = std::move(input); }

  /// Clicks, embeddings, masks and radii all equal.
  bool same_state(const Session& other) const;

 private:
  using Column = std::shared_ptr<const std::vector<double>>;
  struct State {
    ClickSet clicks;
    std::vector<Click> history;
    std::shared_ptr<const EmbeddingMatrix> embeddings;
    std::shared_ptr<const PointNetwork> tuned;
    std::vector<Column> columns;  ///< distances from each positive to every point
    SegmentMask raw;
    SegmentMask mask;
  };

  Column distance_column(const EmbeddingMatrix& z, PointIndex p) const;
  void recompute(State& s) const;
  void check_index(PointIndex index) const;
  void commit(State next);

  std::shared_ptr<const PointCloud> cloud_;
  std::shared_ptr<const KnnTable> knn_;
  std::shared_ptr<const NetworkInput> net_input_;
  InteractConfig config_;
  State state_;
  std::deque<State> undo_;
};

/// Click script: JSON array of {"kind": "positive"|"negative", "index": i}.
std::vector<Click> parse_click_script(const nlohmann::json& j);
nlohmann::json click_script_json(const std::vector<Click>& clicks);

}  // namespace clickseg
