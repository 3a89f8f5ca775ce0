#include "clickseg/session.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace clickseg {

std::string to_string(ClickKind kind) { return kind == ClickKind::Positive ? "positive" : "negative"; }

ClickKind click_kind_from_string(std::string_view s) {
  if (s == "positive" || s == "pos") return ClickKind::Positive;
  if (s == "negative" || s == "neg") return ClickKind::Negative;
  throw std::invalid_argument("unknown click kind '" + std::string(s) + "'");
}

bool ClickSet::contains(PointIndex i) const {
  return std::find(positives.begin(), positives.end(), i) != positives.end() ||
         std::find(negatives.begin(), negatives.end(), i) != negatives.end();
}

std::vector<double> positive_radii(const EmbeddingMatrix& z, const ClickSet& clicks) {
  std::vector<double> r(clicks.positives.size(), clicks.alpha);
  for (std::size_t t = 0; t < clicks.positives.size(); ++t) {
    for (PointIndex n : clicks.negatives) {
      r[t] = std::min(r[t], (z.row(clicks.positives[t]) - z.row(n)).norm());
    }
  }
  return r;
}

SegmentMask annotate(const EmbeddingMatrix& z, const ClickSet& clicks) {
  const auto n = static_cast<std::size_t>(z.rows());
  SegmentMask mask(n);
  const std::vector<double> r = positive_radii(z, clicks);
  for (std::size_t t = 0; t < clicks.positives.size(); ++t) {
    const auto c = z.row(clicks.positives[t]);
    for (std::size_t i = 0; i < n; ++i) {
      if ((z.row(static_cast<Eigen::Index>(i)) - c).norm() < r[t]) mask.set(i);
    }
  }
  for (PointIndex p : clicks.positives) mask.set(static_cast<std::size_t>(p));
  for (PointIndex q : clicks.negatives) mask.set(static_cast<std::size_t>(q), false);
  return mask;
}

void InteractConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw std::invalid_argument("alpha must be a non-negative number");
  if (history_depth == 0) throw std::invalid_argument("history depth must be positive");
  post.validate();
}

void to_json(nlohmann::json& j, const InteractConfig& c) {
  j = nlohmann::json{{"alpha", c.alpha}, {"post", c.post}, {"history_depth", c.history_depth}};
}

void from_json(const nlohmann::json& j, InteractConfig& c) {
  c.alpha = j.value("alpha", c.alpha);
  if (j.contains("post")) c.post = j.at("post").get<PostProcessConfig>();
  c.history_depth = j.value("history_depth", c.history_depth);
}

SegmentMask refine_mask(const KnnTable& knn, const SegmentMask& raw, const ClickSet& clicks,
                        const PostProcessConfig& config) {
  SegmentMask out = postprocess(knn, raw, clicks.positives, config);
  for (PointIndex q : clicks.negatives) out.set(static_cast<std::size_t>(q), false);
  return out;
}

Session::Session(std::shared_ptr<const PointCloud> cloud, std::shared_ptr<const EmbeddingMatrix> embeddings,
                 InteractConfig config, std::shared_ptr<const KnnTable> neighbors)
    : cloud_(std::move(cloud)), knn_(std::move(neighbors)), config_(config) {
  if (!cloud_ || !embeddings) throw std::invalid_argument("session needs a cloud and embeddings");
  config_.validate();
  if (static_cast<std::size_t>(embeddings->rows()) != cloud_->size()) {
    throw std::invalid_argument("embedding rows differ from the cloud size");
  }
  if (!embeddings->allFinite()) throw std::invalid_argument("embeddings contain non-finite values");
  if (!knn_) knn_ = std::make_shared<const KnnTable>(postprocess_neighbors(*cloud_, config_.post));
  if (knn_->size() != cloud_->size()) throw std::invalid_argument("neighbour table size differs from the cloud");
  state_.clicks.alpha = config_.alpha;
  state_.embeddings = std::move(embeddings);
  recompute(state_);
}

Session::Column Session::distance_column(const EmbeddingMatrix& z, PointIndex p) const {
  auto col = std::make_shared<std::vector<double>>(static_cast<std::size_t>(z.rows()));
  const auto c = z.row(p);
  for (Eigen::Index i = 0; i < z.rows(); ++i) (*col)[static_cast<std::size_t>(i)] = (z.row(i) - c).norm();
  return col;
}

void Session::recompute(State& s) const {
  const EmbeddingMatrix& z = *s.embeddings;
  const std::size_t n = cloud_->size();
  if (s.columns.size() != s.clicks.positives.size()) {
    s.columns.clear();
    for (PointIndex p : s.clicks.positives) s.columns.push_back(distance_column(z, p));
  }
  SegmentMask raw(n);
  for (std::size_t t = 0; t < s.clicks.positives.size(); ++t) {
    const std::vector<double>& col = *s.columns[t];
    double r = s.clicks.alpha;
    for (PointIndex q : s.clicks.negatives) r = std::min(r, col[static_cast<std::size_t>(q)]);
    for (std::size_t i = 0; i < n; ++i) {
      if (col[i] < r) raw.set(i);
    }
  }
  for (PointIndex p : s.clicks.positives) raw.set(static_cast<std::size_t>(p));
  for (PointIndex q : s.clicks.negatives) raw.set(static_cast<std::size_t>(q), false);
  s.mask = refine_mask(*knn_, raw, s.clicks, config_.post);
  s.raw = std::move(raw);
}

double Session::positive_radius(std::size_t t) const {
  if (t >= state_.clicks.positives.size()) throw std::out_of_range("positive click ordinal out of range");
  double r = state_.clicks.alpha;
  for (PointIndex q : state_.clicks.negatives) r = std::min(r, (*state_.columns[t])[static_cast<std::size_t>(q)]);
  return r;
}

std::vector<double> Session::radii() const {
  std::vector<double> r(state_.clicks.positives.size());
  for (std::size_t t = 0; t < r.size(); ++t) r[t] = positive_radius(t);
  return r;
}

void Session::check_index(PointIndex index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= cloud_->size()) {
    throw std::out_of_range("point index " + std::to_string(index) + " out of range");
  }
}

void Session::commit(State next) {
  undo_.push_back(std::move(state_));
  while (undo_.size() > config_.history_depth) undo_.pop_front();
  state_ = std::move(next);
}

void Session::add_click(ClickKind kind, PointIndex index) {
  check_index(index);
  if (state_.clicks.contains(index)) {
    throw std::invalid_argument("point " + std::to_string(index) + " is already clicked");
  }
  State next = state_;
  if (kind == ClickKind::Positive) {
    next.clicks.positives.push_back(index);
    next.columns.push_back(distance_column(*next.embeddings, index));
  } else {
    next.clicks.negatives.push_back(index);
  }
  next.history.push_back({kind, index});
  recompute(next);
  commit(std::move(next));
}

SegmentMask Session::preview(ClickKind kind, PointIndex index) const {
  check_index(index);
  if (state_.clicks.contains(index)) {
    throw std::invalid_argument("point " + std::to_string(index) + " is already clicked");
  }
  State next;
  next.clicks = state_.clicks;
  next.embeddings = state_.embeddings;
  next.columns = state_.columns;
  if (kind == ClickKind::Positive) {
    next.clicks.positives.push_back(index);
    next.columns.push_back(distance_column(*next.embeddings, index));
  } else {
    next.clicks.negatives.push_back(index);
  }
  recompute(next);
  return std::move(next.mask);
}

void Session::remove_click(PointIndex index) {
  check_index(index);
  State next = state_;
  auto& pos = next.clicks.positives;
  auto& neg = next.clicks.negatives;
  if (auto it = std::find(pos.begin(), pos.end(), index); it != pos.end()) {
    next.columns.erase(next.columns.begin() + (it - pos.begin()));
    pos.erase(it);
  } else if (auto jt = std::find(neg.begin(), neg.end(), index); jt != neg.end()) {
    neg.erase(jt);
  } else {
    throw std::invalid_argument("point " + std::to_string(index) + " is not clicked");
  }
  std::erase_if(next.history, [index](const Click& c) { return c.index == index; });
  recompute(next);
  commit(std::move(next));
}

std::size_t Session::add_scribble(std::span<const PointIndex> indices) {
  for (PointIndex i : indices) check_index(i);
  State next = state_;
  std::size_t added = 0;
  for (PointIndex i : indices) {
    if (next.clicks.contains(i)) continue;
    next.clicks.negatives.push_back(i);
    next.history.push_back({ClickKind::Negative, i});
    ++added;
  }
  if (added == 0) return 0;
  recompute(next);
  commit(std::move(next));
  return added;
}

void Session::replace_embeddings(std::shared_ptr<const EmbeddingMatrix> embeddings,
                                 std::shared_ptr<const PointNetwork> tuned) {
  if (!embeddings || embeddings->rows() != state_.embeddings->rows()) {
    throw std::invalid_argument("replacement embeddings have the wrong shape");
  }
  if (!embeddings->allFinite()) throw std::invalid_argument("embeddings contain non-finite values");
  State next = state_;
  next.embeddings = std::move(embeddings);
  next.tuned = std::move(tuned);
  next.columns.clear();
  recompute(next);
  commit(std::move(next));
}

void Session::reset(std::shared_ptr<const EmbeddingMatrix> embeddings) {
  if (!embeddings || embeddings->rows() != state_.embeddings->rows()) {
    throw std::invalid_argument("replacement embeddings have the wrong shape");
  }
  State next;
  next.clicks.alpha = config_.alpha;
  next.embeddings = std::move(embeddings);
  recompute(next);
  commit(std::move(next));
}

bool Session::undo() {
  if (undo_.empty()) return false;
  state_ = std::move(undo_.back());
  undo_.pop_back();
  return true;
}

bool Session::same_state(const Session& other) const {
  return state_.clicks == other.state_.clicks && state_.history == other.state_.history &&
         *state_.embeddings == *other.state_.embeddings && state_.raw == other.state_.raw &&
         state_.mask == other.state_.mask && radii() == other.radii();
}

std::vector<Click> parse_click_script(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("click script must be a JSON array");
  std::vector<Click> out;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("kind") || !e.contains("index")) {
      throw std::invalid_argument("click script entries need 'kind' and 'index'");
    }
    out.push_back({click_kind_from_string(e.at("kind").get<std::string>()), e.at("index").get<PointIndex>()});
  }
  return out;
}

nlohmann::json click_script_json(const std::vector<Click>& clicks) {
  nlohmann::json j = nlohmann::json::array();
  for (const Click& c : clicks) j.push_back({{"kind", to_string(c.kind)}, {"index", c.index}});
  return j;
}

}  // namespace clickseg
