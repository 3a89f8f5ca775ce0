#include "clickseg/simulate.hpp"

#include <chrono>
#include <stdexcept>

#include "clickseg/rng.hpp"
#include "clickseg/sampling.hpp"

namespace clickseg {

void SimulationConfig::validate() const {
  if (cap < 1) throw std::invalid_argument("click cap must be at least 1");
  if (budget < 0 || budget > cap) throw std::invalid_argument("click budget must lie in [0, cap]");
  if (!exhaustive && pool_size < 2) throw std::invalid_argument("candidate pool needs at least 2 entries");
  finetune.validate();
}

void to_json(nlohmann::json& j, const SimulationConfig& c) {
  j = nlohmann::json{{"cap", c.cap},
                     {"budget", c.budget},
                     {"pool_size", c.pool_size},
                     {"exhaustive", c.exhaustive},
                     {"online_finetune", c.online_finetune},
                     {"finetune", c.finetune},
                     {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, SimulationConfig& c) {
  c.cap = j.value("cap", c.cap);
  c.budget = j.value("budget", c.budget);
  c.pool_size = j.value("pool_size", c.pool_size);
  c.exhaustive = j.value("exhaustive", c.exhaustive);
  c.online_finetune = j.value("online_finetune", c.online_finetune);
  if (j.contains("finetune")) c.finetune = j.at("finetune").get<FinetuneOptions>();
  c.seed = j.value("seed", c.seed);
}

std::vector<double> Trajectory::ious() const {
  std::vector<double> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.iou);
  return out;
}

double Trajectory::iou_at(std::size_t k) const {
  if (k == 0 || steps.empty()) return 0.0;
  return steps[std::min(k, steps.size()) - 1].iou;
}

namespace {

std::vector<PointIndex> candidates(const PointCloud& cloud, const std::vector<PointIndex>& pool, std::size_t count,
                                   bool exhaustive, std::uint64_t seed) {
  if (exhaustive || pool.size() <= count) return pool;
  return fps_subset(cloud.positions(), pool, count, seed);
}

}  // namespace

Trajectory simulate_part(Session& session, const SegmentMask& gt, const SimulationConfig& config,
                         const EmbeddingBackend* backend) {
  config.validate();
  if (gt.size() != session.size()) throw std::invalid_argument("ground truth length differs from the cloud");
  if (gt.none()) throw std::invalid_argument("ground truth part is empty");
  using Clock = std::chrono::steady_clock;

  Trajectory traj;
  double current = iou(session.mask(), gt);
  const std::size_t half = config.pool_size / 2;
  for (int step = 0; step < config.cap && current < 1.0; ++step) {
    const auto start = Clock::now();
    std::vector<PointIndex> fn;
    std::vector<PointIndex> fp;
    const SegmentMask& mask = session.mask();
    for (std::size_t i = 0; i < gt.size(); ++i) {
      const auto p = static_cast<PointIndex>(i);
      if (session.clicks().contains(p)) continue;
      if (gt[i] && !mask[i]) fn.push_back(p);
      if (!gt[i] && mask[i]) fp.push_back(p);
    }
    const auto step_seed = mix_seed(config.seed, static_cast<std::uint64_t>(step));
    const auto pos = candidates(session.cloud(), fn, half, config.exhaustive, mix_seed(step_seed, 1));
    const auto neg = candidates(session.cloud(), fp, half, config.exhaustive, mix_seed(step_seed, 2));

    std::optional<Click> best;
    double best_iou = current;
    auto consider = [&](ClickKind kind, const std::vector<PointIndex>& list) {
      for (PointIndex p : list) {
        const double v = iou(session.preview(kind, p), gt);
        const bool better =
            v > best_iou ||
            (best && v == best_iou && (kind == best->kind ? p < best->index : kind == ClickKind::Positive));
        if (better) {
          best_iou = v;
          best = Click{kind, p};
        }
      }
    };
    consider(ClickKind::Positive, pos);
    consider(ClickKind::Negative, neg);
    if (!best) break;

    session.add_click(best->kind, best->index);
    TrajectoryStep rec{*best, iou(session.mask(), gt), 0.0, false};
    if (best->kind == ClickKind::Negative && config.online_finetune) {
      const FinetuneResult r = finetune(session, backend, config.finetune);
      if (r.accepted_steps > 0) {
        const double tuned = iou(session.mask(), gt);
        if (tuned >= rec.iou) {
          rec.iou = tuned;
          rec.finetuned = true;
        } else {
          session.undo();
        }
      }
    }
    rec.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    current = rec.iou;
    traj.steps.push_back(rec);
  }
  return traj;
}

std::optional<int> noc(const Trajectory& trajectory, double threshold_percent, int cap) {
  if (!(threshold_percent > 0.0 && threshold_percent < 100.0)) {
    throw std::invalid_argument("NoC threshold must lie in (0, 100)");
  }
  const double t = threshold_percent / 100.0;
  const auto limit = std::min(trajectory.steps.size(), static_cast<std::size_t>(std::max(cap, 0)));
  for (std::size_t k = 0; k < limit; ++k) {
    if (trajectory.steps[k].iou >= t) return static_cast<int>(k + 1);
  }
  return std::nullopt;
}

}  // namespace clickseg
