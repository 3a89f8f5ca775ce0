#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <json.hpp>

#include "clickseg/backend.hpp"
#include "clickseg/finetune.hpp"
#include "clickseg/session.hpp"

namespace clickseg {

struct SimulationConfig {
  int cap = 15;
  int budget = 10;              ///< click count at which IoU is reported
  std::size_t pool_size = 32;   ///< half positive, half negative candidates
  bool exhaustive = false;      ///< every false negative / false positive is a candidate
  bool online_finetune = true;  ///< fine-tune after each negative click
  FinetuneOptions finetune;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SimulationConfig&) const = default;
};

void to_json(nlohmann::json& j, const SimulationConfig& c);
void from_json(const nlohmann::json& j, SimulationConfig& c);

struct TrajectoryStep {
  Click click;
  double iou = 0.0;  ///< after the click, post-processing and any fine-tuning
  double seconds = 0.0;
  bool finetuned = false;
  bool operator==(const TrajectoryStep& o) const { return click == o.click && iou == o.iou && finetuned == o.finetuned; }
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;

  std::vector<double> ious() const;
  /// IoU after k clicks: 0 for k = 0 (empty mask), the last value past the end.
  double iou_at(std::size_t k) const;
  bool operator==(const Trajectory&) const = default;
};

/// Greedy simulated annotator. Each step scores candidate clicks by the
/// post-processed IoU they would produce and commits the best strict
/// improvement (ties: positive first, then lowest index). Candidates are
/// farthest-point samples of the false negatives (positive) and false
/// positives (negative). After a negative click, fine-tuning is applied when
/// enabled and kept only if it does not lower the IoU.
Trajectory simulate_part(Session& session, const SegmentMask& gt, const SimulationConfig& config,
                         const EmbeddingBackend* backend = nullptr);

/// Smallest k whose IoU reaches threshold/100, or nullopt if none within cap.
std::optional<int> noc(const Trajectory& trajectory, double threshold_percent, int cap);

}  // namespace clickseg
