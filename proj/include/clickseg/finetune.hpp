#pragma once

#include <json.hpp>

#include "clickseg/backend.hpp"
#include "clickseg/session.hpp"

namespace clickseg {

/// Mean over negatives of max(eps - distance to the nearest positive, 0).
/// Rows are click embeddings. Throws std::invalid_argument without positives.
double finetune_energy(const EmbeddingMatrix& positives, const EmbeddingMatrix& negatives, double eps_cte);

struct EnergyGradient {
  double energy = 0.0;
  EmbeddingMatrix grad;  ///< d E / d Z; non-zero only on clicked rows
};

/// Energy of the clicked rows of `z`, with its gradient. A nearest-positive
/// tie goes to the lowest positive ordinal; zero distances get gradient 0.
EnergyGradient finetune_energy_gradient(const EmbeddingMatrix& z, const ClickSet& clicks, double eps_cte);

struct FinetuneOptions {
  int steps = 10;
  double step_size = 1e-3;
  int max_halvings = 5;
  double eps_cte = 0.75;
  bool allow_offsets = true;  ///< per-point offsets for backends without parameters
  bool auto_on_negative = false;

  void validate() const;
  bool operator==(const FinetuneOptions&) const = default;
};

void to_json(nlohmann::json& j, const FinetuneOptions& o);
void from_json(const nlohmann::json& j, FinetuneOptions& o);

struct FinetuneResult {
  double energy_before = 0.0;
  double energy_after = 0.0;
  int accepted_steps = 0;
  int rejected_steps = 0;
  double final_step_size = 0.0;
  bool tuned_parameters = false;  ///< network parameters rather than offsets
};

/// Gradient descent on the click energy. A step that raises the energy is
/// retried at half the step size up to `max_halvings` times. If all fail, the
/// same is tried once along a direction that splits each push between the
/// positives within one step length of the nearest; then the call stops.
/// Network backends tune a session-local copy of the parameters; all other
/// backends tune additive offsets of the session embeddings. The session is
/// only modified (one undo entry) when a step was accepted.
/// Throws std::runtime_error("backend not tunable") when neither applies.
FinetuneResult finetune(Session& session, const EmbeddingBackend* backend, const FinetuneOptions& options);

}  // namespace clickseg
