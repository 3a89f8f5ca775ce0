#pragma once

#include <span>

#include <Eigen/Core>
#include <json.hpp>

namespace clickseg {

/// Row i is the embedding of point i.
using EmbeddingMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LossWeights {
  double lambda_ctr = 1.0;
  double lambda_cte = 1.0;
  double lambda_reg = 1e-4;
  double eps_ctr = 0.25;
  double eps_cte = 0.75;

  /// Throws std::invalid_argument on negative values; logs a warning when
  /// eps_cte <= eps_ctr.
  void validate() const;
  bool operator==(const LossWeights&) const = default;
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

/// Mean embedding of every segment; K = max label + 1 rows.
/// Throws std::invalid_argument on an empty segment or a label/row mismatch.
EmbeddingMatrix segment_centers(const EmbeddingMatrix& z, std::span<const int> labels);

/// Mean over segments of the mean hinge max(|z_j - center| - eps, 0).
double centric_intra_loss(const EmbeddingMatrix& z, std::span<const int> labels, double eps_ctr);

/// Mean over ordered segment pairs of max(eps - |center_i - center_j|, 0); 0 when K < 2.
double centric_inter_loss(const EmbeddingMatrix& z, std::span<const int> labels, double eps_cte);

/// Mean row norm.
double reg_loss(const EmbeddingMatrix& z);

struct LossValue {
  double total = 0.0;
  double intra = 0.0;
  double inter = 0.0;
  double reg = 0.0;
  EmbeddingMatrix grad;  ///< d total / d z; hinge kinks and zero norms get subgradient 0
};

LossValue total_loss(const EmbeddingMatrix& z, std::span<const int> labels, const LossWeights& w);

}  // namespace clickseg
