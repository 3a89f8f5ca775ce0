#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "clickseg/losses.hpp"
#include "clickseg/network.hpp"
#include "clickseg/shape_forge.hpp"

namespace clickseg {

/// A shape with its network input precomputed, so epochs reuse descriptors
/// and neighbourhoods.
struct TrainingSample {
  std::string id;
  NetworkInput input;
  std::vector<int> labels;
};

std::vector<TrainingSample> prepare_training_set(const std::vector<LabeledShape>& shapes,
                                                 const std::vector<std::string>& ids, int aggregate_k,
                                                 unsigned threads = 1);

struct TrainOptions {
  int epochs = 1000;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t batch_shapes = 1;  ///< shapes averaged per optimizer step
  LossWeights weights;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::optional<std::filesystem::path> checkpoint_dir;  ///< epoch_NNNN.ckpt plus last.ckpt when set

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainOptions& o);
void from_json(const nlohmann::json& j, TrainOptions& o);

/// Thrown when a loss or gradient becomes non-finite.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, std::string shape_id);
  int epoch() const { return epoch_; }
  const std::string& shape_id() const { return shape_id_; }

 private:
  int epoch_;
  std::string shape_id_;
};

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double mean_intra = 0.0;
  double mean_inter = 0.0;
  double mean_reg = 0.0;
  double learning_rate = 0.0;  ///< rate at the epoch's last step
};

struct TrainResult {
  PointNetwork network;
  std::vector<EpochStats> history;
};

/// Cosine annealing from base to 0 over total steps.
double cosine_learning_rate(double base, std::size_t step, std::size_t total_steps);

/// Loss of one sample under the current parameters, with the parameter gradient.
struct SampleGradient {
  LossValue loss;
  Eigen::VectorXd grad;
};
SampleGradient sample_gradient(const PointNetwork& net, const TrainingSample& sample, const LossWeights& w);

/// Adam over the total loss. Shape order is reshuffled each epoch from the
/// seed; gradients within a batch are reduced in batch order.
TrainResult train_network(PointNetwork net, const std::vector<TrainingSample>& data, const TrainOptions& opts,
                          const std::function<void(const EpochStats&)>& on_epoch = {});

}  // namespace clickseg
