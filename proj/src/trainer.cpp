#include "clickseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "clickseg/parallel.hpp"
#include "clickseg/rng.hpp"

namespace clickseg {

std::vector<TrainingSample> prepare_training_set(const std::vector<LabeledShape>& shapes,
                                                 const std::vector<std::string>& ids, int aggregate_k,
                                                 unsigned threads) {
  if (ids.size() != shapes.size()) throw std::invalid_argument("one id per training shape required");
  std::vector<TrainingSample> out(shapes.size());
  parallel_for(shapes.size(), threads, [&](std::size_t i) {
    out[i].id = ids[i];
    out[i].input = prepare_input(shapes[i].cloud(), aggregate_k);
    out[i].labels = shapes[i].labels();
  });
  return out;
}

void TrainOptions::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (batch_shapes == 0) throw std::invalid_argument("batch_shapes must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("Adam betas in [0,1)");
  weights.validate();
}

void to_json(nlohmann::json& j, const TrainOptions& o) {
  j = nlohmann::json{{"epochs", o.epochs},           {"learning_rate", o.learning_rate},
                     {"beta1", o.beta1},             {"beta2", o.beta2},
                     {"adam_eps", o.adam_eps},       {"batch_shapes", o.batch_shapes},
                     {"weights", o.weights},         {"seed", o.seed},
                     {"threads", o.threads}};
  if (o.checkpoint_dir) j["checkpoint_dir"] = o.checkpoint_dir->string();
}

void from_json(const nlohmann::json& j, TrainOptions& o) {
  o.epochs = j.value("epochs", o.epochs);
  o.learning_rate = j.value("learning_rate", o.learning_rate);
  o.beta1 = j.value("beta1", o.beta1);
  o.beta2 = j.value("beta2", o.beta2);
  o.adam_eps = j.value("adam_eps", o.adam_eps);
  o.batch_shapes = j.value("batch_shapes", o.batch_shapes);
  if (j.contains("weights")) o.weights = j.at("weights").get<LossWeights>();
  o.seed = j.value("seed", o.seed);
  o.threads = j.value("threads", o.threads);
  if (j.contains("checkpoint_dir")) o.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();
}

TrainingDiverged::TrainingDiverged(int epoch, std::string shape_id)
    : std::runtime_error(fmt::format("non-finite loss at epoch {} on shape {}", epoch, shape_id)),
      epoch_(epoch),
      shape_id_(std::move(shape_id)) {}

double cosine_learning_rate(double base, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return base;
  const double t = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * t));
}

SampleGradient sample_gradient(const PointNetwork& net, const TrainingSample& sample, const LossWeights& w) {
  ForwardCache cache;
  const EmbeddingMatrix z = net.forward(sample.input, &cache);
  SampleGradient out;
  out.loss = total_loss(z, sample.labels, w);
  out.grad = net.backward(sample.input, cache, out.loss.grad);
  out.loss.grad.resize(0, 0);
  return out;
}

TrainResult train_network(PointNetwork net, const std::vector<TrainingSample>& data, const TrainOptions& opts,
                          const std::function<void(const EpochStats&)>& on_epoch) {
  opts.validate();
  if (data.empty()) throw std::invalid_argument("training set is empty");
  if (opts.checkpoint_dir) std::filesystem::create_directories(*opts.checkpoint_dir);

  const std::size_t batches_per_epoch = (data.size() + opts.batch_shapes - 1) / opts.batch_shapes;
  const std::size_t total_steps = batches_per_epoch * static_cast<std::size_t>(opts.epochs);
  const Eigen::Index p = net.parameters().size();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(p);
  std::size_t step = 0;

  TrainResult result;
  std::vector<std::size_t> order(data.size());
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(opts.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);

    EpochStats stats;
    stats.epoch = epoch;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t begin = b * opts.batch_shapes;
      const std::size_t end = std::min(order.size(), begin + opts.batch_shapes);
      std::vector<SampleGradient> grads(end - begin);
      parallel_for(grads.size(), opts.threads,
                   [&](std::size_t i) { grads[i] = sample_gradient(net, data[order[begin + i]], opts.weights); });

      Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
      for (std::size_t i = 0; i < grads.size(); ++i) {
        const auto& s = grads[i];
        if (!std::isfinite(s.loss.total) || !s.grad.allFinite()) {
          throw TrainingDiverged(epoch, data[order[begin + i]].id);
        }
        g += s.grad;
        stats.mean_loss += s.loss.total;
        stats.mean_intra += s.loss.intra;
        stats.mean_inter += s.loss.inter;
        stats.mean_reg += s.loss.reg;
      }
      g /= static_cast<double>(grads.size());

      ++step;
      const double lr = cosine_learning_rate(opts.learning_rate, step - 1, total_steps);
      m = opts.beta1 * m + (1.0 - opts.beta1) * g;
      v = opts.beta2 * v + (1.0 - opts.beta2) * g.cwiseProduct(g);
      const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(step));
      net.parameters().array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + opts.adam_eps);
      stats.learning_rate = lr;
    }
    const auto n = static_cast<double>(data.size());
    stats.mean_loss /= n;
    stats.mean_intra /= n;
    stats.mean_inter /= n;
    stats.mean_reg /= n;
    result.history.push_back(stats);
    spdlog::debug("epoch {} loss {:.6f} (intra {:.6f} inter {:.6f} reg {:.6f}) lr {:.3g}", epoch, stats.mean_loss,
                  stats.mean_intra, stats.mean_inter, stats.mean_reg, stats.learning_rate);
    if (opts.checkpoint_dir) {
      save_checkpoint(*opts.checkpoint_dir / fmt::format("epoch_{:04d}.ckpt", epoch), net);
      save_checkpoint(*opts.checkpoint_dir / "last.ckpt", net);
    }
    if (on_epoch) on_epoch(stats);
  }
  result.network = std::move(net);
  return result;
}

}  // namespace clickseg
