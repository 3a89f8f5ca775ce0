#include "clickseg/config.hpp"

#include <set>
#include <stdexcept>

#include "clickseg/cloud_io.hpp"

namespace clickseg {

void AppConfig::sync() {
  sim.seed = seed;
  train.seed = seed;
  train.weights = loss;
  train.threads = threads;
  finetune.eps_cte = loss.eps_cte;
  sim.finetune = finetune;
}

void AppConfig::validate() const {
  loss.validate();
  interact.validate();
  finetune.validate();
  sim.validate();
  forge.validate();
  train.validate();
  if (network.hidden < 1 || network.output_dim < 1 || network.aggregate_k < 1) {
    throw std::invalid_argument("network dimensions must be positive");
  }
}

nlohmann::json AppConfig::to_json() const {
  return nlohmann::json{
      {"lambda_ctr", loss.lambda_ctr},
      {"lambda_cte", loss.lambda_cte},
      {"lambda_reg", loss.lambda_reg},
      {"eps_ctr", loss.eps_ctr},
      {"eps_cte", loss.eps_cte},
      {"alpha", interact.alpha},
      {"gamma", interact.post.gamma},
      {"n_neighbor", interact.post.n_neighbor},
      {"n_iter", interact.post.n_iter},
      {"n_smooth", interact.post.n_smooth},
      {"outlier_removal", interact.post.outlier_removal},
      {"smoothing", interact.post.smoothing},
      {"history_depth", interact.history_depth},
      {"online_finetune", sim.online_finetune},
      {"finetune_steps", finetune.steps},
      {"finetune_step_size", finetune.step_size},
      {"finetune_max_halvings", finetune.max_halvings},
      {"finetune_offsets", finetune.allow_offsets},
      {"auto_finetune", finetune.auto_on_negative},
      {"click_cap", sim.cap},
      {"click_budget", sim.budget},
      {"pool_size", sim.pool_size},
      {"exhaustive", sim.exhaustive},
      {"epochs", train.epochs},
      {"learning_rate", train.learning_rate},
      {"batch_shapes", train.batch_shapes},
      {"n_points", forge.n_points},
      {"k_min", forge.k_min},
      {"k_max", forge.k_max},
      {"oversample", forge.oversample},
      {"noise_sigma", forge.noise_sigma},
      {"max_part_primitives", forge.max_part_primitives},
      {"hidden_dim", network.hidden},
      {"embedding_dim", network.output_dim},
      {"aggregate_k", network.aggregate_k},
      {"seed", seed},
      {"threads", threads},
  };
}

AppConfig AppConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  AppConfig c;
  const nlohmann::json defaults = c.to_json();
  for (const auto& [key, value] : j.items()) {
    if (!defaults.contains(key)) throw std::invalid_argument("unknown config key '" + key + "'");
  }
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("lambda_ctr", c.loss.lambda_ctr);
  get("lambda_cte", c.loss.lambda_cte);
  get("lambda_reg", c.loss.lambda_reg);
  get("eps_ctr", c.loss.eps_ctr);
  get("eps_cte", c.loss.eps_cte);
  get("alpha", c.interact.alpha);
  get("gamma", c.interact.post.gamma);
  get("n_neighbor", c.interact.post.n_neighbor);
  get("n_iter", c.interact.post.n_iter);
  get("n_smooth", c.interact.post.n_smooth);
  get("outlier_removal", c.interact.post.outlier_removal);
  get("smoothing", c.interact.post.smoothing);
  get("history_depth", c.interact.history_depth);
  get("online_finetune", c.sim.online_finetune);
  get("finetune_steps", c.finetune.steps);
  get("finetune_step_size", c.finetune.step_size);
  get("finetune_max_halvings", c.finetune.max_halvings);
  get("finetune_offsets", c.finetune.allow_offsets);
  get("auto_finetune", c.finetune.auto_on_negative);
  get("click_cap", c.sim.cap);
  get("click_budget", c.sim.budget);
  get("pool_size", c.sim.pool_size);
  get("exhaustive", c.sim.exhaustive);
  get("epochs", c.train.epochs);
  get("learning_rate", c.train.learning_rate);
  get("batch_shapes", c.train.batch_shapes);
  get("n_points", c.forge.n_points);
  get("k_min", c.forge.k_min);
  get("k_max", c.forge.k_max);
  get("oversample", c.forge.oversample);
  get("noise_sigma", c.forge.noise_sigma);
  get("max_part_primitives", c.forge.max_part_primitives);
  get("hidden_dim", c.network.hidden);
  get("embedding_dim", c.network.output_dim);
  get("aggregate_k", c.network.aggregate_k);
  get("seed", c.seed);
  get("threads", c.threads);
  c.sync();
  return c;
}

BenchmarkConfig AppConfig::benchmark() const {
  BenchmarkConfig b;
  b.sim = sim;
  b.sim.finetune = finetune;
  b.sim.seed = seed;
  b.interact = interact;
  b.threads = threads;
  return b;
}

AppConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
  return AppConfig::from_json(j);
}

}  // namespace clickseg
