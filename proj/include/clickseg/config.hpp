#pragma once

#include <cstdint>
#include <filesystem>

#include <json.hpp>

#include "clickseg/benchmark.hpp"
#include "clickseg/finetune.hpp"
#include "clickseg/losses.hpp"
#include "clickseg/network.hpp"
#include "clickseg/session.hpp"
#include "clickseg/shape_forge.hpp"
#include "clickseg/simulate.hpp"
#include "clickseg/trainer.hpp"

namespace clickseg {

/// Every tunable of the toolkit. The JSON form is a single flat object;
/// keys left out keep their defaults and unknown keys are rejected.
struct AppConfig {
  LossWeights loss;
  InteractConfig interact;
  FinetuneOptions finetune;
  SimulationConfig sim;
  ForgeConfig forge;
  TrainOptions train;
  NetworkShape network;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  /// Propagates shared values (seed, margins, threads) into the sub-configs.
  void sync();
  void validate() const;
  nlohmann::json to_json() const;
  static AppConfig from_json(const nlohmann::json& j);

  BenchmarkConfig benchmark() const;
};

AppConfig load_config(const std::filesystem::path& path);

}  // namespace clickseg
