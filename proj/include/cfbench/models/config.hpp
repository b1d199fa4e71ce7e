#pragma once

#include "cfbench/core.hpp"

#include <json.hpp>

#include <cstdint>

namespace cfbench::models {

struct TrainConfig {
  int epochs = 10;
  int batch_size = 256;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw ConfigError("train config: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train config: batch size must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("train config: learning rate must be positive");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, epochs, batch_size, learning_rate, seed)

struct McDropoutConfig {
  int passes = 50;
  std::uint64_t seed = 0;

  void validate() const {
    if (passes < 2) throw ConfigError("mc dropout: need at least two stochastic passes");
  }
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(McDropoutConfig, passes, seed)

}  // namespace cfbench::models
