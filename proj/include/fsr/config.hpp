#pragma once

#include <stdexcept>
#include <string>

#include "fsr/degrade.hpp"
#include "fsr/distill.hpp"
#include "fsr/eval.hpp"
#include "fsr/net.hpp"

namespace fsr {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// The union of all run settings, read from a sectioned key=value text file.
/// Unknown keys are rejected; every run embeds the resolved config in its
/// outputs.
struct ExperimentConfig {
  // [corpus]
  int corpus_train = 64;
  int corpus_val = 16;
  int corpus_size = 32;

  DegradeConfig degrade;   // [degrade]
  NetConfig net;           // [net]; condition_lr follows the flow variant
  TrainConfig train;       // [train] + [sched]; stage chosen by subcommand
  int64_t stage1_steps = 800;
  int64_t stage2_steps = 1600;
  EvalSettings eval;       // [eval]

  /// canonical serialized form; digest and reproducibility anchor
  std::string serialize() const;

  /// applies `section.key=value`
  void set(const std::string& dotted_key, const std::string& value);
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);

}  // namespace fsr
