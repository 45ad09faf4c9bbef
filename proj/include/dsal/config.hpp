// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsal/active_loop.hpp"
#include "dsal/data.hpp"
#include "dsal/segnet.hpp"

namespace dsal {

/// Everything one experiment needs, assembled from a config file. The model
/// resolution always mirrors the dataset resolution; per-run model seeds are
/// derived later from the experiment seeds.
struct ExperimentConfig {
  DatasetConfig dataset;
  ModelConfig model;
  std::vector<QueryPolicy> policies{{PolicyKind::consistency_high, 10},
                                    {PolicyKind::consistency_low, 10},
                                    {PolicyKind::random, 10}};
  std::vector<uint64_t> seeds{1, 2, 3, 4, 5};
  int n_init = 10;
  int k = 10;
  int label_budget = 60;
  int epochs_per_round = 20;
  int batch_size = 8;
  bool full_reference = true;
  int full_reference_epochs = 100;
  std::string output_dir = "out";
  std::string dataset_dir = "data";
};

/// Parses the `[section]` / `key = value` format. Every key has a default;
/// unknown sections or keys are rejected (they are almost always typos).
/// Errors carry file and line number.
ExperimentConfig load_experiment_config(const std::string& path);

/// Built-in defaults (what an empty config file yields).
ExperimentConfig default_experiment_config();

/// Stable plain-text form of every field, the input to config_hash.
std::string canonical_config(const ExperimentConfig& cfg);

/// FNV-1a 64-bit over canonical_config, as 16 hex digits. Written into every
/// CSV so results can be traced to their exact configuration.
std::string config_hash(const ExperimentConfig& cfg);

ExperimentPlan make_plan(const ExperimentConfig& cfg);

}  // namespace dsal
