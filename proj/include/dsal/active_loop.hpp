// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dsal/data.hpp"
#include "dsal/metrics.hpp"
#include "dsal/segnet.hpp"

namespace dsal {

/// Labeled/unlabeled pool partition. Both id lists stay sorted so every
/// derived RNG draw has a deterministic basis.
struct ALState {
  std::vector<std::string> labeled;
  std::vector<std::string> unlabeled;
  int round = 0;
  std::vector<struct RoundMetrics> history;
  uint64_t rng_seed = 0;
};

struct RoundMetrics {
  int round = 0;
  int labels_used = 0;
  double test_dsc = 0.0;
  double val_dsc = 0.0;
  std::vector<ScoreRecord> scores;  // unlabeled pool at selection time, by id
};

enum class PolicyKind { consistency_high, consistency_low, random };

const char* policy_name(PolicyKind k);
PolicyKind parse_policy(const std::string& name);  // throws ConfigError

struct QueryPolicy {
  PolicyKind kind = PolicyKind::consistency_high;
  int k = 10;
};

struct TrainConfig {
  int epochs_per_round = 20;
  int batch_size = 8;
  int label_cap = 60;  // min(label budget, pool size); rounds stop here
};

/// Draws n_init pool ids uniformly without replacement from the seeded RNG.
ALState init_state(std::vector<std::string> pool_ids, int n_init, uint64_t seed);

/// One ScoreRecord per unlabeled sample, ordered by id. r_dsc is filled for
/// samples carrying ground truth (always true in simulation).
std::vector<ScoreRecord> score_pool(const Model& model,
                                    const std::vector<const Sample*>& unlabeled,
                                    int round, int batch_size = 8);

/// Top-k ids by the policy: consistency_high takes the largest mean_score,
/// consistency_low the smallest, random draws uniformly. Ties break toward
/// the ascending sample id. Returns min(k, pool) ids.
std::vector<std::string> select(const std::vector<ScoreRecord>& scores,
                                const QueryPolicy& policy, std::mt19937_64& rng);

/// Simulated expert: moves ids unlabeled -> labeled and hands back the
/// stored fully annotated samples. Rejects unknown, already-labeled, or
/// mask-less ids.
std::vector<const Sample*> oracle_annotate(ALState& state,
                                           const std::vector<std::string>& ids,
                                           const std::vector<Sample>& pool);

/// One loop iteration: fine-tune on all labeled samples (warm start), score
/// the pool, evaluate, then select and annotate the next batch unless the
/// label cap or pool is exhausted. Model, optimizer and state commit only on
/// success; a DivergenceError leaves all three untouched. An empty unlabeled
/// pool is allowed for the terminal full-pool round (no scores, no query).
RoundMetrics run_round(ALState& state, Model& model, AdamState& opt,
                       const std::vector<Sample>& pool, const std::vector<Sample>& val,
                       const std::vector<Sample>& test, const QueryPolicy& policy,
                       const TrainConfig& tc);

struct ExperimentPlan {
  ModelConfig model;
  TrainConfig train;
  std::vector<QueryPolicy> policies;
  std::vector<uint64_t> seeds;
  int n_init = 10;
  int label_budget = 60;
};

struct RunResult {
  QueryPolicy policy;
  uint64_t seed;
  std::vector<RoundMetrics> history;
};

/// Called after every committed round; runs may execute concurrently, so the
/// hook must be safe for calls from different runs.
using RoundHook = std::function<void(const QueryPolicy&, uint64_t seed, const Model&,
                                     const RoundMetrics&)>;

/// Model seed for experiment seed `seed`; every policy under one experiment
/// seed builds the same initial model from it.
uint64_t derive_model_seed(uint64_t seed);

/// Trains a fresh model on the whole training pool for `epochs` and
/// evaluates it: the full-annotation reference point. The returned metrics
/// carry round 0, labels_used = pool size and no pool scores.
struct FullReference {
  RoundMetrics metrics;
  Model model;
};
FullReference run_full_reference(const DatasetSplits& data, const ExperimentPlan& plan,
                                 uint64_t seed, int epochs);

/// One complete (policy, seed) run: init, then rounds until the label cap
/// (min of budget and pool size) is trained on. The model seed and initial
/// labeled set derive from `seed` alone, so every policy under one seed
/// shares its init and round-0 history.
RunResult run_single(const DatasetSplits& data, const ExperimentPlan& plan,
                     const QueryPolicy& policy, uint64_t seed, const RoundHook& hook = {});

/// Runs every policy x seed combination sequentially in plan order.
std::vector<RunResult> run_experiment(const DatasetSplits& data, const ExperimentPlan& plan,
                                      const RoundHook& hook = {});

}  // namespace dsal
