// SPDX-License-Identifier: Apache-2.0
#include "dsal/active_loop.hpp"

#include <algorithm>
#include <unordered_map>

#include "dsal/errors.hpp"
#include "dsal/rng.hpp"

namespace dsal {

namespace {

constexpr uint64_t kInitPickStream = 0x1017u;
constexpr uint64_t kModelSeedStream = 0x30DE1u;
constexpr uint64_t kEpochStreamBase = 0xE9000u;
constexpr uint64_t kSelectStreamBase = 0x5E1EC7u;
constexpr uint64_t kFullEpochStream = 0xF0F0u;

std::unordered_map<std::string, const Sample*> index_pool(const std::vector<Sample>& pool) {
  std::unordered_map<std::string, const Sample*> idx;
  idx.reserve(pool.size());
  for (const Sample& s : pool) idx.emplace(s.id, &s);
  return idx;
}

std::vector<const Sample*> gather(const std::unordered_map<std::string, const Sample*>& idx,
                                  const std::vector<std::string>& ids) {
  std::vector<const Sample*> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    auto it = idx.find(id);
    if (it == idx.end())
      throw std::invalid_argument("pool lookup: unknown sample id " + id);
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

const char* policy_name(PolicyKind k) {
  switch (k) {
    case PolicyKind::consistency_high: return "consistency_high";
    case PolicyKind::consistency_low: return "consistency_low";
    case PolicyKind::random: return "random";
  }
  return "?";
}

PolicyKind parse_policy(const std::string& name) {
  if (name == "consistency_high") return PolicyKind::consistency_high;
  if (name == "consistency_low") return PolicyKind::consistency_low;
  if (name == "random") return PolicyKind::random;
  throw ConfigError("unknown policy '" + name +
                    "' (expected consistency_high, consistency_low or random)");
}

ALState init_state(std::vector<std::string> pool_ids, int n_init, uint64_t seed) {
  std::sort(pool_ids.begin(), pool_ids.end());
  if (std::adjacent_find(pool_ids.begin(), pool_ids.end()) != pool_ids.end())
    throw std::invalid_argument("init_state: duplicate pool ids");
  if (n_init < 1 || static_cast<size_t>(n_init) > pool_ids.size())
    throw std::invalid_argument("init_state: n_init " + std::to_string(n_init) +
                                " out of range for pool of " +
                                std::to_string(pool_ids.size()));
  std::mt19937_64 rng = make_rng(mix_seed(seed, kInitPickStream));
  std::shuffle(pool_ids.begin(), pool_ids.end(), rng);

  ALState st;
  st.rng_seed = seed;
  st.labeled.assign(pool_ids.begin(), pool_ids.begin() + n_init);
  st.unlabeled.assign(pool_ids.begin() + n_init, pool_ids.end());
  std::sort(st.labeled.begin(), st.labeled.end());
  std::sort(st.unlabeled.begin(), st.unlabeled.end());
  return st;
}

std::vector<ScoreRecord> score_pool(const Model& model,
                                    const std::vector<const Sample*>& unlabeled,
                                    int round, int batch_size) {
  std::vector<ScoreRecord> out;
  out.reserve(unlabeled.size());
  for (size_t begin = 0; begin < unlabeled.size();
       begin += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(unlabeled.size(), begin + static_cast<size_t>(batch_size));
    const std::vector<const Sample*> batch(unlabeled.begin() + static_cast<long>(begin),
                                           unlabeled.begin() + static_cast<long>(end));
    const PredictionSet p = forward(model, stack_images(batch));
    for (size_t i = 0; i < batch.size(); ++i) {
      ScoreRecord r = consistency_scores(p, batch[i]->id, round, static_cast<int>(i));
      if (batch[i]->mask) r.r_dsc = dsc(binarize(p.p_f, static_cast<int>(i)), *batch[i]->mask);
      out.push_back(std::move(r));
    }
  }
  std::sort(out.begin(), out.end(),
            [](const ScoreRecord& a, const ScoreRecord& b) { return a.sample_id < b.sample_id; });
  return out;
}

std::vector<std::string> select(const std::vector<ScoreRecord>& scores,
                                const QueryPolicy& policy, std::mt19937_64& rng) {
  if (policy.k < 1) throw std::invalid_argument("select: k must be >= 1");
  const size_t take = std::min(static_cast<size_t>(policy.k), scores.size());

  std::vector<const ScoreRecord*> order;
  order.reserve(scores.size());
  for (const ScoreRecord& r : scores) order.push_back(&r);

  if (policy.kind == PolicyKind::random) {
    std::sort(order.begin(), order.end(), [](const ScoreRecord* a, const ScoreRecord* b) {
      return a->sample_id < b->sample_id;
    });
    std::shuffle(order.begin(), order.end(), rng);
  } else {
    const bool high = policy.kind == PolicyKind::consistency_high;
    std::sort(order.begin(), order.end(),
              [high](const ScoreRecord* a, const ScoreRecord* b) {
                if (a->mean_score != b->mean_score)
                  return high ? a->mean_score > b->mean_score
                              : a->mean_score < b->mean_score;
                return a->sample_id < b->sample_id;
              });
  }
  std::vector<std::string> ids;
  ids.reserve(take);
  for (size_t i = 0; i < take; ++i) ids.push_back(order[i]->sample_id);
  return ids;
}

std::vector<const Sample*> oracle_annotate(ALState& state,
                                           const std::vector<std::string>& ids,
                                           const std::vector<Sample>& pool) {
  const auto idx = index_pool(pool);
  std::vector<const Sample*> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    auto it = idx.find(id);
    if (it == idx.end())
      throw DataError("oracle_annotate: id " + id + " is not in the pool");
    if (!it->second->mask)
      throw DataError("oracle_annotate: no stored ground truth for id " + id);
    auto u = std::lower_bound(state.unlabeled.begin(), state.unlabeled.end(), id);
    if (u == state.unlabeled.end() || *u != id)
      throw DataError("oracle_annotate: id " + id +
                      " is not unlabeled (double annotation?)");
    state.unlabeled.erase(u);
    state.labeled.insert(std::lower_bound(state.labeled.begin(), state.labeled.end(), id),
                         id);
    out.push_back(it->second);
  }
  return out;
}

RoundMetrics run_round(ALState& state, Model& model, AdamState& opt,
                       const std::vector<Sample>& pool, const std::vector<Sample>& val,
                       const std::vector<Sample>& test, const QueryPolicy& policy,
                       const TrainConfig& tc) {
  if (tc.epochs_per_round < 1 || tc.batch_size < 1)
    throw std::invalid_argument("run_round: bad train config");
  if (state.labeled.empty()) throw std::invalid_argument("run_round: no labeled samples");

  const auto idx = index_pool(pool);
  std::vector<const Sample*> labeled = gather(idx, state.labeled);
  for (const Sample* s : labeled)
    if (!s->mask) throw DataError("run_round: labeled sample " + s->id + " has no mask");

  // Warm-start fine-tuning on copies; commit after the whole round succeeds.
  Model next_model = model;
  AdamState next_opt = opt;
  std::mt19937_64 epoch_rng = make_rng(
      mix_seed(state.rng_seed, kEpochStreamBase + static_cast<uint64_t>(state.round)));
  for (int e = 0; e < tc.epochs_per_round; ++e) {
    std::vector<const Sample*> sched = labeled;
    std::shuffle(sched.begin(), sched.end(), epoch_rng);
    for (size_t begin = 0; begin < sched.size(); begin += static_cast<size_t>(tc.batch_size)) {
      const size_t end = std::min(sched.size(), begin + static_cast<size_t>(tc.batch_size));
      const std::vector<const Sample*> batch(sched.begin() + static_cast<long>(begin),
                                             sched.begin() + static_cast<long>(end));
      train_step(next_model, stack_images(batch), stack_masks(batch), next_opt);
    }
  }

  RoundMetrics metrics;
  metrics.round = state.round;
  metrics.labels_used = static_cast<int>(state.labeled.size());
  metrics.scores = score_pool(next_model, gather(idx, state.unlabeled), state.round,
                              tc.batch_size);
  metrics.test_dsc = evaluate(next_model, test, tc.batch_size);
  metrics.val_dsc = evaluate(next_model, val, tc.batch_size);

  const int cap = std::min<int>(tc.label_cap, static_cast<int>(pool.size()));
  if (static_cast<int>(state.labeled.size()) < cap && !state.unlabeled.empty()) {
    QueryPolicy bounded = policy;
    bounded.k = std::min<int>(policy.k, cap - static_cast<int>(state.labeled.size()));
    std::mt19937_64 sel_rng = make_rng(
        mix_seed(state.rng_seed, kSelectStreamBase + static_cast<uint64_t>(state.round)));
    oracle_annotate(state, select(metrics.scores, bounded, sel_rng), pool);
  }

  state.round += 1;
  state.history.push_back(metrics);
  model = std::move(next_model);
  opt = std::move(next_opt);
  return metrics;
}

uint64_t derive_model_seed(uint64_t seed) { return mix_seed(seed, kModelSeedStream); }

FullReference run_full_reference(const DatasetSplits& data, const ExperimentPlan& plan,
                                 uint64_t seed, int epochs) {
  if (epochs < 1) throw ConfigError("run_full_reference: epochs must be >= 1");
  if (data.train.empty()) throw DataError("run_full_reference: empty training pool");
  std::vector<const Sample*> pool;
  pool.reserve(data.train.size());
  for (const Sample& s : data.train) {
    if (!s.mask) throw DataError("run_full_reference: sample " + s.id + " has no mask");
    pool.push_back(&s);
  }

  ModelConfig mc = plan.model;
  mc.seed = derive_model_seed(seed);
  FullReference out{RoundMetrics{}, build_model(mc)};
  AdamState opt = init_adam(out.model);

  std::mt19937_64 rng = make_rng(mix_seed(seed, kFullEpochStream));
  const int bs = plan.train.batch_size;
  for (int e = 0; e < epochs; ++e) {
    std::vector<const Sample*> sched = pool;
    std::shuffle(sched.begin(), sched.end(), rng);
    for (size_t begin = 0; begin < sched.size(); begin += static_cast<size_t>(bs)) {
      const size_t end = std::min(sched.size(), begin + static_cast<size_t>(bs));
      const std::vector<const Sample*> batch(sched.begin() + static_cast<long>(begin),
                                             sched.begin() + static_cast<long>(end));
      train_step(out.model, stack_images(batch), stack_masks(batch), opt);
    }
  }

  out.metrics.round = 0;
  out.metrics.labels_used = static_cast<int>(pool.size());
  out.metrics.test_dsc = evaluate(out.model, data.test, bs);
  out.metrics.val_dsc = evaluate(out.model, data.val, bs);
  return out;
}

RunResult run_single(const DatasetSplits& data, const ExperimentPlan& plan,
                     const QueryPolicy& policy, uint64_t seed, const RoundHook& hook) {
  if (plan.label_budget < plan.n_init)
    throw ConfigError("run_single: label_budget < n_init");

  std::vector<std::string> pool_ids;
  pool_ids.reserve(data.train.size());
  for (const Sample& s : data.train) pool_ids.push_back(s.id);

  ALState state = init_state(pool_ids, plan.n_init, seed);

  ModelConfig mc = plan.model;
  mc.seed = derive_model_seed(seed);
  Model model = build_model(mc);
  AdamState opt = init_adam(model);

  TrainConfig tc = plan.train;
  tc.label_cap = std::min<int>(plan.label_budget, static_cast<int>(pool_ids.size()));

  RunResult run{policy, seed, {}};
  while (true) {
    const size_t before = state.labeled.size();
    RoundMetrics m =
        run_round(state, model, opt, data.train, data.val, data.test, policy, tc);
    if (hook) hook(policy, seed, model, m);
    run.history.push_back(std::move(m));
    if (state.labeled.size() == before) break;  // cap or pool exhausted
  }
  return run;
}

std::vector<RunResult> run_experiment(const DatasetSplits& data, const ExperimentPlan& plan,
                                      const RoundHook& hook) {
  if (plan.policies.empty() || plan.seeds.empty())
    throw ConfigError("run_experiment: needs at least one policy and one seed");
  std::vector<RunResult> results;
  for (const QueryPolicy& policy : plan.policies)
    for (uint64_t seed : plan.seeds)
      results.push_back(run_single(data, plan, policy, seed, hook));
  return results;
}

}  // namespace dsal
