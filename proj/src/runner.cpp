// SPDX-License-Identifier: Apache-2.0
#include "dsal/runner.hpp"

#include <atomic>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <thread>
#include <vector>

#include "dsal/active_loop.hpp"
#include "dsal/errors.hpp"
#include "dsal/metrics.hpp"

namespace fs = std::filesystem;

namespace dsal {

namespace {

constexpr const char* kManifestMagic = "dsal-dataset-v1";

std::string fmt6(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void make_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw DataError(p.string() + ": cannot create directory: " + ec.message());
}

double mean_pool_score(const RoundMetrics& m) {
  if (m.scores.empty()) return std::nan("");
  double acc = 0;
  for (const ScoreRecord& r : m.scores) acc += r.mean_score;
  return acc / static_cast<double>(m.scores.size());
}

double pool_spearman(const RoundMetrics& m) {
  std::vector<double> xs, ys;
  for (const ScoreRecord& r : m.scores)
    if (r.r_dsc) {
      xs.push_back(r.mean_score);
      ys.push_back(*r.r_dsc);
    }
  if (xs.size() < 3) return std::nan("");
  const std::optional<double> rho = spearman_rank(xs, ys);
  return rho ? *rho : std::nan("");
}

std::string metrics_row(const std::string& policy, uint64_t seed, const RoundMetrics& m) {
  return policy + "," + std::to_string(seed) + "," + std::to_string(m.round) + "," +
         std::to_string(m.labels_used) + "," + fmt6(m.test_dsc) + "," + fmt6(m.val_dsc) +
         "," + fmt6(mean_pool_score(m)) + "," + fmt6(pool_spearman(m)) + "\n";
}

std::string score_rows(const std::string& policy, uint64_t seed, const RoundMetrics& m) {
  std::string out;
  const std::string prefix = policy + "," + std::to_string(seed) + ",";
  for (const ScoreRecord& r : m.scores) {
    out += prefix + std::to_string(m.round) + "," + r.sample_id + "," + fmt6(r.l_dsc) +
           "," + fmt6(r.m_dsc) + "," + fmt6(r.mean_score) + "," +
           fmt6(r.r_dsc ? *r.r_dsc : std::nan("")) + "\n";
  }
  return out;
}

void write_split(const DatasetSplits& splits, const fs::path& dir) {
  for (const auto* split : {&splits.train, &splits.val, &splits.test})
    for (const Sample& s : *split) {
      const std::string sub = s.id.substr(0, s.id.find('_'));
      save_pair(s, (dir / sub).string());
    }
}

}  // namespace

void cmd_generate(const ExperimentConfig& cfg) {
  const DatasetSplits splits = make_dataset(cfg.dataset);
  const fs::path dir = cfg.dataset_dir;
  make_dirs(dir / "train");
  make_dirs(dir / "val");
  make_dirs(dir / "test");
  write_split(splits, dir);

  // Manifest last: its presence marks a complete dataset.
  const fs::path manifest = dir / "manifest.txt";
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw DataError(manifest.string() + ": cannot open for writing");
  out << kManifestMagic << "\n";
  out << "seed " << cfg.dataset.seed << "\n";
  out << "resolution " << cfg.dataset.height << " " << cfg.dataset.width << "\n";
  auto list = [&](const char* name, const std::vector<Sample>& split) {
    out << "split " << name << " " << split.size() << "\n";
    for (const Sample& s : split) out << s.id << "\n";
  };
  list("train", splits.train);
  list("val", splits.val);
  list("test", splits.test);
  if (!out) throw DataError(manifest.string() + ": write failed");
}

DatasetSplits load_dataset(const std::string& dir) {
  const fs::path base = dir;
  const std::string mpath = (base / "manifest.txt").string();
  std::ifstream in(mpath);
  if (!in)
    throw DataError(mpath + ": cannot open manifest (run the generate command first)");

  int lineno = 0;
  std::string line;
  auto next_line = [&]() -> std::string& {
    if (!std::getline(in, line))
      throw DataError(mpath + ":" + std::to_string(lineno + 1) + ": unexpected end of manifest");
    ++lineno;
    return line;
  };
  auto fail = [&](const std::string& msg) -> void {
    throw DataError(mpath + ":" + std::to_string(lineno) + ": " + msg);
  };

  if (next_line() != kManifestMagic) fail("bad manifest magic");
  uint64_t seed = 0;
  if (std::sscanf(next_line().c_str(), "seed %llu",
                  reinterpret_cast<unsigned long long*>(&seed)) != 1)
    fail("expected 'seed <n>'");
  int h = 0, w = 0;
  if (std::sscanf(next_line().c_str(), "resolution %d %d", &h, &w) != 2 || h < 1 || w < 1)
    fail("expected 'resolution <h> <w>'");

  DatasetSplits splits;
  for (const auto& [name, dst, labeled] :
       {std::tuple<const char*, std::vector<Sample>*, bool>{"train", &splits.train, false},
        {"val", &splits.val, true},
        {"test", &splits.test, true}}) {
    char got[16];
    long count = -1;
    if (std::sscanf(next_line().c_str(), "split %15s %ld", got, &count) != 2 ||
        std::string(got) != name || count < 0)
      fail(std::string("expected 'split ") + name + " <count>'");
    dst->reserve(static_cast<size_t>(count));
    for (long i = 0; i < count; ++i) {
      const std::string id = next_line();
      if (id.empty()) fail("empty sample id");
      Sample s = load_pair((base / name / (id + ".pgm")).string(),
                           (base / name / (id + "_mask.pgm")).string(), id);
      if (s.image.dim(1) != h || s.image.dim(2) != w)
        throw DataError((base / name / (id + ".pgm")).string() + ": sample is " +
                        std::to_string(s.image.dim(2)) + "x" + std::to_string(s.image.dim(1)) +
                        " but manifest says " + std::to_string(w) + "x" + std::to_string(h));
      s.labeled = labeled;
      dst->push_back(std::move(s));
    }
  }
  if (std::getline(in, line)) {
    ++lineno;
    fail("trailing content after manifest payload");
  }
  return splits;
}

int thread_cap_from_env() {
  const char* env = std::getenv("DSAL_THREADS");
  if (!env || !*env) return std::max(1u, std::thread::hardware_concurrency());
  char* end = nullptr;
  const long v = std::strtol(env, &end, 10);
  if (*end != '\0' || v < 1)
    throw ConfigError(std::string("DSAL_THREADS='") + env + "' must be a positive integer");
  return static_cast<int>(v);
}

void cmd_run(const ExperimentConfig& cfg, int threads) {
  if (cfg.policies.empty() && !cfg.full_reference)
    throw ConfigError("cmd_run: nothing to run (no policies, full_reference = false)");
  if (cfg.seeds.empty()) throw ConfigError("cmd_run: no seeds configured");
  if (threads < 1) throw ConfigError("cmd_run: thread cap must be >= 1");

  const DatasetSplits data = load_dataset(cfg.dataset_dir);
  if (static_cast<int>(data.train.size()) != cfg.dataset.n_train ||
      static_cast<int>(data.val.size()) != cfg.dataset.n_val ||
      static_cast<int>(data.test.size()) != cfg.dataset.n_test)
    throw DataError(cfg.dataset_dir + ": on-disk split sizes " +
                    std::to_string(data.train.size()) + "/" + std::to_string(data.val.size()) +
                    "/" + std::to_string(data.test.size()) +
                    " do not match the config; regenerate the dataset");
  if (!data.train.empty() && (data.train[0].image.dim(1) != cfg.dataset.height ||
                              data.train[0].image.dim(2) != cfg.dataset.width))
    throw DataError(cfg.dataset_dir + ": on-disk resolution does not match the config");

  const ExperimentPlan plan = make_plan(cfg);
  const fs::path out_dir = cfg.output_dir;
  const fs::path ckpt_dir = out_dir / "checkpoints";
  make_dirs(ckpt_dir);

  struct Job {
    bool full;
    QueryPolicy policy;
    uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const QueryPolicy& p : cfg.policies)
    for (uint64_t s : cfg.seeds) jobs.push_back({false, p, s});
  if (cfg.full_reference)
    for (uint64_t s : cfg.seeds) jobs.push_back({true, QueryPolicy{}, s});

  std::ofstream mcsv(out_dir / "metrics.csv", std::ios::trunc);
  std::ofstream scsv(out_dir / "scores.csv", std::ios::trunc);
  if (!mcsv || !scsv)
    throw DataError(out_dir.string() + ": cannot open csv outputs for writing");
  const std::string hash = config_hash(cfg);
  mcsv << "# config_hash=" << hash << "\n"
       << "policy,seed,round,labels_used,test_dsc,val_dsc,mean_pool_score,"
          "spearman_score_vs_rdsc\n";
  scsv << "# config_hash=" << hash << "\n"
       << "policy,seed,round,sample_id,l_dsc,m_dsc,mean_score,r_dsc\n";

  struct JobOut {
    std::string metrics, scores;
  };
  std::vector<JobOut> outs(jobs.size());
  std::vector<std::exception_ptr> errs(jobs.size());
  std::vector<char> done(jobs.size(), 0);
  std::mutex mu;
  std::condition_variable cv;
  std::atomic<size_t> next_job{0};
  std::atomic<bool> stop{false};

  auto run_job = [&](const Job& job) {
    JobOut jo;
    const std::string pname = job.full ? "full" : policy_name(job.policy.kind);
    auto ckpt_path = [&](int round) {
      return (ckpt_dir / (pname + "_seed" + std::to_string(job.seed) + "_round" +
                          std::to_string(round) + ".ckpt"))
          .string();
    };
    if (job.full) {
      const FullReference fr =
          run_full_reference(data, plan, job.seed, cfg.full_reference_epochs);
      save_checkpoint(ckpt_path(0), fr.model, 0);
      jo.metrics += metrics_row(pname, job.seed, fr.metrics);
    } else {
      const RoundHook hook = [&](const QueryPolicy&, uint64_t seed, const Model& m,
                                 const RoundMetrics& rm) {
        save_checkpoint(ckpt_path(rm.round), m, static_cast<uint32_t>(rm.round));
        jo.metrics += metrics_row(pname, seed, rm);
        jo.scores += score_rows(pname, seed, rm);
      };
      run_single(data, plan, job.policy, job.seed, hook);
    }
    return jo;
  };

  auto worker = [&] {
    while (!stop.load()) {
      const size_t i = next_job.fetch_add(1);
      if (i >= jobs.size()) return;
      try {
        JobOut jo = run_job(jobs[i]);
        std::lock_guard<std::mutex> lk(mu);
        outs[i] = std::move(jo);
        done[i] = 1;
      } catch (...) {
        std::lock_guard<std::mutex> lk(mu);
        errs[i] = std::current_exception();
        done[i] = 1;
      }
      cv.notify_all();
    }
  };

  const int n_workers = std::max(1, std::min<int>(threads, static_cast<int>(jobs.size())));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<size_t>(n_workers));
  for (int t = 0; t < n_workers; ++t) pool.emplace_back(worker);

  // Jobs flush strictly in plan order so the CSV bytes never depend on the
  // thread cap. A failed job still leaves every earlier row on disk.
  std::exception_ptr first_err;
  {
    std::unique_lock<std::mutex> lk(mu);
    for (size_t i = 0; i < jobs.size(); ++i) {
      cv.wait(lk, [&] { return done[i] != 0; });
      if (errs[i]) {
        first_err = errs[i];
        break;
      }
      mcsv << outs[i].metrics;
      scsv << outs[i].scores;
      mcsv.flush();
      scsv.flush();
    }
  }
  if (first_err) stop.store(true);
  for (std::thread& t : pool) t.join();
  if (first_err) std::rethrow_exception(first_err);
  if (!mcsv || !scsv) throw DataError(out_dir.string() + ": csv write failed");
}

}  // namespace dsal
