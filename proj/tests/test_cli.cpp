// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "dsal/config.hpp"
#include "dsal/errors.hpp"
#include "dsal/runner.hpp"
#include "dsal/segnet.hpp"

namespace fs = std::filesystem;
using namespace dsal;

namespace {

fs::path fresh_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path write_config(const fs::path& dir, const std::string& body,
                      const char* name = "exp.ini") {
  const fs::path p = dir / name;
  std::ofstream out(p, std::ios::trunc);
  out << body;
  return p;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

// Small end-to-end experiment: 16x16 data, depth-2 model, two policies,
// two seeds, two rounds each.
std::string tiny_experiment_body(const fs::path& data_dir, const fs::path& out_dir) {
  std::ostringstream cfg;
  cfg << "[dataset]\n"
      << "height = 16\nwidth = 16\n"
      << "n_train = 8\nn_val = 2\nn_test = 2\nseed = 5\n"
      << "[model]\n"
      << "depth = 2\nbase_channels = 2\n"
      << "[loop]\n"
      << "policies = consistency_high,random\n"
      << "seeds = 1,2\n"
      << "n_init = 2\nk = 2\nlabel_budget = 4\n"
      << "epochs_per_round = 1\nbatch_size = 4\n"
      << "full_reference = true\nfull_reference_epochs = 2\n"
      << "[output]\n"
      << "dataset_dir = " << data_dir.string() << "\n"
      << "dir = " << out_dir.string() << "\n";
  return cfg.str();
}

#ifdef DSAL_BIN_PATH
int run_cli(const std::string& args) {
  const std::string cmd = std::string(DSAL_BIN_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}
#endif

}  // namespace

TEST_CASE("empty config yields the documented defaults") {
  const fs::path dir = fresh_dir("dsal_cli_defaults");
  const ExperimentConfig cfg = load_experiment_config(write_config(dir, "").string());
  CHECK(cfg.dataset.n_train == 139);
  CHECK(cfg.dataset.n_val == 20);
  CHECK(cfg.dataset.n_test == 50);
  CHECK(cfg.dataset.height == 64);
  CHECK(cfg.model.depth == 3);
  CHECK(cfg.model.base_channels == 8);
  CHECK(cfg.model.input_h == 64);
  CHECK(cfg.model.loss_weights.alpha_l == 0.1f);
  CHECK(cfg.model.loss_weights.alpha_m == 0.3f);
  CHECK(cfg.model.loss_weights.alpha_f == 0.6f);
  REQUIRE(cfg.policies.size() == 3);
  CHECK(cfg.policies[0].kind == PolicyKind::consistency_high);
  CHECK(cfg.policies[1].kind == PolicyKind::consistency_low);
  CHECK(cfg.policies[2].kind == PolicyKind::random);
  CHECK(cfg.seeds == std::vector<uint64_t>{1, 2, 3, 4, 5});
  CHECK(cfg.n_init == 10);
  CHECK(cfg.k == 10);
  CHECK(cfg.label_budget == 60);
  CHECK(cfg.epochs_per_round == 20);
  CHECK(cfg.full_reference);
  CHECK(cfg.full_reference_epochs == 100);
}

TEST_CASE("config errors carry path and line number") {
  const fs::path dir = fresh_dir("dsal_cli_badcfg");

  const auto expect_throw = [&](const std::string& body, const char* needle) {
    const fs::path p = write_config(dir, body);
    try {
      load_experiment_config(p.string());
      FAIL("expected ConfigError for: " << body);
    } catch (const ConfigError& e) {
      const std::string what = e.what();
      INFO("message: " << what);
      CHECK(what.find(needle) != std::string::npos);
      CHECK(what.find(p.filename().string()) != std::string::npos);
    }
  };

  expect_throw("[dataset]\nnope = 3\n", ":2");                  // unknown key
  expect_throw("[nonsense]\n", ":1");                           // unknown section
  expect_throw("[loop]\nn_init = ten\n", ":2");                 // bad integer
  expect_throw("[dataset]\nseed = 1\nseed = 2\n", ":3");        // duplicate key
  expect_throw("[loop]\nn_init = 50\nlabel_budget = 20\n",
               "label_budget");                                  // cross-field
  expect_throw("[loop]\npolicies = entropy\n", "entropy");      // unknown policy
  expect_throw("[dataset]\nheight = 60\nwidth = 60\n", "divisible");  // model/depth clash
  CHECK_THROWS_AS(load_experiment_config((dir / "missing.ini").string()), ConfigError);
}

TEST_CASE("config hash is stable and ignores output locations") {
  const fs::path dir = fresh_dir("dsal_cli_hash");
  ExperimentConfig a = load_experiment_config(write_config(dir, "").string());
  const std::string ha = config_hash(a);
  CHECK(ha.size() == 16);
  CHECK(ha.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(config_hash(a) == ha);

  ExperimentConfig b = a;
  b.output_dir = "elsewhere";
  b.dataset_dir = "other_data";
  CHECK(config_hash(b) == ha);

  b.label_budget = 50;
  CHECK(config_hash(b) != ha);
  ExperimentConfig c = a;
  c.dataset.noise_sigma = 0.1;
  CHECK(config_hash(c) != ha);
}

TEST_CASE("cmd_generate writes 209 pairs, a manifest, and is reproducible") {
  const fs::path data_dir = fresh_dir("dsal_cli_gen");
  const fs::path cfg_dir = fresh_dir("dsal_cli_gen_cfg");
  const std::string body = "[output]\ndataset_dir = " + data_dir.string() + "\n";
  const ExperimentConfig cfg = load_experiment_config(write_config(cfg_dir, body).string());
  cmd_generate(cfg);

  size_t images = 0, masks = 0;
  for (const char* split : {"train", "val", "test"})
    for (const auto& e : fs::directory_iterator(data_dir / split)) {
      const std::string name = e.path().filename().string();
      if (name.find("_mask.pgm") != std::string::npos)
        ++masks;
      else
        ++images;
    }
  CHECK(images == 209);
  CHECK(masks == 209);
  CHECK(fs::exists(data_dir / "manifest.txt"));

  const std::string manifest1 = read_file(data_dir / "manifest.txt");
  const std::string sample1 = read_file(data_dir / "train" / "train_000.pgm");
  cmd_generate(cfg);
  CHECK(read_file(data_dir / "manifest.txt") == manifest1);
  CHECK(read_file(data_dir / "train" / "train_000.pgm") == sample1);

  const DatasetSplits loaded = load_dataset(data_dir.string());
  CHECK(loaded.train.size() == 139);
  CHECK(loaded.val.size() == 20);
  CHECK(loaded.test.size() == 50);
  CHECK(loaded.train[0].image.shape == Shape{1, 64, 64});
  CHECK_FALSE(loaded.train[0].labeled);
  CHECK(loaded.val[0].labeled);

  CHECK_THROWS_AS(load_dataset((cfg_dir / "nowhere").string()), DataError);
}

TEST_CASE("cmd_run emits the documented CSV schema deterministically") {
  const fs::path base = fresh_dir("dsal_cli_run");
  const fs::path data_dir = base / "data";
  const fs::path out1 = base / "out1";
  const fs::path out2 = base / "out2";
  const fs::path cfgp = write_config(base, tiny_experiment_body(data_dir, out1));

  ExperimentConfig cfg = load_experiment_config(cfgp.string());
  cmd_generate(cfg);
  cmd_run(cfg, 1);

  const std::string metrics = read_file(out1 / "metrics.csv");
  const auto mlines = lines_of(metrics);
  REQUIRE(mlines.size() >= 3);
  CHECK(mlines[0] == "# config_hash=" + config_hash(cfg));
  CHECK(mlines[1] ==
        "policy,seed,round,labels_used,test_dsc,val_dsc,mean_pool_score,"
        "spearman_score_vs_rdsc");

  // 2 policies x 2 seeds x 2 rounds + 2 full rows.
  CHECK(mlines.size() == 2 + 8 + 2);

  // labels_used strictly increases within each (policy, seed).
  std::map<std::string, int> last_labels;
  int full_rows = 0;
  for (size_t i = 2; i < mlines.size(); ++i) {
    std::istringstream row(mlines[i]);
    std::string policy, seed, round, labels;
    std::getline(row, policy, ',');
    std::getline(row, seed, ',');
    std::getline(row, round, ',');
    std::getline(row, labels, ',');
    if (policy == "full") {
      ++full_rows;
      CHECK(labels == "8");
      continue;
    }
    const std::string key = policy + "/" + seed;
    const int l = std::stoi(labels);
    if (last_labels.count(key)) CHECK(l > last_labels[key]);
    last_labels[key] = l;
  }
  CHECK(full_rows == 2);
  CHECK(last_labels.size() == 4);

  // Scores CSV: same hash comment, then per-sample rows.
  const auto slines = lines_of(read_file(out1 / "scores.csv"));
  CHECK(slines[0] == mlines[0]);
  CHECK(slines[1] == "policy,seed,round,sample_id,l_dsc,m_dsc,mean_score,r_dsc");
  CHECK(slines.size() > 2);
  for (size_t i = 2; i < slines.size(); ++i)
    CHECK(std::count(slines[i].begin(), slines[i].end(), ',') == 7);

  // Checkpoints for every committed round plus the full reference.
  CHECK(fs::exists(out1 / "checkpoints" / "consistency_high_seed1_round0.ckpt"));
  CHECK(fs::exists(out1 / "checkpoints" / "consistency_high_seed1_round1.ckpt"));
  CHECK(fs::exists(out1 / "checkpoints" / "random_seed2_round1.ckpt"));
  CHECK(fs::exists(out1 / "checkpoints" / "full_seed1_round0.ckpt"));
  const Checkpoint ck =
      load_checkpoint((out1 / "checkpoints" / "consistency_high_seed1_round1.ckpt").string());
  CHECK(ck.round == 1);
  CHECK(ck.model.config.input_h == 16);

  // Byte-identical rerun, independent of the thread cap.
  cfg.output_dir = out2.string();
  cmd_run(cfg, 3);
  CHECK(read_file(out2 / "metrics.csv") == metrics);
  CHECK(read_file(out2 / "scores.csv") == read_file(out1 / "scores.csv"));

  // Reports render from the written CSVs.
  cmd_report(cfg);
  const std::string curves = read_file(out2 / "curves.svg");
  CHECK(curves.find("<svg") != std::string::npos);
  CHECK(curves.find("consistency_high") != std::string::npos);
  CHECK(curves.find("random") != std::string::npos);
  CHECK(curves.find("full") != std::string::npos);
  const std::string scatter = read_file(out2 / "scatter.svg");
  CHECK(scatter.find("<svg") != std::string::npos);
  const std::string summary = read_file(out2 / "summary.txt");
  CHECK(summary.find(config_hash(cfg)) != std::string::npos);
  CHECK(summary.find("full-annotation reference") != std::string::npos);
  CHECK(summary.find("consistency_high") != std::string::npos);
}

TEST_CASE("cmd_run rejects a stale or missing dataset") {
  const fs::path base = fresh_dir("dsal_cli_stale");
  const fs::path data_dir = base / "data";
  const fs::path cfgp = write_config(base, tiny_experiment_body(data_dir, base / "out"));
  ExperimentConfig cfg = load_experiment_config(cfgp.string());
  CHECK_THROWS_AS(cmd_run(cfg, 1), DataError);  // nothing generated yet

  cmd_generate(cfg);
  cfg.dataset.n_train = 9;  // config no longer matches the on-disk split
  CHECK_THROWS_AS(cmd_run(cfg, 1), DataError);
}

TEST_CASE("report computes rho 1.0 on perfectly correlated scores") {
  const fs::path out = fresh_dir("dsal_cli_rho");
  std::ofstream m(out / "metrics.csv");
  m << "# config_hash=0123456789abcdef\n"
    << "policy,seed,round,labels_used,test_dsc,val_dsc,mean_pool_score,"
       "spearman_score_vs_rdsc\n"
    << "consistency_high,1,2,30,0.800000,0.810000,0.700000,1.000000\n";
  m.close();
  std::ofstream s(out / "scores.csv");
  s << "# config_hash=0123456789abcdef\n"
    << "policy,seed,round,sample_id,l_dsc,m_dsc,mean_score,r_dsc\n";
  for (int i = 0; i < 6; ++i) {
    const double r = 0.4 + 0.08 * i;
    s << "consistency_high,1,2,train_00" << i << "," << r << "," << r << "," << r << ","
      << 0.3 + 0.1 * i << "\n";
  }
  s.close();

  ExperimentConfig cfg;
  cfg.output_dir = out.string();
  cmd_report(cfg);
  const std::string scatter = read_file(out / "scatter.svg");
  CHECK(scatter.find("Spearman rho = 1.0000") != std::string::npos);
  CHECK(scatter.find("(n=6)") != std::string::npos);
  // No full rows: the summary states the reference is unavailable.
  const std::string summary = read_file(out / "summary.txt");
  CHECK(summary.find("no full-annotation reference") != std::string::npos);
}

TEST_CASE("report rejects malformed CSV with a line number") {
  const fs::path out = fresh_dir("dsal_cli_badcsv");
  ExperimentConfig cfg;
  cfg.output_dir = out.string();

  CHECK_THROWS_AS(cmd_report(cfg), DataError);  // missing files entirely

  const auto write_metrics = [&](const std::string& body) {
    std::ofstream m(out / "metrics.csv", std::ios::trunc);
    m << body;
  };
  const auto expect_line = [&](const char* needle) {
    try {
      cmd_report(cfg);
      FAIL("expected DataError");
    } catch (const DataError& e) {
      const std::string what = e.what();
      INFO("message: " << what);
      CHECK(what.find(needle) != std::string::npos);
    }
  };

  write_metrics("policy,seed,wrong_header\n");
  expect_line("metrics.csv:1");

  write_metrics(
      "policy,seed,round,labels_used,test_dsc,val_dsc,mean_pool_score,"
      "spearman_score_vs_rdsc\n");
  expect_line("no data rows");

  write_metrics(
      "policy,seed,round,labels_used,test_dsc,val_dsc,mean_pool_score,"
      "spearman_score_vs_rdsc\n"
      "random,1,0,10,0.5\n");
  expect_line("metrics.csv:2");

  write_metrics(
      "policy,seed,round,labels_used,test_dsc,val_dsc,mean_pool_score,"
      "spearman_score_vs_rdsc\n"
      "random,one,0,10,0.5,0.5,0.5,nan\n");
  expect_line("metrics.csv:2");
}

TEST_CASE("DSAL_THREADS is validated") {
  setenv("DSAL_THREADS", "3", 1);
  CHECK(thread_cap_from_env() == 3);
  setenv("DSAL_THREADS", "0", 1);
  CHECK_THROWS_AS(thread_cap_from_env(), ConfigError);
  setenv("DSAL_THREADS", "many", 1);
  CHECK_THROWS_AS(thread_cap_from_env(), ConfigError);
  unsetenv("DSAL_THREADS");
  CHECK(thread_cap_from_env() >= 1);
}

#ifdef DSAL_BIN_PATH
TEST_CASE("binary exit codes distinguish the error classes") {
  const fs::path base = fresh_dir("dsal_cli_exit");
  const fs::path data_dir = base / "data";
  const fs::path out_dir = base / "out";
  const fs::path good = write_config(base, tiny_experiment_body(data_dir, out_dir));
  const fs::path bad = write_config(base, "[loop]\nn_init = ten\n", "bad.ini");

  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") == 2);                                     // missing subcommand
  CHECK(run_cli("run") == 2);                                  // missing --config
  CHECK(run_cli("generate --config " + bad.string()) == 2);    // config error
  CHECK(run_cli("run --config " + good.string()) == 3);        // dataset missing
  CHECK(run_cli("report --config " + good.string()) == 3);     // csv missing

  CHECK(run_cli("generate --config " + good.string()) == 0);
  CHECK(run_cli("run --config " + good.string() +
                " --policy random --seed-override 9") == 0);
  CHECK(run_cli("report --config " + good.string()) == 0);

  // The overridden run wrote only random-policy rows for seed 9.
  const auto mlines = lines_of(read_file(out_dir / "metrics.csv"));
  REQUIRE(mlines.size() > 2);
  for (size_t i = 2; i < mlines.size(); ++i) {
    CHECK(mlines[i].rfind("random,9,", 0) == 0);
  }

  CHECK(run_cli("run --config " + good.string() + " --policy entropy") == 2);
  CHECK(run_cli("frobnicate --config " + good.string()) == 2);
}
#endif
