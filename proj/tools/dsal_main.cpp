// SPDX-License-Identifier: Apache-2.0
// Command line entry point: generate | run | report.
#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "dsal/config.hpp"
#include "dsal/errors.hpp"
#include "dsal/runner.hpp"

namespace {

struct CommonOpts {
  std::string config_path;
  std::string output;
  long long seed_override = -1;
};

void add_common(CLI::App* cmd, CommonOpts* opts) {
  cmd->add_option("--config", opts->config_path, "experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--output", opts->output, "override the output directory");
  cmd->add_option("--seed-override", opts->seed_override, "override the configured seed(s)")
      ->check(CLI::NonNegativeNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"deeply supervised active learning for binary segmentation"};
  app.require_subcommand(1);

  CommonOpts gen_opts, run_opts, rep_opts;
  std::string policy_flag;

  CLI::App* gen = app.add_subcommand("generate", "synthesize the dataset");
  add_common(gen, &gen_opts);

  CLI::App* run = app.add_subcommand("run", "execute the active learning experiment");
  add_common(run, &run_opts);
  run->add_option("--policy", policy_flag,
                  "run a single policy: consistency_high, consistency_low, random or full");

  CLI::App* rep = app.add_subcommand("report", "render plots and the summary");
  add_common(rep, &rep_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) {
      dsal::ExperimentConfig cfg = dsal::load_experiment_config(gen_opts.config_path);
      if (!gen_opts.output.empty()) cfg.dataset_dir = gen_opts.output;
      if (gen_opts.seed_override >= 0)
        cfg.dataset.seed = static_cast<uint64_t>(gen_opts.seed_override);
      dsal::cmd_generate(cfg);
      std::printf("dataset written to %s\n", cfg.dataset_dir.c_str());
    } else if (run->parsed()) {
      dsal::ExperimentConfig cfg = dsal::load_experiment_config(run_opts.config_path);
      if (!run_opts.output.empty()) cfg.output_dir = run_opts.output;
      if (run_opts.seed_override >= 0)
        cfg.seeds = {static_cast<uint64_t>(run_opts.seed_override)};
      if (!policy_flag.empty()) {
        if (policy_flag == "full") {
          cfg.policies.clear();
          cfg.full_reference = true;
        } else {
          dsal::QueryPolicy p;
          p.kind = dsal::parse_policy(policy_flag);
          p.k = cfg.k;
          cfg.policies = {p};
          cfg.full_reference = false;
        }
      }
      dsal::cmd_run(cfg, dsal::thread_cap_from_env());
      std::printf("results written to %s\n", cfg.output_dir.c_str());
    } else {
      dsal::ExperimentConfig cfg = dsal::load_experiment_config(rep_opts.config_path);
      if (!rep_opts.output.empty()) cfg.output_dir = rep_opts.output;
      dsal::cmd_report(cfg);
      std::printf("report written to %s\n", cfg.output_dir.c_str());
    }
  } catch (const dsal::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const dsal::DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const dsal::DivergenceError& e) {
    std::fprintf(stderr, "divergence: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
