// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include "dsal/config.hpp"
#include "dsal/data.hpp"

namespace dsal {

/// Writes the generated splits into cfg.dataset_dir as
/// `<split>/<id>.pgm` + `<split>/<id>_mask.pgm`, then the manifest. The
/// manifest is written last so a failed generation leaves no usable dataset.
void cmd_generate(const ExperimentConfig& cfg);

/// Loads a dataset written by cmd_generate. Throws DataError if the manifest
/// is missing or any pair fails to load.
DatasetSplits load_dataset(const std::string& dir);

/// Executes every configured (policy, seed) run plus the optional
/// full-annotation reference, writing metrics.csv, scores.csv and per-round
/// checkpoints into cfg.output_dir. `threads` caps concurrent runs; output
/// bytes do not depend on it. A divergence aborts with the completed rows
/// already flushed.
void cmd_run(const ExperimentConfig& cfg, int threads);

/// Reads metrics.csv and scores.csv from cfg.output_dir and writes
/// curves.svg, scatter.svg and summary.txt next to them.
void cmd_report(const ExperimentConfig& cfg);

/// DSAL_THREADS when set (must be a positive integer), otherwise the
/// hardware concurrency.
int thread_cap_from_env();

}  // namespace dsal
