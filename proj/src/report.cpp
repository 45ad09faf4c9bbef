// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <vector>

#include "dsal/errors.hpp"
#include "dsal/metrics.hpp"
#include "dsal/runner.hpp"
#include "dsal/svg_plot.hpp"

namespace fs = std::filesystem;

namespace dsal {

namespace {

struct CsvFile {
  std::string path;
  std::string config_hash;                 // from the leading comment, may be empty
  std::vector<std::vector<std::string>> rows;
  std::vector<int> row_lines;
};

[[noreturn]] void fail_at(const std::string& path, int line, const std::string& msg) {
  throw DataError(path + ":" + std::to_string(line) + ": " + msg);
}

CsvFile read_csv(const std::string& path, const std::string& expected_header) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  CsvFile f;
  f.path = path;
  std::string line;
  int lineno = 0;
  bool header_seen = false;
  const size_t ncols = 1 + std::count(expected_header.begin(), expected_header.end(), ',');
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string tag = "# config_hash=";
      if (line.rfind(tag, 0) == 0) f.config_hash = line.substr(tag.size());
      continue;
    }
    if (!header_seen) {
      if (line != expected_header)
        fail_at(path, lineno, "unexpected header (expected '" + expected_header + "')");
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line + ",") {
      if (c == ',') {
        fields.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (fields.size() != ncols)
      fail_at(path, lineno, "expected " + std::to_string(ncols) + " fields, got " +
                                std::to_string(fields.size()));
    f.rows.push_back(std::move(fields));
    f.row_lines.push_back(lineno);
  }
  if (!header_seen) fail_at(path, lineno ? lineno : 1, "missing header row");
  if (f.rows.empty()) fail_at(path, lineno, "no data rows");
  return f;
}

double field_double(const CsvFile& f, size_t row, size_t col) {
  const std::string& s = f.rows[row][col];
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    fail_at(f.path, f.row_lines[row], "'" + s + "' is not a number");
  return v;
}

long field_int(const CsvFile& f, size_t row, size_t col) {
  const std::string& s = f.rows[row][col];
  char* end = nullptr;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (end == s.c_str() || *end != '\0')
    fail_at(f.path, f.row_lines[row], "'" + s + "' is not an integer");
  return v;
}

struct MetricsRow {
  std::string policy;
  uint64_t seed;
  int round, labels;
  double test_dsc, val_dsc;
};

struct ScoreRow {
  std::string policy;
  int round;
  double mean_score, r_dsc;
};

std::string policy_color(const std::string& p) {
  if (p == "consistency_high") return "#1f77b4";
  if (p == "consistency_low") return "#2ca02c";
  if (p == "random") return "#d62728";
  if (p == "full") return "#555555";
  return "#9467bd";
}

std::string fmt4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(path.string() + ": cannot open for writing");
  out << content;
  if (!out) throw DataError(path.string() + ": write failed");
}

double mean_of(const std::vector<double>& v) {
  double acc = 0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

}  // namespace

void cmd_report(const ExperimentConfig& cfg) {
  const fs::path out_dir = cfg.output_dir;
  const CsvFile metrics =
      read_csv((out_dir / "metrics.csv").string(),
               "policy,seed,round,labels_used,test_dsc,val_dsc,mean_pool_score,"
               "spearman_score_vs_rdsc");

  std::vector<MetricsRow> mrows;
  for (size_t i = 0; i < metrics.rows.size(); ++i) {
    MetricsRow r;
    r.policy = metrics.rows[i][0];
    if (r.policy.empty()) fail_at(metrics.path, metrics.row_lines[i], "empty policy");
    r.seed = static_cast<uint64_t>(field_int(metrics, i, 1));
    r.round = static_cast<int>(field_int(metrics, i, 2));
    r.labels = static_cast<int>(field_int(metrics, i, 3));
    r.test_dsc = field_double(metrics, i, 4);
    r.val_dsc = field_double(metrics, i, 5);
    mrows.push_back(std::move(r));
  }

  // Learning curves: per policy, seed-mean test DSC at each label count,
  // with a min-max band across seeds. The full-annotation reference becomes
  // a dashed horizontal line.
  std::map<std::string, std::map<int, std::vector<double>>> curves;
  std::vector<double> full_values;
  int full_labels = 0;
  for (const MetricsRow& r : mrows) {
    if (r.policy == "full") {
      full_values.push_back(r.test_dsc);
      full_labels = r.labels;
    } else {
      curves[r.policy][r.labels].push_back(r.test_dsc);
    }
  }

  double lo = 1.0, hi = 0.0;
  int x_min = 0, x_max = 1;
  bool first = true;
  for (const auto& [policy, by_labels] : curves)
    for (const auto& [labels, vals] : by_labels) {
      for (double v : vals) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      x_min = first ? labels : std::min(x_min, labels);
      x_max = first ? labels : std::max(x_max, labels);
      first = false;
    }
  if (!full_values.empty()) {
    for (double v : full_values) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (curves.empty()) {
      x_min = 0;
      x_max = full_labels;
    }
  }
  if (first && full_values.empty()) fail_at(metrics.path, 0, "no plottable rows");

  Plot curve_plot("Test DSC vs annotation budget", "labels used", "test DSC");
  curve_plot.set_range(x_min, x_max, std::max(0.0, lo - 0.03), std::min(1.0, hi + 0.03));
  for (const auto& [policy, by_labels] : curves) {
    std::vector<double> xs, mean, mn, mx;
    bool any_band = false;
    for (const auto& [labels, vals] : by_labels) {
      xs.push_back(labels);
      mean.push_back(mean_of(vals));
      mn.push_back(*std::min_element(vals.begin(), vals.end()));
      mx.push_back(*std::max_element(vals.begin(), vals.end()));
      if (vals.size() > 1) any_band = true;
    }
    const std::string color = policy_color(policy);
    if (any_band) curve_plot.band(xs, mn, mx, color);
    curve_plot.line(xs, mean, color, policy);
  }
  if (!full_values.empty())
    curve_plot.hline(mean_of(full_values), policy_color("full"),
                     "full (" + std::to_string(full_labels) + " labels)");
  write_text(out_dir / "curves.svg", curve_plot.render());

  // Scatter: consistency score vs real DSC at the mid-training checkpoint.
  const CsvFile scores = read_csv((out_dir / "scores.csv").string(),
                                  "policy,seed,round,sample_id,l_dsc,m_dsc,mean_score,r_dsc");
  std::vector<ScoreRow> srows;
  for (size_t i = 0; i < scores.rows.size(); ++i) {
    ScoreRow r;
    r.policy = scores.rows[i][0];
    r.round = static_cast<int>(field_int(scores, i, 2));
    r.mean_score = field_double(scores, i, 6);
    r.r_dsc = field_double(scores, i, 7);
    srows.push_back(std::move(r));
  }

  // Round choice: the earliest round >= 2 present, else the latest round.
  // Within that round, the policy with the most records wins (ties to the
  // lexicographically first name).
  int target_round = -1;
  int max_round = 0;
  std::set<int> rounds_present;
  for (const ScoreRow& r : srows) {
    rounds_present.insert(r.round);
    max_round = std::max(max_round, r.round);
  }
  for (int r : rounds_present)
    if (r >= 2) {
      target_round = r;
      break;
    }
  if (target_round < 0) target_round = max_round;

  std::map<std::string, size_t> per_policy;
  for (const ScoreRow& r : srows)
    if (r.round == target_round && !std::isnan(r.r_dsc)) per_policy[r.policy] += 1;
  std::string target_policy;
  size_t best_n = 0;
  for (const auto& [policy, n] : per_policy)
    if (n > best_n) {
      target_policy = policy;
      best_n = n;
    }

  std::vector<double> sx, sy;
  for (const ScoreRow& r : srows)
    if (r.round == target_round && r.policy == target_policy && !std::isnan(r.r_dsc)) {
      sx.push_back(r.r_dsc);
      sy.push_back(r.mean_score);
    }

  Plot scatter_plot("Consistency score vs real DSC", "real DSC (vs ground truth)",
                    "mean of L-DSC and M-DSC");
  double smin = 1.0, smax = 0.0;
  for (size_t i = 0; i < sx.size(); ++i) {
    smin = std::min({smin, sx[i], sy[i]});
    smax = std::max({smax, sx[i], sy[i]});
  }
  if (sx.empty()) {
    smin = 0.0;
    smax = 1.0;
  }
  scatter_plot.set_range(std::max(0.0, smin - 0.05), std::min(1.0, smax + 0.05),
                         std::max(0.0, smin - 0.05), std::min(1.0, smax + 0.05));
  std::string note = "policy " + (target_policy.empty() ? "?" : target_policy) + ", round " +
                     std::to_string(target_round) + ": ";
  if (sx.size() >= 3) {
    const std::optional<double> rho = spearman_rank(sy, sx);
    note += rho ? "Spearman rho = " + fmt4(*rho) : "Spearman rho undefined (constant ranks)";
    note += " (n=" + std::to_string(sx.size()) + ")";
  } else {
    note += "too few points for a rank correlation";
  }
  if (!sx.empty())
    scatter_plot.points(sx, sy, policy_color(target_policy), target_policy);
  scatter_plot.annotation(note);
  write_text(out_dir / "scatter.svg", scatter_plot.render());

  // Summary: smallest label count reaching 95% of the full-annotation DSC.
  std::string summary;
  summary += "experiment report\n";
  summary += "config hash: " +
             (metrics.config_hash.empty() ? std::string("unknown") : metrics.config_hash) +
             "\n\n";
  if (!full_values.empty()) {
    const double full_mean = mean_of(full_values);
    const double target = 0.95 * full_mean;
    summary += "full-annotation reference: mean test DSC " + fmt4(full_mean) + " over " +
               std::to_string(full_values.size()) + " seed(s) at " +
               std::to_string(full_labels) + " labels\n";
    summary += "95% target: " + fmt4(target) + "\n\n";
    for (const auto& [policy, by_labels] : curves) {
      int reached = -1;
      double reached_val = 0, best = -1;
      int best_labels = 0;
      for (const auto& [labels, vals] : by_labels) {
        const double m = mean_of(vals);
        if (m > best) {
          best = m;
          best_labels = labels;
        }
        if (reached < 0 && m >= target) {
          reached = labels;
          reached_val = m;
        }
      }
      if (reached >= 0)
        summary += "policy " + policy + ": reaches the target at " + std::to_string(reached) +
                   " labels (mean test DSC " + fmt4(reached_val) + ")\n";
      else
        summary += "policy " + policy + ": not reached within budget (best " + fmt4(best) +
                   " at " + std::to_string(best_labels) + " labels)\n";
    }
  } else {
    summary += "no full-annotation reference rows; 95% targets unavailable\n";
    for (const auto& [policy, by_labels] : curves) {
      double best = -1;
      int best_labels = 0;
      for (const auto& [labels, vals] : by_labels) {
        const double m = mean_of(vals);
        if (m > best) {
          best = m;
          best_labels = labels;
        }
      }
      summary += "policy " + policy + ": best mean test DSC " + fmt4(best) + " at " +
                 std::to_string(best_labels) + " labels\n";
    }
  }
  summary += "\nscatter: " + note + "\n";
  write_text(out_dir / "summary.txt", summary);
}

}  // namespace dsal
