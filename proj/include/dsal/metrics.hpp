// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dsal/tensor.hpp"

namespace dsal {

/// Binary segmentation mask. Values are strictly {0,1}.
struct Mask {
  int h = 0;
  int w = 0;
  std::vector<uint8_t> values;

  Mask() = default;
  Mask(int h_, int w_) : h(h_), w(w_), values(static_cast<size_t>(h_) * w_, 0) {}

  uint8_t& at(int y, int x) { return values[static_cast<size_t>(y) * w + x]; }
  uint8_t at(int y, int x) const { return values[static_cast<size_t>(y) * w + x]; }
  int64_t count() const;
};

/// Per-sample consistency record: DSC of the lower and middle heads against
/// the final head, their mean, and the real DSC against ground truth when it
/// is known.
struct ScoreRecord {
  std::string sample_id;
  double l_dsc = 0.0;
  double m_dsc = 0.0;
  double mean_score = 0.0;
  std::optional<double> r_dsc;
  int round = 0;
};

/// Dice coefficient 2|a∩b| / (|a|+|b|). Both masks empty gives 1.0, exactly
/// one empty gives 0.0. Throws on shape mismatch.
double dsc(const Mask& a, const Mask& b);

/// Foreground where the channel-1 probability strictly exceeds 0.5; a tie
/// goes to background. `probs` is [N,2,H,W].
Mask binarize(const Tensor<float>& probs, int batch_index = 0);

/// Assembles a ScoreRecord from already-binarized head outputs.
ScoreRecord consistency_from_masks(const Mask& mask_l, const Mask& mask_m,
                                   const Mask& mask_f, const std::string& sample_id,
                                   int round);

/// Mean DSC over prediction/ground-truth pairs. Throws on empty or
/// mismatched-length input.
double evaluate_masks(const std::vector<Mask>& pred, const std::vector<Mask>& gt);

/// Spearman rank correlation: Pearson correlation of rank vectors, ties
/// assigned average ranks. Needs length ≥ 3. Returns nullopt when either
/// rank vector has zero variance (correlation undefined).
std::optional<double> spearman_rank(const std::vector<double>& xs,
                                    const std::vector<double>& ys);

}  // namespace dsal
