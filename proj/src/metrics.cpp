// SPDX-License-Identifier: Apache-2.0
#include "dsal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace dsal {

int64_t Mask::count() const {
  int64_t n = 0;
  for (uint8_t v : values) n += v;
  return n;
}

double dsc(const Mask& a, const Mask& b) {
  if (a.h != b.h || a.w != b.w)
    throw std::invalid_argument("dsc: mask shapes differ (" + std::to_string(a.h) + "x" +
                                std::to_string(a.w) + " vs " + std::to_string(b.h) + "x" +
                                std::to_string(b.w) + ")");
  int64_t inter = 0, ca = 0, cb = 0;
  for (size_t i = 0; i < a.values.size(); ++i) {
    ca += a.values[i];
    cb += b.values[i];
    inter += a.values[i] & b.values[i];
  }
  if (ca + cb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(ca + cb);
}

Mask binarize(const Tensor<float>& probs, int batch_index) {
  if (probs.rank() != 4 || probs.dim(1) != 2)
    throw std::invalid_argument("binarize: expected [N,2,H,W], got " +
                                shape_str(probs.shape));
  if (batch_index < 0 || batch_index >= probs.dim(0))
    throw std::invalid_argument("binarize: batch index out of range");
  const int h = probs.dim(2), w = probs.dim(3);
  Mask m(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      m.at(y, x) = probs.at4(batch_index, 1, y, x) > 0.5f ? 1 : 0;
  return m;
}

ScoreRecord consistency_from_masks(const Mask& mask_l, const Mask& mask_m,
                                   const Mask& mask_f, const std::string& sample_id,
                                   int round) {
  ScoreRecord r;
  r.sample_id = sample_id;
  r.round = round;
  r.l_dsc = dsc(mask_l, mask_f);
  r.m_dsc = dsc(mask_m, mask_f);
  r.mean_score = (r.l_dsc + r.m_dsc) / 2.0;
  return r;
}

double evaluate_masks(const std::vector<Mask>& pred, const std::vector<Mask>& gt) {
  if (pred.empty()) throw std::invalid_argument("evaluate_masks: empty dataset");
  if (pred.size() != gt.size())
    throw std::invalid_argument("evaluate_masks: prediction/ground-truth count mismatch");
  double acc = 0;
  for (size_t i = 0; i < pred.size(); ++i) acc += dsc(pred[i], gt[i]);
  return acc / static_cast<double>(pred.size());
}

namespace {

// Average ranks, 1-based; tied values share the mean of their positions.
std::vector<double> average_ranks(const std::vector<double>& xs) {
  const size_t n = xs.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && xs[idx[j + 1]] == xs[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

std::optional<double> spearman_rank(const std::vector<double>& xs,
                                    const std::vector<double>& ys) {
  if (xs.size() != ys.size())
    throw std::invalid_argument("spearman_rank: length mismatch");
  if (xs.size() < 3) throw std::invalid_argument("spearman_rank: needs at least 3 points");
  const std::vector<double> rx = average_ranks(xs);
  const std::vector<double> ry = average_ranks(ys);
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0, sxx = 0, syy = 0;
  for (size_t i = 0; i < rx.size(); ++i) {
    const double dx = rx[i] - mx, dy = ry[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace dsal
