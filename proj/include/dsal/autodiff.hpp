// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dsal/tensor.hpp"

namespace dsal {

/// Reverse-mode tape over dense tensors. Every op appends one node; nodes
/// are replayed in reverse order by backward(). A node's backward step only
/// runs if some gradient actually reached its output, so subgraphs behind a
/// zero-weighted loss term are never touched.
///
/// Conventions (documented here once, relied on by the tests):
///  - conv2d is cross-correlation (no kernel flip), NCHW.
///  - maxpool2d routes gradient to the first maximum in row-major window
///    order on ties.
///  - upsample_bilinear uses half-pixel centers (src = (dst+0.5)/f - 0.5,
///    clamped to the valid range); factor 1 is the identity.
///  - relu's subgradient at exactly 0 is 0.
///  - nll_mean clamps probabilities at 1e-12 before the log.
template <typename T>
class Tape {
 public:
  Tape() = default;

  int leaf(Tensor<T> t);

  int conv2d(int input, int kernel, int bias, int stride, int padding);
  int maxpool2d(int input);  // 2x2 window, stride 2
  int upsample_bilinear(int input, int factor);
  int softmax_channels(int input);
  int concat_channels(int a, int b);
  int relu(int input);

  /// Mean over batch and pixels of -log p(target class). `target` holds
  /// class ids shaped [N,H,W]; `probs` is [N,C,H,W].
  int nll_mean(int probs, Tensor<uint8_t> target);

  /// Scalar linear combination; terms with weight 0 receive no gradient.
  int weighted_sum(const std::vector<std::pair<int, T>>& terms);

  /// Scalar reduction used by the gradient checker.
  int sum(int input);

  void backward(int root);

  const Tensor<T>& val(int id) const { return slots_[static_cast<size_t>(id)].t; }
  Tensor<T>& mutable_val(int id) { return slots_[static_cast<size_t>(id)].t; }
  const std::vector<T>& grad(int id) const {
    return slots_[static_cast<size_t>(id)].t.grad;
  }
  int num_nodes() const { return static_cast<int>(slots_.size()); }

 private:
  struct Slot {
    Tensor<T> t;
    bool seeded = false;
  };
  struct Step {
    int out;
    std::function<void(Tape&)> back;
  };

  int push(Tensor<T> t);
  std::vector<T>& grad_buf(int id) {
    slots_[static_cast<size_t>(id)].seeded = true;
    return slots_[static_cast<size_t>(id)].t.grad;
  }

  std::vector<Slot> slots_;
  std::vector<Step> steps_;
};

namespace detail {
template <typename T>
double tensor_sum(const Tensor<T>& t) {
  double s = 0;
  for (T v : t.values) s += static_cast<double>(v);
  return s;
}
template <typename T>
void throw_if_nonfinite(const Tensor<T>& t, const char* where) {
  for (size_t i = 0; i < t.values.size(); ++i)
    if (!std::isfinite(static_cast<double>(t.values[i])))
      throw std::runtime_error(std::string("grad_check: non-finite value in ") +
                               where + " at component " + std::to_string(i));
}
}  // namespace detail

/// Central-difference check of an op built by `fn` against the tape's
/// analytic gradient, in 64-bit. `fn` gets a tape and the id of the input
/// leaf and returns the id of the op output (any shape; the checker sums it
/// to a scalar). Returns max over input components of
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
template <typename Fn>
double grad_check(Fn&& fn, const Tensor<double>& x, double eps = 1e-5) {
  std::vector<double> analytic;
  {
    Tape<double> tape;
    const int xid = tape.leaf(x);
    const int out = fn(tape, xid);
    detail::throw_if_nonfinite(tape.val(out), "forward output");
    const int s = tape.sum(out);
    tape.backward(s);
    analytic = tape.grad(xid);
    for (size_t i = 0; i < analytic.size(); ++i)
      if (!std::isfinite(analytic[i]))
        throw std::runtime_error("grad_check: non-finite analytic gradient at component " +
                                 std::to_string(i));
  }
  Tensor<double> xp = x;
  const auto eval = [&](size_t i, double v) {
    xp.values[i] = v;
    Tape<double> tape;
    const int xid = tape.leaf(xp);
    const int out = fn(tape, xid);
    detail::throw_if_nonfinite(tape.val(out), "forward output");
    return detail::tensor_sum(tape.val(out));
  };
  double max_rel = 0.0;
  for (size_t i = 0; i < x.values.size(); ++i) {
    const double orig = x.values[i];
    const double fp = eval(i, orig + eps);
    const double fm = eval(i, orig - eps);
    xp.values[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double denom =
        std::max(std::max(std::fabs(analytic[i]), std::fabs(numeric)), 1e-8);
    max_rel = std::max(max_rel, std::fabs(analytic[i] - numeric) / denom);
  }
  return max_rel;
}

}  // namespace dsal
