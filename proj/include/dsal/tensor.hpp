// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace dsal {

using Shape = std::vector<int>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

/// Dense row-major array. `grad` is empty unless a backward pass (or a
/// caller) materializes it, in which case it has the same length as `values`.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)) {
    values.assign(static_cast<size_t>(shape_numel(shape)), T(0));
  }
  Tensor(Shape s, T fill) : shape(std::move(s)) {
    values.assign(static_cast<size_t>(shape_numel(shape)), fill);
  }

  int rank() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(values.size()); }
  T* data() { return values.data(); }
  const T* data() const { return values.data(); }

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), T(0));
  }
  void zero_grad() { grad.assign(values.size(), T(0)); }

  // NCHW helpers; no bounds checks beyond debug builds.
  T& at4(int n, int c, int y, int x) {
    return values[static_cast<size_t>(((int64_t(n) * dim(1) + c) * dim(2) + y) * dim(3) + x)];
  }
  T at4(int n, int c, int y, int x) const {
    return values[static_cast<size_t>(((int64_t(n) * dim(1) + c) * dim(2) + y) * dim(3) + x)];
  }
  T& at3(int c, int y, int x) {
    return values[static_cast<size_t>((int64_t(c) * dim(1) + y) * dim(2) + x)];
  }
  T at3(int c, int y, int x) const {
    return values[static_cast<size_t>((int64_t(c) * dim(1) + y) * dim(2) + x)];
  }
};

template <typename T>
bool same_shape(const Tensor<T>& a, const Tensor<T>& b) {
  return a.shape == b.shape;
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
  for (T v : t.values)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

}  // namespace dsal
