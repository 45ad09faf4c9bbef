// SPDX-License-Identifier: Apache-2.0
#include "kernels_scalar_impl.hpp"

namespace dsal::kernels {

// float64 entry points: always the reference implementation.
void conv2d_forward(const Conv2dShape& s, const double* in, const double* w,
                    const double* bias, double* out) {
  ref::conv2d_forward(s, in, w, bias, out);
}
void conv2d_backward_data(const Conv2dShape& s, const double* w,
                          const double* gout, double* gin) {
  ref::conv2d_backward_data(s, w, gout, gin);
}
void conv2d_backward_filter(const Conv2dShape& s, const double* in,
                            const double* gout, double* gw, double* gb) {
  ref::conv2d_backward_filter(s, in, gout, gw, gb);
}
void relu_forward(const double* x, double* y, int64_t n) {
  ref::relu_forward(x, y, n);
}
void relu_backward(const double* x, const double* gy, double* gx, int64_t n) {
  ref::relu_backward(x, gy, gx, n);
}
void axpy(double a, const double* x, double* y, int64_t n) {
  ref::axpy(a, x, y, n);
}

namespace detail {

namespace {
void conv2d_forward_f32(const Conv2dShape& s, const float* in, const float* w,
                        const float* bias, float* out) {
  ref::conv2d_forward(s, in, w, bias, out);
}
void conv2d_backward_data_f32(const Conv2dShape& s, const float* w,
                              const float* gout, float* gin) {
  ref::conv2d_backward_data(s, w, gout, gin);
}
void conv2d_backward_filter_f32(const Conv2dShape& s, const float* in,
                                const float* gout, float* gw, float* gb) {
  ref::conv2d_backward_filter(s, in, gout, gw, gb);
}
void relu_forward_f32(const float* x, float* y, int64_t n) {
  ref::relu_forward(x, y, n);
}
void relu_backward_f32(const float* x, const float* gy, float* gx, int64_t n) {
  ref::relu_backward(x, gy, gx, n);
}
void axpy_f32(float a, const float* x, float* y, int64_t n) {
  ref::axpy(a, x, y, n);
}
void adam_update_f32(float* p, float* m, float* v, const float* g, int64_t n,
                     float lr, float beta1, float beta2, float eps, int64_t t) {
  ref::adam_update(p, m, v, g, n, lr, beta1, beta2, eps, t);
}
}  // namespace

const KernelTable* scalar_table() {
  static const KernelTable table = {
      conv2d_forward_f32,        conv2d_backward_data_f32,
      conv2d_backward_filter_f32, relu_forward_f32,
      relu_backward_f32,         axpy_f32,
      adam_update_f32,
  };
  return &table;
}

}  // namespace detail
}  // namespace dsal::kernels
