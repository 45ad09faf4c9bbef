// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

namespace dsal::kernels {

/// Geometry of one 2D cross-correlation call (NCHW layout, no kernel flip).
/// oh = (h + 2*pad - kh) / stride + 1, analogously ow.
struct Conv2dShape {
  int n = 0;
  int cin = 0, h = 0, w = 0;
  int cout = 0, kh = 0, kw = 0;
  int stride = 1, pad = 0;
  int oh = 0, ow = 0;
};

// ---- float32 entry points (runtime-dispatched: scalar or AVX2) ----
// Forward kernels overwrite their output; backward kernels accumulate (+=)
// into their gradient outputs so one buffer can collect several
// contributions.

void conv2d_forward(const Conv2dShape& s, const float* in, const float* w,
                    const float* bias, float* out);
void conv2d_backward_data(const Conv2dShape& s, const float* w,
                          const float* gout, float* gin);
void conv2d_backward_filter(const Conv2dShape& s, const float* in,
                            const float* gout, float* gw, float* gb);

void relu_forward(const float* x, float* y, int64_t n);
void relu_backward(const float* x, const float* gy, float* gx, int64_t n);

/// y[i] += a * x[i]
void axpy(float a, const float* x, float* y, int64_t n);

/// One bias-corrected Adam update over a flat parameter block.
void adam_update(float* p, float* m, float* v, const float* g, int64_t n,
                 float lr, float beta1, float beta2, float eps, int64_t t);

// ---- float64 entry points (always the scalar reference; used by the
// gradient checker and any 64-bit run) ----

void conv2d_forward(const Conv2dShape& s, const double* in, const double* w,
                    const double* bias, double* out);
void conv2d_backward_data(const Conv2dShape& s, const double* w,
                          const double* gout, double* gin);
void conv2d_backward_filter(const Conv2dShape& s, const double* in,
                            const double* gout, double* gw, double* gb);
void relu_forward(const double* x, double* y, int64_t n);
void relu_backward(const double* x, const double* gy, double* gx, int64_t n);
void axpy(double a, const double* x, double* y, int64_t n);

// ---- backend selection ----

enum class Backend { scalar, avx2 };

/// True when the host CPU (and this build) can run the AVX2 kernels.
bool avx2_supported();

/// Selected backend. First use honours DSAL_KERNELS=scalar|avx2|auto.
Backend active_backend();
const char* backend_name(Backend b);

/// Force a backend (tests use this). Throws std::runtime_error if the
/// requested backend is unavailable. Not safe to call concurrently with
/// running kernels.
void set_backend(Backend b);

namespace detail {
struct KernelTable {
  void (*conv2d_forward_f32)(const Conv2dShape&, const float*, const float*,
                             const float*, float*) = nullptr;
  void (*conv2d_backward_data_f32)(const Conv2dShape&, const float*,
                                   const float*, float*) = nullptr;
  void (*conv2d_backward_filter_f32)(const Conv2dShape&, const float*,
                                     const float*, float*, float*) = nullptr;
  void (*relu_forward_f32)(const float*, float*, int64_t) = nullptr;
  void (*relu_backward_f32)(const float*, const float*, float*, int64_t) = nullptr;
  void (*axpy_f32)(float, const float*, float*, int64_t) = nullptr;
  void (*adam_update_f32)(float*, float*, float*, const float*, int64_t, float,
                          float, float, float, int64_t) = nullptr;
};
const KernelTable* scalar_table();
const KernelTable* avx2_table();  // nullptr when compiled out or unsupported
}  // namespace detail

}  // namespace dsal::kernels
