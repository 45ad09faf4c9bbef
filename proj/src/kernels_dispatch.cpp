// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "dsal/kernels.hpp"

namespace dsal::kernels {

bool avx2_supported() {
#if defined(__x86_64__) || defined(__i386__)
  return detail::avx2_table() != nullptr && __builtin_cpu_supports("avx2") &&
         __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

std::atomic<const detail::KernelTable*> g_table{nullptr};
std::atomic<Backend> g_backend{Backend::scalar};

const detail::KernelTable* select_initial() {
  const char* env = std::getenv("DSAL_KERNELS");
  std::string mode = env ? env : "auto";
  if (mode == "scalar") {
    g_backend.store(Backend::scalar);
    return detail::scalar_table();
  }
  if (mode == "avx2") {
    if (!avx2_supported())
      throw std::runtime_error("DSAL_KERNELS=avx2 requested but AVX2+FMA is unavailable");
    g_backend.store(Backend::avx2);
    return detail::avx2_table();
  }
  if (mode != "auto" && mode != "")
    throw std::runtime_error("DSAL_KERNELS must be scalar, avx2 or auto (got '" + mode + "')");
  if (avx2_supported()) {
    g_backend.store(Backend::avx2);
    return detail::avx2_table();
  }
  g_backend.store(Backend::scalar);
  return detail::scalar_table();
}

inline const detail::KernelTable& table() {
  const detail::KernelTable* t = g_table.load(std::memory_order_acquire);
  if (!t) {
    t = select_initial();
    g_table.store(t, std::memory_order_release);
  }
  return *t;
}

}  // namespace

Backend active_backend() {
  table();
  return g_backend.load();
}

const char* backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

void set_backend(Backend b) {
  if (b == Backend::avx2) {
    if (!avx2_supported())
      throw std::runtime_error("AVX2 backend unavailable on this host/build");
    g_table.store(detail::avx2_table());
  } else {
    g_table.store(detail::scalar_table());
  }
  g_backend.store(b);
}

void conv2d_forward(const Conv2dShape& s, const float* in, const float* w,
                    const float* bias, float* out) {
  table().conv2d_forward_f32(s, in, w, bias, out);
}
void conv2d_backward_data(const Conv2dShape& s, const float* w,
                          const float* gout, float* gin) {
  table().conv2d_backward_data_f32(s, w, gout, gin);
}
void conv2d_backward_filter(const Conv2dShape& s, const float* in,
                            const float* gout, float* gw, float* gb) {
  table().conv2d_backward_filter_f32(s, in, gout, gw, gb);
}
void relu_forward(const float* x, float* y, int64_t n) {
  table().relu_forward_f32(x, y, n);
}
void relu_backward(const float* x, const float* gy, float* gx, int64_t n) {
  table().relu_backward_f32(x, gy, gx, n);
}
void axpy(float a, const float* x, float* y, int64_t n) {
  table().axpy_f32(a, x, y, n);
}
void adam_update(float* p, float* m, float* v, const float* g, int64_t n,
                 float lr, float beta1, float beta2, float eps, int64_t t) {
  table().adam_update_f32(p, m, v, g, n, lr, beta1, beta2, eps, t);
}

}  // namespace dsal::kernels
