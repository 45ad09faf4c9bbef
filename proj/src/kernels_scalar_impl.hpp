// SPDX-License-Identifier: Apache-2.0
// Reference kernels, shared by the float and double builds. These define the
// semantics the SIMD variants are tested against.
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "dsal/kernels.hpp"

namespace dsal::kernels::ref {

// Copies one [cin,h,w] image into a zero-padded [cin,h+2p,w+2p] buffer.
template <typename T>
void pad_image(const Conv2dShape& s, const T* in, std::vector<T>& padded) {
  const int ph = s.h + 2 * s.pad, pw = s.w + 2 * s.pad;
  padded.assign(static_cast<size_t>(s.cin) * ph * pw, T(0));
  for (int c = 0; c < s.cin; ++c)
    for (int y = 0; y < s.h; ++y) {
      const T* src = in + (static_cast<int64_t>(c) * s.h + y) * s.w;
      T* dst = padded.data() + (static_cast<int64_t>(c) * ph + y + s.pad) * pw + s.pad;
      for (int x = 0; x < s.w; ++x) dst[x] = src[x];
    }
}

template <typename T>
void conv2d_forward(const Conv2dShape& s, const T* in, const T* w,
                    const T* bias, T* out) {
  const int ph = s.h + 2 * s.pad, pw = s.w + 2 * s.pad;
  std::vector<T> padded;
  for (int n = 0; n < s.n; ++n) {
    pad_image(s, in + static_cast<int64_t>(n) * s.cin * s.h * s.w, padded);
    for (int f = 0; f < s.cout; ++f)
      for (int oy = 0; oy < s.oh; ++oy) {
        T* orow = out + ((static_cast<int64_t>(n) * s.cout + f) * s.oh + oy) * s.ow;
        for (int ox = 0; ox < s.ow; ++ox) orow[ox] = bias[f];
        for (int c = 0; c < s.cin; ++c)
          for (int ky = 0; ky < s.kh; ++ky) {
            const T* prow =
                padded.data() + (static_cast<int64_t>(c) * ph + oy * s.stride + ky) * pw;
            for (int kx = 0; kx < s.kw; ++kx) {
              const T wv = w[((static_cast<int64_t>(f) * s.cin + c) * s.kh + ky) * s.kw + kx];
              for (int ox = 0; ox < s.ow; ++ox)
                orow[ox] += wv * prow[ox * s.stride + kx];
            }
          }
      }
  }
}

template <typename T>
void conv2d_backward_data(const Conv2dShape& s, const T* w, const T* gout,
                          T* gin) {
  const int ph = s.h + 2 * s.pad, pw = s.w + 2 * s.pad;
  std::vector<T> gpad;
  for (int n = 0; n < s.n; ++n) {
    gpad.assign(static_cast<size_t>(s.cin) * ph * pw, T(0));
    for (int f = 0; f < s.cout; ++f)
      for (int oy = 0; oy < s.oh; ++oy) {
        const T* grow = gout + ((static_cast<int64_t>(n) * s.cout + f) * s.oh + oy) * s.ow;
        for (int c = 0; c < s.cin; ++c)
          for (int ky = 0; ky < s.kh; ++ky) {
            T* prow = gpad.data() + (static_cast<int64_t>(c) * ph + oy * s.stride + ky) * pw;
            for (int kx = 0; kx < s.kw; ++kx) {
              const T wv = w[((static_cast<int64_t>(f) * s.cin + c) * s.kh + ky) * s.kw + kx];
              for (int ox = 0; ox < s.ow; ++ox)
                prow[ox * s.stride + kx] += wv * grow[ox];
            }
          }
      }
    // fold the padded gradient back onto the unpadded image
    for (int c = 0; c < s.cin; ++c)
      for (int y = 0; y < s.h; ++y) {
        const T* src = gpad.data() + (static_cast<int64_t>(c) * ph + y + s.pad) * pw + s.pad;
        T* dst = gin + ((static_cast<int64_t>(n) * s.cin + c) * s.h + y) * s.w;
        for (int x = 0; x < s.w; ++x) dst[x] += src[x];
      }
  }
}

template <typename T>
void conv2d_backward_filter(const Conv2dShape& s, const T* in, const T* gout,
                            T* gw, T* gb) {
  const int ph = s.h + 2 * s.pad, pw = s.w + 2 * s.pad;
  std::vector<T> padded;
  for (int n = 0; n < s.n; ++n) {
    pad_image(s, in + static_cast<int64_t>(n) * s.cin * s.h * s.w, padded);
    for (int f = 0; f < s.cout; ++f) {
      T bsum = T(0);
      for (int oy = 0; oy < s.oh; ++oy) {
        const T* grow = gout + ((static_cast<int64_t>(n) * s.cout + f) * s.oh + oy) * s.ow;
        for (int ox = 0; ox < s.ow; ++ox) bsum += grow[ox];
        for (int c = 0; c < s.cin; ++c)
          for (int ky = 0; ky < s.kh; ++ky) {
            const T* prow =
                padded.data() + (static_cast<int64_t>(c) * ph + oy * s.stride + ky) * pw;
            for (int kx = 0; kx < s.kw; ++kx) {
              T acc = T(0);
              for (int ox = 0; ox < s.ow; ++ox)
                acc += grow[ox] * prow[ox * s.stride + kx];
              gw[((static_cast<int64_t>(f) * s.cin + c) * s.kh + ky) * s.kw + kx] += acc;
            }
          }
      }
      gb[f] += bsum;
    }
  }
}

template <typename T>
void relu_forward(const T* x, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

// Subgradient at exactly 0 is 0.
template <typename T>
void relu_backward(const T* x, const T* gy, T* gx, int64_t n) {
  for (int64_t i = 0; i < n; ++i)
    if (x[i] > T(0)) gx[i] += gy[i];
}

template <typename T>
void axpy(T a, const T* x, T* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
void adam_update(T* p, T* m, T* v, const T* g, int64_t n, T lr, T beta1,
                 T beta2, T eps, int64_t t) {
  const T bc1 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta1), static_cast<double>(t)));
  const T bc2 = T(1) - static_cast<T>(std::pow(static_cast<double>(beta2), static_cast<double>(t)));
  for (int64_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
    v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
    const T mhat = m[i] / bc1;
    const T vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace dsal::kernels::ref
