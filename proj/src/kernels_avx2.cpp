// SPDX-License-Identifier: Apache-2.0
// AVX2+FMA variants of the float32 hot kernels. This translation unit is
// compiled with -mavx2 -mfma on x86-64; on other targets it degrades to a
// stub table so the dispatcher falls back to the scalar reference.
#include "kernels_scalar_impl.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

namespace dsal::kernels::detail {
namespace {

inline float hsum256(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  lo = _mm_add_ps(lo, _mm_movehl_ps(lo, lo));
  lo = _mm_add_ss(lo, _mm_shuffle_ps(lo, lo, 0x55));
  return _mm_cvtss_f32(lo);
}

// Register-tiled stride-1 cross-correlation over padded rows. Writes when
// `accumulate` is false, adds into `out` when true.
void corr2d_rows(int n_imgs, int cin, int ph, int pw, const float* padded_all,
                 int cout, int kh, int kw, const float* w, const float* bias,
                 int oh, int ow, float* out, bool accumulate) {
  const int64_t plane = static_cast<int64_t>(ph) * pw;
  const int64_t in_img = static_cast<int64_t>(cin) * plane;
  for (int n = 0; n < n_imgs; ++n) {
    const float* padded = padded_all + n * in_img;
    for (int f = 0; f < cout; ++f) {
      const float bf = bias ? bias[f] : 0.0f;
      for (int oy = 0; oy < oh; ++oy) {
        float* orow = out + ((static_cast<int64_t>(n) * cout + f) * oh + oy) * ow;
        int ox = 0;
        for (; ox + 32 <= ow; ox += 32) {
          __m256 a0, a1, a2, a3;
          if (accumulate) {
            a0 = _mm256_loadu_ps(orow + ox);
            a1 = _mm256_loadu_ps(orow + ox + 8);
            a2 = _mm256_loadu_ps(orow + ox + 16);
            a3 = _mm256_loadu_ps(orow + ox + 24);
          } else {
            a0 = a1 = a2 = a3 = _mm256_set1_ps(bf);
          }
          for (int c = 0; c < cin; ++c)
            for (int ky = 0; ky < kh; ++ky) {
              const float* prow = padded + (static_cast<int64_t>(c) * ph + oy + ky) * pw + ox;
              const float* wrow = w + ((static_cast<int64_t>(f) * cin + c) * kh + ky) * kw;
              for (int kx = 0; kx < kw; ++kx) {
                const __m256 wv = _mm256_set1_ps(wrow[kx]);
                a0 = _mm256_fmadd_ps(wv, _mm256_loadu_ps(prow + kx), a0);
                a1 = _mm256_fmadd_ps(wv, _mm256_loadu_ps(prow + kx + 8), a1);
                a2 = _mm256_fmadd_ps(wv, _mm256_loadu_ps(prow + kx + 16), a2);
                a3 = _mm256_fmadd_ps(wv, _mm256_loadu_ps(prow + kx + 24), a3);
              }
            }
          _mm256_storeu_ps(orow + ox, a0);
          _mm256_storeu_ps(orow + ox + 8, a1);
          _mm256_storeu_ps(orow + ox + 16, a2);
          _mm256_storeu_ps(orow + ox + 24, a3);
        }
        for (; ox + 8 <= ow; ox += 8) {
          __m256 a0 = accumulate ? _mm256_loadu_ps(orow + ox) : _mm256_set1_ps(bf);
          for (int c = 0; c < cin; ++c)
            for (int ky = 0; ky < kh; ++ky) {
              const float* prow = padded + (static_cast<int64_t>(c) * ph + oy + ky) * pw + ox;
              const float* wrow = w + ((static_cast<int64_t>(f) * cin + c) * kh + ky) * kw;
              for (int kx = 0; kx < kw; ++kx)
                a0 = _mm256_fmadd_ps(_mm256_set1_ps(wrow[kx]),
                                     _mm256_loadu_ps(prow + kx), a0);
            }
          _mm256_storeu_ps(orow + ox, a0);
        }
        for (; ox < ow; ++ox) {
          float acc = accumulate ? orow[ox] : bf;
          for (int c = 0; c < cin; ++c)
            for (int ky = 0; ky < kh; ++ky) {
              const float* prow = padded + (static_cast<int64_t>(c) * ph + oy + ky) * pw + ox;
              const float* wrow = w + ((static_cast<int64_t>(f) * cin + c) * kh + ky) * kw;
              for (int kx = 0; kx < kw; ++kx) acc += wrow[kx] * prow[kx];
            }
          orow[ox] = acc;
        }
      }
    }
  }
}

void conv2d_forward_f32(const Conv2dShape& s, const float* in, const float* w,
                        const float* bias, float* out) {
  if (s.stride != 1) {
    ref::conv2d_forward(s, in, w, bias, out);
    return;
  }
  const int ph = s.h + 2 * s.pad, pw = s.w + 2 * s.pad;
  thread_local std::vector<float> padded;
  padded.assign(static_cast<size_t>(s.n) * s.cin * ph * pw, 0.0f);
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.cin; ++c)
      for (int y = 0; y < s.h; ++y) {
        const float* src = in + ((static_cast<int64_t>(n) * s.cin + c) * s.h + y) * s.w;
        float* dst = padded.data() +
                     ((static_cast<int64_t>(n) * s.cin + c) * ph + y + s.pad) * pw + s.pad;
        for (int x = 0; x < s.w; ++x) dst[x] = src[x];
      }
  corr2d_rows(s.n, s.cin, ph, pw, padded.data(), s.cout, s.kh, s.kw, w, bias,
              s.oh, s.ow, out, /*accumulate=*/false);
}

// Backward-by-data expressed as a correlation of the padded output gradient
// with the spatially flipped, f<->c transposed kernel.
void conv2d_backward_data_f32(const Conv2dShape& s, const float* w,
                              const float* gout, float* gin) {
  const int my = s.kh - 1 - s.pad, mx = s.kw - 1 - s.pad;
  if (s.stride != 1 || my < 0 || mx < 0) {
    ref::conv2d_backward_data(s, w, gout, gin);
    return;
  }
  const int gh = s.oh + 2 * my, gw_ = s.ow + 2 * mx;
  thread_local std::vector<float> gpad, wt;
  gpad.assign(static_cast<size_t>(s.n) * s.cout * gh * gw_, 0.0f);
  for (int n = 0; n < s.n; ++n)
    for (int f = 0; f < s.cout; ++f)
      for (int y = 0; y < s.oh; ++y) {
        const float* src = gout + ((static_cast<int64_t>(n) * s.cout + f) * s.oh + y) * s.ow;
        float* dst = gpad.data() +
                     ((static_cast<int64_t>(n) * s.cout + f) * gh + y + my) * gw_ + mx;
        for (int x = 0; x < s.ow; ++x) dst[x] = src[x];
      }
  wt.resize(static_cast<size_t>(s.cin) * s.cout * s.kh * s.kw);
  for (int c = 0; c < s.cin; ++c)
    for (int f = 0; f < s.cout; ++f)
      for (int ky = 0; ky < s.kh; ++ky)
        for (int kx = 0; kx < s.kw; ++kx)
          wt[((static_cast<int64_t>(c) * s.cout + f) * s.kh + ky) * s.kw + kx] =
              w[((static_cast<int64_t>(f) * s.cin + c) * s.kh + (s.kh - 1 - ky)) * s.kw +
                (s.kw - 1 - kx)];
  corr2d_rows(s.n, s.cout, gh, gw_, gpad.data(), s.cin, s.kh, s.kw, wt.data(),
              nullptr, s.h, s.w, gin, /*accumulate=*/true);
}

void conv2d_backward_filter_f32(const Conv2dShape& s, const float* in,
                                const float* gout, float* gw, float* gb) {
  if (s.stride != 1) {
    ref::conv2d_backward_filter(s, in, gout, gw, gb);
    return;
  }
  const int ph = s.h + 2 * s.pad, pw = s.w + 2 * s.pad;
  thread_local std::vector<float> padded;
  for (int n = 0; n < s.n; ++n) {
    ref::pad_image(s, in + static_cast<int64_t>(n) * s.cin * s.h * s.w, padded);
    const float* gimg = gout + static_cast<int64_t>(n) * s.cout * s.oh * s.ow;
    for (int f = 0; f < s.cout; ++f) {
      const float* gplane = gimg + static_cast<int64_t>(f) * s.oh * s.ow;
      __m256 bsum = _mm256_setzero_ps();
      float btail = 0.0f;
      {
        const int64_t total = static_cast<int64_t>(s.oh) * s.ow;
        int64_t i = 0;
        for (; i + 8 <= total; i += 8) bsum = _mm256_add_ps(bsum, _mm256_loadu_ps(gplane + i));
        for (; i < total; ++i) btail += gplane[i];
      }
      gb[f] += hsum256(bsum) + btail;
      for (int c = 0; c < s.cin; ++c)
        for (int ky = 0; ky < s.kh; ++ky)
          for (int kx = 0; kx < s.kw; ++kx) {
            __m256 acc = _mm256_setzero_ps();
            float tail = 0.0f;
            for (int oy = 0; oy < s.oh; ++oy) {
              const float* grow = gplane + static_cast<int64_t>(oy) * s.ow;
              const float* prow =
                  padded.data() + (static_cast<int64_t>(c) * ph + oy + ky) * pw + kx;
              int ox = 0;
              for (; ox + 8 <= s.ow; ox += 8)
                acc = _mm256_fmadd_ps(_mm256_loadu_ps(grow + ox),
                                      _mm256_loadu_ps(prow + ox), acc);
              for (; ox < s.ow; ++ox) tail += grow[ox] * prow[ox];
            }
            gw[((static_cast<int64_t>(f) * s.cin + c) * s.kh + ky) * s.kw + kx] +=
                hsum256(acc) + tail;
          }
    }
  }
}

void relu_forward_f32(const float* x, float* y, int64_t n) {
  const __m256 zero = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward_f32(const float* x, const float* gy, float* gx, int64_t n) {
  const __m256 zero = _mm256_setzero_ps();
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    const __m256 add = _mm256_and_ps(mask, _mm256_loadu_ps(gy + i));
    _mm256_storeu_ps(gx + i, _mm256_add_ps(_mm256_loadu_ps(gx + i), add));
  }
  for (; i < n; ++i)
    if (x[i] > 0.0f) gx[i] += gy[i];
}

void axpy_f32(float a, const float* x, float* y, int64_t n) {
  const __m256 av = _mm256_set1_ps(a);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i),
                                            _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void adam_update_f32(float* p, float* m, float* v, const float* g, int64_t n,
                     float lr, float beta1, float beta2, float eps, int64_t t) {
  const float bc1 = 1.0f - static_cast<float>(std::pow(static_cast<double>(beta1),
                                                       static_cast<double>(t)));
  const float bc2 = 1.0f - static_cast<float>(std::pow(static_cast<double>(beta2),
                                                       static_cast<double>(t)));
  const __m256 vb1 = _mm256_set1_ps(beta1), vb1c = _mm256_set1_ps(1.0f - beta1);
  const __m256 vb2 = _mm256_set1_ps(beta2), vb2c = _mm256_set1_ps(1.0f - beta2);
  const __m256 vbc1 = _mm256_set1_ps(bc1), vbc2 = _mm256_set1_ps(bc2);
  const __m256 vlr = _mm256_set1_ps(lr), veps = _mm256_set1_ps(eps);
  int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 gv = _mm256_loadu_ps(g + i);
    __m256 mv = _mm256_loadu_ps(m + i);
    __m256 vv = _mm256_loadu_ps(v + i);
    mv = _mm256_add_ps(_mm256_mul_ps(vb1, mv), _mm256_mul_ps(vb1c, gv));
    vv = _mm256_add_ps(_mm256_mul_ps(vb2, vv),
                       _mm256_mul_ps(_mm256_mul_ps(vb2c, gv), gv));
    _mm256_storeu_ps(m + i, mv);
    _mm256_storeu_ps(v + i, vv);
    const __m256 mhat = _mm256_div_ps(mv, vbc1);
    const __m256 vhat = _mm256_div_ps(vv, vbc2);
    const __m256 step = _mm256_div_ps(_mm256_mul_ps(vlr, mhat),
                                      _mm256_add_ps(_mm256_sqrt_ps(vhat), veps));
    _mm256_storeu_ps(p + i, _mm256_sub_ps(_mm256_loadu_ps(p + i), step));
  }
  for (; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
    const float mhat = m[i] / bc1;
    const float vhat = v[i] / bc2;
    p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace

const KernelTable* avx2_table() {
  static const KernelTable table = {
      conv2d_forward_f32,        conv2d_backward_data_f32,
      conv2d_backward_filter_f32, relu_forward_f32,
      relu_backward_f32,         axpy_f32,
      adam_update_f32,
  };
  return &table;
}

}  // namespace dsal::kernels::detail

#else  // !(__AVX2__ && __FMA__)

namespace dsal::kernels::detail {
const KernelTable* avx2_table() { return nullptr; }
}  // namespace dsal::kernels::detail

#endif
