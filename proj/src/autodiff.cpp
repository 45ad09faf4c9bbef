// SPDX-License-Identifier: Apache-2.0
#include "dsal/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "dsal/kernels.hpp"

namespace dsal {

namespace {

constexpr double kLogFloor = 1e-12;

[[noreturn]] void shape_error(const std::string& msg) {
  throw std::invalid_argument(msg);
}

void require(bool ok, const std::string& msg) {
  if (!ok) shape_error(msg);
}

// Per-axis bilinear sampling table, half-pixel convention.
template <typename T>
struct LerpTable {
  std::vector<int> i0, i1;
  std::vector<T> w0, w1;
};

template <typename T>
LerpTable<T> make_lerp_table(int in_size, int factor) {
  LerpTable<T> t;
  const int out_size = in_size * factor;
  t.i0.resize(out_size);
  t.i1.resize(out_size);
  t.w0.resize(out_size);
  t.w1.resize(out_size);
  for (int o = 0; o < out_size; ++o) {
    T src = (static_cast<T>(o) + T(0.5)) / static_cast<T>(factor) - T(0.5);
    src = std::min(std::max(src, T(0)), static_cast<T>(in_size - 1));
    const int i0 = static_cast<int>(std::floor(src));
    t.i0[o] = i0;
    t.i1[o] = std::min(i0 + 1, in_size - 1);
    t.w1[o] = src - static_cast<T>(i0);
    t.w0[o] = T(1) - t.w1[o];
  }
  return t;
}

}  // namespace

template <typename T>
int Tape<T>::push(Tensor<T> t) {
  slots_.push_back(Slot{std::move(t), false});
  return static_cast<int>(slots_.size()) - 1;
}

template <typename T>
int Tape<T>::leaf(Tensor<T> t) {
  return push(std::move(t));
}

template <typename T>
int Tape<T>::conv2d(int input, int kernel, int bias, int stride, int padding) {
  const Tensor<T>& in = val(input);
  const Tensor<T>& k = val(kernel);
  const Tensor<T>& b = val(bias);
  require(in.rank() == 4, "conv2d: input must be [N,C,H,W], got " + shape_str(in.shape));
  require(k.rank() == 4, "conv2d: kernel must be [F,C,kH,kW], got " + shape_str(k.shape));
  require(in.dim(1) == k.dim(1),
          "conv2d: input channels C=" + std::to_string(in.dim(1)) +
              " do not match kernel channels C=" + std::to_string(k.dim(1)) +
              " (input " + shape_str(in.shape) + ", kernel " + shape_str(k.shape) + ")");
  require(b.rank() == 1 && b.dim(0) == k.dim(0),
          "conv2d: bias must be [F=" + std::to_string(k.dim(0)) + "], got " +
              shape_str(b.shape));
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(padding >= 0, "conv2d: padding must be >= 0");
  kernels::Conv2dShape s;
  s.n = in.dim(0);
  s.cin = in.dim(1);
  s.h = in.dim(2);
  s.w = in.dim(3);
  s.cout = k.dim(0);
  s.kh = k.dim(2);
  s.kw = k.dim(3);
  s.stride = stride;
  s.pad = padding;
  require(s.kh <= s.h + 2 * padding && s.kw <= s.w + 2 * padding,
          "conv2d: kernel " + shape_str(k.shape) + " larger than padded input " +
              shape_str(in.shape) + " with padding " + std::to_string(padding));
  s.oh = (s.h + 2 * padding - s.kh) / stride + 1;
  s.ow = (s.w + 2 * padding - s.kw) / stride + 1;

  Tensor<T> out(Shape{s.n, s.cout, s.oh, s.ow});
  kernels::conv2d_forward(s, in.data(), k.data(), b.data(), out.data());
  const int id = push(std::move(out));
  steps_.push_back({id, [input, kernel, bias, s, id](Tape& t) {
                      const std::vector<T>& go = t.val(id).grad;
                      kernels::conv2d_backward_data(s, t.val(kernel).data(), go.data(),
                                                    t.grad_buf(input).data());
                      kernels::conv2d_backward_filter(s, t.val(input).data(), go.data(),
                                                      t.grad_buf(kernel).data(),
                                                      t.grad_buf(bias).data());
                    }});
  return id;
}

template <typename T>
int Tape<T>::maxpool2d(int input) {
  const Tensor<T>& in = val(input);
  require(in.rank() == 4, "maxpool2d: input must be [N,C,H,W], got " + shape_str(in.shape));
  require(in.dim(2) % 2 == 0 && in.dim(3) % 2 == 0,
          "maxpool2d: spatial dims must be even, got " + shape_str(in.shape));
  const int n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  const int oh = h / 2, ow = w / 2;
  Tensor<T> out(Shape{n, c, oh, ow});
  std::vector<int32_t> argmax(out.values.size());
  const int64_t planes = static_cast<int64_t>(n) * c;
  for (int64_t p = 0; p < planes; ++p) {
    const T* ip = in.data() + p * h * w;
    T* op = out.data() + p * oh * ow;
    int32_t* ap = argmax.data() + p * oh * ow;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        int best = 0;
        T bv = ip[(2 * oy) * w + 2 * ox];
        for (int k = 1; k < 4; ++k) {
          const T v = ip[(2 * oy + (k >> 1)) * w + 2 * ox + (k & 1)];
          if (v > bv) {
            bv = v;
            best = k;
          }
        }
        op[oy * ow + ox] = bv;
        ap[oy * ow + ox] = best;
      }
  }
  const int id = push(std::move(out));
  steps_.push_back({id, [input, id, n, c, h, w, oh, ow, argmax = std::move(argmax)](Tape& t) {
                      const std::vector<T>& go = t.val(id).grad;
                      std::vector<T>& gi = t.grad_buf(input);
                      const int64_t planes = static_cast<int64_t>(n) * c;
                      for (int64_t p = 0; p < planes; ++p)
                        for (int oy = 0; oy < oh; ++oy)
                          for (int ox = 0; ox < ow; ++ox) {
                            const int64_t oi = p * oh * ow + oy * ow + ox;
                            const int k = argmax[static_cast<size_t>(oi)];
                            gi[static_cast<size_t>(p * h * w +
                                                   (2 * oy + (k >> 1)) * w + 2 * ox +
                                                   (k & 1))] += go[static_cast<size_t>(oi)];
                          }
                    }});
  return id;
}

template <typename T>
int Tape<T>::upsample_bilinear(int input, int factor) {
  const Tensor<T>& in = val(input);
  require(in.rank() == 4,
          "upsample_bilinear: input must be [N,C,H,W], got " + shape_str(in.shape));
  require(factor >= 1, "upsample_bilinear: factor must be >= 1");
  const int n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  const int oh = h * factor, ow = w * factor;
  const LerpTable<T> ty = make_lerp_table<T>(h, factor);
  const LerpTable<T> tx = make_lerp_table<T>(w, factor);
  Tensor<T> out(Shape{n, c, oh, ow});
  const int64_t planes = static_cast<int64_t>(n) * c;
  for (int64_t p = 0; p < planes; ++p) {
    const T* ip = in.data() + p * h * w;
    T* op = out.data() + p * oh * ow;
    for (int oy = 0; oy < oh; ++oy) {
      const T* r0 = ip + ty.i0[oy] * w;
      const T* r1 = ip + ty.i1[oy] * w;
      const T wy0 = ty.w0[oy], wy1 = ty.w1[oy];
      for (int ox = 0; ox < ow; ++ox) {
        const int x0 = tx.i0[ox], x1 = tx.i1[ox];
        op[oy * ow + ox] = wy0 * (tx.w0[ox] * r0[x0] + tx.w1[ox] * r0[x1]) +
                           wy1 * (tx.w0[ox] * r1[x0] + tx.w1[ox] * r1[x1]);
      }
    }
  }
  const int id = push(std::move(out));
  steps_.push_back({id, [input, id, planes, h, w, oh, ow, ty, tx](Tape& t) {
                      const std::vector<T>& go = t.val(id).grad;
                      std::vector<T>& gi = t.grad_buf(input);
                      for (int64_t p = 0; p < planes; ++p) {
                        const T* gop = go.data() + p * oh * ow;
                        T* gip = gi.data() + p * h * w;
                        for (int oy = 0; oy < oh; ++oy)
                          for (int ox = 0; ox < ow; ++ox) {
                            const T g = gop[oy * ow + ox];
                            gip[ty.i0[oy] * w + tx.i0[ox]] += ty.w0[oy] * tx.w0[ox] * g;
                            gip[ty.i0[oy] * w + tx.i1[ox]] += ty.w0[oy] * tx.w1[ox] * g;
                            gip[ty.i1[oy] * w + tx.i0[ox]] += ty.w1[oy] * tx.w0[ox] * g;
                            gip[ty.i1[oy] * w + tx.i1[ox]] += ty.w1[oy] * tx.w1[ox] * g;
                          }
                      }
                    }});
  return id;
}

template <typename T>
int Tape<T>::softmax_channels(int input) {
  const Tensor<T>& in = val(input);
  require(in.rank() == 4,
          "softmax_channels: input must be [N,C,H,W], got " + shape_str(in.shape));
  require(in.dim(1) >= 2, "softmax_channels: needs C >= 2, got " + shape_str(in.shape));
  const int n = in.dim(0), c = in.dim(1), h = in.dim(2), w = in.dim(3);
  const int64_t hw = static_cast<int64_t>(h) * w;
  Tensor<T> out(in.shape);
  for (int b = 0; b < n; ++b) {
    const T* ib = in.data() + static_cast<int64_t>(b) * c * hw;
    T* ob = out.data() + static_cast<int64_t>(b) * c * hw;
    for (int64_t px = 0; px < hw; ++px) {
      T m = ib[px];
      for (int ch = 1; ch < c; ++ch) m = std::max(m, ib[ch * hw + px]);
      T sum = T(0);
      for (int ch = 0; ch < c; ++ch) {
        const T e = std::exp(ib[ch * hw + px] - m);
        ob[ch * hw + px] = e;
        sum += e;
      }
      for (int ch = 0; ch < c; ++ch) ob[ch * hw + px] /= sum;
    }
  }
  const int id = push(std::move(out));
  steps_.push_back({id, [input, id, n, c, hw](Tape& t) {
                      const std::vector<T>& go = t.val(id).grad;
                      const std::vector<T>& p = t.val(id).values;
                      std::vector<T>& gi = t.grad_buf(input);
                      for (int b = 0; b < n; ++b) {
                        const int64_t base = static_cast<int64_t>(b) * c * hw;
                        for (int64_t px = 0; px < hw; ++px) {
                          T dot = T(0);
                          for (int ch = 0; ch < c; ++ch) {
                            const size_t i = static_cast<size_t>(base + ch * hw + px);
                            dot += go[i] * p[i];
                          }
                          for (int ch = 0; ch < c; ++ch) {
                            const size_t i = static_cast<size_t>(base + ch * hw + px);
                            gi[i] += p[i] * (go[i] - dot);
                          }
                        }
                      }
                    }});
  return id;
}

template <typename T>
int Tape<T>::concat_channels(int a, int b) {
  const Tensor<T>& ta = val(a);
  const Tensor<T>& tb = val(b);
  require(ta.rank() == 4 && tb.rank() == 4, "concat_channels: inputs must be [N,C,H,W]");
  require(ta.dim(0) == tb.dim(0) && ta.dim(2) == tb.dim(2) && ta.dim(3) == tb.dim(3),
          "concat_channels: batch/spatial mismatch between " + shape_str(ta.shape) +
              " and " + shape_str(tb.shape));
  const int n = ta.dim(0), ca = ta.dim(1), cb = tb.dim(1);
  const int64_t hw = static_cast<int64_t>(ta.dim(2)) * ta.dim(3);
  Tensor<T> out(Shape{n, ca + cb, ta.dim(2), ta.dim(3)});
  for (int bn = 0; bn < n; ++bn) {
    std::copy_n(ta.data() + static_cast<int64_t>(bn) * ca * hw, ca * hw,
                out.data() + static_cast<int64_t>(bn) * (ca + cb) * hw);
    std::copy_n(tb.data() + static_cast<int64_t>(bn) * cb * hw, cb * hw,
                out.data() + static_cast<int64_t>(bn) * (ca + cb) * hw + ca * hw);
  }
  const int id = push(std::move(out));
  steps_.push_back({id, [a, b, id, n, ca, cb, hw](Tape& t) {
                      const std::vector<T>& go = t.val(id).grad;
                      std::vector<T>& ga = t.grad_buf(a);
                      std::vector<T>& gb = t.grad_buf(b);
                      for (int bn = 0; bn < n; ++bn) {
                        const int64_t src = static_cast<int64_t>(bn) * (ca + cb) * hw;
                        for (int64_t i = 0; i < ca * hw; ++i)
                          ga[static_cast<size_t>(static_cast<int64_t>(bn) * ca * hw + i)] +=
                              go[static_cast<size_t>(src + i)];
                        for (int64_t i = 0; i < cb * hw; ++i)
                          gb[static_cast<size_t>(static_cast<int64_t>(bn) * cb * hw + i)] +=
                              go[static_cast<size_t>(src + ca * hw + i)];
                      }
                    }});
  return id;
}

template <typename T>
int Tape<T>::relu(int input) {
  const Tensor<T>& in = val(input);
  Tensor<T> out(in.shape);
  kernels::relu_forward(in.data(), out.data(), in.size());
  const int id = push(std::move(out));
  steps_.push_back({id, [input, id](Tape& t) {
                      const Tensor<T>& x = t.val(input);
                      kernels::relu_backward(x.data(), t.val(id).grad.data(),
                                             t.grad_buf(input).data(), x.size());
                    }});
  return id;
}

template <typename T>
int Tape<T>::nll_mean(int probs, Tensor<uint8_t> target) {
  const Tensor<T>& p = val(probs);
  require(p.rank() == 4, "nll_mean: probs must be [N,C,H,W], got " + shape_str(p.shape));
  require(target.shape == Shape({p.dim(0), p.dim(2), p.dim(3)}),
          "nll_mean: target must be [N,H,W] matching probs, got " +
              shape_str(target.shape) + " vs probs " + shape_str(p.shape));
  const int classes = p.dim(1);
  for (uint8_t t : target.values)
    require(t < classes, "nll_mean: target class id " + std::to_string(int(t)) +
                             " out of range (classes=" + std::to_string(classes) + ")");
  const int n = p.dim(0), h = p.dim(2), w = p.dim(3);
  const int64_t hw = static_cast<int64_t>(h) * w;
  const int64_t count = static_cast<int64_t>(n) * hw;
  double acc = 0;
  for (int b = 0; b < n; ++b)
    for (int64_t px = 0; px < hw; ++px) {
      const int cls = target.values[static_cast<size_t>(b * hw + px)];
      const double pv = static_cast<double>(
          p.values[static_cast<size_t>((static_cast<int64_t>(b) * classes + cls) * hw + px)]);
      acc -= std::log(std::max(pv, kLogFloor));
    }
  Tensor<T> out(Shape{1});
  out.values[0] = static_cast<T>(acc / static_cast<double>(count));
  const int id = push(std::move(out));
  steps_.push_back(
      {id, [probs, id, n, classes, hw, count, target = std::move(target)](Tape& t) {
         const T g = t.val(id).grad[0];
         const Tensor<T>& p = t.val(probs);
         std::vector<T>& gp = t.grad_buf(probs);
         const T scale = g / static_cast<T>(count);
         for (int b = 0; b < n; ++b)
           for (int64_t px = 0; px < hw; ++px) {
             const int cls = target.values[static_cast<size_t>(b * hw + px)];
             const size_t i =
                 static_cast<size_t>((static_cast<int64_t>(b) * classes + cls) * hw + px);
             const T pv = p.values[i];
             if (static_cast<double>(pv) > kLogFloor) gp[i] -= scale / pv;
           }
       }});
  return id;
}

template <typename T>
int Tape<T>::weighted_sum(const std::vector<std::pair<int, T>>& terms) {
  T acc = T(0);
  for (const auto& [tid, alpha] : terms) {
    require(val(tid).size() == 1, "weighted_sum: all terms must be scalars");
    acc += alpha * val(tid).values[0];
  }
  Tensor<T> out(Shape{1});
  out.values[0] = acc;
  const int id = push(std::move(out));
  steps_.push_back({id, [id, terms](Tape& t) {
                      const T g = t.val(id).grad[0];
                      for (const auto& [tid, alpha] : terms)
                        if (alpha != T(0)) t.grad_buf(tid)[0] += alpha * g;
                    }});
  return id;
}

template <typename T>
int Tape<T>::sum(int input) {
  Tensor<T> out(Shape{1});
  out.values[0] = static_cast<T>(detail::tensor_sum(val(input)));
  const int id = push(std::move(out));
  steps_.push_back({id, [input, id](Tape& t) {
                      const T g = t.val(id).grad[0];
                      std::vector<T>& gi = t.grad_buf(input);
                      for (T& v : gi) v += g;
                    }});
  return id;
}

template <typename T>
void Tape<T>::backward(int root) {
  if (val(root).size() != 1)
    throw std::logic_error("backward: root must be a scalar, got " +
                           shape_str(val(root).shape));
  for (Slot& s : slots_) {
    s.t.zero_grad();
    s.seeded = false;
  }
  slots_[static_cast<size_t>(root)].t.grad[0] = T(1);
  slots_[static_cast<size_t>(root)].seeded = true;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it)
    if (slots_[static_cast<size_t>(it->out)].seeded) it->back(*this);
}

template class Tape<float>;
template class Tape<double>;

}  // namespace dsal
