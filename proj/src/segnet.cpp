// SPDX-License-Identifier: Apache-2.0
#include "dsal/segnet.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>

#include "dsal/errors.hpp"
#include "dsal/kernels.hpp"
#include "dsal/rng.hpp"

namespace dsal {

static_assert(std::endian::native == std::endian::little,
              "checkpoint io assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'D', 'S', 'A', 'L', 'C', 'K', 'P', 'T'};
constexpr uint32_t kVersion = 1;
constexpr uint64_t kInitStream = 0x1217u;
constexpr double kLogFloor = 1e-12;

void validate_config(const ModelConfig& c) {
  if (c.depth < 2) throw ConfigError("model: depth must be >= 2, got " + std::to_string(c.depth));
  if (c.base_channels < 1)
    throw ConfigError("model: base_channels must be >= 1, got " +
                      std::to_string(c.base_channels));
  if (c.classes != 2)
    throw ConfigError("model: only 2-class segmentation is supported, got " +
                      std::to_string(c.classes));
  const int div = 1 << c.depth;
  if (c.input_h < div || c.input_w < div || c.input_h % div != 0 || c.input_w % div != 0)
    throw ConfigError("model: input " + std::to_string(c.input_h) + "x" +
                      std::to_string(c.input_w) + " must be divisible by 2^depth = " +
                      std::to_string(div));
  auto stage_ok = [&](int s) { return s >= 0 && s < c.depth; };
  if (!stage_ok(c.aux_stage_lower) || !stage_ok(c.aux_stage_middle) ||
      c.aux_stage_lower == c.aux_stage_middle)
    throw ConfigError("model: aux stages must be distinct decoder indices in [0," +
                      std::to_string(c.depth - 1) + "], got " +
                      std::to_string(c.aux_stage_lower) + " and " +
                      std::to_string(c.aux_stage_middle));
  const LossWeights& w = c.loss_weights;
  if (w.alpha_l < 0 || w.alpha_m < 0 || w.alpha_f < 0 ||
      w.alpha_l + w.alpha_m + w.alpha_f <= 0)
    throw ConfigError("model: loss weights must be non-negative with a positive sum");
}

// Channel counts. Decoder stage j consumes the upsampled previous output
// plus the matching encoder skip, which works out to 3x its own width.
int ch_enc(const ModelConfig& c, int i) { return c.base_channels << i; }
int ch_dec(const ModelConfig& c, int j) { return c.base_channels << (c.depth - 1 - j); }

template <typename T>
ModelT<T> make_empty_model(const ModelConfig& cfg) {
  ModelT<T> m;
  m.config = cfg;
  for (int i = 0; i < cfg.depth; ++i) {
    const int cin = i == 0 ? 1 : ch_enc(cfg, i - 1);
    const int cout = ch_enc(cfg, i);
    m.enc.push_back({Tensor<T>(Shape{cout, cin, 3, 3}), Tensor<T>(Shape{cout})});
    m.enc.push_back({Tensor<T>(Shape{cout, cout, 3, 3}), Tensor<T>(Shape{cout})});
  }
  const int cb = cfg.base_channels << cfg.depth;
  m.bott1 = {Tensor<T>(Shape{cb, ch_enc(cfg, cfg.depth - 1), 3, 3}), Tensor<T>(Shape{cb})};
  m.bott2 = {Tensor<T>(Shape{cb, cb, 3, 3}), Tensor<T>(Shape{cb})};
  for (int j = 0; j < cfg.depth; ++j) {
    const int cout = ch_dec(cfg, j);
    m.dec.push_back({Tensor<T>(Shape{cout, 3 * cout, 3, 3}), Tensor<T>(Shape{cout})});
    m.dec.push_back({Tensor<T>(Shape{cout, cout, 3, 3}), Tensor<T>(Shape{cout})});
  }
  auto head = [&](int stage) {
    return ConvParam<T>{Tensor<T>(Shape{cfg.classes, ch_dec(cfg, stage), 1, 1}),
                        Tensor<T>(Shape{cfg.classes})};
  };
  m.head_l = head(cfg.aux_stage_lower);
  m.head_m = head(cfg.aux_stage_middle);
  m.head_f = head(cfg.depth - 1);
  return m;
}

template <typename T>
T nll_mean_value(const Tensor<T>& probs, const Tensor<uint8_t>& target) {
  const int n = probs.dim(0), classes = probs.dim(1);
  const int64_t hw = static_cast<int64_t>(probs.dim(2)) * probs.dim(3);
  double acc = 0;
  for (int b = 0; b < n; ++b)
    for (int64_t px = 0; px < hw; ++px) {
      const int cls = target.values[static_cast<size_t>(b * hw + px)];
      const double pv = static_cast<double>(
          probs.values[static_cast<size_t>((static_cast<int64_t>(b) * classes + cls) * hw + px)]);
      acc -= std::log(std::max(pv, kLogFloor));
    }
  return static_cast<T>(acc / static_cast<double>(n * hw));
}

}  // namespace

template <typename T>
std::vector<Tensor<T>*> ModelT<T>::param_list() {
  std::vector<Tensor<T>*> out;
  auto add = [&](ConvParam<T>& c) {
    out.push_back(&c.w);
    out.push_back(&c.b);
  };
  for (ConvParam<T>& c : enc) add(c);
  add(bott1);
  add(bott2);
  for (ConvParam<T>& c : dec) add(c);
  add(head_l);
  add(head_m);
  add(head_f);
  return out;
}

template <typename T>
std::vector<const Tensor<T>*> ModelT<T>::param_list() const {
  std::vector<const Tensor<T>*> out;
  for (Tensor<T>* p : const_cast<ModelT<T>*>(this)->param_list()) out.push_back(p);
  return out;
}

template <typename T>
ModelT<T> build_model_t(const ModelConfig& cfg) {
  validate_config(cfg);
  ModelT<T> m = make_empty_model<T>(cfg);
  std::mt19937_64 rng = make_rng(mix_seed(cfg.seed, kInitStream));
  std::normal_distribution<double> unit(0.0, 1.0);
  for (Tensor<T>* p : m.param_list()) {
    if (p->rank() != 4) continue;  // biases stay zero
    const double fan_in = static_cast<double>(p->dim(1)) * p->dim(2) * p->dim(3);
    const double std_dev = std::sqrt(2.0 / fan_in);
    for (T& v : p->values) v = static_cast<T>(unit(rng) * std_dev);
  }
  return m;
}

Model build_model(const ModelConfig& cfg) { return build_model_t<float>(cfg); }

template <typename T>
GraphT<T> build_forward(const ModelT<T>& model, const Tensor<T>& images) {
  const ModelConfig& cfg = model.config;
  if (images.rank() != 4 || images.dim(1) != 1 || images.dim(2) != cfg.input_h ||
      images.dim(3) != cfg.input_w)
    throw std::invalid_argument("forward: images must be [N,1," +
                                std::to_string(cfg.input_h) + "," +
                                std::to_string(cfg.input_w) + "], got " +
                                shape_str(images.shape));

  GraphT<T> g;
  for (const Tensor<T>* p : model.param_list()) g.param_ids.push_back(g.tape.leaf(*p));
  size_t next = 0;
  auto conv_ids = [&]() {
    const int w = g.param_ids[next], b = g.param_ids[next + 1];
    next += 2;
    return std::pair<int, int>{w, b};
  };
  auto conv_block = [&](int x, int pad) {
    const auto [w, b] = conv_ids();
    return g.tape.relu(g.tape.conv2d(x, w, b, 1, pad));
  };

  int x = g.tape.leaf(images);
  std::vector<int> skips;
  for (int i = 0; i < cfg.depth; ++i) {
    x = conv_block(x, 1);
    x = conv_block(x, 1);
    skips.push_back(x);
    x = g.tape.maxpool2d(x);
  }
  x = conv_block(x, 1);
  x = conv_block(x, 1);

  auto head = [&](int stage_out, int factor) {
    const auto [w, b] = conv_ids();
    int logits = g.tape.conv2d(stage_out, w, b, 1, 0);
    if (factor > 1) logits = g.tape.upsample_bilinear(logits, factor);
    return g.tape.softmax_channels(logits);
  };

  int out_l = -1, out_m = -1, out_f = -1;
  for (int j = 0; j < cfg.depth; ++j) {
    x = g.tape.upsample_bilinear(x, 2);
    x = g.tape.concat_channels(x, skips[static_cast<size_t>(cfg.depth - 1 - j)]);
    x = conv_block(x, 1);
    x = conv_block(x, 1);
    if (j == cfg.aux_stage_lower) out_l = x;
    if (j == cfg.aux_stage_middle) out_m = x;
    if (j == cfg.depth - 1) out_f = x;
  }
  // Head parameters sit after the decoder in declaration order, so they are
  // attached once the trunk is complete.
  g.p_l = head(out_l, 1 << (cfg.depth - 1 - cfg.aux_stage_lower));
  g.p_m = head(out_m, 1 << (cfg.depth - 1 - cfg.aux_stage_middle));
  g.p_f = head(out_f, 1);
  return g;
}

PredictionSet forward(const Model& model, const Tensor<float>& images) {
  GraphT<float> g = build_forward(model, images);
  return PredictionSet{g.tape.val(g.p_l), g.tape.val(g.p_m), g.tape.val(g.p_f)};
}

template <typename T>
LossNodes attach_loss(GraphT<T>& g, Tensor<uint8_t> targets, const LossWeights& w) {
  LossNodes n;
  n.l_l = g.tape.nll_mean(g.p_l, targets);
  n.l_m = g.tape.nll_mean(g.p_m, targets);
  n.l_f = g.tape.nll_mean(g.p_f, std::move(targets));
  n.total = g.tape.weighted_sum({{n.l_l, static_cast<T>(w.alpha_l)},
                                 {n.l_m, static_cast<T>(w.alpha_m)},
                                 {n.l_f, static_cast<T>(w.alpha_f)}});
  return n;
}

LossValue loss(const PredictionSet& preds, const Tensor<uint8_t>& targets,
               const LossWeights& w) {
  LossValue v;
  v.l_l = nll_mean_value(preds.p_l, targets);
  v.l_m = nll_mean_value(preds.p_m, targets);
  v.l_f = nll_mean_value(preds.p_f, targets);
  v.total = w.alpha_l * v.l_l + w.alpha_m * v.l_m + w.alpha_f * v.l_f;
  return v;
}

AdamState init_adam(const Model& model) {
  AdamState s;
  for (const Tensor<float>* p : model.param_list()) {
    s.m.emplace_back(p->values.size(), 0.0f);
    s.v.emplace_back(p->values.size(), 0.0f);
  }
  return s;
}

float train_step(Model& model, const Tensor<float>& images,
                 const Tensor<uint8_t>& targets, AdamState& opt) {
  GraphT<float> g = build_forward(model, images);
  const LossNodes nodes = attach_loss(g, targets, model.config.loss_weights);
  const float total = g.tape.val(nodes.total).values[0];
  if (!std::isfinite(total))
    throw DivergenceError("train_step: non-finite loss at optimizer step " +
                          std::to_string(opt.t + 1));
  g.tape.backward(nodes.total);

  std::vector<Tensor<float>*> params = model.param_list();
  if (opt.m.size() != params.size())
    throw std::logic_error("train_step: optimizer state does not match the model");
  opt.t += 1;
  for (size_t i = 0; i < params.size(); ++i) {
    const std::vector<float>& grad = g.tape.grad(g.param_ids[i]);
    kernels::adam_update(params[i]->data(), opt.m[i].data(), opt.v[i].data(), grad.data(),
                         params[i]->size(), opt.lr, opt.beta1, opt.beta2, opt.eps, opt.t);
  }
  return total;
}

MaskTriple predict_mask(const Model& model, const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(0) != 1)
    throw std::invalid_argument("predict_mask: image must be [1,H,W], got " +
                                shape_str(image.shape));
  Tensor<float> batch(Shape{1, 1, image.dim(1), image.dim(2)});
  batch.values = image.values;
  const PredictionSet p = forward(model, batch);
  return MaskTriple{binarize(p.p_l), binarize(p.p_m), binarize(p.p_f)};
}

ScoreRecord consistency_scores(const PredictionSet& preds, const std::string& sample_id,
                               int round, int batch_index) {
  return consistency_from_masks(binarize(preds.p_l, batch_index),
                                binarize(preds.p_m, batch_index),
                                binarize(preds.p_f, batch_index), sample_id, round);
}

Tensor<float> stack_images(const std::vector<const Sample*>& samples) {
  if (samples.empty()) throw std::invalid_argument("stack_images: empty batch");
  const int h = samples[0]->image.dim(1), w = samples[0]->image.dim(2);
  Tensor<float> out(Shape{static_cast<int>(samples.size()), 1, h, w});
  for (size_t i = 0; i < samples.size(); ++i) {
    const Tensor<float>& img = samples[i]->image;
    if (img.rank() != 3 || img.dim(0) != 1 || img.dim(1) != h || img.dim(2) != w)
      throw std::invalid_argument("stack_images: sample " + samples[i]->id +
                                  " has shape " + shape_str(img.shape));
    std::memcpy(out.data() + i * img.values.size(), img.data(),
                img.values.size() * sizeof(float));
  }
  return out;
}

Tensor<uint8_t> stack_masks(const std::vector<const Sample*>& samples) {
  if (samples.empty()) throw std::invalid_argument("stack_masks: empty batch");
  const Sample& first = *samples[0];
  if (!first.mask) throw std::invalid_argument("stack_masks: sample without mask");
  const int h = first.mask->h, w = first.mask->w;
  Tensor<uint8_t> out(Shape{static_cast<int>(samples.size()), h, w});
  for (size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = *samples[i];
    if (!s.mask || s.mask->h != h || s.mask->w != w)
      throw std::invalid_argument("stack_masks: sample " + s.id +
                                  " missing mask or mismatched dims");
    std::memcpy(out.values.data() + i * s.mask->values.size(), s.mask->values.data(),
                s.mask->values.size());
  }
  return out;
}

double evaluate(const Model& model, const std::vector<Sample>& samples, int batch_size) {
  if (samples.empty()) throw std::invalid_argument("evaluate: empty dataset");
  if (batch_size < 1) throw std::invalid_argument("evaluate: batch_size must be >= 1");
  double acc = 0;
  for (size_t begin = 0; begin < samples.size(); begin += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(samples.size(), begin + static_cast<size_t>(batch_size));
    std::vector<const Sample*> batch;
    for (size_t i = begin; i < end; ++i) {
      if (!samples[i].mask)
        throw std::invalid_argument("evaluate: sample " + samples[i].id + " has no mask");
      batch.push_back(&samples[i]);
    }
    const PredictionSet p = forward(model, stack_images(batch));
    for (size_t i = 0; i < batch.size(); ++i)
      acc += dsc(binarize(p.p_f, static_cast<int>(i)), *batch[i]->mask);
  }
  return acc / static_cast<double>(samples.size());
}

namespace {

struct ByteReader {
  const std::string& path;
  std::string buf;
  size_t pos = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(path + ": " + msg + " at byte " + std::to_string(pos));
  }
  void read(void* dst, size_t n) {
    if (buf.size() - pos < n) fail("truncated checkpoint");
    std::memcpy(dst, buf.data() + pos, n);
    pos += n;
  }
  uint32_t u32() {
    uint32_t v;
    read(&v, 4);
    return v;
  }
  uint64_t u64() {
    uint64_t v;
    read(&v, 8);
    return v;
  }
  float f32() {
    float v;
    read(&v, 4);
    return v;
  }
};

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, uint32_t round) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path + ": cannot open file for writing");
  auto w32 = [&](uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto wf = [&](float v) { out.write(reinterpret_cast<const char*>(&v), 4); };

  out.write(kMagic, 8);
  w32(kVersion);
  const ModelConfig& c = model.config;
  w32(static_cast<uint32_t>(c.depth));
  w32(static_cast<uint32_t>(c.base_channels));
  w32(static_cast<uint32_t>(c.classes));
  w32(static_cast<uint32_t>(c.input_h));
  w32(static_cast<uint32_t>(c.input_w));
  w32(static_cast<uint32_t>(c.aux_stage_lower));
  w32(static_cast<uint32_t>(c.aux_stage_middle));
  wf(c.loss_weights.alpha_l);
  wf(c.loss_weights.alpha_m);
  wf(c.loss_weights.alpha_f);
  const uint64_t seed = c.seed;
  out.write(reinterpret_cast<const char*>(&seed), 8);
  w32(round);

  const std::vector<const Tensor<float>*> params = model.param_list();
  w32(static_cast<uint32_t>(params.size()));
  for (const Tensor<float>* p : params) {
    w32(static_cast<uint32_t>(p->rank()));
    for (int d = 0; d < p->rank(); ++d) w32(static_cast<uint32_t>(p->dim(d)));
    out.write(reinterpret_cast<const char*>(p->data()),
              static_cast<std::streamsize>(p->values.size() * sizeof(float)));
  }
  if (!out) throw DataError(path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open file");
  ByteReader r{path, std::string((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>()),
               0};

  char magic[8];
  r.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) r.fail("bad checkpoint magic");
  const uint32_t version = r.u32();
  if (version != kVersion)
    r.fail("unsupported checkpoint version " + std::to_string(version));

  ModelConfig c;
  c.depth = static_cast<int>(r.u32());
  c.base_channels = static_cast<int>(r.u32());
  c.classes = static_cast<int>(r.u32());
  c.input_h = static_cast<int>(r.u32());
  c.input_w = static_cast<int>(r.u32());
  c.aux_stage_lower = static_cast<int>(r.u32());
  c.aux_stage_middle = static_cast<int>(r.u32());
  c.loss_weights.alpha_l = r.f32();
  c.loss_weights.alpha_m = r.f32();
  c.loss_weights.alpha_f = r.f32();
  c.seed = r.u64();

  Checkpoint ck;
  ck.round = r.u32();
  try {
    validate_config(c);
  } catch (const ConfigError& e) {
    throw DataError(path + ": checkpoint config invalid: " + e.what());
  }
  ck.model = make_empty_model<float>(c);

  std::vector<Tensor<float>*> params = ck.model.param_list();
  const uint32_t n_tensors = r.u32();
  if (n_tensors != params.size())
    r.fail("checkpoint has " + std::to_string(n_tensors) + " tensors, config implies " +
           std::to_string(params.size()));
  for (size_t i = 0; i < params.size(); ++i) {
    Tensor<float>* p = params[i];
    const uint32_t rank = r.u32();
    if (rank != static_cast<uint32_t>(p->rank()))
      r.fail("tensor " + std::to_string(i) + " rank " + std::to_string(rank) +
             " does not match expected " + std::to_string(p->rank()));
    for (int d = 0; d < p->rank(); ++d) {
      const uint32_t dim = r.u32();
      if (dim != static_cast<uint32_t>(p->dim(d)))
        r.fail("tensor " + std::to_string(i) + " dim " + std::to_string(d) +
               " is " + std::to_string(dim) + ", expected " + std::to_string(p->dim(d)));
    }
    r.read(p->data(), p->values.size() * sizeof(float));
    if (!all_finite(*p)) r.fail("tensor " + std::to_string(i) + " has non-finite values");
  }
  if (r.pos != r.buf.size()) r.fail("trailing bytes after checkpoint payload");
  return ck;
}

template struct ModelT<float>;
template struct ModelT<double>;
template ModelT<float> build_model_t<float>(const ModelConfig&);
template ModelT<double> build_model_t<double>(const ModelConfig&);
template GraphT<float> build_forward<float>(const ModelT<float>&, const Tensor<float>&);
template GraphT<double> build_forward<double>(const ModelT<double>&, const Tensor<double>&);
template LossNodes attach_loss<float>(GraphT<float>&, Tensor<uint8_t>, const LossWeights&);
template LossNodes attach_loss<double>(GraphT<double>&, Tensor<uint8_t>, const LossWeights&);

}  // namespace dsal
