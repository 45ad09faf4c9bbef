// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dsal/autodiff.hpp"
#include "dsal/data.hpp"
#include "dsal/metrics.hpp"
#include "dsal/tensor.hpp"

namespace dsal {

struct LossWeights {
  float alpha_l = 0.1f;
  float alpha_m = 0.3f;
  float alpha_f = 0.6f;
};

/// Mini U-Net shape. Encoder stage i outputs base_channels*2^i channels;
/// decoder stage j outputs base_channels*2^(depth-1-j) at resolution
/// H/2^(depth-1-j). Auxiliary heads sit on two decoder stages and are
/// bilinearly upsampled to full resolution before softmax.
struct ModelConfig {
  int depth = 3;
  int base_channels = 8;
  int classes = 2;
  int input_h = 64;
  int input_w = 64;
  int aux_stage_lower = 0;
  int aux_stage_middle = 1;
  LossWeights loss_weights;
  uint64_t seed = 0;
};

template <typename T>
struct ConvParam {
  Tensor<T> w;  // [out,in,kh,kw]
  Tensor<T> b;  // [out]
};

/// Parameters in declaration order: encoder stages (two convs each, w then
/// b), the two bottleneck convs, decoder stages (two convs each), then the
/// lower, middle and final 1x1 heads. Checkpoints and the optimizer walk
/// this exact order.
template <typename T>
struct ModelT {
  ModelConfig config;
  std::vector<ConvParam<T>> enc;  // 2 per stage
  ConvParam<T> bott1, bott2;
  std::vector<ConvParam<T>> dec;  // 2 per stage
  ConvParam<T> head_l, head_m, head_f;

  std::vector<Tensor<T>*> param_list();
  std::vector<const Tensor<T>*> param_list() const;
};

using Model = ModelT<float>;

/// Full-resolution per-pixel class distributions from the three heads.
struct PredictionSet {
  Tensor<float> p_l, p_m, p_f;  // [N,classes,H,W]
};

/// He-style fan-in initialization from the config seed; biases start at 0.
/// Rejects invalid configs (resolution not divisible by 2^depth, bad aux
/// stage indices, unsupported class count, non-positive weight sum).
template <typename T>
ModelT<T> build_model_t(const ModelConfig& cfg);
Model build_model(const ModelConfig& cfg);

/// Forward graph on a tape, kept so gradients can flow back to the
/// parameters. param_ids matches param_list() order.
template <typename T>
struct GraphT {
  Tape<T> tape;
  std::vector<int> param_ids;
  int p_l = -1, p_m = -1, p_f = -1;
};

/// images is [N,1,H,W] matching the config resolution.
template <typename T>
GraphT<T> build_forward(const ModelT<T>& model, const Tensor<T>& images);

PredictionSet forward(const Model& model, const Tensor<float>& images);

struct LossNodes {
  int l_l = -1, l_m = -1, l_f = -1, total = -1;
};

/// Adds the three per-head mean cross-entropy nodes and their weighted sum
/// (in lower, middle, final order) to an existing forward graph.
template <typename T>
LossNodes attach_loss(GraphT<T>& g, Tensor<uint8_t> targets, const LossWeights& w);

struct LossValue {
  float total = 0;
  float l_l = 0, l_m = 0, l_f = 0;
};

/// Pure recomputation of the loss from probability maps; same math as the
/// tape nodes. targets is [N,H,W] of class ids.
LossValue loss(const PredictionSet& preds, const Tensor<uint8_t>& targets,
               const LossWeights& w);

struct AdamState {
  std::vector<std::vector<float>> m, v;
  int64_t t = 0;
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

AdamState init_adam(const Model& model);

/// One optimizer step on all parameters from the weighted loss gradient.
/// Returns the pre-update loss. Throws DivergenceError on non-finite loss.
float train_step(Model& model, const Tensor<float>& images,
                 const Tensor<uint8_t>& targets, AdamState& opt);

struct MaskTriple {
  Mask l, m, f;
};

/// Binarized per-head masks for a single image [1,H,W].
MaskTriple predict_mask(const Model& model, const Tensor<float>& image);

/// ScoreRecord for one batch element of a prediction set.
ScoreRecord consistency_scores(const PredictionSet& preds, const std::string& sample_id,
                               int round, int batch_index = 0);

/// Mean DSC of the final head against ground truth over the samples.
/// Batches internally; every sample must carry a mask.
double evaluate(const Model& model, const std::vector<Sample>& samples,
                int batch_size = 8);

/// Batch assembly. stack_images wants every image [1,H,W] with equal dims;
/// stack_masks produces the [N,H,W] class-id tensor.
Tensor<float> stack_images(const std::vector<const Sample*>& samples);
Tensor<uint8_t> stack_masks(const std::vector<const Sample*>& samples);

/// Checkpoint container: magic, version, config echo, then every parameter
/// tensor in declaration order as rank/dims/float32 little-endian data.
/// Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const Model& model, uint32_t round);

struct Checkpoint {
  Model model;
  uint32_t round = 0;
};

Checkpoint load_checkpoint(const std::string& path);

}  // namespace dsal
