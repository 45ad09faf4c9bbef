// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "dsal/metrics.hpp"
#include "dsal/tensor.hpp"

namespace dsal {

/// One image with (optionally) its ground-truth mask. `labeled` tracks
/// annotation status inside the active learning loop; the mask itself stays
/// attached even while unlabeled because annotation is simulated.
struct Sample {
  std::string id;
  Tensor<float> image;  // [1,H,W], values in [0,1]
  std::optional<Mask> mask;
  bool labeled = false;
};

struct DatasetConfig {
  int height = 64;
  int width = 64;
  int n_train = 139;
  int n_val = 20;
  int n_test = 50;
  int shapes_min = 3;
  int shapes_max = 8;
  double noise_sigma = 0.08;
  double fg_level = 0.8;
  double bg_level = 0.2;
  double illum_amplitude = 0.15;
  uint64_t seed = 1;
};

struct DatasetSplits {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};

/// Renders capsules (thick segments) brighter than the background, adds a
/// smooth illumination gradient and Gaussian noise, clamps to [0,1], then
/// quantizes to the 8-bit grid so disk round-trips are bit-exact. The mask is
/// the exact union of the rendered shapes, independent of noise.
Sample synth_sample(std::mt19937_64& rng, const DatasetConfig& cfg);

struct Normalized {
  Tensor<float> image;
  bool was_constant = false;
};

/// Min-max rescale to [0,1]. A constant image cannot be rescaled; it comes
/// back as all zeros with the warning flag set.
Normalized normalize_intensity(const Tensor<float>& image);

/// Image to `<dir>/<id>.pgm`, mask to `<dir>/<id>_mask.pgm` (0/255).
void save_pair(const Sample& s, const std::string& dir);

/// Inverse of save_pair. Mask pixels must be exactly 0 or 255; anything else
/// is rejected with the file and byte offset.
Sample load_pair(const std::string& image_path, const std::string& mask_path,
                 const std::string& id);

/// Generates n_train+n_val+n_test samples and assigns them to splits by a
/// seeded shuffle. Ids are `<split>_<index>` with a stable zero-padded index.
DatasetSplits make_dataset(const DatasetConfig& cfg);

}  // namespace dsal
