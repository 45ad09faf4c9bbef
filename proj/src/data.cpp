// SPDX-License-Identifier: Apache-2.0
#include "dsal/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "dsal/errors.hpp"
#include "dsal/pgm.hpp"
#include "dsal/rng.hpp"

namespace dsal {

namespace {

struct Capsule {
  double ax, ay, bx, by;  // segment endpoints
  double r;
};

bool capsule_covers(const Capsule& c, double px, double py) {
  const double dx = c.bx - c.ax, dy = c.by - c.ay;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - c.ax) * dx + (py - c.ay) * dy) / len2 : 0.0;
  t = std::min(std::max(t, 0.0), 1.0);
  const double qx = c.ax + t * dx - px, qy = c.ay + t * dy - py;
  return qx * qx + qy * qy <= c.r * c.r;
}

float quantize_u8(float v) {
  const long q = std::lround(std::min(std::max(v, 0.0f), 1.0f) * 255.0f);
  return static_cast<float>(q) / 255.0f;
}

uint8_t to_u8(float v) {
  return static_cast<uint8_t>(std::lround(std::min(std::max(v, 0.0f), 1.0f) * 255.0f));
}

std::string pad3(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", i);
  return buf;
}

}  // namespace

Sample synth_sample(std::mt19937_64& rng, const DatasetConfig& cfg) {
  const int h = cfg.height, w = cfg.width;
  const double scale = static_cast<double>(std::min(h, w));

  std::uniform_int_distribution<int> n_dist(cfg.shapes_min, cfg.shapes_max);
  const int n_shapes = n_dist(rng);

  std::uniform_real_distribution<double> pos_x(0.15 * w, 0.85 * w);
  std::uniform_real_distribution<double> pos_y(0.15 * h, 0.85 * h);
  std::uniform_real_distribution<double> angle(0.0, 3.14159265358979323846);
  std::uniform_real_distribution<double> half_len(0.12 * scale, 0.30 * scale);
  std::uniform_real_distribution<double> radius(0.03 * scale, 0.07 * scale);

  std::vector<Capsule> shapes;
  shapes.reserve(static_cast<size_t>(n_shapes));
  for (int i = 0; i < n_shapes; ++i) {
    const double cx = pos_x(rng), cy = pos_y(rng);
    const double th = angle(rng), hl = half_len(rng), r = radius(rng);
    const double ux = std::cos(th), uy = std::sin(th);
    shapes.push_back({cx - hl * ux, cy - hl * uy, cx + hl * ux, cy + hl * uy, r});
  }

  Sample s;
  s.image = Tensor<float>(Shape{1, h, w});
  s.mask = Mask(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      bool fg = false;
      for (const Capsule& c : shapes)
        if (capsule_covers(c, px, py)) {
          fg = true;
          break;
        }
      s.mask->at(y, x) = fg ? 1 : 0;
      s.image.at3(0, y, x) = static_cast<float>(fg ? cfg.fg_level : cfg.bg_level);
    }

  if (cfg.illum_amplitude != 0.0) {
    std::uniform_real_distribution<double> dir(0.0, 2.0 * 3.14159265358979323846);
    const double phi = dir(rng);
    const double gx = std::cos(phi), gy = std::sin(phi);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double proj = ((x + 0.5) / w - 0.5) * gx + ((y + 0.5) / h - 0.5) * gy;
        s.image.at3(0, y, x) += static_cast<float>(cfg.illum_amplitude * proj);
      }
  }

  if (cfg.noise_sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
    for (float& v : s.image.values) v += static_cast<float>(noise(rng));
  }

  for (float& v : s.image.values) v = quantize_u8(v);
  return s;
}

Normalized normalize_intensity(const Tensor<float>& image) {
  Normalized out;
  out.image = image;
  const auto [mn, mx] = std::minmax_element(image.values.begin(), image.values.end());
  if (image.values.empty() || *mn == *mx) {
    std::fill(out.image.values.begin(), out.image.values.end(), 0.0f);
    out.was_constant = true;
    return out;
  }
  const float lo = *mn, range = *mx - *mn;
  for (float& v : out.image.values) v = (v - lo) / range;
  return out;
}

void save_pair(const Sample& s, const std::string& dir) {
  if (!s.mask) throw DataError("save_pair: sample " + s.id + " has no mask");
  if (s.image.rank() != 3 || s.image.dim(0) != 1)
    throw DataError("save_pair: image must be [1,H,W], got " + shape_str(s.image.shape));
  const int h = s.image.dim(1), w = s.image.dim(2);
  if (s.mask->h != h || s.mask->w != w)
    throw DataError("save_pair: mask dims do not match image for sample " + s.id);

  PgmImage img;
  img.w = w;
  img.h = h;
  img.pixels.resize(static_cast<size_t>(w) * h);
  for (size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = to_u8(s.image.values[i]);
  pgm_save(dir + "/" + s.id + ".pgm", img);

  PgmImage m;
  m.w = w;
  m.h = h;
  m.pixels.resize(img.pixels.size());
  for (size_t i = 0; i < m.pixels.size(); ++i) m.pixels[i] = s.mask->values[i] ? 255 : 0;
  pgm_save(dir + "/" + s.id + "_mask.pgm", m);
}

Sample load_pair(const std::string& image_path, const std::string& mask_path,
                 const std::string& id) {
  const PgmImage img = pgm_load(image_path);
  const PgmImage msk = pgm_load(mask_path);
  if (img.w != msk.w || img.h != msk.h)
    throw DataError(mask_path + ": mask is " + std::to_string(msk.w) + "x" +
                    std::to_string(msk.h) + " but image " + image_path + " is " +
                    std::to_string(img.w) + "x" + std::to_string(img.h));

  Sample s;
  s.id = id;
  s.image = Tensor<float>(Shape{1, img.h, img.w});
  for (size_t i = 0; i < img.pixels.size(); ++i)
    s.image.values[i] = static_cast<float>(img.pixels[i]) / 255.0f;

  Mask m(msk.h, msk.w);
  for (size_t i = 0; i < msk.pixels.size(); ++i) {
    if (msk.pixels[i] != 0 && msk.pixels[i] != 255)
      throw DataError(mask_path + ": mask value " + std::to_string(int(msk.pixels[i])) +
                      " is not 0 or 255 at byte " + std::to_string(msk.data_offset + i));
    m.values[i] = msk.pixels[i] ? 1 : 0;
  }
  s.mask = std::move(m);
  return s;
}

DatasetSplits make_dataset(const DatasetConfig& cfg) {
  if (cfg.height < 8 || cfg.width < 8)
    throw ConfigError("make_dataset: resolution too small");
  if (cfg.n_train < 1 || cfg.n_val < 1 || cfg.n_test < 1)
    throw ConfigError("make_dataset: all splits must be non-empty");
  if (cfg.shapes_min < 1 || cfg.shapes_max < cfg.shapes_min)
    throw ConfigError("make_dataset: bad shapes_per_image range");

  const int n_total = cfg.n_train + cfg.n_val + cfg.n_test;
  std::vector<Sample> all(static_cast<size_t>(n_total));
  for (int i = 0; i < n_total; ++i) {
    std::mt19937_64 rng = make_rng(mix_seed(cfg.seed, 0x5A0000u + static_cast<uint64_t>(i)));
    all[static_cast<size_t>(i)] = synth_sample(rng, cfg);
  }

  std::vector<int> perm(static_cast<size_t>(n_total));
  for (int i = 0; i < n_total; ++i) perm[static_cast<size_t>(i)] = i;
  std::mt19937_64 split_rng = make_rng(mix_seed(cfg.seed, 0x511F7u));
  std::shuffle(perm.begin(), perm.end(), split_rng);

  DatasetSplits out;
  auto take = [&](std::vector<Sample>& dst, int offset, int count, const char* split,
                  bool labeled) {
    dst.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
      Sample s = std::move(all[static_cast<size_t>(perm[static_cast<size_t>(offset + i)])]);
      s.id = std::string(split) + "_" + pad3(i);
      s.labeled = labeled;
      dst.push_back(std::move(s));
    }
  };
  // Val/test ground truth is always used; train labels are revealed by the
  // simulated oracle, so train samples start unlabeled.
  take(out.train, 0, cfg.n_train, "train", false);
  take(out.val, cfg.n_train, cfg.n_val, "val", true);
  take(out.test, cfg.n_train + cfg.n_val, cfg.n_test, "test", true);
  return out;
}

}  // namespace dsal
