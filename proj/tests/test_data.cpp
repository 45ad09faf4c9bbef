// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "dsal/data.hpp"
#include "dsal/errors.hpp"
#include "dsal/pgm.hpp"
#include "dsal/rng.hpp"

namespace fs = std::filesystem;
using dsal::DatasetConfig;
using dsal::DatasetSplits;
using dsal::Sample;

namespace {

fs::path fresh_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

DatasetConfig small_cfg() {
  DatasetConfig cfg;
  cfg.n_train = 12;
  cfg.n_val = 3;
  cfg.n_test = 4;
  return cfg;
}

}  // namespace

TEST_CASE("make_dataset is deterministic in the seed") {
  const DatasetConfig cfg = small_cfg();
  const DatasetSplits a = dsal::make_dataset(cfg);
  const DatasetSplits b = dsal::make_dataset(cfg);
  REQUIRE(a.train.size() == 12);
  REQUIRE(a.val.size() == 3);
  REQUIRE(a.test.size() == 4);
  for (size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].id == b.train[i].id);
    CHECK(a.train[i].image.values == b.train[i].image.values);
    CHECK(a.train[i].mask->values == b.train[i].mask->values);
  }

  DatasetConfig other = cfg;
  other.seed = cfg.seed + 1;
  const DatasetSplits c = dsal::make_dataset(other);
  bool any_differ = false;
  for (size_t i = 0; i < a.train.size() && !any_differ; ++i)
    any_differ = a.train[i].image.values != c.train[i].image.values;
  CHECK(any_differ);
}

TEST_CASE("split ids, sizes and annotation flags") {
  const DatasetSplits d = dsal::make_dataset(small_cfg());
  CHECK(d.train.front().id == "train_000");
  CHECK(d.train.back().id == "train_011");
  CHECK(d.val.front().id == "val_000");
  CHECK(d.test.back().id == "test_003");

  std::set<std::string> ids;
  for (const auto* split : {&d.train, &d.val, &d.test})
    for (const Sample& s : *split) {
      CHECK(ids.insert(s.id).second);
      CHECK(s.mask.has_value());
      CHECK(s.image.shape == dsal::Shape{1, 64, 64});
    }
  for (const Sample& s : d.train) CHECK_FALSE(s.labeled);
  for (const Sample& s : d.val) CHECK(s.labeled);
  for (const Sample& s : d.test) CHECK(s.labeled);
}

TEST_CASE("foreground fraction stays in a sane band") {
  DatasetConfig cfg = small_cfg();
  cfg.n_train = 60;
  const DatasetSplits d = dsal::make_dataset(cfg);
  double sum = 0.0;
  for (const Sample& s : d.train) {
    const double frac =
        static_cast<double>(s.mask->count()) / static_cast<double>(64 * 64);
    CHECK(frac > 0.02);
    CHECK(frac < 0.55);
    sum += frac;
  }
  const double mean = sum / static_cast<double>(d.train.size());
  CHECK(mean > 0.10);
  CHECK(mean < 0.35);
}

TEST_CASE("clean rendering hits the exact quantized levels") {
  DatasetConfig cfg = small_cfg();
  cfg.noise_sigma = 0.0;
  cfg.illum_amplitude = 0.0;
  auto rng = dsal::make_rng(9);
  const Sample s = dsal::synth_sample(rng, cfg);
  const float fg = 204.0f / 255.0f;  // quantized 0.8
  const float bg = 51.0f / 255.0f;   // quantized 0.2
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) {
      const float v = s.image.at3(0, y, x);
      if (s.mask->at(y, x))
        CHECK(v == fg);
      else
        CHECK(v == bg);
    }
}

TEST_CASE("mask does not depend on the noise level") {
  DatasetConfig noisy = small_cfg();
  DatasetConfig clean = small_cfg();
  clean.noise_sigma = 0.0;
  const DatasetSplits a = dsal::make_dataset(noisy);
  const DatasetSplits b = dsal::make_dataset(clean);
  bool image_differs = false;
  for (size_t i = 0; i < a.train.size(); ++i) {
    CHECK(a.train[i].mask->values == b.train[i].mask->values);
    if (a.train[i].image.values != b.train[i].image.values) image_differs = true;
  }
  CHECK(image_differs);
}

TEST_CASE("normalize_intensity rescales to the unit range") {
  dsal::Tensor<float> img(dsal::Shape{1, 2, 2});
  img.values = {0.2f, 0.4f, 0.6f, 1.0f};
  const auto n = dsal::normalize_intensity(img);
  CHECK_FALSE(n.was_constant);
  CHECK(n.image.values[0] == 0.0f);
  CHECK(n.image.values[3] == 1.0f);
  CHECK(n.image.values[1] == doctest::Approx(0.25).epsilon(1e-6));

  // Already spanning [0,1]: a second pass changes nothing.
  const auto n2 = dsal::normalize_intensity(n.image);
  CHECK(n2.image.values == n.image.values);

  dsal::Tensor<float> flat(dsal::Shape{1, 2, 2}, 0.7f);
  const auto c = dsal::normalize_intensity(flat);
  CHECK(c.was_constant);
  for (float v : c.image.values) CHECK(v == 0.0f);
}

TEST_CASE("save_pair / load_pair round-trips bit-exactly") {
  const fs::path dir = fresh_dir("dsal_test_pairs");
  auto rng = dsal::make_rng(4);
  Sample s = dsal::synth_sample(rng, small_cfg());
  s.id = "train_000";
  dsal::save_pair(s, dir.string());

  const Sample loaded = dsal::load_pair((dir / "train_000.pgm").string(),
                                        (dir / "train_000_mask.pgm").string(), "train_000");
  CHECK(loaded.image.values == s.image.values);
  CHECK(loaded.mask->values == s.mask->values);

  // A second save produces identical bytes.
  const std::string img1 = read_bytes(dir / "train_000.pgm");
  dsal::save_pair(s, dir.string());
  CHECK(read_bytes(dir / "train_000.pgm") == img1);
  CHECK(img1.substr(0, 3) == "P5\n");
}

TEST_CASE("pgm_load rejects malformed files") {
  const fs::path dir = fresh_dir("dsal_test_pgm");

  write_bytes(dir / "magic.pgm", "P2\n2 2\n255\n....");
  CHECK_THROWS_AS(dsal::pgm_load((dir / "magic.pgm").string()), dsal::DataError);

  write_bytes(dir / "maxval.pgm", std::string("P5\n2 2\n254\n") + "abcd");
  CHECK_THROWS_AS(dsal::pgm_load((dir / "maxval.pgm").string()), dsal::DataError);

  write_bytes(dir / "short.pgm", std::string("P5\n2 2\n255\n") + "abc");
  CHECK_THROWS_AS(dsal::pgm_load((dir / "short.pgm").string()), dsal::DataError);

  write_bytes(dir / "long.pgm", std::string("P5\n2 2\n255\n") + "abcde");
  CHECK_THROWS_AS(dsal::pgm_load((dir / "long.pgm").string()), dsal::DataError);

  write_bytes(dir / "nohdr.pgm", "");
  CHECK_THROWS_AS(dsal::pgm_load((dir / "nohdr.pgm").string()), dsal::DataError);

  // Comments and arbitrary whitespace in the header are fine.
  write_bytes(dir / "ok.pgm", std::string("P5\n# comment\n 2\t2 # w h\n255\n") +
                                  std::string(4, '\x7f'));
  const dsal::PgmImage ok = dsal::pgm_load((dir / "ok.pgm").string());
  CHECK(ok.w == 2);
  CHECK(ok.h == 2);
  CHECK(ok.pixels == std::vector<uint8_t>(4, 0x7f));
}

TEST_CASE("load_pair rejects gray mask pixels with the byte offset") {
  const fs::path dir = fresh_dir("dsal_test_badmask");
  // Header "P5\n4 4\n255\n" is 11 bytes; pixel 5 sits at byte 16.
  std::string img = "P5\n4 4\n255\n" + std::string(16, '\x00');
  std::string msk = img;
  msk[11 + 5] = static_cast<char>(128);
  write_bytes(dir / "a.pgm", img);
  write_bytes(dir / "a_mask.pgm", msk);
  try {
    dsal::load_pair((dir / "a.pgm").string(), (dir / "a_mask.pgm").string(), "a");
    FAIL("expected DataError");
  } catch (const dsal::DataError& e) {
    const std::string what = e.what();
    CHECK(what.find("128") != std::string::npos);
    CHECK(what.find("byte 16") != std::string::npos);
  }

  // Image / mask resolution mismatch.
  write_bytes(dir / "b.pgm", "P5\n2 2\n255\n" + std::string(4, '\x00'));
  write_bytes(dir / "b_mask.pgm", "P5\n2 3\n255\n" + std::string(6, '\x00'));
  CHECK_THROWS_AS(
      dsal::load_pair((dir / "b.pgm").string(), (dir / "b_mask.pgm").string(), "b"),
      dsal::DataError);
}

TEST_CASE("make_dataset validates its config") {
  DatasetConfig cfg = small_cfg();
  cfg.height = 4;
  CHECK_THROWS_AS(dsal::make_dataset(cfg), dsal::ConfigError);
  cfg = small_cfg();
  cfg.n_val = 0;
  CHECK_THROWS_AS(dsal::make_dataset(cfg), dsal::ConfigError);
  cfg = small_cfg();
  cfg.shapes_min = 5;
  cfg.shapes_max = 3;
  CHECK_THROWS_AS(dsal::make_dataset(cfg), dsal::ConfigError);
}
