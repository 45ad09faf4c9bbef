// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dsal {

/// 8-bit grayscale raster plus the byte offset where pixel data starts in the
/// source file (0 for images built in memory). The offset lets callers report
/// positions of bad pixel values.
struct PgmImage {
  int w = 0;
  int h = 0;
  std::vector<uint8_t> pixels;
  size_t data_offset = 0;
};

/// Parses a binary PGM (P5) file with maxval 255. Malformed input raises
/// DataError naming the file and byte offset.
PgmImage pgm_load(const std::string& path);

/// Writes P5 with maxval 255. The exact byte layout is
/// "P5\n<w> <h>\n255\n" followed by w*h raw bytes, so saves are reproducible.
void pgm_save(const std::string& path, const PgmImage& img);

}  // namespace dsal
