// SPDX-License-Identifier: Apache-2.0
#include "dsal/pgm.hpp"

#include <cstdio>
#include <fstream>

#include "dsal/errors.hpp"

namespace dsal {

namespace {

constexpr int kMaxDim = 1 << 16;

struct Cursor {
  const std::string& path;
  const std::string& buf;
  size_t pos = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw DataError(path + ": " + msg + " at byte " + std::to_string(pos));
  }
  bool eof() const { return pos >= buf.size(); }
  char peek() const { return buf[pos]; }
};

bool is_pgm_ws(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Whitespace and '#' comments are interchangeable separators in the header.
void skip_separators(Cursor& c) {
  while (!c.eof()) {
    if (is_pgm_ws(c.peek())) {
      ++c.pos;
    } else if (c.peek() == '#') {
      while (!c.eof() && c.peek() != '\n') ++c.pos;
    } else {
      return;
    }
  }
}

int parse_header_int(Cursor& c, const char* what) {
  skip_separators(c);
  if (c.eof() || c.peek() < '0' || c.peek() > '9')
    c.fail(std::string("expected ") + what);
  long v = 0;
  while (!c.eof() && c.peek() >= '0' && c.peek() <= '9') {
    v = v * 10 + (c.peek() - '0');
    if (v > kMaxDim * 16L) c.fail(std::string(what) + " out of range");
    ++c.pos;
  }
  return static_cast<int>(v);
}

}  // namespace

PgmImage pgm_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open file");
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Cursor c{path, buf};

  if (buf.size() < 2 || buf[0] != 'P' || buf[1] != '5')
    c.fail("not a binary PGM (magic must be P5)");
  c.pos = 2;

  PgmImage img;
  img.w = parse_header_int(c, "width");
  img.h = parse_header_int(c, "height");
  const int maxval = parse_header_int(c, "maxval");
  if (img.w < 1 || img.w > kMaxDim) c.fail("width out of range");
  if (img.h < 1 || img.h > kMaxDim) c.fail("height out of range");
  if (maxval != 255) c.fail("unsupported maxval " + std::to_string(maxval) + " (expected 255)");
  if (c.eof() || !is_pgm_ws(c.peek())) c.fail("expected single whitespace before pixel data");
  ++c.pos;

  img.data_offset = c.pos;
  const size_t need = static_cast<size_t>(img.w) * static_cast<size_t>(img.h);
  if (buf.size() - c.pos < need) {
    c.pos = buf.size();
    c.fail("truncated pixel data (need " + std::to_string(need) + " bytes, have " +
           std::to_string(buf.size() - img.data_offset) + ")");
  }
  if (buf.size() - c.pos > need) {
    c.pos = img.data_offset + need;
    c.fail("trailing bytes after pixel data");
  }
  img.pixels.assign(buf.begin() + static_cast<long>(c.pos), buf.end());
  return img;
}

void pgm_save(const std::string& path, const PgmImage& img) {
  if (img.w < 1 || img.h < 1 ||
      img.pixels.size() != static_cast<size_t>(img.w) * static_cast<size_t>(img.h))
    throw DataError(path + ": refusing to save inconsistent raster");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError(path + ": cannot open file for writing");
  char header[64];
  const int n = std::snprintf(header, sizeof(header), "P5\n%d %d\n255\n", img.w, img.h);
  out.write(header, n);
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw DataError(path + ": write failed");
}

}  // namespace dsal
