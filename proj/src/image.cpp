// SPDX-License-Identifier: Apache-2.0
#include "gmjo/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gmjo/io.hpp"
#include "gmjo/util.hpp"

namespace gmjo {

double Image::sample(double x, double y, int ch) const {
  const double fx = std::clamp(x - 0.5, 0.0, double(w - 1));
  const double fy = std::clamp(y - 0.5, 0.0, double(h - 1));
  const int x0 = std::min(int(fx), std::max(w - 2, 0));
  const int y0 = std::min(int(fy), std::max(h - 2, 0));
  const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
  const double ax = fx - x0, ay = fy - y0;
  return (1 - ay) * ((1 - ax) * at(y0, x0, ch) + ax * at(y0, x1, ch)) +
         ay * ((1 - ax) * at(y1, x0, ch) + ax * at(y1, x1, ch));
}

Image resized_bilinear(const Image& img, int h, int w) {
  check(h > 0 && w > 0, "resized_bilinear: target size must be positive");
  check(img.h > 0 && img.w > 0, "resized_bilinear: empty source");
  Image out(h, w, img.c);
  const double sx = double(img.w) / w, sy = double(img.h) / h;
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < img.c; ++ch)
        out.at(r, c, ch) = img.sample((c + 0.5) * sx, (r + 0.5) * sy, ch);
  return out;
}

namespace {

std::uint8_t to_byte(double v) {
  return std::uint8_t(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void skip_ws_and_comments(std::istream& is) {
  int ch = is.peek();
  while (ch == ' ' || ch == '\n' || ch == '\t' || ch == '\r' || ch == '#') {
    if (ch == '#') {
      std::string line;
      std::getline(is, line);
    } else {
      is.get();
    }
    ch = is.peek();
  }
}

Image read_pnm(const std::string& path, const char* want_magic, int channels) {
  std::ifstream f(path, std::ios::binary);
  check(bool(f), "cannot open '", path, "'");
  std::string magic;
  f >> magic;
  check(magic == want_magic, "'", path, "': expected ", want_magic, " raster, found '", magic,
        "'");
  skip_ws_and_comments(f);
  int w = 0, h = 0, maxval = 0;
  f >> w;
  skip_ws_and_comments(f);
  f >> h;
  skip_ws_and_comments(f);
  f >> maxval;
  check(bool(f) && w > 0 && h > 0, "'", path, "': bad raster header");
  check(maxval == 255, "'", path, "': only maxval 255 is supported, found ", maxval);
  f.get();  // single whitespace before binary payload
  std::vector<std::uint8_t> bytes(std::size_t(w) * h * channels);
  f.read(reinterpret_cast<char*>(bytes.data()), std::streamsize(bytes.size()));
  check(bool(f), "'", path, "': truncated pixel data");
  Image img(h, w, channels);
  for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = bytes[i] / 255.0;
  return img;
}

void write_pnm(const std::string& path, const Image& img, const char* magic, int channels) {
  check(img.c == channels, "raster writer: expected ", channels, " channels, got ", img.c);
  std::ofstream f(path, std::ios::binary);
  check(bool(f), "cannot write '", path, "'");
  f << magic << "\n" << img.w << " " << img.h << "\n255\n";
  std::vector<std::uint8_t> bytes(img.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(img.data[i]);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  check(bool(f), "failed writing '", path, "'");
}

constexpr char kPlaneMagic[4] = {'G', 'M', 'F', 'P'};

}  // namespace

void write_ppm(const std::string& path, const Image& img) { write_pnm(path, img, "P6", 3); }
Image read_ppm(const std::string& path) { return read_pnm(path, "P6", 3); }
void write_pgm(const std::string& path, const Image& img) { write_pnm(path, img, "P5", 1); }
Image read_pgm(const std::string& path) { return read_pnm(path, "P5", 1); }

void write_planes(const std::string& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  check(bool(f), "cannot write '", path, "'");
  f.write(kPlaneMagic, 4);
  write_pod(f, std::uint32_t(img.h));
  write_pod(f, std::uint32_t(img.w));
  write_pod(f, std::uint32_t(img.c));
  std::vector<float> buf(img.size());
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = float(img.data[i]);
  write_array(f, buf);
  check(bool(f), "failed writing '", path, "'");
}

Image read_planes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  check(bool(f), "cannot open '", path, "'");
  char magic[4];
  f.read(magic, 4);
  check(bool(f) && std::equal(magic, magic + 4, kPlaneMagic),
        "'", path, "': bad plane file magic");
  const int h = int(read_pod<std::uint32_t>(f, "plane height"));
  const int w = int(read_pod<std::uint32_t>(f, "plane width"));
  const int c = int(read_pod<std::uint32_t>(f, "plane channels"));
  check(h > 0 && w > 0 && c > 0, "'", path, "': bad plane dimensions");
  const auto buf = read_array<float>(f, std::size_t(h) * w * c, "plane data");
  Image img(h, w, c);
  for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i];
  return img;
}

}  // namespace gmjo
