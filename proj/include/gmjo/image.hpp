// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gmjo {

/// Dense [h,w,c] raster of doubles. Color images keep values in [0,1].
struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<double> data;

  Image() = default;
  Image(int h_, int w_, int c_, double fill = 0.0)
      : h(h_), w(w_), c(c_), data(std::size_t(h_) * w_ * c_, fill) {}

  double& at(int row, int col, int ch) { return data[(std::size_t(row) * w + col) * c + ch]; }
  double at(int row, int col, int ch) const { return data[(std::size_t(row) * w + col) * c + ch]; }
  std::size_t size() const { return data.size(); }

  /// Bilinear sample at pixel coordinates (sample points at +0.5 centers),
  /// clamped to the border.
  double sample(double x, double y, int ch) const;
};

/// Bilinear resample to [h,w]; target sample centers map proportionally onto
/// the source raster.
Image resized_bilinear(const Image& img, int h, int w);

/// 8-bit PPM (c==3) with values clamped to [0,1].
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

/// 8-bit PGM (c==1). Masks use 0/255.
void write_pgm(const std::string& path, const Image& img);
Image read_pgm(const std::string& path);

/// Raw float32 planes with a small header; used for depth and flow.
void write_planes(const std::string& path, const Image& img);
Image read_planes(const std::string& path);

}  // namespace gmjo
