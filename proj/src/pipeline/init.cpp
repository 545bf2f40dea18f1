// SPDX-License-Identifier: Apache-2.0
#include "gmjo/pipeline/init.hpp"

#include <algorithm>
#include <cmath>

#include "gmjo/scene/geometry.hpp"

namespace gmjo::pipeline {

namespace {

constexpr double kSeedOpacityLogit = -2.1972245773362196;  // sigmoid -> 0.1
constexpr double kSeedScaleFactor = 0.6;                   // of the sample spacing

struct Seed {
  Eigen::Vector3d position;
  double color[3];
  double pixel_pitch;  // metric size of one source pixel at the seed depth
};

scene::GaussianData seeds_to_data(std::vector<Seed>& seeds, double spacing_px, int sh_degree,
                                  int label) {
  scene::GaussianData d;
  d.sh_degree = sh_degree;
  d.label = label;
  const int coeffs = scene::sh_coeff_count(sh_degree);
  const int n = int(seeds.size());
  d.positions.reserve(std::size_t(n) * 3);
  d.sh.assign(std::size_t(n) * coeffs * 3, 0.0);
  for (int i = 0; i < n; ++i) {
    const Seed& s = seeds[std::size_t(i)];
    for (int a = 0; a < 3; ++a) d.positions.push_back(s.position[a]);
    const double ls = std::log(kSeedScaleFactor * spacing_px * s.pixel_pitch);
    for (int a = 0; a < 3; ++a) d.log_scales.push_back(ls);
    d.rotations.insert(d.rotations.end(), {1.0, 0.0, 0.0, 0.0});
    d.opacities.push_back(kSeedOpacityLogit);
    for (int ch = 0; ch < 3; ++ch)
      d.sh[(std::size_t(i) * coeffs) * 3 + ch] = (s.color[ch] - 0.5) / scene::kShC0;
  }
  d.validate("object seeding");
  return d;
}

}  // namespace

Image warp_image(const Image& frame_img, const bridge::Warp& warp, int out_h, int out_w,
                 bool nearest) {
  Image out(out_h, out_w, frame_img.c);
  for (int r = 0; r < out_h; ++r) {
    for (int c = 0; c < out_w; ++c) {
      const Eigen::Vector2d f = warp.to_frame({c + 0.5, r + 0.5});
      if (nearest) {
        const int fc = std::clamp(int(std::floor(f.x())), 0, frame_img.w - 1);
        const int fr = std::clamp(int(std::floor(f.y())), 0, frame_img.h - 1);
        for (int ch = 0; ch < frame_img.c; ++ch) out.at(r, c, ch) = frame_img.at(fr, fc, ch);
      } else {
        for (int ch = 0; ch < frame_img.c; ++ch) out.at(r, c, ch) = frame_img.sample(f.x(), f.y(), ch);
      }
    }
  }
  return out;
}

bool mask_empty(const Image& mask, double threshold) {
  for (double v : mask.data)
    if (v > threshold) return false;
  return true;
}

ObjectInit init_object(const bench::Dataset& data, int object, const RunConfig& cfg, Rng& rng) {
  check(object >= 0 && object < data.num_objects, "init_object: object ", object,
        " out of range");
  const int t = cfg.ref_frame;
  check(t >= 0 && t < data.frames, "init_object: reference frame ", t, " out of range");
  const Image& mask = data.masks[std::size_t(object)][std::size_t(t)];
  const Image& rgb = data.rgb[std::size_t(t)];
  const Image& depth = data.depth[std::size_t(t)];
  const scene::Camera& cam = data.cameras[std::size_t(t)];

  ObjectInit init;
  init.label = object;
  const bridge::BBox box = bridge::fit_bbox(mask);
  init.warp_ref = bridge::compute_warp(box, data.width, data.height, cfg.crop_fill);
  init.depth_anchor = bridge::masked_median_value(depth, mask);
  check(init.depth_anchor > 0, "init_object: nonpositive median depth for object ", object);

  // Walk the crop raster; keep samples whose frame-space footprint sits well
  // inside the mask so colors and depths stay uncontaminated by background.
  std::vector<Seed> seeds;
  for (int r = 0; r < data.height; ++r) {
    for (int c = 0; c < data.width; ++c) {
      const Eigen::Vector2d f = init.warp_ref.to_frame({c + 0.5, r + 0.5});
      const int fc = int(std::floor(f.x())), fr = int(std::floor(f.y()));
      if (fc < 0 || fc >= data.width || fr < 0 || fr >= data.height) continue;
      if (mask.at(fr, fc, 0) <= 0.5) continue;
      if (mask.sample(f.x(), f.y(), 0) <= 0.6) continue;
      const double z = depth.at(fr, fc, 0);
      if (z <= 0) continue;
      const Eigen::Vector3d p_cam = cam.to_camera(cam.unproject(f.x(), f.y(), z));
      Seed s;
      s.position = bridge::frame_to_object_point(p_cam, init.warp_ref.sigma, init.warp_ref.tau,
                                                 1.0, init.depth_anchor, cam);
      for (int ch = 0; ch < 3; ++ch) s.color[ch] = rgb.sample(f.x(), f.y(), ch);
      s.pixel_pitch = s.position.z() / cam.fx;
      seeds.push_back(s);
    }
  }
  check(!seeds.empty(), "init_object: no usable pixels for object ", object);

  const double area = double(seeds.size());
  if (int(seeds.size()) > cfg.lift_target) {
    rng.shuffle(seeds);
    seeds.resize(std::size_t(cfg.lift_target));
  }
  const double spacing_px = std::sqrt(area / double(seeds.size()));
  init.canonical =
      scene::GaussianSet::from_data(seeds_to_data(seeds, spacing_px, cfg.sh_degree, object), true);
  return init;
}

scene::GaussianSet init_background(const bench::Dataset& data, const RunConfig& cfg, Rng& rng) {
  const int t = cfg.ref_frame;
  const Image& rgb = data.rgb[std::size_t(t)];
  const Image& depth = data.depth[std::size_t(t)];
  const scene::Camera& cam = data.cameras[std::size_t(t)];

  std::vector<Seed> seeds;
  for (int r = 0; r < data.height; ++r) {
    for (int c = 0; c < data.width; ++c) {
      bool claimed = false;
      for (int k = 0; k < data.num_objects && !claimed; ++k)
        claimed = data.masks[std::size_t(k)][std::size_t(t)].at(r, c, 0) > 0.5;
      if (claimed) continue;
      const double z = depth.at(r, c, 0);
      if (z <= 0) continue;
      Seed s;
      s.position = cam.unproject(c + 0.5, r + 0.5, z);
      for (int ch = 0; ch < 3; ++ch) s.color[ch] = rgb.at(r, c, ch);
      s.pixel_pitch = z / cam.fx;
      seeds.push_back(s);
    }
  }
  check(!seeds.empty(), "init_background: every pixel is claimed by an object");

  const double area = double(seeds.size());
  if (int(seeds.size()) > cfg.bg_target) {
    rng.shuffle(seeds);
    seeds.resize(std::size_t(cfg.bg_target));
  }
  const double spacing_px = std::sqrt(area / double(seeds.size()));
  return scene::GaussianSet::from_data(
      seeds_to_data(seeds, spacing_px, cfg.sh_degree, data.num_objects), true);
}

std::vector<Eigen::Vector3d> object_pivots(const bench::Dataset& data, int object) {
  check(object >= 0 && object < data.num_objects, "object_pivots: object out of range");
  std::vector<Eigen::Vector3d> pivots;
  pivots.reserve(std::size_t(data.frames));
  for (int t = 0; t < data.frames; ++t) {
    const Image& mask = data.masks[std::size_t(object)][std::size_t(t)];
    if (mask_empty(mask)) {
      check(!pivots.empty(), "object_pivots: object ", object, " starts fully occluded");
      pivots.push_back(pivots.back());
      continue;
    }
    const bridge::BBox box = bridge::fit_bbox(mask);
    const double z = bridge::masked_median_value(data.depth[std::size_t(t)], mask);
    const Eigen::Vector2d c = box.center();
    pivots.push_back(data.cameras[std::size_t(t)].unproject(c.x(), c.y(), z));
  }
  return pivots;
}

const std::vector<std::pair<double, double>>& orbit_angles() {
  static const std::vector<std::pair<double, double>> kAngles = {
      {30, 0},  {-30, 0},  {60, 0},  {-60, 0},  {90, 0},   {-90, 0},  {135, 0}, {-135, 0},
      {180, 0}, {0, 20},   {0, -20}, {45, 20},  {-45, 20}, {45, -20}, {-45, -20}};
  return kAngles;
}

scene::Camera novel_camera(const scene::Camera& frame_cam, const Eigen::Vector3d& pivot,
                           double az_deg, double el_deg, int size) {
  const int h = std::max(1, int(std::lround(double(size) * frame_cam.height / frame_cam.width)));
  const scene::Camera base = scene::resized_camera(frame_cam, size, h);
  return scene::orbit_camera(base, pivot, az_deg, el_deg);
}

}  // namespace gmjo::pipeline
