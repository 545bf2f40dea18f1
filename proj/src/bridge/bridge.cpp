// SPDX-License-Identifier: Apache-2.0
#include "gmjo/bridge/bridge.hpp"

#include <algorithm>
#include <cmath>

#include "gmjo/diff/ops.hpp"
#include "gmjo/util.hpp"

namespace gmjo::bridge {

using diff::Tensor;

BBox fit_bbox(const Image& mask, double threshold) {
  check(mask.c == 1, "fit_bbox: expected a single-channel mask");
  int r0 = mask.h, r1 = -1, c0 = mask.w, c1 = -1;
  for (int r = 0; r < mask.h; ++r)
    for (int c = 0; c < mask.w; ++c)
      if (mask.at(r, c, 0) > threshold) {
        r0 = std::min(r0, r);
        r1 = std::max(r1, r);
        c0 = std::min(c0, c);
        c1 = std::max(c1, c);
      }
  check(r1 >= 0, "fit_bbox: empty mask");
  return BBox{double(c0), double(r0), double(c1 + 1), double(r1 + 1)};
}

Warp compute_warp(const BBox& box, int width, int height, double fill) {
  check(box.width() > 0 && box.height() > 0, "compute_warp: degenerate box");
  check(width > 0 && height > 0 && fill > 0, "compute_warp: bad frame");
  Warp w;
  w.sigma = fill * std::min(width, height) / std::max(box.width(), box.height());
  const Eigen::Vector2d crop_center(width / 2.0, height / 2.0);
  w.tau = crop_center - w.sigma * box.center();
  return w;
}

double masked_median_value(const Image& values, const Image& mask, double threshold) {
  check(values.c == 1 && mask.c == 1 && values.h == mask.h && values.w == mask.w,
        "masked_median_value: mismatched planes");
  std::vector<double> kept;
  for (std::size_t i = 0; i < values.data.size(); ++i)
    if (mask.data[i] > threshold) kept.push_back(values.data[i]);
  check(!kept.empty(), "masked_median_value: empty mask");
  std::sort(kept.begin(), kept.end());
  const std::size_t n = kept.size();
  return n % 2 == 1 ? kept[n / 2] : 0.5 * (kept[n / 2 - 1] + kept[n / 2]);
}

FrameAlign FrameAlign::create(const std::vector<Warp>& warps, double depth_anchor,
                              bool freeze_depth_scale) {
  check(!warps.empty(), "frame align: no warps");
  check(depth_anchor > 0, "frame align: depth anchor must be positive");
  const int t = int(warps.size());
  std::vector<double> ls(static_cast<std::size_t>(t)), tau(std::size_t(t) * 2),
      lk(static_cast<std::size_t>(t), 0.0);
  for (int i = 0; i < t; ++i) {
    check(warps[std::size_t(i)].sigma > 0, "frame align: warp sigma must be positive");
    ls[std::size_t(i)] = std::log(warps[std::size_t(i)].sigma);
    tau[std::size_t(i) * 2] = warps[std::size_t(i)].tau.x();
    tau[std::size_t(i) * 2 + 1] = warps[std::size_t(i)].tau.y();
  }
  FrameAlign a;
  a.log_sigma = Tensor::leaf({t}, std::move(ls), true);
  a.tau = Tensor::leaf({t, 2}, std::move(tau), true);
  a.log_k = Tensor::leaf({t}, std::move(lk), !freeze_depth_scale);
  a.depth_anchor = depth_anchor;
  return a;
}

scene::GaussianSet object_to_frame(const scene::GaussianSet& obj, const FrameAlign& align,
                                   int t, const scene::Camera& frame_cam) {
  check(t >= 0 && t < align.frames(), "object_to_frame: frame ", t, " outside [0,",
        align.frames(), ")");
  frame_cam.validate("object_to_frame camera");

  Tensor ls = diff::slice_flat(align.log_sigma, t, {1});
  Tensor sigma = diff::exp(ls);
  Tensor tau = diff::slice_flat(align.tau, std::int64_t(t) * 2, {2});
  Tensor lk = diff::slice_flat(align.log_k, t, {1});
  Tensor k = diff::exp(lk);

  // Crop principal point carried back to frame pixels: u_hat = (c - tau)/sigma.
  Tensor c = Tensor::constant({2}, {frame_cam.cx, frame_cam.cy});
  Tensor uhat = diff::div(diff::sub(c, tau), sigma);
  // d = (z_m (u_hat - c) / f, z_m (1 - 1/sigma)).
  Tensor d_xy = diff::mul(diff::sub(uhat, c),
                          Tensor::constant({2}, {align.depth_anchor / frame_cam.fx,
                                                 align.depth_anchor / frame_cam.fy}));
  Tensor d_z = diff::mul(diff::sub(1.0, diff::div(Tensor::scalar(1.0), sigma)),
                         Tensor::constant({1}, {align.depth_anchor}));
  Tensor d = diff::concat_flat({d_xy, d_z}, {3});

  Tensor pos_cam = diff::mul(diff::add_rowvec(diff::div(obj.positions, sigma), d), k);

  // Frame camera space to world: p_world = R^T (p_cam - t).
  const Eigen::Matrix3d r = frame_cam.rotation();
  const Eigen::Vector3d tr = frame_cam.translation();
  std::vector<double> rflat(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) rflat[std::size_t(i) * 3 + j] = r(i, j);
  const Eigen::Vector3d shift = -r.transpose() * tr;

  scene::GaussianSet out;
  out.sh_degree = obj.sh_degree;
  out.label = obj.label;
  out.positions = diff::add_rowvec(diff::matmul(pos_cam, Tensor::constant({3, 3}, rflat)),
                                   Tensor::constant({3}, {shift.x(), shift.y(), shift.z()}));
  out.log_scales = diff::add(obj.log_scales, diff::sub(lk, ls));
  out.rotations = obj.rotations;
  out.opacity_logits = obj.opacity_logits;
  out.sh = obj.sh;
  return out;
}

Eigen::Vector3d frame_to_object_point(const Eigen::Vector3d& p_frame_cam, double sigma,
                                      const Eigen::Vector2d& tau, double k, double depth_anchor,
                                      const scene::Camera& cam) {
  check(sigma > 0 && k > 0, "frame_to_object_point: bad similarity");
  const double ux = (cam.cx - tau.x()) / sigma;
  const double uy = (cam.cy - tau.y()) / sigma;
  const Eigen::Vector3d d(depth_anchor * (ux - cam.cx) / cam.fx,
                          depth_anchor * (uy - cam.cy) / cam.fy,
                          depth_anchor * (1.0 - 1.0 / sigma));
  return (p_frame_cam / k - d) * sigma;
}

}  // namespace gmjo::bridge
