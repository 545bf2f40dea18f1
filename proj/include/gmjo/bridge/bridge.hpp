// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <vector>

#include "gmjo/diff/tensor.hpp"
#include "gmjo/image.hpp"
#include "gmjo/scene/camera.hpp"
#include "gmjo/scene/gaussians.hpp"

namespace gmjo::bridge {

/// Axis-aligned pixel box; x1/y1 are exclusive, so a mask covering columns
/// 10..19 yields x0 = 10, x1 = 20, width 10.
struct BBox {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  Eigen::Vector2d center() const { return {0.5 * (x0 + x1), 0.5 * (y0 + y1)}; }
};

/// Tight box over mask values above `threshold`. Throws on an empty mask.
BBox fit_bbox(const Image& mask, double threshold = 0.5);

/// Affine pixel warp from frame to object crop: u_crop = sigma * u_frame + tau.
/// The crop reuses the frame resolution and intrinsics; the object's box is
/// scaled to fill `fill` of the shorter side and centered.
struct Warp {
  double sigma = 1;
  Eigen::Vector2d tau{0, 0};

  Eigen::Vector2d to_crop(const Eigen::Vector2d& u_frame) const {
    return sigma * u_frame + tau;
  }
  Eigen::Vector2d to_frame(const Eigen::Vector2d& u_crop) const {
    return (u_crop - tau) / sigma;
  }
};
Warp compute_warp(const BBox& box, int width, int height, double fill = 0.65);

/// Median of `values` where `mask > threshold`; plain doubles, no graph.
double masked_median_value(const Image& values, const Image& mask, double threshold = 0.5);

/// Per-object, per-frame alignment parameters tying the object-centric crop
/// camera to the shared frame camera. All three live in the graph; the depth
/// gauge k of the reference object stays frozen at one.
struct FrameAlign {
  diff::Tensor log_sigma;  // [frames]
  diff::Tensor tau;        // [frames, 2]
  diff::Tensor log_k;      // [frames]
  double depth_anchor = 1;  // masked median crop depth, fixed at init

  static FrameAlign create(const std::vector<Warp>& warps, double depth_anchor,
                           bool freeze_depth_scale);
  int frames() const { return log_sigma.defined() ? log_sigma.dim(0) : 0; }
};

/// Similarity lift of an object-centric set (crop camera space) into the
/// frame camera's world space at frame t. Positions map as
///   p_frame = k * (p_obj / sigma + d(sigma, tau)),
/// which reproduces the crop-to-frame pixel warp exactly at the anchor depth
/// and scales log sizes by log(k / sigma). Projections are invariant to k.
scene::GaussianSet object_to_frame(const scene::GaussianSet& obj, const FrameAlign& align,
                                   int t, const scene::Camera& frame_cam);

/// Plain inverse of the position map for one frame-camera-space point.
Eigen::Vector3d frame_to_object_point(const Eigen::Vector3d& p_frame_cam, double sigma,
                                      const Eigen::Vector2d& tau, double k, double depth_anchor,
                                      const scene::Camera& cam);

}  // namespace gmjo::bridge
