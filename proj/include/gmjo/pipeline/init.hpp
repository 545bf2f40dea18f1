// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "gmjo/bench/dataset.hpp"
#include "gmjo/bridge/bridge.hpp"
#include "gmjo/image.hpp"
#include "gmjo/pipeline/config.hpp"
#include "gmjo/scene/camera.hpp"
#include "gmjo/scene/gaussians.hpp"
#include "gmjo/util.hpp"

namespace gmjo::pipeline {

/// Resamples a frame-space image onto the object crop raster (same size and
/// intrinsics as the frame). Bilinear for color, nearest for masks.
Image warp_image(const Image& frame_img, const bridge::Warp& warp, int out_h, int out_w,
                 bool nearest);

/// True when no mask value exceeds the threshold.
bool mask_empty(const Image& mask, double threshold = 0.5);

/// One object's crop-space seed: Gaussians unprojected from masked crop
/// pixels at observed depth, colors folded into the dc band.
struct ObjectInit {
  scene::GaussianSet canonical;  // crop camera space, graph leaves
  bridge::Warp warp_ref;
  double depth_anchor = 1;
  int label = 0;
};

ObjectInit init_object(const bench::Dataset& data, int object, const RunConfig& cfg, Rng& rng);

/// World-space static background set seeded from pixels no object claims.
scene::GaussianSet init_background(const bench::Dataset& data, const RunConfig& cfg, Rng& rng);

/// Per-frame world-space object centers estimated from the mask box and the
/// masked median depth; frames with an empty mask reuse the previous frame.
std::vector<Eigen::Vector3d> object_pivots(const bench::Dataset& data, int object);

/// Frozen azimuth/elevation grid used for novel-view rendering.
const std::vector<std::pair<double, double>>& orbit_angles();

/// Orbit camera around `pivot` at a reduced raster for novel-view work.
scene::Camera novel_camera(const scene::Camera& frame_cam, const Eigen::Vector3d& pivot,
                           double az_deg, double el_deg, int size);

}  // namespace gmjo::pipeline
