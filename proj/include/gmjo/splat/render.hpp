// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <utility>
#include <vector>

#include "gmjo/diff/tensor.hpp"
#include "gmjo/image.hpp"
#include "gmjo/scene/camera.hpp"
#include "gmjo/scene/gaussians.hpp"

namespace gmjo::splat {

struct RenderSettings {
  double lambda_lowpass = 0.3;       // pixels^2, added to both screen variances
  double alpha_min = 1.0 / 255.0;    // contributions below this are skipped
  double alpha_clamp = 0.99;         // per-sample opacity ceiling
  double footprint_cut = 9.0;        // squared Mahalanobis cutoff (3 sigma)
  double transmittance_floor = 1e-6; // stop once this opaque
  double eps_alpha = 1e-6;           // depth/flow normalization guard
  double near = 1e-3;
  int tile = 16;
  int num_classes = 1;               // foreground instance count; channel K is background
};

/// Flat multi-object scene: per-object sets concatenated, one instance label
/// per Gaussian in [0, num_classes] where num_classes marks background.
/// `next_positions` drives the flow channel and may be left undefined.
struct SceneBatch {
  diff::Tensor positions, log_scales, rotations, opacity_logits, sh;
  std::vector<int> labels;
  int sh_degree = 0;
  diff::Tensor next_positions;

  int size() const { return positions.defined() ? positions.dim(0) : 0; }
};

/// Concatenates per-object sets (graph-aware). Labels come from each set's
/// `label` field. `next` holds per-set next-frame positions, all-or-none.
SceneBatch concat_sets(const std::vector<scene::GaussianSet>& sets,
                       const std::vector<diff::Tensor>& next = {});

/// Differentiable channels of one rendered view. All are views into a single
/// graph node, so backward through any subset works.
struct RenderOutput {
  diff::Tensor rgb;       // [h,w,3], over a black background
  diff::Tensor depth;     // [h,w], expected depth, alpha-normalized
  diff::Tensor alpha;     // [h,w]
  diff::Tensor instance;  // [h,w,num_classes+1], rows sum to one
  diff::Tensor flow;      // [h,w,2], zero when next positions are absent

  Image rgb_image() const;
  Image depth_image() const;
  Image alpha_image() const;
  Image instance_image() const;
  Image flow_image() const;
};

/// Tiled front-to-back compositor with an analytic backward pass.
/// `next_cam` is required iff the batch carries next positions.
RenderOutput render(const SceneBatch& batch, const scene::Camera& cam,
                    const scene::Camera* next_cam, const RenderSettings& settings);

/// Reference compositor: walks every Gaussian for one pixel with no tiling or
/// acceleration, sharing projection and skip rules with render(). Forward
/// values only.
struct OraclePixel {
  double rgb[3] = {0, 0, 0};
  double depth = 0;
  double alpha = 0;
  std::vector<double> instance;
  double flow[2] = {0, 0};
};
OraclePixel composite_pixel_oracle(int px, int py, const SceneBatch& batch,
                                   const scene::Camera& cam, const scene::Camera* next_cam,
                                   const RenderSettings& settings);

/// Evaluation protocol views: recenter by median, then render from the base
/// camera and from each (azimuth, elevation) orbit angle around the centroid.
std::vector<Image> render_view_protocol(const scene::GaussianData& set,
                                        const scene::Camera& base_cam,
                                        const std::vector<std::pair<double, double>>& angles,
                                        const RenderSettings& settings);

}  // namespace gmjo::splat
