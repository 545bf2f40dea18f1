// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "gmjo/diff/tensor.hpp"
#include "gmjo/scene/gaussians.hpp"
#include "gmjo/util.hpp"

namespace gmjo::deform {

struct DeformerConfig {
  int spatial_res = 64;          // per-axis plane resolution
  double temporal_fraction = 0.8;  // temporal res = max(2, ceil(fraction * frames))
  int features = 16;             // channels per plane
  int hidden = 64;               // head width, two tanh layers
  int num_bases = 10;            // shared trajectory basis size
};

/// Two-hidden-layer tanh MLP. The output layer starts at zero so every head
/// begins as the identity correction.
struct Mlp {
  diff::Tensor w0, b0, w1, b1, w2, b2;

  static Mlp create(int in, int hidden, int out, Rng& rng);
  diff::Tensor forward(const diff::Tensor& x) const;
  void collect(std::vector<diff::Tensor>& out) const;
};

/// Per-object deformation field over a fixed frame range [0, frames).
///
/// Position offsets are a per-Gaussian softmax blend of per-frame trajectory
/// bases; rotation, scale, and color corrections come from factored plane
/// features through small heads. Every head is evaluated both at the target
/// frame and at frame zero and only the difference is applied, so frame zero
/// reproduces the canonical set bit for bit at any parameter value.
class Deformer {
 public:
  Deformer() = default;
  Deformer(const DeformerConfig& cfg, int frames, const Eigen::Vector3d& bbox_min,
           const Eigen::Vector3d& bbox_max, Rng& rng);

  int frames() const { return frames_; }
  const DeformerConfig& config() const { return cfg_; }

  /// Graph nodes shared by all frames of one canonical set. Rebuild after
  /// every optimizer step; reuse across frames within a step.
  struct Eval {
    diff::Tensor feat_spatial;   // [n, features]
    diff::Tensor basis_weights;  // [n, num_bases], rows sum to one
    diff::Tensor motion0, sh0;   // frame-zero head outputs
    std::vector<double> coords;  // normalized positions, [n,3] in [0,1]
    int n = 0;
  };
  Eval prepare(const scene::GaussianSet& canonical) const;

  /// Deformed copy of the canonical attributes at integer frame t. Opacities
  /// pass through untouched.
  scene::GaussianSet deform(const scene::GaussianSet& canonical, const Eval& eval, int t) const;

  /// prepare + deform in one call, for single-frame uses.
  scene::GaussianSet deform(const scene::GaussianSet& canonical, int t) const;

  std::vector<diff::Tensor> plane_params() const;
  std::vector<diff::Tensor> head_params() const;  // heads and trajectory bases

  std::vector<std::uint8_t> serialize() const;
  static Deformer deserialize(const std::vector<std::uint8_t>& blob);

 private:
  diff::Tensor sample_plane(int which, const std::vector<double>& rowcol) const;
  diff::Tensor spatio_temporal(const Eval& eval, int t) const;

  DeformerConfig cfg_;
  int frames_ = 0;
  int temporal_res_ = 0;
  Eigen::Vector3d bbox_min_{0, 0, 0}, bbox_max_{1, 1, 1};
  // Planes: xy, xz, yz (spatial), xt, yt, zt (temporal; rows are time).
  diff::Tensor planes_[6];
  diff::Tensor bases_;  // [frames-1, num_bases*3]; frame 0 is pinned to zero
  Mlp weight_head_;     // spatial features -> basis logits
  Mlp motion_head_;     // spatio-temporal features -> quaternion delta + log scale delta
  Mlp sh_head_;         // spatio-temporal features -> dc color delta
};

}  // namespace gmjo::deform
