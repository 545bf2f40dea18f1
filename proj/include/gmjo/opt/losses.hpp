// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "gmjo/diff/tensor.hpp"
#include "gmjo/image.hpp"

namespace gmjo::opt {

/// Photometric loss: 0.8 L1 + 0.2 structural dissimilarity, the latter with
/// an 11-tap Gaussian window of sigma 1.5. `rendered` is [h,w,3].
diff::Tensor loss_rgb(const diff::Tensor& rendered, const Image& reference);

/// Mean absolute difference; works on any matching shape (alpha vs mask).
diff::Tensor loss_l1(const diff::Tensor& rendered, const Image& reference);

/// Mean |du| + |dv| over pixels whose rendered alpha exceeds `alpha_gate`.
/// Zero when nothing passes the gate.
diff::Tensor loss_flow(const diff::Tensor& flow, const Image& gt_flow, const Image& alpha,
                       double alpha_gate = 0.3);

/// Scale-invariant depth loss: the rendered depth is aligned to the
/// reference by the ratio of their medians over the valid set (in-graph,
/// so alignment is differentiated), then compared as mean |log difference|.
/// Valid pixels have alpha above the gate and positive reference depth.
diff::Tensor loss_depth(const diff::Tensor& depth, const Image& reference, const Image& alpha,
                        double alpha_gate = 0.3);

/// Pixelwise negative log likelihood of the labeled class. `instance` is
/// [h,w,k+1]; `labels` holds one class id per pixel in [0,k].
diff::Tensor loss_class(const diff::Tensor& instance, const std::vector<int>& labels,
                        double eps = 1e-8);

/// Neighborhood structure for the rigidity loss, built once on the canonical
/// set: k nearest neighbors with Gaussian falloff weights, bandwidth set to
/// the median neighbor distance.
struct RigidityGraph {
  std::vector<int> src, dst;   // edge list, |edges| = n*k
  std::vector<double> weight;  // exp(-d^2 / (2 sigma^2))
  std::vector<double> canon_dist2;  // squared canonical edge lengths
  std::vector<double> canon_qdist2; // canonical rotation distances
  int n = 0;
  int k = 0;

  static RigidityGraph build(const std::vector<double>& positions,
                             const std::vector<double>& rotations, int k = 8);
};

/// Local rigidity: weighted squared deviation of pairwise squared distances
/// and of neighbor rotation distances from their canonical values. Exactly
/// zero under any global rigid motion. Rotation distance per edge is
/// 8 (1 - min(1, |<q_i, q_j>|)); its term is scaled by lambda_rot.
diff::Tensor loss_rigid(const RigidityGraph& graph, const diff::Tensor& positions,
                        const diff::Tensor& rotations, double lambda_rot = 0.5);

/// Pull term for an external image-space gradient: weight * <rgb, gradient>.
/// Backward pushes exactly `weight * gradient` into the rendered image.
diff::Tensor loss_prior_pull(const diff::Tensor& rgb, const Image& gradient, double weight);

}  // namespace gmjo::opt
