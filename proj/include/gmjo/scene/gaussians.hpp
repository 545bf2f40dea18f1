// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "gmjo/diff/tensor.hpp"
#include "gmjo/scene/geometry.hpp"

namespace gmjo::scene {

/// Plain SoA snapshot of one Gaussian set. Layouts: positions/log_scales
/// [n,3], rotations [n,4] as (w,x,y,z), opacities are pre-sigmoid logits [n],
/// sh [n, coeffs, 3] row-major.
struct GaussianData {
  std::vector<double> positions, log_scales, rotations, opacities, sh;
  int sh_degree = 0;
  int label = 0;  // instance id; the background set carries the last id

  int size() const { return int(positions.size() / 3); }
  void validate(const std::string& what) const;
};

/// The same set as optimizable graph leaves. Attributes live in fixed-shape
/// tensors; resizing means building a new set.
struct GaussianSet {
  diff::Tensor positions, log_scales, rotations, opacity_logits, sh;
  int sh_degree = 0;
  int label = 0;

  int size() const { return positions.defined() ? positions.dim(0) : 0; }

  static GaussianSet from_data(const GaussianData& d, bool requires_grad);
  GaussianData to_data() const;
};

/// Translates positions so the per-axis medians land on the origin; returns
/// the translation that was subtracted. Even counts average the two middles.
Eigen::Vector3d recenter_median(GaussianData& d);

/// Checkpoint container: every Gaussian set plus named opaque sections for
/// whatever stage state the caller wants to persist.
struct Checkpoint {
  std::vector<GaussianData> sets;
  std::map<std::string, std::vector<std::uint8_t>> sections;
};

void save_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace gmjo::scene
