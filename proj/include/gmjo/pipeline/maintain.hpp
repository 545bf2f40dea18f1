// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "gmjo/diff/adamw.hpp"
#include "gmjo/pipeline/config.hpp"
#include "gmjo/scene/gaussians.hpp"
#include "gmjo/util.hpp"

namespace gmjo::pipeline {

struct MaintainConfig {
  double prune_opacity = 0.01;  // drop below this post-sigmoid opacity
  double prune_scale = 0.05;    // drop when the largest scale exceeds this
  double densify_grad = 0.5;    // split above this accumulated gradient norm
  double densify_scale = 0.05;  // split only while the largest scale stays under
  double split_shrink = 1.6;    // child scale divisor
  int cap = 20000;              // ceiling on the set size; gates splitting only
};

MaintainConfig maintain_config(const RunConfig& cfg);

struct MaintainStats {
  int pruned = 0;
  int split = 0;
  int size = 0;
};

/// Adds each row's position gradient norm into `accum`. Call after backward,
/// before the optimizer consumes the gradients.
void accumulate_position_grads(const scene::GaussianSet& set, std::vector<double>& accum);

/// Prune/split pass over one set. A row is pruned when its opacity falls
/// below prune_opacity or its largest scale exceeds prune_scale; pruning
/// always runs. A surviving row whose accumulated gradient norm exceeds
/// densify_grad and whose largest scale stays under densify_scale is replaced
/// by two children jittered by one standard deviation with scales divided by
/// split_shrink, as long as the result stays within the cap. Opacities are
/// never rewritten. Surviving rows keep their optimizer moments; children
/// start fresh. `accum` is reset to zeros sized for the new set.
MaintainStats prune_and_densify(scene::GaussianSet& set, std::vector<double>& accum,
                                diff::AdamW& opt, Rng& rng, const MaintainConfig& mc);

}  // namespace gmjo::pipeline
