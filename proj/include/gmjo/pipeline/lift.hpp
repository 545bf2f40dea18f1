// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "gmjo/bench/dataset.hpp"
#include "gmjo/opt/losses.hpp"
#include "gmjo/opt/prior.hpp"
#include "gmjo/pipeline/init.hpp"
#include "gmjo/scene/camera.hpp"
#include "gmjo/scene/gaussians.hpp"

namespace gmjo::pipeline {

/// Product of the static per-object stage: a canonical crop-space set fitted
/// to the reference frame plus everything later stages reuse.
struct LiftResult {
  ObjectInit object;
  opt::RigidityGraph rigidity;                // built on the final canonical set
  std::vector<Eigen::Vector3d> pivots;        // per-frame object centers
  std::vector<scene::Camera> prior_cams;      // frozen novel-view grid at the reference frame
  Image prior_reference;                      // masked crop color at the prior raster
  double ref_psnr = 0;                        // crop reconstruction quality at the end
};

/// Fits one object's canonical set against its reference-frame crop with
/// photometric and silhouette losses, pulled toward the novel-view prior on
/// the frozen orbit grid when a provider is given. Runs the prune/split pass
/// every maintain_every steps.
LiftResult static_lift(const bench::Dataset& data, int object, const RunConfig& cfg,
                       opt::PriorProvider* prior, std::ostream* log);

/// The canonical set carried into the frame camera's world space at the
/// reference frame, with the depth gauge fixed at one.
scene::GaussianSet lifted_reference_set(const LiftResult& lift, const scene::Camera& frame_cam);

}  // namespace gmjo::pipeline
