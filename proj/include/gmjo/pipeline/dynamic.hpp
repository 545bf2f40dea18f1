// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <vector>

#include "gmjo/bench/dataset.hpp"
#include "gmjo/bridge/bridge.hpp"
#include "gmjo/deform/deformer.hpp"
#include "gmjo/opt/losses.hpp"
#include "gmjo/opt/prior.hpp"
#include "gmjo/pipeline/lift.hpp"
#include "gmjo/scene/gaussians.hpp"
#include "gmjo/splat/render.hpp"

namespace gmjo::pipeline {

/// One object after video fitting: frozen canonical crop-space attributes, a
/// deformation field over the clip, and per-frame frame alignment.
struct FittedObject {
  scene::GaussianSet canonical;  // crop space, constants
  deform::Deformer deformer;
  bridge::FrameAlign align;
  opt::RigidityGraph rigidity;
  std::vector<Eigen::Vector3d> pivots;
  double depth_anchor = 1;
  int label = 0;
};

struct FitResult {
  std::vector<FittedObject> objects;
  scene::GaussianSet background;  // world space, label = object count
  int frames = 0;
};

/// Object k's set in the frame camera's world space at frame t: canonical
/// attributes deformed to t, then carried across the frame alignment.
scene::GaussianSet object_frame_set(const FittedObject& obj, const scene::Camera& frame_cam,
                                    int t);

/// Every object set plus the background, ready for a joint render of frame t.
std::vector<scene::GaussianSet> frame_sets(const FitResult& fit, const scene::Camera& frame_cam,
                                           int t);

/// Joint render of the fitted scene at frame t. `with_flow` needs t+1 within
/// range and renders motion toward the next frame's camera.
splat::RenderOutput render_frame(const FitResult& fit, const std::vector<scene::Camera>& cams,
                                 int t, bool with_flow);

/// Fits deformation fields, frame alignments, and the background set against
/// the whole clip. In joint mode every object is composited into one render
/// per frame, so occlusions are explained by whichever object is in front; in
/// the ablation mode each object is fitted against its own masked render with
/// no cross-object reasoning. Canonical object attributes stay frozen either
/// way.
FitResult dynamic_fit(const bench::Dataset& data, const std::vector<LiftResult>& lifts,
                      scene::GaussianSet background, const RunConfig& cfg, bool joint,
                      opt::PriorProvider* prior, std::ostream* log);

}  // namespace gmjo::pipeline
