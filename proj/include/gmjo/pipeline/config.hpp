// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

#include "gmjo/deform/deformer.hpp"

namespace gmjo::pipeline {

/// Every tunable of the fitting pipeline in one flat struct, loadable from a
/// plain key=value file so runs are reproducible from a single artifact.
struct RunConfig {
  std::uint64_t seed = 1;
  int sh_degree = 0;
  int ref_frame = 0;  // frame used for the static stage; objects must be visible
  double crop_fill = 0.65;

  // static per-object stage
  int lift_steps = 1000;
  int lift_target = 500;  // Gaussians seeded per object
  int bg_target = 1400;   // Gaussians seeded for the background
  int maintain_every = 100;
  int max_gaussians = 20000;

  // novel-view prior
  int prior_size = 64;        // novel views render at this raster size
  int prior_every_lift = 2;   // query cadence during the static stage
  int prior_every_dynamic = 4;
  double prior_weight = 0.01;
  double tau_start = 1.0;  // noise-level hint annealed over each stage
  double tau_end = 0.1;

  // dynamic stage
  int steps_per_frame = 35;  // total steps = steps_per_frame * frames
  int batch_frames = 8;
  int grad_accum = 2;

  // deformation field
  int deform_spatial_res = 64;
  double deform_temporal_fraction = 0.8;
  int deform_features = 16;
  int deform_hidden = 64;
  int deform_bases = 10;

  // loss weights
  double w_rgb = 1.0;
  double w_mask = 0.5;
  double w_flow = 0.5;
  double w_depth = 0.25;
  double w_class = 0.5;
  double w_rigid = 0.1;
  double w_shreg = 0.01;

  // learning rates
  double lr_position = 1e-3;
  double lr_position_final = 2e-5;  // exponential decay target over the static stage
  double lr_sh = 0.01;
  double lr_opacity = 0.05;
  double lr_scale_rot = 5e-3;
  double lr_grid = 6.4e-4;
  double lr_heads = 6.4e-3;
  double lr_align = 5e-3;
  double lr_bg_position = 2e-4;

  // maintenance thresholds
  double prune_opacity = 0.01;
  double prune_scale = 0.05;
  double densify_grad = 0.5;
  double densify_scale = 0.05;
  double split_shrink = 1.6;

  deform::DeformerConfig deformer_config() const;
};

/// key=value lines; '#' starts a comment; unknown keys are an error.
RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& cfg);

}  // namespace gmjo::pipeline
