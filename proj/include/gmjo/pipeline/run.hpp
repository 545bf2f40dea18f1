// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <vector>

#include "gmjo/bench/dataset.hpp"
#include "gmjo/bench/metrics.hpp"
#include "gmjo/opt/prior.hpp"
#include "gmjo/pipeline/dynamic.hpp"
#include "gmjo/pipeline/tracks.hpp"
#include "gmjo/scene/gaussians.hpp"

namespace gmjo::pipeline {

struct PipelineResult {
  FitResult fit;
  std::vector<LiftResult> lifts;       // per-object static-stage products
  std::vector<PredictedTrack> tracks;  // one per ground-truth track
  bench::TrackScores scores;
};

/// End-to-end fit: per-object static stage, background seeding, dynamic
/// joint (or ablation) fitting, then track extraction and scoring.
PipelineResult run_pipeline(const bench::Dataset& data, const RunConfig& cfg, bool joint,
                            opt::PriorProvider* prior, std::ostream* log);

/// Checkpoints hold each canonical set, the background, and opaque sections
/// for the deformers and frame alignments. A fit loaded back supports
/// rendering and track extraction, not further optimization.
scene::Checkpoint make_checkpoint(const FitResult& fit);
FitResult fit_from_checkpoint(const scene::Checkpoint& ck);

}  // namespace gmjo::pipeline
