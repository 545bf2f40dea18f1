// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gmjo/bench/dataset.hpp"
#include "gmjo/bench/metrics.hpp"
#include "gmjo/pipeline/dynamic.hpp"

namespace gmjo::pipeline {

/// A point to follow: a pixel on one object at the frame where it is first
/// observed.
struct TrackQuery {
  int object = 0;
  int frame = 0;
  double x = 0, y = 0;
};

/// One query followed through every frame of the fitted scene.
struct PredictedTrack {
  std::vector<std::array<double, 2>> pixels;  // per-frame image position
  std::vector<std::array<double, 3>> world;   // per-frame world position
  std::vector<std::uint8_t> visible;          // tracked object wins the pixel
};

/// One query per ground-truth track, anchored at its first visible step.
std::vector<TrackQuery> dataset_queries(const bench::Dataset& data);

/// Attaches each query to its nearest canonical Gaussians (front surface,
/// inverse-distance weights) and replays the attachment through every frame.
/// Visibility tests the rendered instance channels at the predicted pixel.
std::vector<PredictedTrack> predict_tracks(const FitResult& fit, const bench::Dataset& data,
                                           const std::vector<TrackQuery>& queries);

/// Pixel trajectories alone, in the shape the track metrics consume.
bench::PredictedTracks pixel_tracks(const std::vector<PredictedTrack>& tracks);

void save_tracks_json(const std::string& path, const std::vector<PredictedTrack>& tracks);

/// Same interchange rows as the dataset ground truth: track_id,frame,u,v,x,y,z,visible.
void save_tracks_csv(const std::string& path, const std::vector<PredictedTrack>& tracks);

}  // namespace gmjo::pipeline
