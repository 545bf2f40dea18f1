// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <vector>

#include "gmjo/bench/dataset.hpp"
#include "gmjo/image.hpp"

namespace gmjo::bench {

/// Predicted pixel positions, one [frames][2] trajectory per ground-truth
/// track.
using PredictedTracks = std::vector<std::vector<std::array<double, 2>>>;

/// Errors are scaled to a 256px reference frame (dx * 256/width,
/// dy * 256/height) before taking norms, so scores compare across
/// resolutions. ate/mte average each track over its scored steps, then take
/// mean/median across tracks; a_epe/m_epe look at the final frame only.
/// Occluded ground-truth steps are skipped unless exclude_occluded is false;
/// tracks with no scored steps are dropped.
struct TrackScores {
  double ate = 0, mte = 0;
  double a_epe = 0, m_epe = 0;
  int tracks_scored = 0;  // tracks contributing to ate/mte
  int final_scored = 0;   // tracks contributing to a_epe/m_epe
};

TrackScores score_tracks(const std::vector<Track>& gt, const PredictedTracks& pred, int width,
                         int height, bool exclude_occluded = true);

/// Peak signal-to-noise ratio over all channels for [0,1] images, capped at
/// 99 dB (identical inputs).
double psnr(const Image& a, const Image& b);

/// Corpus-level trajectory statistics over one track set per video.
struct TrackStats {
  double avg_points = 0;    // tracks per video
  double occ_traj = 0;      // invisible fraction per trajectory, averaged
  double occ_video = 0;     // invisible (point,frame) fraction per video, averaged
  double displacement = 0;  // mean pixel step between consecutive visible frames
};

TrackStats track_stats(const std::vector<std::vector<Track>>& videos);

}  // namespace gmjo::bench
