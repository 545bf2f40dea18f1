// SPDX-License-Identifier: Apache-2.0
#include "gmjo/bench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "gmjo/util.hpp"

namespace gmjo::bench {

namespace {

double median_of(std::vector<double> v) {
  check(!v.empty(), "median_of: empty");
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(m), v.end());
  double hi = v[m];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(m) - 1, v.begin() + std::ptrdiff_t(m));
  return 0.5 * (v[m - 1] + hi);
}

double mean_of(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

}  // namespace

TrackScores score_tracks(const std::vector<Track>& gt, const PredictedTracks& pred, int width,
                         int height, bool exclude_occluded) {
  check(gt.size() == pred.size(), "score_tracks: ", pred.size(), " predictions for ", gt.size(),
        " tracks");
  check(width > 0 && height > 0, "score_tracks: bad frame size");
  const double sx = 256.0 / width, sy = 256.0 / height;

  std::vector<double> per_track, final_step;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const Track& t = gt[i];
    check(pred[i].size() == t.points.size(), "score_tracks: track ", i, " length mismatch");
    std::vector<double> errs;
    for (std::size_t s = 0; s < t.points.size(); ++s) {
      if (exclude_occluded && !t.points[s].visible) continue;
      const double dx = (pred[i][s][0] - t.points[s].x) * sx;
      const double dy = (pred[i][s][1] - t.points[s].y) * sy;
      const double err = std::hypot(dx, dy);
      errs.push_back(err);
      if (s + 1 == t.points.size()) final_step.push_back(err);
    }
    if (!errs.empty()) per_track.push_back(mean_of(errs));
  }

  TrackScores out;
  out.tracks_scored = int(per_track.size());
  out.final_scored = int(final_step.size());
  if (!per_track.empty()) {
    out.ate = mean_of(per_track);
    out.mte = median_of(per_track);
  }
  if (!final_step.empty()) {
    out.a_epe = mean_of(final_step);
    out.m_epe = median_of(final_step);
  }
  return out;
}

double psnr(const Image& a, const Image& b) {
  check(a.h == b.h && a.w == b.w && a.c == b.c, "psnr: shape mismatch");
  check(a.size() > 0, "psnr: empty images");
  double mse = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    mse += d * d;
  }
  mse /= double(a.data.size());
  if (mse <= 0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

TrackStats track_stats(const std::vector<std::vector<Track>>& videos) {
  TrackStats out;
  if (videos.empty()) return out;

  double traj_sum = 0, video_sum = 0, disp_sum = 0;
  std::int64_t trajs = 0, steps_moved = 0;
  for (const std::vector<Track>& video : videos) {
    out.avg_points += double(video.size());
    std::int64_t hidden = 0, total = 0;
    for (const Track& tr : video) {
      const std::int64_t frames = std::int64_t(tr.points.size());
      if (frames == 0) continue;
      std::int64_t traj_hidden = 0;
      for (const TrackPoint& p : tr.points) traj_hidden += p.visible ? 0 : 1;
      traj_sum += double(traj_hidden) / double(frames);
      ++trajs;
      hidden += traj_hidden;
      total += frames;
      for (std::size_t s = 0; s + 1 < tr.points.size(); ++s) {
        const TrackPoint& a = tr.points[s];
        const TrackPoint& b = tr.points[s + 1];
        if (!a.visible || !b.visible) continue;
        disp_sum += std::hypot(b.x - a.x, b.y - a.y);
        ++steps_moved;
      }
    }
    if (total > 0) video_sum += double(hidden) / double(total);
  }
  out.avg_points /= double(videos.size());
  if (trajs > 0) out.occ_traj = traj_sum / double(trajs);
  out.occ_video = video_sum / double(videos.size());
  if (steps_moved > 0) out.displacement = disp_sum / double(steps_moved);
  return out;
}

}  // namespace gmjo::bench
