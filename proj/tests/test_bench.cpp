// SPDX-License-Identifier: Apache-2.0
#include "gmjo/bench/synth.hpp"

#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "gmjo/bench/metrics.hpp"

using namespace gmjo;
using bench::Dataset;
using bench::PredictedTracks;
using bench::SynthConfig;
using bench::SynthObject;
using bench::Track;
using bench::TrackPoint;

namespace {

// Odd resolution puts the center pixel's sample point on the optical axis.
SynthConfig axial_sphere(int frames = 2) {
  SynthConfig cfg;
  cfg.width = cfg.height = 129;
  cfg.focal = 150.0;
  cfg.frames = frames;
  SynthObject ball;
  ball.shape = bench::Shape::Sphere;
  ball.half = {0.3, 0.3, 0.3};
  ball.start = ball.end = {0, 0, 2.0};
  cfg.objects = {ball};
  return cfg;
}

// Test-side quadratic: nearest intersection of the unit ray d with a sphere
// at c, or a negative value on a miss.
double sphere_tau(const Eigen::Vector3d& d, const Eigen::Vector3d& c, double r) {
  const double dc = d.dot(c);
  const double disc = dc * dc - c.squaredNorm() + r * r;
  if (disc < 0) return -1;
  return dc - std::sqrt(disc);
}

std::vector<Track> straight_tracks(int n, int frames, bool visible = true) {
  std::vector<Track> out;
  for (int i = 0; i < n; ++i) {
    Track t;
    for (int s = 0; s < frames; ++s)
      t.points.push_back({40.0 + 10.0 * i + s, 80.0 + 5.0 * i, 2.0, visible});
    out.push_back(std::move(t));
  }
  return out;
}

PredictedTracks copy_tracks(const std::vector<Track>& gt) {
  PredictedTracks pred;
  for (const Track& t : gt) {
    std::vector<std::array<double, 2>> p;
    for (const TrackPoint& tp : t.points) p.push_back({tp.x, tp.y});
    pred.push_back(std::move(p));
  }
  return pred;
}

}  // namespace

TEST_CASE("an axial sphere lands with hand-computed depth and silhouette") {
  const Dataset ds = bench::synthesize(axial_sphere());
  const Image& depth = ds.depth[0];
  const Image& mask = ds.masks[0][0];

  // Ray through the optical axis hits the front pole.
  CHECK(depth.at(64, 64, 0) == doctest::Approx(1.7).epsilon(1e-12));

  // Silhouette half-width: f * tan(asin(r/z)) = 22.7575 px around cx.
  for (int col = 42; col <= 86; ++col) CHECK(mask.at(64, col, 0) == 1.0);
  CHECK(mask.at(64, 41, 0) == 0.0);
  CHECK(mask.at(64, 87, 0) == 0.0);

  // Background pixels carry the plane depth and a flat checker gray.
  CHECK(depth.at(0, 0, 0) == 4.0);
  CHECK(ds.rgb[0].at(0, 0, 0) == 0.28);
  CHECK(ds.rgb[0].at(0, 0, 1) == 0.28);
  CHECK(ds.flow[0].at(0, 0, 0) == 0.0);
  CHECK(ds.flow[0].at(0, 0, 1) == 0.0);
}

TEST_CASE("flow of a translating sphere matches an independent intersection") {
  SynthConfig cfg = axial_sphere(5);
  cfg.objects[0].start = {0, 0, 2.0};
  cfg.objects[0].end = {0.4, 0, 2.0};
  const Dataset ds = bench::synthesize(cfg);

  // Per-step translation is (0.1, 0, 0); verify frame 1 -> 2.
  const Eigen::Vector3d center(0.1, 0, 2.0), step(0.1, 0, 0);
  int checked = 0;
  for (int col = 55; col <= 75; ++col) {
    const double u = col + 0.5, v = 64.5;
    const Eigen::Vector3d d =
        Eigen::Vector3d((u - 64.5) / 150.0, 0.0, 1.0).normalized();
    const double tau = sphere_tau(d, center, 0.3);
    if (tau <= 0) continue;
    const Eigen::Vector3d moved = tau * d + step;
    const double fu = 150.0 * moved.x() / moved.z() + 64.5 - u;
    const double fv = 150.0 * moved.y() / moved.z() + 64.5 - v;
    CHECK(ds.flow[1].at(64, col, 0) == doctest::Approx(fu).epsilon(1e-9));
    CHECK(ds.flow[1].at(64, col, 1) == doctest::Approx(fv).epsilon(1e-9));
    ++checked;
  }
  CHECK(checked >= 15);
}

TEST_CASE("the crossing preset occludes the back object mid-clip") {
  const SynthConfig cfg = bench::crossing_preset(24, 128);
  const Dataset ds = bench::synthesize(cfg);
  CHECK(ds.num_objects == 2);
  CHECK(int(ds.tracks.size()) == 10);

  // Masks are mutually exclusive.
  for (int t = 0; t < ds.frames; t += 5)
    for (std::size_t p = 0; p < ds.masks[0][std::size_t(t)].data.size(); ++p)
      CHECK(ds.masks[0][std::size_t(t)].data[p] + ds.masks[1][std::size_t(t)].data[p] <= 1.0);

  auto area = [&](int obj, int t) {
    double s = 0;
    for (double v : ds.masks[std::size_t(obj)][std::size_t(t)].data) s += v;
    return s;
  };
  const double start_area = area(0, 0);
  CHECK(start_area > 300);
  CHECK(area(1, 0) > 300);
  double min_area = start_area;
  for (int t = 0; t < ds.frames; ++t) min_area = std::min(min_area, area(0, t));
  CHECK(min_area < 0.5 * start_area);

  // At least one back-object track dips invisible and resurfaces.
  bool dip = false;
  for (const Track& tr : ds.tracks) {
    if (tr.object != 0) continue;
    bool seen_visible = false, seen_gap = false;
    for (const TrackPoint& p : tr.points) {
      if (p.visible && !seen_visible) seen_visible = true;
      else if (!p.visible && seen_visible) seen_gap = true;
      else if (p.visible && seen_gap) dip = true;
    }
  }
  CHECK(dip);

  // Visible steps really are the visible surface.
  for (const Track& tr : ds.tracks)
    for (int t = 0; t < ds.frames; ++t) {
      const TrackPoint& p = tr.points[std::size_t(t)];
      if (!p.visible) continue;
      const bench::SurfaceHit hit = bench::trace_pixel(cfg, t, p.x, p.y);
      CHECK(hit.object == tr.object);
      CHECK(std::abs(hit.z - p.z) <= 1e-6);
    }
}

TEST_CASE("a dataset survives the directory round trip") {
  const Dataset ds = bench::synthesize(bench::crossing_preset(3, 32));
  const std::string dir = "bench_roundtrip_tmp";
  std::filesystem::remove_all(dir);
  bench::save_dataset(dir, ds);
  const Dataset back = bench::load_dataset(dir);
  std::filesystem::remove_all(dir);

  CHECK(back.width == ds.width);
  CHECK(back.frames == ds.frames);
  CHECK(back.num_objects == ds.num_objects);
  for (int t = 0; t < ds.frames; ++t) {
    CHECK(back.cameras[std::size_t(t)].fx == ds.cameras[std::size_t(t)].fx);
    CHECK(back.cameras[std::size_t(t)].world_to_cam == ds.cameras[std::size_t(t)].world_to_cam);
  }

  double worst_rgb = 0, worst_plane = 0;
  for (int t = 0; t < ds.frames; ++t) {
    for (std::size_t i = 0; i < ds.rgb[std::size_t(t)].data.size(); ++i)
      worst_rgb = std::max(worst_rgb, std::abs(back.rgb[std::size_t(t)].data[i] -
                                               ds.rgb[std::size_t(t)].data[i]));
    for (std::size_t i = 0; i < ds.depth[std::size_t(t)].data.size(); ++i)
      worst_plane = std::max(worst_plane, std::abs(back.depth[std::size_t(t)].data[i] -
                                                   ds.depth[std::size_t(t)].data[i]));
    for (int k = 0; k < ds.num_objects; ++k)
      CHECK(back.masks[std::size_t(k)][std::size_t(t)].data ==
            ds.masks[std::size_t(k)][std::size_t(t)].data);
  }
  for (std::size_t t = 0; t + 1 < std::size_t(ds.frames); ++t)
    for (std::size_t i = 0; i < ds.flow[t].data.size(); ++i)
      worst_plane = std::max(worst_plane, std::abs(back.flow[t].data[i] - ds.flow[t].data[i]));
  CHECK(worst_rgb <= 0.5 / 255.0 + 1e-12);  // 8-bit quantization
  CHECK(worst_plane <= 1e-5);               // f32 planes

  CHECK(back.tracks.size() == ds.tracks.size());
  for (std::size_t i = 0; i < ds.tracks.size(); ++i) {
    CHECK(back.tracks[i].object == ds.tracks[i].object);
    for (std::size_t s = 0; s < ds.tracks[i].points.size(); ++s) {
      CHECK(back.tracks[i].points[s].x == ds.tracks[i].points[s].x);
      CHECK(back.tracks[i].points[s].y == ds.tracks[i].points[s].y);
      CHECK(back.tracks[i].points[s].z == ds.tracks[i].points[s].z);
      CHECK(back.tracks[i].points[s].visible == ds.tracks[i].points[s].visible);
    }
  }
}

TEST_CASE("track scores reproduce hand-computed means and medians") {
  const std::vector<Track> gt = straight_tracks(3, 4);
  PredictedTracks pred = copy_tracks(gt);
  for (auto& s : pred[2]) {
    s[0] += 6;
    s[1] += 8;
  }
  const bench::TrackScores scores = bench::score_tracks(gt, pred, 256, 256);
  CHECK(scores.tracks_scored == 3);
  CHECK(scores.ate == doctest::Approx(10.0 / 3.0).epsilon(1e-12));
  CHECK(scores.mte == 0.0);
  CHECK(scores.a_epe == doctest::Approx(10.0 / 3.0).epsilon(1e-12));
  CHECK(scores.m_epe == 0.0);

  // Final-step-only offsets of 2 and 8 px.
  const std::vector<Track> gt2 = straight_tracks(2, 4);
  PredictedTracks pred2 = copy_tracks(gt2);
  pred2[0][3][0] += 2;
  pred2[1][3][1] += 8;
  const bench::TrackScores s2 = bench::score_tracks(gt2, pred2, 256, 256);
  CHECK(s2.a_epe == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(s2.m_epe == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(s2.ate == doctest::Approx((0.5 + 2.0) / 2.0).epsilon(1e-12));
  CHECK(s2.mte == doctest::Approx(1.25).epsilon(1e-12));
}

TEST_CASE("occluded steps are skipped unless asked for") {
  std::vector<Track> gt = straight_tracks(2, 4);
  gt[1].points[1].visible = false;
  PredictedTracks pred = copy_tracks(gt);
  pred[1][1][0] += 1000.0;

  const bench::TrackScores skip = bench::score_tracks(gt, pred, 256, 256, true);
  CHECK(skip.ate == 0.0);
  const bench::TrackScores keep = bench::score_tracks(gt, pred, 256, 256, false);
  CHECK(keep.ate > 100.0);

  // A never-visible track drops out entirely.
  for (TrackPoint& p : gt[0].points) p.visible = false;
  const bench::TrackScores dropped = bench::score_tracks(gt, pred, 256, 256, true);
  CHECK(dropped.tracks_scored == 1);
}

TEST_CASE("errors scale to the 256px reference frame") {
  // The same 3-4-5 pixel offset counts double at half the resolution.
  const std::vector<Track> gt_full = straight_tracks(1, 2);
  std::vector<Track> gt_half = gt_full;
  for (TrackPoint& p : gt_half[0].points) {
    p.x /= 2;
    p.y /= 2;
  }
  PredictedTracks pred_full = copy_tracks(gt_full);
  PredictedTracks pred_half = copy_tracks(gt_half);
  for (auto& s : pred_full[0]) {
    s[0] += 3;
    s[1] += 4;
  }
  for (auto& s : pred_half[0]) {
    s[0] += 3;
    s[1] += 4;
  }
  CHECK(bench::score_tracks(gt_full, pred_full, 256, 256).ate ==
        doctest::Approx(5.0).epsilon(1e-9));
  CHECK(bench::score_tracks(gt_half, pred_half, 128, 128).ate ==
        doctest::Approx(10.0).epsilon(1e-9));
}

TEST_CASE("psnr caps at 99 and reports exact decibels") {
  Image a(8, 8, 3, 0.5);
  CHECK(bench::psnr(a, a) == 99.0);
  Image b(8, 8, 3, 0.6);
  CHECK(bench::psnr(a, b) == doctest::Approx(20.0).epsilon(1e-9));
  Image c(4, 4, 3, 0.5);
  CHECK_THROWS(bench::psnr(a, c));
}
