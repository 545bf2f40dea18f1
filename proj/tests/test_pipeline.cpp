// SPDX-License-Identifier: Apache-2.0
#include "gmjo/pipeline/run.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "gmjo/bench/synth.hpp"
#include "gmjo/io.hpp"
#include "gmjo/pipeline/lift.hpp"
#include "gmjo/pipeline/maintain.hpp"
#include "gmjo/scene/geometry.hpp"

using namespace gmjo;
using pipeline::RunConfig;

namespace {

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.seed = 3;
  cfg.lift_steps = 30;
  cfg.lift_target = 80;
  cfg.bg_target = 120;
  cfg.maintain_every = 12;
  cfg.steps_per_frame = 4;
  cfg.batch_frames = 2;
  cfg.grad_accum = 1;
  cfg.prior_size = 32;
  cfg.deform_spatial_res = 16;
  cfg.deform_features = 8;
  cfg.deform_hidden = 32;
  cfg.deform_bases = 6;
  return cfg;
}

double decoded_color(const scene::GaussianSet& set, int i, int ch) {
  const int coeffs = scene::sh_coeff_count(set.sh_degree);
  return 0.5 + scene::kShC0 * set.sh.val()[(std::size_t(i) * std::size_t(coeffs)) * 3 + std::size_t(ch)];
}

scene::GaussianData maintenance_row(double opacity, double max_scale) {
  scene::GaussianData d;
  d.positions = {0.1, -0.2, 1.5};
  d.log_scales = {std::log(max_scale), std::log(max_scale / 2), std::log(max_scale / 4)};
  d.rotations = {1, 0, 0, 0};
  d.opacities = {std::log(opacity / (1.0 - opacity))};
  d.sh = {0.3, -0.1, 0.2};
  return d;
}

void append_rows(scene::GaussianData& dst, const scene::GaussianData& src) {
  dst.positions.insert(dst.positions.end(), src.positions.begin(), src.positions.end());
  dst.log_scales.insert(dst.log_scales.end(), src.log_scales.begin(), src.log_scales.end());
  dst.rotations.insert(dst.rotations.end(), src.rotations.begin(), src.rotations.end());
  dst.opacities.insert(dst.opacities.end(), src.opacities.begin(), src.opacities.end());
  dst.sh.insert(dst.sh.end(), src.sh.begin(), src.sh.end());
}

}  // namespace

TEST_CASE("run configs survive the file round trip and reject junk") {
  RunConfig cfg;
  cfg.seed = 77;
  cfg.lift_steps = 123;
  cfg.w_rgb = 0.1;  // not representable in binary; exercises full precision
  cfg.lr_grid = 3.25e-4;
  cfg.prior_weight = 0.0078125;
  const std::string path = "pipeline_cfg_tmp.txt";
  pipeline::save_run_config(path, cfg);
  const RunConfig back = pipeline::load_run_config(path);
  CHECK(back.seed == 77);
  CHECK(back.lift_steps == 123);
  CHECK(back.w_rgb == cfg.w_rgb);
  CHECK(back.lr_grid == cfg.lr_grid);
  CHECK(back.prior_weight == cfg.prior_weight);
  CHECK(back.batch_frames == cfg.batch_frames);  // untouched default

  spit(path, "# comment line\n\nseed = 9\nlift_steps=41   # trailing comment\n");
  const RunConfig partial = pipeline::load_run_config(path);
  CHECK(partial.seed == 9);
  CHECK(partial.lift_steps == 41);
  CHECK(partial.w_rgb == RunConfig().w_rgb);

  spit(path, "no_such_key = 1\n");
  CHECK_THROWS(pipeline::load_run_config(path));
  spit(path, "lift_steps = 12x\n");
  CHECK_THROWS(pipeline::load_run_config(path));
  std::filesystem::remove(path);
}

TEST_CASE("crop warps resample the frame where the inverse map says") {
  Image frame(8, 8, 1);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) frame.at(r, c, 0) = 10.0 * r + c;

  bridge::Warp identity;
  const Image same = pipeline::warp_image(frame, identity, 8, 8, true);
  CHECK(same.data == frame.data);
  const Image same_soft = pipeline::warp_image(frame, identity, 8, 8, false);
  for (std::size_t i = 0; i < frame.data.size(); ++i)
    CHECK(same_soft.data[i] == doctest::Approx(frame.data[i]).epsilon(1e-12));

  bridge::Warp shift;
  shift.tau = {3, 2};  // crop = frame + (3,2), so crop (r,c) reads frame (r-2,c-3)
  const Image moved = pipeline::warp_image(frame, shift, 8, 8, true);
  for (int r = 2; r < 8; ++r)
    for (int c = 3; c < 8; ++c) CHECK(moved.at(r, c, 0) == frame.at(r - 2, c - 3, 0));

  bridge::Warp zoom;
  zoom.sigma = 2;  // crop pixel centers read frame at half coordinates
  const Image half = pipeline::warp_image(frame, zoom, 8, 8, true);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) {
      const int fc = int(std::floor((c + 0.5) / 2.0));
      const int fr = int(std::floor((r + 0.5) / 2.0));
      CHECK(half.at(r, c, 0) == frame.at(fr, fc, 0));
    }

  Image mask(8, 8, 1, 0.0);
  mask.at(4, 4, 0) = 1.0;
  CHECK(!pipeline::mask_empty(mask));
  mask.at(4, 4, 0) = 0.4;
  CHECK(pipeline::mask_empty(mask));
}

TEST_CASE("object seeding lands on the observed surface") {
  const bench::SynthConfig synth = bench::crossing_preset(3, 96);
  const bench::Dataset ds = bench::synthesize(synth);
  RunConfig cfg = tiny_config();
  cfg.lift_target = 200;
  Rng rng(7);

  const pipeline::ObjectInit ball = pipeline::init_object(ds, 0, cfg, rng);
  const pipeline::ObjectInit box = pipeline::init_object(ds, 1, cfg, rng);
  CHECK(ball.label == 0);
  CHECK(box.label == 1);
  CHECK(ball.canonical.size() > 50);
  CHECK(ball.canonical.size() <= 200);

  // Median surface depths: ball around 2.3 - 0.38/sqrt(2), box front near 1.68.
  CHECK(ball.depth_anchor > 1.92);
  CHECK(ball.depth_anchor < 2.3);
  CHECK(box.depth_anchor > 1.55);
  CHECK(box.depth_anchor < 1.95);
  CHECK(ball.depth_anchor > box.depth_anchor);

  // Carrying the seeds back through the bridge must reproject onto masked
  // pixels at the observed depth.
  const bridge::FrameAlign align =
      bridge::FrameAlign::create({ball.warp_ref}, ball.depth_anchor, true);
  const scene::GaussianSet lifted =
      bridge::object_to_frame(ball.canonical, align, 0, ds.cameras[0]);
  const std::vector<double>& p = lifted.positions.val();
  const Image& mask = ds.masks[0][0];
  const Image& depth = ds.depth[0];
  for (int i = 0; i < lifted.size(); ++i) {
    const Eigen::Vector3d pw(p[std::size_t(i) * 3], p[std::size_t(i) * 3 + 1],
                             p[std::size_t(i) * 3 + 2]);
    const Eigen::Vector3d pc = ds.cameras[0].to_camera(pw);
    const Eigen::Vector2d uv = ds.cameras[0].project_cam(pc);
    const int c = int(std::floor(uv.x())), r = int(std::floor(uv.y()));
    REQUIRE(c >= 0);
    REQUIRE(c < ds.width);
    REQUIRE(r >= 0);
    REQUIRE(r < ds.height);
    CHECK(mask.at(r, c, 0) == 1.0);
    CHECK(std::abs(pc.z() - depth.at(r, c, 0)) < 1e-6);
  }

  // The ball's albedos are red-dominant; decoded seed colors should be too.
  double red = 0, blue = 0;
  for (int i = 0; i < ball.canonical.size(); ++i) {
    red += decoded_color(ball.canonical, i, 0);
    blue += decoded_color(ball.canonical, i, 2);
  }
  CHECK(red > blue);
}

TEST_CASE("background seeds claim the unmasked plane") {
  const bench::Dataset ds = bench::synthesize(bench::crossing_preset(3, 96));
  RunConfig cfg = tiny_config();
  Rng rng(5);
  const scene::GaussianSet bg = pipeline::init_background(ds, cfg, rng);
  CHECK(bg.label == 2);
  CHECK(bg.size() == cfg.bg_target);
  const std::vector<double>& p = bg.positions.val();
  for (int i = 0; i < bg.size(); ++i) {
    CHECK(p[std::size_t(i) * 3 + 2] == doctest::Approx(4.0).epsilon(1e-12));
    // Checker grays decode with equal channels.
    CHECK(decoded_color(bg, i, 0) == doctest::Approx(decoded_color(bg, i, 1)).epsilon(1e-12));
  }
}

TEST_CASE("pivots follow the crossing objects") {
  const bench::Dataset ds = bench::synthesize(bench::crossing_preset(5, 64));
  const std::vector<Eigen::Vector3d> ball = pipeline::object_pivots(ds, 0);
  const std::vector<Eigen::Vector3d> box = pipeline::object_pivots(ds, 1);
  REQUIRE(int(ball.size()) == 5);
  REQUIRE(int(box.size()) == 5);
  CHECK(ball.back().x() - ball.front().x() > 0.5);
  CHECK(box.back().x() - box.front().x() < -0.4);
  for (const Eigen::Vector3d& pv : ball) {
    CHECK(pv.z() > 1.8);
    CHECK(pv.z() < 2.4);
  }
  for (const Eigen::Vector3d& pv : box) {
    CHECK(pv.z() > 1.4);
    CHECK(pv.z() < 2.0);
  }
}

TEST_CASE("novel view cameras orbit the pivot at a reduced raster") {
  const bench::Dataset ds = bench::synthesize(bench::crossing_preset(2, 64));
  const scene::Camera& cam = ds.cameras[0];
  const Eigen::Vector3d pivot(0.2, -0.1, 2.1);
  const scene::Camera nv = pipeline::novel_camera(cam, pivot, 45, 15, 32);
  CHECK(nv.width == 32);
  CHECK(nv.height == 32);
  const double base_dist = (scene::resized_camera(cam, 32, 32).center() - pivot).norm();
  CHECK((nv.center() - pivot).norm() == doctest::Approx(base_dist).epsilon(1e-9));
  CHECK(pipeline::orbit_angles().size() == 15);
}

TEST_CASE("single object views match the clip wherever the object is visible") {
  const bench::SynthConfig synth = bench::crossing_preset(3, 64);
  const bench::Dataset ds = bench::synthesize(synth);
  for (int k = 0; k < 2; ++k) {
    const Image view = bench::trace_object_view(synth, k, 1, ds.cameras[1]);
    const Image& mask = ds.masks[std::size_t(k)][1];
    int compared = 0;
    for (int r = 0; r < ds.height; ++r)
      for (int c = 0; c < ds.width; ++c) {
        if (mask.at(r, c, 0) != 1.0) continue;
        for (int ch = 0; ch < 3; ++ch)
          CHECK(std::abs(view.at(r, c, ch) - ds.rgb[1].at(r, c, ch)) < 1e-12);
        ++compared;
      }
    CHECK(compared > 100);
  }
  // Away from the silhouette the view is black.
  const Image lone = bench::trace_object_view(synth, 1, 0, ds.cameras[0]);
  CHECK(lone.at(0, 0, 0) == 0.0);
  CHECK(lone.at(0, 0, 1) == 0.0);
}

TEST_CASE("maintenance prunes and splits at the configured thresholds") {
  pipeline::MaintainConfig mc;
  // Rows: prune by opacity, split by gradient, prune by scale, keep.
  scene::GaussianData d = maintenance_row(0.0099, 0.02);
  append_rows(d, maintenance_row(0.0101, 0.02));
  append_rows(d, maintenance_row(0.8, 0.0501));
  append_rows(d, maintenance_row(0.8, 0.0499));
  scene::GaussianSet set = scene::GaussianSet::from_data(d, true);

  diff::AdamW opt;
  const int g = opt.add_group("g", 0.1, 0.0);
  opt.add_param(g, set.positions);
  opt.add_param(g, set.log_scales);
  opt.add_param(g, set.rotations);
  opt.add_param(g, set.opacity_logits);
  opt.add_param(g, set.sh);

  // One step with a gradient on the keeper row builds nonzero moments there.
  set.positions.grad().assign(12, 0.0);
  set.positions.grad()[9] = 0.2;
  set.positions.grad()[10] = -0.1;
  opt.step();
  const double keeper_x = set.positions.val()[9];

  const scene::GaussianData before = set.to_data();
  std::vector<double> accum = {0.0, 0.51, 0.0, 0.49};
  Rng rng(11);
  const pipeline::MaintainStats stats = pipeline::prune_and_densify(set, accum, opt, rng, mc);
  CHECK(stats.pruned == 2);
  CHECK(stats.split == 1);
  CHECK(stats.size == 3);
  CHECK(int(accum.size()) == 3);
  for (double a : accum) CHECK(a == 0.0);

  // Children replace the split parent in place; the keeper follows them.
  const scene::GaussianData after = set.to_data();
  for (int child = 0; child < 2; ++child) {
    for (int a = 0; a < 3; ++a)
      CHECK(after.log_scales[std::size_t(child) * 3 + std::size_t(a)] ==
            before.log_scales[3 + std::size_t(a)] - std::log(mc.split_shrink));
    CHECK(after.opacities[std::size_t(child)] == before.opacities[1]);
    for (int a = 0; a < 4; ++a)
      CHECK(after.rotations[std::size_t(child) * 4 + std::size_t(a)] ==
            before.rotations[4 + std::size_t(a)]);
    for (int a = 0; a < 3; ++a)
      CHECK(after.sh[std::size_t(child) * 3 + std::size_t(a)] == before.sh[3 + std::size_t(a)]);
  }
  CHECK(after.positions[0] != after.positions[3]);  // distinct jitters
  CHECK(after.opacities[2] == before.opacities[3]);  // survivor untouched

  // A no-gradient step moves only rows with carried moments: the survivor
  // keeps the pruned rows' moments out, children start cold.
  const scene::GaussianData frozen = set.to_data();
  opt.step();
  const scene::GaussianData stepped = set.to_data();
  CHECK(stepped.positions[0] == frozen.positions[0]);
  CHECK(stepped.positions[3] == frozen.positions[3]);
  CHECK(stepped.positions[6] != frozen.positions[6]);
  (void)keeper_x;
}

TEST_CASE("the cap gates splitting but never pruning") {
  pipeline::MaintainConfig mc;
  mc.cap = 3;
  scene::GaussianData d = maintenance_row(0.0099, 0.02);
  append_rows(d, maintenance_row(0.8, 0.02));
  append_rows(d, maintenance_row(0.8, 0.02));
  append_rows(d, maintenance_row(0.8, 0.02));
  scene::GaussianSet set = scene::GaussianSet::from_data(d, true);
  diff::AdamW opt;
  const int g = opt.add_group("g", 0.1, 0.0);
  opt.add_param(g, set.positions);
  opt.add_param(g, set.log_scales);
  opt.add_param(g, set.rotations);
  opt.add_param(g, set.opacity_logits);
  opt.add_param(g, set.sh);

  // Three keepers, all begging to split; cap 3 leaves room for none.
  std::vector<double> accum = {0.0, 0.9, 0.9, 0.9};
  Rng rng(2);
  pipeline::MaintainStats stats = pipeline::prune_and_densify(set, accum, opt, rng, mc);
  CHECK(stats.pruned == 1);
  CHECK(stats.split == 0);
  CHECK(stats.size == 3);

  // With one seat free, exactly one split lands (the lowest index).
  mc.cap = 4;
  accum = {0.9, 0.9, 0.9};
  stats = pipeline::prune_and_densify(set, accum, opt, rng, mc);
  CHECK(stats.pruned == 0);
  CHECK(stats.split == 1);
  CHECK(stats.size == 4);
}

TEST_CASE("the static stage reconstructs its reference crop") {
  const bench::Dataset ds = bench::synthesize(bench::crossing_preset(3, 64));
  RunConfig cfg = tiny_config();
  cfg.lift_steps = 120;
  cfg.lift_target = 150;
  cfg.maintain_every = 40;
  const pipeline::LiftResult lift = pipeline::static_lift(ds, 1, cfg, nullptr, nullptr);
  CHECK(lift.object.label == 1);
  CHECK(lift.object.canonical.size() > 30);
  CHECK(lift.ref_psnr > 14.0);
  CHECK(lift.rigidity.n == lift.object.canonical.size());
  CHECK(lift.pivots.size() == 3);
  CHECK(lift.prior_cams.size() == pipeline::orbit_angles().size());
  CHECK(lift.prior_reference.w == cfg.prior_size);

  // The lifted reference set renders where the object sits in the frame.
  const scene::GaussianSet ref = pipeline::lifted_reference_set(lift, ds.cameras[0]);
  CHECK(ref.size() == lift.object.canonical.size());
  const std::vector<double>& p = ref.positions.val();
  const bridge::BBox box = bridge::fit_bbox(ds.masks[1][0]);
  for (int i = 0; i < ref.size(); ++i) {
    const Eigen::Vector2d uv = ds.cameras[0].project(
        {p[std::size_t(i) * 3], p[std::size_t(i) * 3 + 1], p[std::size_t(i) * 3 + 2]});
    CHECK(uv.x() > box.x0 - 3.0);
    CHECK(uv.x() < box.x1 + 3.0);
    CHECK(uv.y() > box.y0 - 3.0);
    CHECK(uv.y() < box.y1 + 3.0);
  }
}

TEST_CASE("queries anchor at the first visible step") {
  const bench::Dataset ds = bench::synthesize(bench::crossing_preset(5, 64));
  const std::vector<pipeline::TrackQuery> queries = pipeline::dataset_queries(ds);
  REQUIRE(queries.size() == ds.tracks.size());
  for (std::size_t i = 0; i < queries.size(); ++i) {
    const bench::Track& tr = ds.tracks[i];
    const pipeline::TrackQuery& q = queries[i];
    CHECK(q.object == tr.object);
    for (int s = 0; s < q.frame; ++s) CHECK(!tr.points[std::size_t(s)].visible);
    CHECK(q.x == tr.points[std::size_t(q.frame)].x);
    CHECK(q.y == tr.points[std::size_t(q.frame)].y);
  }
}

TEST_CASE("a tiny fit is deterministic and survives the checkpoint round trip") {
  const bench::Dataset ds = bench::synthesize(bench::crossing_preset(3, 48));
  const RunConfig cfg = tiny_config();

  pipeline::PipelineResult a = pipeline::run_pipeline(ds, cfg, true, nullptr, nullptr);
  pipeline::PipelineResult b = pipeline::run_pipeline(ds, cfg, true, nullptr, nullptr);

  REQUIRE(a.tracks.size() == ds.tracks.size());
  REQUIRE(b.tracks.size() == a.tracks.size());
  for (std::size_t i = 0; i < a.tracks.size(); ++i) {
    CHECK(a.tracks[i].pixels == b.tracks[i].pixels);
    CHECK(a.tracks[i].world == b.tracks[i].world);
    CHECK(a.tracks[i].visible == b.tracks[i].visible);
  }
  CHECK(a.scores.ate == b.scores.ate);
  CHECK(a.scores.a_epe == b.scores.a_epe);
  int observable = 0;
  for (const bench::Track& tr : ds.tracks) {
    bool seen = false;
    for (const bench::TrackPoint& p : tr.points) seen = seen || p.visible;
    observable += seen ? 1 : 0;
  }
  CHECK(a.scores.tracks_scored == observable);
  CHECK(observable >= 8);

  const scene::Checkpoint ck_a = pipeline::make_checkpoint(a.fit);
  const scene::Checkpoint ck_b = pipeline::make_checkpoint(b.fit);
  scene::save_checkpoint("pipeline_ck_a.bin", ck_a);
  scene::save_checkpoint("pipeline_ck_b.bin", ck_b);
  CHECK(slurp("pipeline_ck_a.bin") == slurp("pipeline_ck_b.bin"));

  const pipeline::FitResult loaded =
      pipeline::fit_from_checkpoint(scene::load_checkpoint("pipeline_ck_a.bin"));
  CHECK(loaded.frames == a.fit.frames);
  REQUIRE(loaded.objects.size() == a.fit.objects.size());
  for (int t = 0; t < ds.frames; ++t) {
    const Image orig = pipeline::render_frame(a.fit, ds.cameras, t, false).rgb_image();
    const Image back = pipeline::render_frame(loaded, ds.cameras, t, false).rgb_image();
    CHECK(orig.data == back.data);
  }
  const std::vector<pipeline::PredictedTrack> replay =
      pipeline::predict_tracks(loaded, ds, pipeline::dataset_queries(ds));
  REQUIRE(replay.size() == a.tracks.size());
  for (std::size_t i = 0; i < replay.size(); ++i) {
    CHECK(replay[i].pixels == a.tracks[i].pixels);
    CHECK(replay[i].visible == a.tracks[i].visible);
  }

  pipeline::save_tracks_json("pipeline_tracks_tmp.json", a.tracks);
  const std::string blob = slurp("pipeline_tracks_tmp.json");
  CHECK(blob.find("\"tracks\"") != std::string::npos);
  std::filesystem::remove("pipeline_ck_a.bin");
  std::filesystem::remove("pipeline_ck_b.bin");
  std::filesystem::remove("pipeline_tracks_tmp.json");
}
