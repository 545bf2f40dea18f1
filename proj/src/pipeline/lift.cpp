// SPDX-License-Identifier: Apache-2.0
#include "gmjo/pipeline/lift.hpp"

#include <cmath>
#include <ostream>

#include "gmjo/bench/metrics.hpp"
#include "gmjo/diff/ops.hpp"
#include "gmjo/pipeline/maintain.hpp"
#include "gmjo/splat/render.hpp"

namespace gmjo::pipeline {

namespace {

scene::GaussianSet relabeled(const scene::GaussianSet& set, int label) {
  scene::GaussianSet out = set;
  out.label = label;
  return out;
}

}  // namespace

LiftResult static_lift(const bench::Dataset& data, int object, const RunConfig& cfg,
                       opt::PriorProvider* prior, std::ostream* log) {
  Rng rng(cfg.seed * 1000003ull + std::uint64_t(object) * 97ull + 11ull);
  LiftResult out;
  out.object = init_object(data, object, cfg, rng);
  out.pivots = object_pivots(data, object);

  const int ref = cfg.ref_frame;
  const scene::Camera& frame_cam = data.cameras[std::size_t(ref)];
  scene::Camera crop_cam = frame_cam;
  crop_cam.world_to_cam.setIdentity();

  const Image crop_mask =
      warp_image(data.masks[std::size_t(object)][std::size_t(ref)], out.object.warp_ref,
                 data.height, data.width, true);
  Image crop_rgb =
      warp_image(data.rgb[std::size_t(ref)], out.object.warp_ref, data.height, data.width, false);
  for (int r = 0; r < crop_rgb.h; ++r)
    for (int c = 0; c < crop_rgb.w; ++c)
      if (crop_mask.at(r, c, 0) <= 0.5)
        for (int ch = 0; ch < 3; ++ch) crop_rgb.at(r, c, ch) = 0.0;

  for (const auto& [az, el] : orbit_angles())
    out.prior_cams.push_back(novel_camera(frame_cam, out.pivots[std::size_t(ref)], az, el,
                                          cfg.prior_size));
  const scene::Camera& pc = out.prior_cams.front();
  out.prior_reference = resized_bilinear(crop_rgb, pc.height, pc.width);

  bridge::FrameAlign align =
      bridge::FrameAlign::create({out.object.warp_ref}, out.object.depth_anchor, true);

  diff::AdamW opt;
  const int g_pos = opt.add_group("position", cfg.lr_position);
  const int g_sh = opt.add_group("sh", cfg.lr_sh);
  const int g_op = opt.add_group("opacity", cfg.lr_opacity);
  const int g_sr = opt.add_group("scale_rot", cfg.lr_scale_rot);
  opt.add_param(g_pos, out.object.canonical.positions);
  opt.add_param(g_sh, out.object.canonical.sh);
  opt.add_param(g_op, out.object.canonical.opacity_logits);
  opt.add_param(g_sr, out.object.canonical.log_scales);
  opt.add_param(g_sr, out.object.canonical.rotations);

  splat::RenderSettings rset;
  rset.num_classes = 1;
  // Scale thresholds are world-space lengths; crop-space sizes carry the
  // crop magnification, so the gates move with it.
  MaintainConfig mc = maintain_config(cfg);
  mc.prune_scale *= out.object.warp_ref.sigma;
  mc.densify_scale *= out.object.warp_ref.sigma;
  std::vector<double> accum(std::size_t(out.object.canonical.size()), 0.0);
  const int steps = std::max(1, cfg.lift_steps);

  for (int step = 0; step < steps; ++step) {
    const double f = steps > 1 ? double(step) / (steps - 1) : 0.0;
    opt.set_lr(g_pos, cfg.lr_position * std::pow(cfg.lr_position_final / cfg.lr_position, f));

    const splat::SceneBatch batch = splat::concat_sets({relabeled(out.object.canonical, 0)});
    const splat::RenderOutput ro = splat::render(batch, crop_cam, nullptr, rset);
    const diff::Tensor term_rgb = opt::loss_rgb(ro.rgb, crop_rgb) * cfg.w_rgb;
    const diff::Tensor term_mask = opt::loss_l1(ro.alpha, crop_mask) * cfg.w_mask;
    diff::Tensor loss = term_rgb + term_mask;
    double prior_item = 0;

    if (prior && cfg.prior_every_lift > 0 && step % cfg.prior_every_lift == 0) {
      const std::size_t view =
          std::size_t(step / cfg.prior_every_lift) % out.prior_cams.size();
      const scene::GaussianSet lifted = relabeled(
          bridge::object_to_frame(out.object.canonical, align, 0, frame_cam), 0);
      const splat::RenderOutput nv =
          splat::render(splat::concat_sets({lifted}), out.prior_cams[view], nullptr, rset);
      const double tau = cfg.tau_start + (cfg.tau_end - cfg.tau_start) * f;
      const opt::PriorResponse resp =
          prior->query(out.prior_cams[view].world_to_cam, tau, out.prior_reference,
                       nv.rgb_image());
      const diff::Tensor pull =
          opt::loss_prior_pull(nv.rgb, resp.gradient, resp.weight * cfg.prior_weight);
      prior_item = pull.item();
      loss = loss + pull;
    }

    if (log && (step % 100 == 0 || step + 1 == steps))
      *log << "lift object " << object << " step " << step << ": loss " << loss.item()
           << " (rgb " << term_rgb.item() << ", mask " << term_mask.item() << ", prior "
           << prior_item << ")\n";

    diff::backward(loss);
    accumulate_position_grads(out.object.canonical, accum);
    opt.step();
    align.log_sigma.zero_grad();
    align.tau.zero_grad();
    align.log_k.zero_grad();

    if (cfg.maintain_every > 0 && (step + 1) % cfg.maintain_every == 0 && step + 1 < steps) {
      const MaintainStats ms = prune_and_densify(out.object.canonical, accum, opt, rng, mc);
      if (log)
        *log << "lift object " << object << " maintenance at step " << step + 1 << ": "
             << ms.size << " gaussians (" << ms.pruned << " pruned, " << ms.split << " split)\n";
    }
  }

  {
    const splat::SceneBatch batch = splat::concat_sets({relabeled(out.object.canonical, 0)});
    const splat::RenderOutput ro = splat::render(batch, crop_cam, nullptr, rset);
    out.ref_psnr = bench::psnr(ro.rgb_image(), crop_rgb);
  }
  out.rigidity = opt::RigidityGraph::build(out.object.canonical.positions.val(),
                                           out.object.canonical.rotations.val(), 8);
  return out;
}

scene::GaussianSet lifted_reference_set(const LiftResult& lift, const scene::Camera& frame_cam) {
  const bridge::FrameAlign align =
      bridge::FrameAlign::create({lift.object.warp_ref}, lift.object.depth_anchor, true);
  return bridge::object_to_frame(lift.object.canonical, align, 0, frame_cam);
}

}  // namespace gmjo::pipeline
