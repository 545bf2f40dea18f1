// SPDX-License-Identifier: Apache-2.0
#include "gmjo/pipeline/dynamic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "gmjo/diff/adamw.hpp"
#include "gmjo/diff/ops.hpp"
#include "gmjo/pipeline/init.hpp"

namespace gmjo::pipeline {

namespace {

scene::GaussianSet relabeled(const scene::GaussianSet& set, int label) {
  scene::GaussianSet out = set;
  out.label = label;
  return out;
}

diff::Tensor square_mean(const diff::Tensor& x) { return diff::mean(diff::mul(x, x)); }

scene::GaussianSet deform_to_frame(const FittedObject& obj, const deform::Deformer::Eval& eval,
                                   const scene::Camera& frame_cam, int t) {
  const scene::GaussianSet d = obj.deformer.deform(obj.canonical, eval, t);
  return bridge::object_to_frame(d, obj.align, t, frame_cam);
}

/// Per-frame warps from the mask boxes. Occluded frames reuse the previous
/// warp; the crop scale is clamped near the reference so a mostly hidden
/// object cannot blow up its own crop space.
std::vector<bridge::Warp> frame_warps(const bench::Dataset& data, int object,
                                      const bridge::Warp& ref_warp, double fill) {
  std::vector<bridge::Warp> warps;
  warps.reserve(std::size_t(data.frames));
  for (int t = 0; t < data.frames; ++t) {
    const Image& mask = data.masks[std::size_t(object)][std::size_t(t)];
    if (mask_empty(mask)) {
      warps.push_back(warps.empty() ? ref_warp : warps.back());
      continue;
    }
    const bridge::BBox box = bridge::fit_bbox(mask);
    bridge::Warp w = bridge::compute_warp(box, data.width, data.height, fill);
    const double clamped = std::clamp(w.sigma, ref_warp.sigma / 3.0, ref_warp.sigma * 3.0);
    if (clamped != w.sigma) {
      w.sigma = clamped;
      w.tau = Eigen::Vector2d(0.5 * data.width, 0.5 * data.height) - clamped * box.center();
    }
    warps.push_back(w);
  }
  return warps;
}

struct Supervision {
  std::vector<std::vector<int>> labels;  // class id per pixel, per frame
  std::vector<Image> fg_union;           // union of object masks, flow gate
  // ablation-mode targets, built only when needed
  std::vector<std::vector<Image>> rgb_masked;  // [object][frame]
  std::vector<Image> rgb_bg, bg_mask;
};

Supervision build_supervision(const bench::Dataset& data, bool joint) {
  Supervision sup;
  const int T = data.frames, K = data.num_objects;
  sup.labels.resize(std::size_t(T));
  sup.fg_union.resize(std::size_t(T));
  if (!joint) {
    sup.rgb_masked.assign(std::size_t(K), {});
    for (int k = 0; k < K; ++k) sup.rgb_masked[std::size_t(k)].resize(std::size_t(T));
    sup.rgb_bg.resize(std::size_t(T));
    sup.bg_mask.resize(std::size_t(T));
  }
  for (int t = 0; t < T; ++t) {
    sup.labels[std::size_t(t)].assign(std::size_t(data.height) * data.width, K);
    sup.fg_union[std::size_t(t)] = Image(data.height, data.width, 1);
    if (!joint) {
      for (int k = 0; k < K; ++k)
        sup.rgb_masked[std::size_t(k)][std::size_t(t)] = Image(data.height, data.width, 3);
      sup.rgb_bg[std::size_t(t)] = Image(data.height, data.width, 3);
      sup.bg_mask[std::size_t(t)] = Image(data.height, data.width, 1);
    }
    for (int r = 0; r < data.height; ++r) {
      for (int c = 0; c < data.width; ++c) {
        int label = K;
        for (int k = 0; k < K && label == K; ++k)
          if (data.masks[std::size_t(k)][std::size_t(t)].at(r, c, 0) > 0.5) label = k;
        sup.labels[std::size_t(t)][std::size_t(r) * data.width + c] = label;
        sup.fg_union[std::size_t(t)].at(r, c, 0) = label < K ? 1.0 : 0.0;
        if (!joint) {
          if (label < K)
            for (int ch = 0; ch < 3; ++ch)
              sup.rgb_masked[std::size_t(label)][std::size_t(t)].at(r, c, ch) =
                  data.rgb[std::size_t(t)].at(r, c, ch);
          else
            for (int ch = 0; ch < 3; ++ch)
              sup.rgb_bg[std::size_t(t)].at(r, c, ch) = data.rgb[std::size_t(t)].at(r, c, ch);
          sup.bg_mask[std::size_t(t)].at(r, c, 0) = label == K ? 1.0 : 0.0;
        }
      }
    }
  }
  return sup;
}

/// Per-term loss sums between log lines.
struct LossTerms {
  double rgb = 0, mask = 0, flow = 0, depth = 0, cls = 0, rigid = 0, shreg = 0, prior = 0;
  int frames = 0;

  void print(std::ostream& os) const {
    const double inv = frames > 0 ? 1.0 / frames : 0.0;
    os << " (rgb " << rgb * inv << ", mask " << mask * inv << ", flow " << flow * inv
       << ", depth " << depth * inv << ", class " << cls * inv << ", rigid " << rigid * inv
       << ", shreg " << shreg * inv << ", prior " << prior * inv << ")";
  }
};

/// Adds a weighted term to the loss and banks its value for the log.
diff::Tensor add_term(const diff::Tensor& loss, const diff::Tensor& term, double& bucket) {
  bucket += term.item();
  return loss + term;
}

}  // namespace

scene::GaussianSet object_frame_set(const FittedObject& obj, const scene::Camera& frame_cam,
                                    int t) {
  return deform_to_frame(obj, obj.deformer.prepare(obj.canonical), frame_cam, t);
}

std::vector<scene::GaussianSet> frame_sets(const FitResult& fit, const scene::Camera& frame_cam,
                                           int t) {
  std::vector<scene::GaussianSet> sets;
  sets.reserve(fit.objects.size() + 1);
  for (const FittedObject& obj : fit.objects) sets.push_back(object_frame_set(obj, frame_cam, t));
  sets.push_back(fit.background);
  return sets;
}

splat::RenderOutput render_frame(const FitResult& fit, const std::vector<scene::Camera>& cams,
                                 int t, bool with_flow) {
  check(t >= 0 && t < fit.frames, "render_frame: frame out of range");
  check(!with_flow || t + 1 < fit.frames, "render_frame: no next frame for flow");
  splat::RenderSettings rs;
  rs.num_classes = int(fit.objects.size());
  std::vector<scene::GaussianSet> sets = frame_sets(fit, cams[std::size_t(t)], t);
  std::vector<diff::Tensor> next;
  if (with_flow) {
    for (const FittedObject& obj : fit.objects)
      next.push_back(object_frame_set(obj, cams[std::size_t(t + 1)], t + 1).positions);
    next.push_back(fit.background.positions);
  }
  const splat::SceneBatch batch = splat::concat_sets(sets, next);
  return splat::render(batch, cams[std::size_t(t)], with_flow ? &cams[std::size_t(t + 1)] : nullptr,
                       rs);
}

FitResult dynamic_fit(const bench::Dataset& data, const std::vector<LiftResult>& lifts,
                      scene::GaussianSet background, const RunConfig& cfg, bool joint,
                      opt::PriorProvider* prior, std::ostream* log) {
  const int T = data.frames, K = int(lifts.size());
  check(K == data.num_objects, "dynamic_fit: one lift per object required");
  check(T >= 1, "dynamic_fit: empty clip");

  FitResult fit;
  fit.frames = T;
  fit.background = std::move(background);
  Rng rng(cfg.seed * 7919ull + 1297ull);

  std::vector<Image> prior_refs;
  std::vector<std::vector<scene::Camera>> prior_cams;
  for (int k = 0; k < K; ++k) {
    prior_refs.push_back(lifts[std::size_t(k)].prior_reference);
    prior_cams.push_back(lifts[std::size_t(k)].prior_cams);

    FittedObject obj;
    obj.canonical =
        scene::GaussianSet::from_data(lifts[std::size_t(k)].object.canonical.to_data(), false);
    obj.rigidity = lifts[std::size_t(k)].rigidity;
    obj.pivots = lifts[std::size_t(k)].pivots;
    obj.depth_anchor = lifts[std::size_t(k)].object.depth_anchor;
    obj.label = k;

    const std::vector<double>& p = obj.canonical.positions.val();
    Eigen::Vector3d bmin = Eigen::Vector3d::Constant(1e30), bmax = -bmin;
    for (std::size_t i = 0; i < p.size(); i += 3)
      for (int a = 0; a < 3; ++a) {
        bmin[a] = std::min(bmin[a], p[i + std::size_t(a)]);
        bmax[a] = std::max(bmax[a], p[i + std::size_t(a)]);
      }
    const Eigen::Vector3d pad = 0.05 * (bmax - bmin) + Eigen::Vector3d::Constant(1e-6);
    obj.deformer = deform::Deformer(cfg.deformer_config(), T, bmin - pad, bmax + pad, rng);

    obj.align = bridge::FrameAlign::create(
        frame_warps(data, k, lifts[std::size_t(k)].object.warp_ref, cfg.crop_fill),
        obj.depth_anchor, k == 0);
    fit.objects.push_back(std::move(obj));
  }

  const Supervision sup = build_supervision(data, joint);

  diff::AdamW opt;
  for (int k = 0; k < K; ++k) {
    FittedObject& obj = fit.objects[std::size_t(k)];
    const int g_grid = opt.add_group("grid_" + std::to_string(k), cfg.lr_grid);
    const int g_heads = opt.add_group("heads_" + std::to_string(k), cfg.lr_heads);
    const int g_align = opt.add_group("align_" + std::to_string(k), cfg.lr_align);
    for (const diff::Tensor& p : obj.deformer.plane_params()) opt.add_param(g_grid, p);
    for (const diff::Tensor& p : obj.deformer.head_params()) opt.add_param(g_heads, p);
    opt.add_param(g_align, obj.align.log_sigma);
    opt.add_param(g_align, obj.align.tau);
    if (obj.align.log_k.tracked()) opt.add_param(g_align, obj.align.log_k);
  }
  {
    const int g_pos = opt.add_group("bg_position", cfg.lr_bg_position);
    const int g_sh = opt.add_group("bg_sh", cfg.lr_sh);
    const int g_op = opt.add_group("bg_opacity", cfg.lr_opacity);
    const int g_sr = opt.add_group("bg_scale_rot", cfg.lr_scale_rot);
    opt.add_param(g_pos, fit.background.positions);
    opt.add_param(g_sh, fit.background.sh);
    opt.add_param(g_op, fit.background.opacity_logits);
    opt.add_param(g_sr, fit.background.log_scales);
    opt.add_param(g_sr, fit.background.rotations);
  }

  splat::RenderSettings rjoint;
  rjoint.num_classes = K;
  splat::RenderSettings rsolo;
  rsolo.num_classes = 1;

  const int steps = std::max(1, cfg.steps_per_frame * T);
  const int batch = std::clamp(cfg.batch_frames, 1, T);
  const int slices = std::max(1, cfg.grad_accum);
  std::vector<int> frame_ids(static_cast<std::size_t>(T));
  std::iota(frame_ids.begin(), frame_ids.end(), 0);

  // One frame's loss; evals are shared across the frames of one step.
  LossTerms terms;
  auto frame_loss = [&](int t, const std::vector<deform::Deformer::Eval>& evals) {
    const scene::Camera& cam = data.cameras[std::size_t(t)];
    const bool flow_ok = t + 1 < T;
    const scene::Camera* next_cam = flow_ok ? &data.cameras[std::size_t(t + 1)] : nullptr;
    diff::Tensor loss = diff::Tensor::scalar(0.0);
    ++terms.frames;
    std::vector<scene::GaussianSet> sets;
    std::vector<diff::Tensor> next;
    for (int k = 0; k < K; ++k) {
      const FittedObject& obj = fit.objects[std::size_t(k)];
      const scene::GaussianSet d = obj.deformer.deform(obj.canonical, evals[std::size_t(k)], t);
      const scene::GaussianSet f = bridge::object_to_frame(d, obj.align, t, cam);
      diff::Tensor next_k;
      if (flow_ok) {
        const scene::GaussianSet d1 =
            obj.deformer.deform(obj.canonical, evals[std::size_t(k)], t + 1);
        next_k = bridge::object_to_frame(d1, obj.align, t + 1, *next_cam).positions;
      }
      loss = add_term(loss, opt::loss_rigid(obj.rigidity, d.positions, d.rotations) * cfg.w_rigid,
                      terms.rigid);
      loss = add_term(loss, square_mean(diff::sub(d.sh, obj.canonical.sh)) * cfg.w_shreg,
                      terms.shreg);
      if (joint) {
        sets.push_back(f);
        if (flow_ok) next.push_back(next_k);
        continue;
      }
      const splat::SceneBatch sb = splat::concat_sets(
          {relabeled(f, 0)}, flow_ok ? std::vector<diff::Tensor>{next_k} : std::vector<diff::Tensor>{});
      const splat::RenderOutput ro = splat::render(sb, cam, next_cam, rsolo);
      const Image& mask = data.masks[std::size_t(k)][std::size_t(t)];
      loss = add_term(loss,
                      opt::loss_rgb(ro.rgb, sup.rgb_masked[std::size_t(k)][std::size_t(t)]) *
                          cfg.w_rgb,
                      terms.rgb);
      loss = add_term(loss, opt::loss_l1(ro.alpha, mask) * cfg.w_mask, terms.mask);
      loss = add_term(loss,
                      opt::loss_depth(ro.depth, data.depth[std::size_t(t)], mask, 0.5) *
                          cfg.w_depth,
                      terms.depth);
      if (flow_ok)
        loss = add_term(loss,
                        opt::loss_flow(ro.flow, data.flow[std::size_t(t)], mask, 0.5) * cfg.w_flow,
                        terms.flow);
    }
    if (joint) {
      sets.push_back(fit.background);
      if (flow_ok) next.push_back(fit.background.positions);
      const splat::SceneBatch sb = splat::concat_sets(sets, next);
      const splat::RenderOutput ro = splat::render(sb, cam, next_cam, rjoint);
      loss = add_term(loss, opt::loss_rgb(ro.rgb, data.rgb[std::size_t(t)]) * cfg.w_rgb, terms.rgb);
      loss = add_term(loss, opt::loss_class(ro.instance, sup.labels[std::size_t(t)]) * cfg.w_class,
                      terms.cls);
      loss = add_term(loss,
                      opt::loss_depth(ro.depth, data.depth[std::size_t(t)], ro.alpha_image(), 0.3) *
                          cfg.w_depth,
                      terms.depth);
      if (flow_ok)
        loss = add_term(loss,
                        opt::loss_flow(ro.flow, data.flow[std::size_t(t)],
                                       sup.fg_union[std::size_t(t)], 0.5) *
                            cfg.w_flow,
                        terms.flow);
    } else {
      const splat::SceneBatch sb = splat::concat_sets({relabeled(fit.background, 0)});
      const splat::RenderOutput ro = splat::render(sb, cam, nullptr, rsolo);
      loss = add_term(loss, opt::loss_rgb(ro.rgb, sup.rgb_bg[std::size_t(t)]) * cfg.w_rgb,
                      terms.rgb);
      loss = add_term(loss, opt::loss_l1(ro.alpha, sup.bg_mask[std::size_t(t)]) * cfg.w_mask,
                      terms.mask);
    }
    return loss;
  };

  for (int step = 0; step < steps; ++step) {
    const double sf = steps > 1 ? double(step) / (steps - 1) : 0.0;
    std::vector<deform::Deformer::Eval> evals;
    evals.reserve(std::size_t(K));
    for (int k = 0; k < K; ++k)
      evals.push_back(fit.objects[std::size_t(k)].deformer.prepare(
          fit.objects[std::size_t(k)].canonical));

    rng.shuffle(frame_ids);
    double step_loss = 0;
    int taken = 0;
    for (int s = 0; s < slices && taken < batch; ++s) {
      const int count = std::min((batch + slices - 1) / slices, batch - taken);
      diff::Tensor slice_loss = diff::Tensor::scalar(0.0);
      for (int b = 0; b < count; ++b, ++taken)
        slice_loss = slice_loss + frame_loss(frame_ids[std::size_t(taken)], evals);
      slice_loss = slice_loss * (1.0 / batch);
      step_loss += slice_loss.item();
      diff::backward(slice_loss);
    }

    if (prior && cfg.prior_every_dynamic > 0 && step % cfg.prior_every_dynamic == 0 && K > 0) {
      const int k = (step / cfg.prior_every_dynamic) % K;
      const int t = int(rng.index(T));
      const auto& [az, el] =
          orbit_angles()[std::size_t(rng.index(std::int64_t(orbit_angles().size())))];
      const FittedObject& obj = fit.objects[std::size_t(k)];
      const scene::Camera cam = novel_camera(data.cameras[std::size_t(t)],
                                             obj.pivots[std::size_t(t)], az, el, cfg.prior_size);
      const scene::GaussianSet set =
          relabeled(deform_to_frame(obj, evals[std::size_t(k)], data.cameras[std::size_t(t)], t), 0);
      const splat::RenderOutput nv = splat::render(splat::concat_sets({set}), cam, nullptr, rsolo);
      const double tau = cfg.tau_start + (cfg.tau_end - cfg.tau_start) * sf;
      const opt::PriorResponse resp =
          prior->query(cam.world_to_cam, tau, prior_refs[std::size_t(k)], nv.rgb_image());
      const diff::Tensor pull =
          opt::loss_prior_pull(nv.rgb, resp.gradient, resp.weight * cfg.prior_weight);
      terms.prior += pull.item();
      diff::backward(pull);
    }

    opt.step();
    if (log && (step % 50 == 0 || step + 1 == steps)) {
      *log << (joint ? "joint" : "solo") << " dynamic step " << step << ": loss " << step_loss;
      terms.print(*log);
      *log << "\n";
      terms = LossTerms{};
    }
  }
  return fit;
}

}  // namespace gmjo::pipeline
