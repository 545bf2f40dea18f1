// SPDX-License-Identifier: Apache-2.0
#include "gmjo/pipeline/maintain.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "gmjo/scene/geometry.hpp"

namespace gmjo::pipeline {

MaintainConfig maintain_config(const RunConfig& cfg) {
  MaintainConfig mc;
  mc.prune_opacity = cfg.prune_opacity;
  mc.prune_scale = cfg.prune_scale;
  mc.densify_grad = cfg.densify_grad;
  mc.densify_scale = cfg.densify_scale;
  mc.split_shrink = cfg.split_shrink;
  mc.cap = cfg.max_gaussians;
  return mc;
}

void accumulate_position_grads(const scene::GaussianSet& set, std::vector<double>& accum) {
  const int n = set.size();
  check(int(accum.size()) == n, "accumulate_position_grads: accumulator size mismatch");
  if (!set.positions.has_grad()) return;
  const std::vector<double>& g = set.positions.grad();
  for (int i = 0; i < n; ++i) {
    const std::size_t o = std::size_t(i) * 3;
    accum[std::size_t(i)] += std::sqrt(g[o] * g[o] + g[o + 1] * g[o + 1] + g[o + 2] * g[o + 2]);
  }
}

MaintainStats prune_and_densify(scene::GaussianSet& set, std::vector<double>& accum,
                                diff::AdamW& opt, Rng& rng, const MaintainConfig& mc) {
  const int n = set.size();
  check(int(accum.size()) == n, "prune_and_densify: accumulator size mismatch");
  const scene::GaussianData old = set.to_data();
  const int coeffs = scene::sh_coeff_count(old.sh_degree);

  enum class Action { Keep, Prune, Split };
  std::vector<Action> action(std::size_t(n), Action::Keep);
  int kept = 0;
  for (int i = 0; i < n; ++i) {
    const double opacity = 1.0 / (1.0 + std::exp(-old.opacities[std::size_t(i)]));
    double max_scale = 0;
    for (int a = 0; a < 3; ++a)
      max_scale = std::max(max_scale, std::exp(old.log_scales[std::size_t(i) * 3 + a]));
    if (opacity < mc.prune_opacity || max_scale > mc.prune_scale) {
      action[std::size_t(i)] = Action::Prune;
    } else {
      ++kept;
    }
  }
  int planned = kept;
  MaintainStats stats;
  for (int i = 0; i < n; ++i) {
    if (action[std::size_t(i)] != Action::Keep) continue;
    double max_scale = 0;
    for (int a = 0; a < 3; ++a)
      max_scale = std::max(max_scale, std::exp(old.log_scales[std::size_t(i) * 3 + a]));
    if (accum[std::size_t(i)] > mc.densify_grad && max_scale < mc.densify_scale &&
        planned + 1 <= mc.cap) {
      action[std::size_t(i)] = Action::Split;
      ++planned;
      ++stats.split;
    }
  }
  stats.pruned = n - kept;
  check(planned > 0, "prune_and_densify: every gaussian was pruned");

  scene::GaussianData d;
  d.sh_degree = old.sh_degree;
  d.label = old.label;
  std::vector<int> src_rows;
  src_rows.reserve(std::size_t(planned));
  auto copy_row = [&](int i) {
    for (int a = 0; a < 3; ++a) d.positions.push_back(old.positions[std::size_t(i) * 3 + a]);
    for (int a = 0; a < 3; ++a) d.log_scales.push_back(old.log_scales[std::size_t(i) * 3 + a]);
    for (int a = 0; a < 4; ++a) d.rotations.push_back(old.rotations[std::size_t(i) * 4 + a]);
    d.opacities.push_back(old.opacities[std::size_t(i)]);
    for (int a = 0; a < coeffs * 3; ++a)
      d.sh.push_back(old.sh[std::size_t(i) * coeffs * 3 + a]);
  };
  for (int i = 0; i < n; ++i) {
    if (action[std::size_t(i)] == Action::Prune) continue;
    if (action[std::size_t(i)] == Action::Keep) {
      copy_row(i);
      src_rows.push_back(i);
      continue;
    }
    double q[4];
    double qn = 0;
    for (int a = 0; a < 4; ++a) {
      q[a] = old.rotations[std::size_t(i) * 4 + a];
      qn += q[a] * q[a];
    }
    qn = std::sqrt(qn);
    check(qn > 0, "prune_and_densify: zero rotation row");
    for (int a = 0; a < 4; ++a) q[a] /= qn;
    const Eigen::Matrix3d rot = scene::quat_to_matrix(q);
    const Eigen::Vector3d scale(std::exp(old.log_scales[std::size_t(i) * 3]),
                                std::exp(old.log_scales[std::size_t(i) * 3 + 1]),
                                std::exp(old.log_scales[std::size_t(i) * 3 + 2]));
    for (int child = 0; child < 2; ++child) {
      const Eigen::Vector3d jitter(rng.normal(0, 1) * scale.x(), rng.normal(0, 1) * scale.y(),
                                   rng.normal(0, 1) * scale.z());
      const Eigen::Vector3d p =
          Eigen::Map<const Eigen::Vector3d>(&old.positions[std::size_t(i) * 3]) + rot * jitter;
      for (int a = 0; a < 3; ++a) d.positions.push_back(p[a]);
      for (int a = 0; a < 3; ++a)
        d.log_scales.push_back(old.log_scales[std::size_t(i) * 3 + a] - std::log(mc.split_shrink));
      for (int a = 0; a < 4; ++a) d.rotations.push_back(old.rotations[std::size_t(i) * 4 + a]);
      d.opacities.push_back(old.opacities[std::size_t(i)]);
      for (int a = 0; a < coeffs * 3; ++a)
        d.sh.push_back(old.sh[std::size_t(i) * coeffs * 3 + a]);
      src_rows.push_back(-1);
    }
  }
  d.validate("prune_and_densify");

  scene::GaussianSet fresh = scene::GaussianSet::from_data(d, true);
  opt.replace_param(set.positions, fresh.positions, src_rows);
  opt.replace_param(set.log_scales, fresh.log_scales, src_rows);
  opt.replace_param(set.rotations, fresh.rotations, src_rows);
  opt.replace_param(set.opacity_logits, fresh.opacity_logits, src_rows);
  opt.replace_param(set.sh, fresh.sh, src_rows);
  set = fresh;
  stats.size = set.size();
  accum.assign(std::size_t(stats.size), 0.0);
  return stats;
}

}  // namespace gmjo::pipeline
