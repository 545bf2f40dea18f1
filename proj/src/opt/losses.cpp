// SPDX-License-Identifier: Apache-2.0
#include "gmjo/opt/losses.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>

#include "gmjo/diff/ops.hpp"
#include "gmjo/util.hpp"

namespace gmjo::opt {

using diff::Tensor;

namespace {

std::vector<double> gaussian_kernel(int taps, double sigma) {
  std::vector<double> k(static_cast<std::size_t>(taps));
  const int mid = taps / 2;
  double total = 0;
  for (int i = 0; i < taps; ++i) {
    const double d = i - mid;
    k[std::size_t(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += k[std::size_t(i)];
  }
  for (double& v : k) v /= total;
  return k;
}

Tensor image_constant(const Image& img, const std::vector<int>& shape, std::int64_t numel,
                      const char* where) {
  check(std::int64_t(img.size()) == numel, where, ": reference size ", img.size(),
        " does not match tensor numel ", numel);
  return Tensor::constant(shape, img.data);
}

double median_of(std::vector<double> v) {
  check(!v.empty(), "median_of: empty");
  const std::size_t m = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(m), v.end());
  double hi = v[m];
  if (v.size() % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + std::ptrdiff_t(m) - 1, v.begin() + std::ptrdiff_t(m));
  return 0.5 * (v[m - 1] + hi);
}

}  // namespace

Tensor loss_rgb(const Tensor& rendered, const Image& reference) {
  check(rendered.shape().size() == 3 && rendered.dim(2) == 3, "loss_rgb: want [h,w,3]");
  const Tensor ref = image_constant(reference, rendered.shape(), rendered.numel(), "loss_rgb");
  const Tensor l1 = mean(abs(rendered - ref));

  const std::vector<double> k = gaussian_kernel(11, 1.5);
  const Tensor mu_x = blur_separable(rendered, k);
  const Tensor mu_y = blur_separable(ref, k);
  const Tensor var_x = blur_separable(rendered * rendered, k) - mu_x * mu_x;
  const Tensor var_y = blur_separable(ref * ref, k) - mu_y * mu_y;
  const Tensor cov = blur_separable(rendered * ref, k) - mu_x * mu_y;
  const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const Tensor num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2);
  const Tensor den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2);
  const Tensor dssim = mean((1.0 - num / den) * 0.5);
  return l1 * 0.8 + dssim * 0.2;
}

Tensor loss_l1(const Tensor& rendered, const Image& reference) {
  const Tensor ref = image_constant(reference, rendered.shape(), rendered.numel(), "loss_l1");
  return mean(abs(rendered - ref));
}

Tensor loss_flow(const Tensor& flow, const Image& gt_flow, const Image& alpha,
                 double alpha_gate) {
  check(flow.shape().size() == 3 && flow.dim(2) == 2, "loss_flow: want [h,w,2]");
  const int npix = flow.dim(0) * flow.dim(1);
  check(int(alpha.size()) == npix, "loss_flow: alpha size mismatch");
  const Tensor gt = image_constant(gt_flow, flow.shape(), flow.numel(), "loss_flow");

  std::vector<double> w(static_cast<std::size_t>(flow.numel()), 0.0);
  int valid = 0;
  for (int p = 0; p < npix; ++p) valid += alpha.data[std::size_t(p)] > alpha_gate ? 1 : 0;
  if (valid == 0) return Tensor::scalar(0.0);
  for (int p = 0; p < npix; ++p) {
    if (alpha.data[std::size_t(p)] <= alpha_gate) continue;
    w[std::size_t(p) * 2 + 0] = 1.0 / valid;
    w[std::size_t(p) * 2 + 1] = 1.0 / valid;
  }
  return dot(abs(flow - gt), Tensor::constant(flow.shape(), std::move(w)));
}

Tensor loss_depth(const Tensor& depth, const Image& reference, const Image& alpha,
                  double alpha_gate) {
  check(depth.shape().size() == 2, "loss_depth: want [h,w]");
  const std::int64_t npix = depth.numel();
  check(std::int64_t(reference.size()) == npix && std::int64_t(alpha.size()) == npix,
        "loss_depth: size mismatch");

  std::vector<std::uint8_t> mask(static_cast<std::size_t>(npix), 0);
  std::vector<double> log_ref(static_cast<std::size_t>(npix), 0.0);
  std::vector<double> ref_valid;
  for (std::int64_t p = 0; p < npix; ++p) {
    const double r = reference.data[std::size_t(p)];
    if (alpha.data[std::size_t(p)] > alpha_gate && r > 0) {
      mask[std::size_t(p)] = 1;
      log_ref[std::size_t(p)] = std::log(r);
      ref_valid.push_back(r);
    }
  }
  if (ref_valid.empty()) return Tensor::scalar(0.0);
  const int valid = int(ref_valid.size());

  const Tensor clamped = clamp_min(depth, 1e-6);
  // Median-ratio alignment keeps the loss invariant to a global depth scale.
  const Tensor log_scale = add(neg(log(masked_median(clamped, mask))),
                               std::log(median_of(std::move(ref_valid))));
  const Tensor diff = add(sub(log(clamped), Tensor::constant(depth.shape(), std::move(log_ref))),
                          log_scale);

  std::vector<double> w(static_cast<std::size_t>(npix), 0.0);
  for (std::int64_t p = 0; p < npix; ++p)
    if (mask[std::size_t(p)]) w[std::size_t(p)] = 1.0 / valid;
  return dot(abs(diff), Tensor::constant(depth.shape(), std::move(w)));
}

Tensor loss_class(const Tensor& instance, const std::vector<int>& labels, double eps) {
  check(instance.shape().size() == 3, "loss_class: want [h,w,k+1]");
  const int npix = instance.dim(0) * instance.dim(1);
  const int ch = instance.dim(2);
  check(int(labels.size()) == npix, "loss_class: one label per pixel");

  std::vector<double> w(static_cast<std::size_t>(instance.numel()), 0.0);
  for (int p = 0; p < npix; ++p) {
    check(labels[std::size_t(p)] >= 0 && labels[std::size_t(p)] < ch, "loss_class: label ",
          labels[std::size_t(p)], " outside [0,", ch - 1, "]");
    w[std::size_t(p) * std::size_t(ch) + std::size_t(labels[std::size_t(p)])] = -1.0 / npix;
  }
  return dot(log(add(instance, eps)), Tensor::constant(instance.shape(), std::move(w)));
}

RigidityGraph RigidityGraph::build(const std::vector<double>& positions,
                                   const std::vector<double>& rotations, int k) {
  RigidityGraph g;
  check(positions.size() % 3 == 0 && rotations.size() % 4 == 0 &&
            positions.size() / 3 == rotations.size() / 4,
        "RigidityGraph: positions [n,3] and rotations [n,4] disagree");
  const int n = int(positions.size() / 3);
  g.n = n;
  g.k = std::min(k, n - 1);
  if (n < 2 || g.k < 1) {
    g.k = 0;
    return g;
  }

  std::vector<double> qn(rotations);
  for (int i = 0; i < n; ++i) {
    double* q = &qn[std::size_t(i) * 4];
    const double norm = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]);
    check(norm > 0, "RigidityGraph: zero rotation row ", i);
    for (int c = 0; c < 4; ++c) q[c] /= norm;
  }

  std::vector<std::pair<double, int>> cand;
  cand.reserve(static_cast<std::size_t>(n) - 1);
  for (int i = 0; i < n; ++i) {
    cand.clear();
    const double* pi = &positions[std::size_t(i) * 3];
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* pj = &positions[std::size_t(j) * 3];
      const double dx = pi[0] - pj[0], dy = pi[1] - pj[1], dz = pi[2] - pj[2];
      cand.emplace_back(dx * dx + dy * dy + dz * dz, j);
    }
    std::partial_sort(cand.begin(), cand.begin() + g.k, cand.end());
    for (int e = 0; e < g.k; ++e) {
      g.src.push_back(i);
      g.dst.push_back(cand[std::size_t(e)].second);
      g.canon_dist2.push_back(cand[std::size_t(e)].first);
      const double* qi = &qn[std::size_t(i) * 4];
      const double* qj = &qn[std::size_t(cand[std::size_t(e)].second) * 4];
      const double qd =
          std::abs(qi[0] * qj[0] + qi[1] * qj[1] + qi[2] * qj[2] + qi[3] * qj[3]);
      g.canon_qdist2.push_back(8.0 * (1.0 - std::min(1.0, qd)));
    }
  }

  std::vector<double> dists;
  dists.reserve(g.canon_dist2.size());
  for (double d2 : g.canon_dist2) dists.push_back(std::sqrt(d2));
  double sigma = median_of(std::move(dists));
  if (sigma <= 0) sigma = 1.0;
  g.weight.reserve(g.canon_dist2.size());
  for (double d2 : g.canon_dist2) g.weight.push_back(std::exp(-d2 / (2.0 * sigma * sigma)));
  return g;
}

Tensor loss_rigid(const RigidityGraph& graph, const Tensor& positions, const Tensor& rotations,
                  double lambda_rot) {
  if (graph.k == 0) return Tensor::scalar(0.0);
  check(positions.shape().size() == 2 && positions.dim(1) == 3 && positions.dim(0) == graph.n,
        "loss_rigid: positions disagree with graph");
  check(rotations.shape().size() == 2 && rotations.dim(1) == 4 && rotations.dim(0) == graph.n,
        "loss_rigid: rotations disagree with graph");

  const int edges = int(graph.src.size());
  std::vector<double> w(static_cast<std::size_t>(edges));
  for (int e = 0; e < edges; ++e) w[std::size_t(e)] = graph.weight[std::size_t(e)] / edges;
  const Tensor w_edge = Tensor::constant({edges}, std::move(w));

  const Tensor pi = gather_rows(positions, graph.src);
  const Tensor pj = gather_rows(positions, graph.dst);
  const Tensor d = pi - pj;
  const Tensor dev_p =
      rows_dot(d, d) - Tensor::constant({edges}, graph.canon_dist2);

  const Tensor qn = rows_normalize(rotations);
  const Tensor qd = rows_dot(gather_rows(qn, graph.src), gather_rows(qn, graph.dst));
  const Tensor dev_q = mul(sub(1.0, clamp01(abs(qd))), 8.0) -
                       Tensor::constant({edges}, graph.canon_qdist2);

  return dot(dev_p * dev_p, w_edge) + lambda_rot * dot(dev_q * dev_q, w_edge);
}

Tensor loss_prior_pull(const Tensor& rgb, const Image& gradient, double weight) {
  const Tensor g = image_constant(gradient, rgb.shape(), rgb.numel(), "loss_prior_pull");
  return mul(dot(rgb, g), weight);
}

}  // namespace gmjo::opt
