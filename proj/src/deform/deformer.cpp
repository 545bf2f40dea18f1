// SPDX-License-Identifier: Apache-2.0
#include "gmjo/deform/deformer.hpp"

#include <cmath>
#include <sstream>

#include "gmjo/diff/ops.hpp"
#include "gmjo/io.hpp"

namespace gmjo::deform {

using diff::Tensor;

Mlp Mlp::create(int in, int hidden, int out, Rng& rng) {
  auto dense = [&](int r, int c, double scale) {
    std::vector<double> v(std::size_t(r) * c);
    for (auto& x : v) x = rng.normal(0.0, scale);
    return Tensor::leaf({r, c}, std::move(v), true);
  };
  Mlp m;
  m.w0 = dense(in, hidden, 1.0 / std::sqrt(double(in)));
  m.b0 = Tensor::zeros({hidden}, true);
  m.w1 = dense(hidden, hidden, 1.0 / std::sqrt(double(hidden)));
  m.b1 = Tensor::zeros({hidden}, true);
  m.w2 = Tensor::zeros({hidden, out}, true);
  m.b2 = Tensor::zeros({out}, true);
  return m;
}

Tensor Mlp::forward(const Tensor& x) const {
  Tensor h = diff::tanh(diff::add_rowvec(diff::matmul(x, w0), b0));
  h = diff::tanh(diff::add_rowvec(diff::matmul(h, w1), b1));
  return diff::add_rowvec(diff::matmul(h, w2), b2);
}

void Mlp::collect(std::vector<Tensor>& out) const {
  for (const Tensor& t : {w0, b0, w1, b1, w2, b2}) out.push_back(t);
}

namespace {

// Column picker [in, out]: y[i] = x[offset + i]; needs offset + out <= in.
Tensor pick_cols(int in, int offset, int out) {
  check(offset + out <= in, "pick_cols: slice outside row");
  std::vector<double> v(std::size_t(in) * out, 0.0);
  for (int i = 0; i < out; ++i) v[std::size_t(offset + i) * out + i] = 1.0;
  return Tensor::constant({in, out}, std::move(v));
}

// Column placer [in, out]: y[offset + i] = x[i], zeros elsewhere.
Tensor place_cols(int in, int offset, int out) {
  check(offset + in <= out, "place_cols: slice outside row");
  std::vector<double> v(std::size_t(in) * out, 0.0);
  for (int i = 0; i < in; ++i) v[std::size_t(i) * out + offset + i] = 1.0;
  return Tensor::constant({in, out}, std::move(v));
}

}  // namespace

Deformer::Deformer(const DeformerConfig& cfg, int frames, const Eigen::Vector3d& bbox_min,
                   const Eigen::Vector3d& bbox_max, Rng& rng)
    : cfg_(cfg), frames_(frames), bbox_min_(bbox_min), bbox_max_(bbox_max) {
  check(frames >= 1, "deformer: needs at least one frame");
  check(cfg.spatial_res >= 2 && cfg.features >= 1 && cfg.hidden >= 1 && cfg.num_bases >= 1,
        "deformer: bad config");
  for (int a = 0; a < 3; ++a)
    check(bbox_max[a] > bbox_min[a], "deformer: degenerate bounding box on axis ", a);
  temporal_res_ = std::max(2, int(std::ceil(cfg.temporal_fraction * frames)));

  const int rs = cfg.spatial_res, rt = temporal_res_, f = cfg.features;
  for (int p = 0; p < 3; ++p) planes_[p] = Tensor::full({rs, rs, f}, 1.0, true);
  for (int p = 3; p < 6; ++p) planes_[p] = Tensor::full({rt, rs, f}, 1.0, true);

  bases_ = Tensor::zeros({std::max(1, frames - 1), cfg.num_bases * 3}, true);
  weight_head_ = Mlp::create(f, cfg.hidden, cfg.num_bases, rng);
  motion_head_ = Mlp::create(f, cfg.hidden, 7, rng);
  sh_head_ = Mlp::create(f, cfg.hidden, 3, rng);
}

Tensor Deformer::sample_plane(int which, const std::vector<double>& rowcol) const {
  return diff::bilinear_sample(planes_[which], rowcol);
}

Deformer::Eval Deformer::prepare(const scene::GaussianSet& canonical) const {
  Eval ev;
  ev.n = canonical.size();
  check(ev.n > 0, "deformer: empty canonical set");
  const auto& pos = canonical.positions.val();
  ev.coords.resize(std::size_t(ev.n) * 3);
  for (int i = 0; i < ev.n; ++i)
    for (int a = 0; a < 3; ++a) {
      const double t = (pos[std::size_t(i) * 3 + a] - bbox_min_[a]) / (bbox_max_[a] - bbox_min_[a]);
      ev.coords[std::size_t(i) * 3 + a] = std::clamp(t, 0.0, 1.0);
    }

  const double smax = cfg_.spatial_res - 1;
  auto spatial_pair = [&](int a, int b) {
    std::vector<double> rc(std::size_t(ev.n) * 2);
    for (int i = 0; i < ev.n; ++i) {
      rc[std::size_t(i) * 2] = ev.coords[std::size_t(i) * 3 + b] * smax;      // row
      rc[std::size_t(i) * 2 + 1] = ev.coords[std::size_t(i) * 3 + a] * smax;  // col
    }
    return rc;
  };
  Tensor s_xy = sample_plane(0, spatial_pair(0, 1));
  Tensor s_xz = sample_plane(1, spatial_pair(0, 2));
  Tensor s_yz = sample_plane(2, spatial_pair(1, 2));
  ev.feat_spatial = diff::mul(diff::mul(s_xy, s_xz), s_yz);
  ev.basis_weights = diff::softmax_rows(weight_head_.forward(ev.feat_spatial));
  Tensor st0 = spatio_temporal(ev, 0);
  ev.motion0 = motion_head_.forward(st0);
  ev.sh0 = sh_head_.forward(st0);
  return ev;
}

Tensor Deformer::spatio_temporal(const Eval& ev, int t) const {
  const double trow = frames_ > 1
                          ? double(t) / double(frames_ - 1) * double(temporal_res_ - 1)
                          : 0.0;
  const double smax = cfg_.spatial_res - 1;
  Tensor feat = ev.feat_spatial;
  for (int a = 0; a < 3; ++a) {
    std::vector<double> rc(std::size_t(ev.n) * 2);
    for (int i = 0; i < ev.n; ++i) {
      rc[std::size_t(i) * 2] = trow;
      rc[std::size_t(i) * 2 + 1] = ev.coords[std::size_t(i) * 3 + a] * smax;
    }
    feat = diff::mul(feat, sample_plane(3 + a, rc));
  }
  return feat;
}

scene::GaussianSet Deformer::deform(const scene::GaussianSet& canonical, const Eval& ev,
                                    int t) const {
  check(t >= 0 && t < frames_, "deformer: frame ", t, " outside [0,", frames_, ")");
  check(canonical.size() == ev.n, "deformer: eval built for a different set");

  // Translation: blend of per-frame bases; frame zero is pinned to zero.
  Tensor basis_t;
  if (t == 0) {
    basis_t = Tensor::constant({cfg_.num_bases, 3},
                               std::vector<double>(std::size_t(cfg_.num_bases) * 3, 0.0));
  } else {
    basis_t = diff::reshape(diff::gather_rows(bases_, {t - 1}), {cfg_.num_bases, 3});
  }
  Tensor dpos = diff::matmul(ev.basis_weights, basis_t);

  // Rotation, scale, color: calibrated head deltas.
  Tensor st = spatio_temporal(ev, t);
  Tensor motion = diff::sub(motion_head_.forward(st), ev.motion0);
  Tensor dsh = diff::sub(sh_head_.forward(st), ev.sh0);

  Tensor dq_raw = diff::matmul(motion, pick_cols(7, 0, 4));
  Tensor dls = diff::matmul(motion, pick_cols(7, 4, 3));
  Tensor dq = diff::rows_normalize(
      diff::add_rowvec(dq_raw, Tensor::constant({4}, {1, 0, 0, 0})));

  scene::GaussianSet out;
  out.sh_degree = canonical.sh_degree;
  out.label = canonical.label;
  out.positions = diff::add(canonical.positions, dpos);
  out.log_scales = diff::add(canonical.log_scales, dls);
  out.rotations = diff::qmul_rows(dq, canonical.rotations);
  out.opacity_logits = canonical.opacity_logits;
  const int width = canonical.sh.row_width();
  out.sh = diff::add(canonical.sh, diff::matmul(dsh, place_cols(3, 0, width)));
  return out;
}

scene::GaussianSet Deformer::deform(const scene::GaussianSet& canonical, int t) const {
  return deform(canonical, prepare(canonical), t);
}

std::vector<Tensor> Deformer::plane_params() const {
  return {planes_[0], planes_[1], planes_[2], planes_[3], planes_[4], planes_[5]};
}

std::vector<Tensor> Deformer::head_params() const {
  std::vector<Tensor> out;
  out.push_back(bases_);
  weight_head_.collect(out);
  motion_head_.collect(out);
  sh_head_.collect(out);
  return out;
}

namespace {

constexpr std::uint32_t kMagic = 0x46444d47;  // "GMDF"

void put_tensor(std::ostream& os, const Tensor& t) {
  write_pod(os, std::uint32_t(t.shape().size()));
  for (int d : t.shape()) write_pod(os, std::int32_t(d));
  write_array(os, t.val());
}

Tensor get_tensor(std::istream& is, bool requires_grad) {
  const auto rank = read_pod<std::uint32_t>(is, "deformer tensor rank");
  check(rank <= 4, "deformer blob: implausible tensor rank");
  std::vector<int> shape;
  std::int64_t numel = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape.push_back(read_pod<std::int32_t>(is, "deformer tensor dim"));
    numel *= shape.back();
  }
  check(numel > 0 && numel < (1 << 28), "deformer blob: implausible tensor size");
  std::vector<double> vals = read_array<double>(is, std::size_t(numel), "deformer tensor data");
  return Tensor::leaf(std::move(shape), std::move(vals), requires_grad);
}

}  // namespace

std::vector<std::uint8_t> Deformer::serialize() const {
  std::ostringstream os(std::ios::binary);
  write_pod(os, kMagic);
  write_pod(os, std::uint32_t(1));
  write_pod(os, std::int32_t(cfg_.spatial_res));
  write_pod(os, cfg_.temporal_fraction);
  write_pod(os, std::int32_t(cfg_.features));
  write_pod(os, std::int32_t(cfg_.hidden));
  write_pod(os, std::int32_t(cfg_.num_bases));
  write_pod(os, std::int32_t(frames_));
  write_pod(os, std::int32_t(temporal_res_));
  for (int a = 0; a < 3; ++a) write_pod(os, bbox_min_[a]);
  for (int a = 0; a < 3; ++a) write_pod(os, bbox_max_[a]);
  for (const Tensor& p : planes_) put_tensor(os, p);
  put_tensor(os, bases_);
  for (const Mlp* m : {&weight_head_, &motion_head_, &sh_head_}) {
    std::vector<Tensor> ps;
    m->collect(ps);
    for (const Tensor& t : ps) put_tensor(os, t);
  }
  const std::string s = os.str();
  return {s.begin(), s.end()};
}

Deformer Deformer::deserialize(const std::vector<std::uint8_t>& blob) {
  std::istringstream is(std::string(blob.begin(), blob.end()), std::ios::binary);
  check(read_pod<std::uint32_t>(is, "deformer magic") == kMagic, "deformer blob: bad magic");
  check(read_pod<std::uint32_t>(is, "deformer version") == 1,
        "deformer blob: unsupported version");
  Deformer d;
  d.cfg_.spatial_res = read_pod<std::int32_t>(is, "deformer spatial res");
  d.cfg_.temporal_fraction = read_pod<double>(is, "deformer temporal fraction");
  d.cfg_.features = read_pod<std::int32_t>(is, "deformer features");
  d.cfg_.hidden = read_pod<std::int32_t>(is, "deformer hidden");
  d.cfg_.num_bases = read_pod<std::int32_t>(is, "deformer bases");
  d.frames_ = read_pod<std::int32_t>(is, "deformer frames");
  d.temporal_res_ = read_pod<std::int32_t>(is, "deformer temporal res");
  for (int a = 0; a < 3; ++a) d.bbox_min_[a] = read_pod<double>(is, "deformer bbox");
  for (int a = 0; a < 3; ++a) d.bbox_max_[a] = read_pod<double>(is, "deformer bbox");
  for (Tensor& p : d.planes_) p = get_tensor(is, true);
  d.bases_ = get_tensor(is, true);
  for (Mlp* m : {&d.weight_head_, &d.motion_head_, &d.sh_head_}) {
    m->w0 = get_tensor(is, true);
    m->b0 = get_tensor(is, true);
    m->w1 = get_tensor(is, true);
    m->b1 = get_tensor(is, true);
    m->w2 = get_tensor(is, true);
    m->b2 = get_tensor(is, true);
  }
  return d;
}

}  // namespace gmjo::deform
