// SPDX-License-Identifier: Apache-2.0
#include "gmjo/splat/render.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "gmjo/diff/ops.hpp"
#include "gmjo/util.hpp"

namespace gmjo::splat {

using diff::Tensor;
using scene::Camera;
using scene::Projected;

namespace {

struct PerGaussian {
  Projected proj;
  double alpha0 = 0;
  double color[3] = {0, 0, 0};
  double raw_color[3] = {0, 0, 0};  // before the 0.5 offset clamp
  Eigen::Vector3d dir{0, 0, 1};     // unit view direction for sh
  double dir_norm = 1;
  double flow[2] = {0, 0};
  bool has_flow = false;
  Eigen::Vector3d t_next{0, 0, 0};
};

/// State the backward closure needs to replay the forward traversal.
struct Saved {
  RenderSettings s;
  Camera cam, next_cam;
  bool has_next = false;
  int width = 0, height = 0;
  std::vector<PerGaussian> pg;
  std::vector<int> labels;
  int sh_degree = 0;
  std::vector<int> tile_start;  // CSR over tiles, row-major tile order
  std::vector<int> tile_items;  // depth-ordered within each tile
  int tiles_x = 0, tiles_y = 0;
};

/// Front-to-back traversal of one pixel. The exact same instantiation drives
/// the tiled forward, the oracle, and the backward replay, so skip rules and
/// arithmetic agree to the bit.
struct Contribution {
  int gi;
  double a, gauss, t, dx, dy;
  bool clamped;
};

template <class Visit>
inline void walk_pixel(double px, double py, const int* idx, int n,
                       const std::vector<PerGaussian>& pg, const RenderSettings& s,
                       Visit&& visit) {
  double t = 1.0;
  for (int k = 0; k < n; ++k) {
    const PerGaussian& g = pg[std::size_t(idx[k])];
    const double dx = px - g.proj.u, dy = py - g.proj.v;
    const double m =
        g.proj.inv_a * dx * dx + 2.0 * g.proj.inv_b * dx * dy + g.proj.inv_c * dy * dy;
    if (!(m <= s.footprint_cut)) continue;
    const double gauss = std::exp(-0.5 * m);
    double a = g.alpha0 * gauss;
    const bool clamped = a > s.alpha_clamp;
    if (clamped) a = s.alpha_clamp;
    if (a < s.alpha_min) continue;
    visit(Contribution{idx[k], a, gauss, t, dx, dy, clamped});
    t *= (1.0 - a);
    if (t < s.transmittance_floor) break;
  }
}

struct Offsets {
  std::int64_t rgb, depth, alpha, inst, flow, total;
  int ch;  // instance channels
};

Offsets layout(int h, int w, int num_classes) {
  const std::int64_t hw = std::int64_t(h) * w;
  Offsets o;
  o.ch = num_classes + 1;
  o.rgb = 0;
  o.depth = hw * 3;
  o.alpha = o.depth + hw;
  o.inst = o.alpha + hw;
  o.flow = o.inst + hw * o.ch;
  o.total = o.flow + hw * 2;
  return o;
}

std::shared_ptr<Saved> prepare(const SceneBatch& batch, const Camera& cam,
                               const Camera* next_cam, const RenderSettings& s) {
  const int n = batch.size();
  check(n >= 0, "render: bad batch");
  check(int(batch.labels.size()) == n, "render: one label per gaussian required");
  for (int l : batch.labels)
    check(l >= 0 && l <= s.num_classes, "render: label ", l, " outside [0,", s.num_classes, "]");
  cam.validate("render camera");
  const bool has_next = batch.next_positions.defined();
  if (has_next) {
    check(next_cam != nullptr, "render: next positions given but no next camera");
    check(batch.next_positions.dim(0) == n, "render: next positions count mismatch");
    next_cam->validate("render next camera");
  }

  auto sv = std::make_shared<Saved>();
  sv->s = s;
  sv->cam = cam;
  sv->next_cam = has_next ? *next_cam : cam;
  sv->has_next = has_next;
  sv->width = cam.width;
  sv->height = cam.height;
  sv->labels = batch.labels;
  sv->sh_degree = batch.sh_degree;
  sv->pg.resize(std::size_t(n));

  const double* pos = batch.positions.val().data();
  const double* logs = batch.log_scales.val().data();
  const double* quat = batch.rotations.val().data();
  const double* logit = batch.opacity_logits.val().data();
  const double* sh = batch.sh.val().data();
  const int n_coeff = scene::sh_coeff_count(batch.sh_degree);
  const Eigen::Vector3d cam_center = cam.center();
  const scene::ProjectionSettings ps{s.lambda_lowpass, s.near};

  for (int i = 0; i < n; ++i) {
    PerGaussian& g = sv->pg[std::size_t(i)];
    g.proj = scene::project_gaussian(pos + i * 3, logs + i * 3, quat + i * 4, cam, ps);
    if (!g.proj.visible) continue;
    g.alpha0 = 1.0 / (1.0 + std::exp(-logit[i]));
    const Eigen::Vector3d p(pos[i * 3], pos[i * 3 + 1], pos[i * 3 + 2]);
    g.dir = p - cam_center;
    g.dir_norm = g.dir.norm();
    g.dir /= g.dir_norm;
    scene::eval_sh(batch.sh_degree, g.dir, sh + std::size_t(i) * n_coeff * 3, g.raw_color);
    for (int c = 0; c < 3; ++c) g.color[c] = std::clamp(0.5 + g.raw_color[c], 0.0, 1.0);
    if (has_next) {
      const double* np = batch.next_positions.val().data() + i * 3;
      g.t_next = sv->next_cam.to_camera({np[0], np[1], np[2]});
      if (g.t_next.z() > s.near) {
        const double iz = 1.0 / g.t_next.z();
        g.flow[0] = (sv->next_cam.fx * g.t_next.x() * iz + sv->next_cam.cx) - g.proj.u;
        g.flow[1] = (sv->next_cam.fy * g.t_next.y() * iz + sv->next_cam.cy) - g.proj.v;
        g.has_flow = true;
      }
    }
  }

  // Canonical depth order, ties broken by index.
  std::vector<int> order;
  order.reserve(std::size_t(n));
  for (int i = 0; i < n; ++i)
    if (sv->pg[std::size_t(i)].proj.visible) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double za = sv->pg[std::size_t(a)].proj.z, zb = sv->pg[std::size_t(b)].proj.z;
    return za < zb || (za == zb && a < b);
  });

  // Tile binning; appending in depth order keeps each list sorted.
  const int tile = s.tile;
  sv->tiles_x = (cam.width + tile - 1) / tile;
  sv->tiles_y = (cam.height + tile - 1) / tile;
  const int num_tiles = sv->tiles_x * sv->tiles_y;
  struct Span {
    int tx0, tx1, ty0, ty1;
    bool any;
  };
  std::vector<Span> spans(order.size());
  std::vector<int> counts(std::size_t(num_tiles), 0);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const PerGaussian& g = sv->pg[std::size_t(order[k])];
    const double r = g.proj.radius;
    Span sp{};
    sp.tx0 = std::max(0, int(std::floor((g.proj.u - r) / tile)));
    sp.tx1 = std::min(sv->tiles_x - 1, int(std::floor((g.proj.u + r) / tile)));
    sp.ty0 = std::max(0, int(std::floor((g.proj.v - r) / tile)));
    sp.ty1 = std::min(sv->tiles_y - 1, int(std::floor((g.proj.v + r) / tile)));
    sp.any = sp.tx0 <= sp.tx1 && sp.ty0 <= sp.ty1;
    spans[k] = sp;
    if (!sp.any) continue;
    for (int ty = sp.ty0; ty <= sp.ty1; ++ty)
      for (int tx = sp.tx0; tx <= sp.tx1; ++tx) ++counts[std::size_t(ty * sv->tiles_x + tx)];
  }
  sv->tile_start.assign(std::size_t(num_tiles) + 1, 0);
  for (int t = 0; t < num_tiles; ++t)
    sv->tile_start[std::size_t(t) + 1] = sv->tile_start[std::size_t(t)] + counts[std::size_t(t)];
  sv->tile_items.resize(std::size_t(sv->tile_start.back()));
  std::vector<int> cursor(sv->tile_start.begin(), sv->tile_start.end() - 1);
  for (std::size_t k = 0; k < order.size(); ++k) {
    const Span& sp = spans[k];
    if (!sp.any) continue;
    for (int ty = sp.ty0; ty <= sp.ty1; ++ty)
      for (int tx = sp.tx0; tx <= sp.tx1; ++tx)
        sv->tile_items[std::size_t(cursor[std::size_t(ty * sv->tiles_x + tx)]++)] = order[k];
  }
  return sv;
}

void forward_pass(const Saved& sv, std::vector<double>& out) {
  const RenderSettings& s = sv.s;
  const Offsets off = layout(sv.height, sv.width, s.num_classes);
  out.assign(std::size_t(off.total), 0.0);
  for (int ty = 0; ty < sv.tiles_y; ++ty) {
    for (int tx = 0; tx < sv.tiles_x; ++tx) {
      const int t0 = sv.tile_start[std::size_t(ty * sv.tiles_x + tx)];
      const int t1 = sv.tile_start[std::size_t(ty * sv.tiles_x + tx) + 1];
      const int* items = sv.tile_items.data() + t0;
      const int count = t1 - t0;
      const int y1 = std::min((ty + 1) * s.tile, sv.height);
      const int x1 = std::min((tx + 1) * s.tile, sv.width);
      for (int y = ty * s.tile; y < y1; ++y) {
        for (int x = tx * s.tile; x < x1; ++x) {
          const std::int64_t pix = std::int64_t(y) * sv.width + x;
          double rgb[3] = {0, 0, 0}, depth_sum = 0, alpha_sum = 0, flow_sum[2] = {0, 0};
          double* inst = out.data() + off.inst + pix * off.ch;
          walk_pixel(x + 0.5, y + 0.5, items, count, sv.pg, s, [&](const Contribution& c) {
            const PerGaussian& g = sv.pg[std::size_t(c.gi)];
            const double w = c.a * c.t;
            rgb[0] += w * g.color[0];
            rgb[1] += w * g.color[1];
            rgb[2] += w * g.color[2];
            depth_sum += w * g.proj.z;
            alpha_sum += w;
            inst[sv.labels[std::size_t(c.gi)]] += w;
            if (g.has_flow) {
              flow_sum[0] += w * g.flow[0];
              flow_sum[1] += w * g.flow[1];
            }
          });
          const double denom = std::max(alpha_sum, s.eps_alpha);
          for (int c = 0; c < 3; ++c) out[std::size_t(off.rgb + pix * 3 + c)] = rgb[c];
          out[std::size_t(off.depth + pix)] = depth_sum / denom;
          out[std::size_t(off.alpha + pix)] = alpha_sum;
          inst[s.num_classes] += 1.0 - alpha_sum;
          out[std::size_t(off.flow + pix * 2)] = flow_sum[0] / denom;
          out[std::size_t(off.flow + pix * 2 + 1)] = flow_sum[1] / denom;
        }
      }
    }
  }
}

// d(quaternion rotation matrix)/d(component), times 2 folded in.
void quat_matrix_grads(const double* q, Eigen::Matrix3d dr[4]) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  dr[0] << 0, -z, y, z, 0, -x, -y, x, 0;
  dr[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
  dr[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
  dr[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
  for (int k = 0; k < 4; ++k) dr[k] *= 2.0;
}

void backward_pass(const Saved& sv, const SceneBatch& batch, const std::vector<double>& grad) {
  const RenderSettings& s = sv.s;
  const int n = int(sv.pg.size());
  const Offsets off = layout(sv.height, sv.width, s.num_classes);

  // Stage 1: per-pixel replay accumulating per-gaussian screen-space grads.
  std::vector<double> du(std::size_t(n) * 2, 0.0), dz(std::size_t(n), 0.0),
      dinv(std::size_t(n) * 3, 0.0), dalpha0(std::size_t(n), 0.0),
      dcolor(std::size_t(n) * 3, 0.0), dflow(std::size_t(n) * 2, 0.0);
  std::vector<Contribution> contribs;
  contribs.reserve(256);

  for (int ty = 0; ty < sv.tiles_y; ++ty) {
    for (int tx = 0; tx < sv.tiles_x; ++tx) {
      const int t0 = sv.tile_start[std::size_t(ty * sv.tiles_x + tx)];
      const int t1 = sv.tile_start[std::size_t(ty * sv.tiles_x + tx) + 1];
      const int* items = sv.tile_items.data() + t0;
      const int count = t1 - t0;
      const int y1 = std::min((ty + 1) * s.tile, sv.height);
      const int x1 = std::min((tx + 1) * s.tile, sv.width);
      for (int y = ty * s.tile; y < y1; ++y) {
        for (int x = tx * s.tile; x < x1; ++x) {
          const std::int64_t pix = std::int64_t(y) * sv.width + x;
          contribs.clear();
          double asum = 0, dsum = 0, fsum[2] = {0, 0};
          walk_pixel(x + 0.5, y + 0.5, items, count, sv.pg, s, [&](const Contribution& c) {
            contribs.push_back(c);
            const PerGaussian& g = sv.pg[std::size_t(c.gi)];
            const double w = c.a * c.t;
            asum += w;
            dsum += w * g.proj.z;
            if (g.has_flow) {
              fsum[0] += w * g.flow[0];
              fsum[1] += w * g.flow[1];
            }
          });
          if (contribs.empty()) continue;

          const double* g_rgb = grad.data() + off.rgb + pix * 3;
          const double g_depth = grad[std::size_t(off.depth + pix)];
          const double g_alpha = grad[std::size_t(off.alpha + pix)];
          const double* g_inst = grad.data() + off.inst + pix * off.ch;
          const double* g_flow = grad.data() + off.flow + pix * 2;

          const double denom = std::max(asum, s.eps_alpha);
          const double d_dsum = g_depth / denom;
          const double d_fsum[2] = {g_flow[0] / denom, g_flow[1] / denom};
          double d_asum = g_alpha - g_inst[s.num_classes];
          if (asum > s.eps_alpha) {
            d_asum -= (g_depth * dsum + g_flow[0] * fsum[0] + g_flow[1] * fsum[1]) / (asum * asum);
          }

          double suffix = 0;  // sum over later contributions of a*t*c
          for (std::size_t k = contribs.size(); k-- > 0;) {
            const Contribution& c = contribs[k];
            const PerGaussian& g = sv.pg[std::size_t(c.gi)];
            double ci = d_asum + g_inst[sv.labels[std::size_t(c.gi)]];
            ci += g_rgb[0] * g.color[0] + g_rgb[1] * g.color[1] + g_rgb[2] * g.color[2];
            ci += d_dsum * g.proj.z;
            if (g.has_flow) ci += d_fsum[0] * g.flow[0] + d_fsum[1] * g.flow[1];

            const double da = c.t * ci - suffix / (1.0 - c.a);
            suffix += c.a * c.t * ci;

            const double w = c.a * c.t;
            dcolor[std::size_t(c.gi) * 3] += w * g_rgb[0];
            dcolor[std::size_t(c.gi) * 3 + 1] += w * g_rgb[1];
            dcolor[std::size_t(c.gi) * 3 + 2] += w * g_rgb[2];
            dz[std::size_t(c.gi)] += w * d_dsum;
            if (g.has_flow) {
              dflow[std::size_t(c.gi) * 2] += w * d_fsum[0];
              dflow[std::size_t(c.gi) * 2 + 1] += w * d_fsum[1];
            }
            if (c.clamped) continue;  // flat side of min(alpha_clamp, .)
            dalpha0[std::size_t(c.gi)] += c.gauss * da;
            const double dgauss = g.alpha0 * da;
            const double dm = -0.5 * c.gauss * dgauss;
            dinv[std::size_t(c.gi) * 3] += dm * c.dx * c.dx;
            dinv[std::size_t(c.gi) * 3 + 1] += dm * 2.0 * c.dx * c.dy;
            dinv[std::size_t(c.gi) * 3 + 2] += dm * c.dy * c.dy;
            const double ddx = dm * (2.0 * g.proj.inv_a * c.dx + 2.0 * g.proj.inv_b * c.dy);
            const double ddy = dm * (2.0 * g.proj.inv_b * c.dx + 2.0 * g.proj.inv_c * c.dy);
            du[std::size_t(c.gi) * 2] -= ddx;
            du[std::size_t(c.gi) * 2 + 1] -= ddy;
          }
        }
      }
    }
  }

  // Stage 2: per-gaussian chain through projection, covariance, sh, opacity.
  const double* logs = batch.log_scales.val().data();
  const double* quat = batch.rotations.val().data();
  const double* sh = batch.sh.val().data();
  const int n_coeff = scene::sh_coeff_count(sv.sh_degree);

  double* gpos = batch.positions.tracked() ? batch.positions.grad().data() : nullptr;
  double* glogs = batch.log_scales.tracked() ? batch.log_scales.grad().data() : nullptr;
  double* gquat = batch.rotations.tracked() ? batch.rotations.grad().data() : nullptr;
  double* glogit = batch.opacity_logits.tracked() ? batch.opacity_logits.grad().data() : nullptr;
  double* gsh = batch.sh.tracked() ? batch.sh.grad().data() : nullptr;
  double* gnext = (sv.has_next && batch.next_positions.tracked())
                      ? batch.next_positions.grad().data()
                      : nullptr;

  const Eigen::Matrix3d w_rot = sv.cam.rotation();

  for (int i = 0; i < n; ++i) {
    const PerGaussian& g = sv.pg[std::size_t(i)];
    if (!g.proj.visible) continue;

    Eigen::Vector3d dmu = Eigen::Vector3d::Zero();  // world-space position grad
    Eigen::Vector3d dt = Eigen::Vector3d::Zero();   // camera-space mean grad

    // Flow ties this projection to the next one: flow = u_next - u.
    double du_x = du[std::size_t(i) * 2], du_y = du[std::size_t(i) * 2 + 1];
    if (g.has_flow) {
      const double dfx = dflow[std::size_t(i) * 2], dfy = dflow[std::size_t(i) * 2 + 1];
      du_x -= dfx;
      du_y -= dfy;
      if (gnext) {
        const Camera& nc = sv.next_cam;
        const double izn = 1.0 / g.t_next.z();
        Eigen::Vector3d dtn;
        dtn.x() = dfx * nc.fx * izn;
        dtn.y() = dfy * nc.fy * izn;
        dtn.z() = -dfx * nc.fx * g.t_next.x() * izn * izn - dfy * nc.fy * g.t_next.y() * izn * izn;
        const Eigen::Vector3d dnp = nc.rotation().transpose() * dtn;
        for (int c = 0; c < 3; ++c) gnext[std::size_t(i) * 3 + c] += dnp[c];
      }
    }

    // Mean projection path.
    const double iz = 1.0 / g.proj.z;
    dt.x() += du_x * sv.cam.fx * iz;
    dt.y() += du_y * sv.cam.fy * iz;
    dt.z() += -du_x * sv.cam.fx * g.proj.t.x() * iz * iz -
              du_y * sv.cam.fy * g.proj.t.y() * iz * iz;
    dt.z() += dz[std::size_t(i)];

    // Covariance path.
    const double dia = dinv[std::size_t(i) * 3], dib = dinv[std::size_t(i) * 3 + 1],
                 dic = dinv[std::size_t(i) * 3 + 2];
    if (dia != 0 || dib != 0 || dic != 0) {
      Eigen::Matrix2d ginv;
      ginv << dia, 0.5 * dib, 0.5 * dib, dic;
      Eigen::Matrix2d y;
      y << g.proj.inv_a, g.proj.inv_b, g.proj.inv_b, g.proj.inv_c;
      const Eigen::Matrix2d g2 = -y * ginv * y;  // d(loss)/d(screen covariance), full matrix

      Eigen::Matrix<double, 2, 3> j;
      j << sv.cam.fx * iz, 0, -sv.cam.fx * g.proj.t.x() * iz * iz,
           0, sv.cam.fy * iz, -sv.cam.fy * g.proj.t.y() * iz * iz;

      const Eigen::Matrix3d sigma3 = scene::build_covariance(quat + i * 4, logs + i * 3);
      const Eigen::Matrix3d sigma_cam = w_rot * sigma3 * w_rot.transpose();

      const Eigen::Matrix3d g_sigma_cam = j.transpose() * g2 * j;
      const Eigen::Matrix<double, 2, 3> dj = 2.0 * g2 * j * sigma_cam;

      // J depends on the camera-space mean.
      dt.x() += dj(0, 2) * (-sv.cam.fx * iz * iz);
      dt.y() += dj(1, 2) * (-sv.cam.fy * iz * iz);
      dt.z() += dj(0, 0) * (-sv.cam.fx * iz * iz) + dj(1, 1) * (-sv.cam.fy * iz * iz) +
                dj(0, 2) * (2.0 * sv.cam.fx * g.proj.t.x() * iz * iz * iz) +
                dj(1, 2) * (2.0 * sv.cam.fy * g.proj.t.y() * iz * iz * iz);

      const Eigen::Matrix3d g3 = w_rot.transpose() * g_sigma_cam * w_rot;

      // Sigma3 = M S M^T with M = R(q/|q|), S = diag(exp(2*log_s)).
      double qn2 = 0;
      for (int k = 0; k < 4; ++k) qn2 += quat[i * 4 + k] * quat[i * 4 + k];
      const double qinv = 1.0 / std::sqrt(qn2);
      double qh[4];
      for (int k = 0; k < 4; ++k) qh[k] = quat[i * 4 + k] * qinv;
      const Eigen::Matrix3d m = scene::quat_to_matrix(qh);
      Eigen::Vector3d s2;
      for (int k = 0; k < 3; ++k) s2[k] = std::exp(2.0 * logs[i * 3 + k]);

      const Eigen::Matrix3d dm = 2.0 * g3 * m * s2.asDiagonal();
      if (glogs) {
        const Eigen::Matrix3d mtgm = m.transpose() * g3 * m;
        for (int k = 0; k < 3; ++k)
          glogs[std::size_t(i) * 3 + k] += 2.0 * s2[k] * mtgm(k, k);
      }
      if (gquat) {
        Eigen::Matrix3d dr[4];
        quat_matrix_grads(qh, dr);
        double dqh[4];
        for (int k = 0; k < 4; ++k) dqh[k] = (dm.array() * dr[k].array()).sum();
        double dot = 0;
        for (int k = 0; k < 4; ++k) dot += dqh[k] * qh[k];
        for (int k = 0; k < 4; ++k)
          gquat[std::size_t(i) * 4 + k] += (dqh[k] - qh[k] * dot) * qinv;
      }
    }

    dmu += w_rot.transpose() * dt;

    // Color path: clamp gate, then sh basis and view direction.
    double d_rgb[3];
    bool any_color = false;
    for (int c = 0; c < 3; ++c) {
      const double raw = 0.5 + g.raw_color[c];
      d_rgb[c] = (raw > 0.0 && raw < 1.0) ? dcolor[std::size_t(i) * 3 + c] : 0.0;
      any_color = any_color || d_rgb[c] != 0.0;
    }
    if (any_color && (gsh || gpos)) {
      std::vector<double> dcoeff(std::size_t(n_coeff) * 3, 0.0);
      const Eigen::Vector3d ddir = scene::eval_sh_backward(
          sv.sh_degree, g.dir, sh + std::size_t(i) * n_coeff * 3, d_rgb, dcoeff.data());
      if (gsh)
        for (std::size_t k = 0; k < dcoeff.size(); ++k)
          gsh[std::size_t(i) * n_coeff * 3 + k] += dcoeff[k];
      if (sv.sh_degree > 0) {
        dmu += (ddir - g.dir * g.dir.dot(ddir)) / g.dir_norm;
      }
    }

    if (glogit) glogit[std::size_t(i)] += g.alpha0 * (1.0 - g.alpha0) * dalpha0[std::size_t(i)];
    if (gpos)
      for (int c = 0; c < 3; ++c) gpos[std::size_t(i) * 3 + c] += dmu[c];
  }
}

}  // namespace

SceneBatch concat_sets(const std::vector<scene::GaussianSet>& sets,
                       const std::vector<diff::Tensor>& next) {
  check(!sets.empty(), "concat_sets: no sets");
  check(next.empty() || next.size() == sets.size(),
        "concat_sets: next positions must cover all sets or none");
  SceneBatch b;
  b.sh_degree = sets[0].sh_degree;
  std::vector<Tensor> pos, ls, rot, op, sh, np;
  int total = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    const auto& s = sets[i];
    check(s.sh_degree == b.sh_degree, "concat_sets: mixed sh degrees");
    pos.push_back(s.positions);
    ls.push_back(s.log_scales);
    rot.push_back(s.rotations);
    op.push_back(s.opacity_logits);
    sh.push_back(s.sh);
    if (!next.empty()) {
      check(next[i].defined() && next[i].numel() == s.positions.numel(),
            "concat_sets: next positions shape mismatch for set ", i);
      np.push_back(next[i]);
    }
    for (int k = 0; k < s.size(); ++k) b.labels.push_back(s.label);
    total += s.size();
  }
  const int n_coeff = scene::sh_coeff_count(b.sh_degree);
  b.positions = diff::concat_flat(pos, {total, 3});
  b.log_scales = diff::concat_flat(ls, {total, 3});
  b.rotations = diff::concat_flat(rot, {total, 4});
  b.opacity_logits = diff::concat_flat(op, {total});
  b.sh = diff::concat_flat(sh, {total, n_coeff * 3});
  if (!np.empty()) b.next_positions = diff::concat_flat(np, {total, 3});
  return b;
}

RenderOutput render(const SceneBatch& batch, const Camera& cam, const Camera* next_cam,
                    const RenderSettings& settings) {
  auto sv = prepare(batch, cam, next_cam, settings);
  std::vector<double> out;
  forward_pass(*sv, out);

  std::vector<Tensor> parents{batch.positions, batch.log_scales, batch.rotations,
                              batch.opacity_logits, batch.sh};
  if (sv->has_next) parents.push_back(batch.next_positions);
  SceneBatch inputs = batch;  // tensor handles share storage with the parents
  const Offsets off = layout(sv->height, sv->width, settings.num_classes);
  Tensor node = diff::make_op("render", {int(off.total)}, parents, std::move(out),
                              [sv, inputs](diff::Node& self) {
                                backward_pass(*sv, inputs, self.grad);
                              });

  RenderOutput ro;
  const int h = sv->height, w = sv->width;
  ro.rgb = diff::slice_flat(node, off.rgb, {h, w, 3});
  ro.depth = diff::slice_flat(node, off.depth, {h, w});
  ro.alpha = diff::slice_flat(node, off.alpha, {h, w});
  ro.instance = diff::slice_flat(node, off.inst, {h, w, off.ch});
  ro.flow = diff::slice_flat(node, off.flow, {h, w, 2});
  return ro;
}

OraclePixel composite_pixel_oracle(int px, int py, const SceneBatch& batch, const Camera& cam,
                                   const Camera* next_cam, const RenderSettings& settings) {
  auto sv = prepare(batch, cam, next_cam, settings);
  // Full depth-ordered list, no tiling.
  std::vector<int> order;
  for (int i = 0; i < batch.size(); ++i)
    if (sv->pg[std::size_t(i)].proj.visible) order.push_back(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double za = sv->pg[std::size_t(a)].proj.z, zb = sv->pg[std::size_t(b)].proj.z;
    return za < zb || (za == zb && a < b);
  });

  OraclePixel o;
  o.instance.assign(std::size_t(settings.num_classes) + 1, 0.0);
  double depth_sum = 0, flow_sum[2] = {0, 0};
  walk_pixel(px + 0.5, py + 0.5, order.data(), int(order.size()), sv->pg, settings,
             [&](const Contribution& c) {
               const PerGaussian& g = sv->pg[std::size_t(c.gi)];
               const double w = c.a * c.t;
               o.rgb[0] += w * g.color[0];
               o.rgb[1] += w * g.color[1];
               o.rgb[2] += w * g.color[2];
               depth_sum += w * g.proj.z;
               o.alpha += w;
               o.instance[std::size_t(sv->labels[std::size_t(c.gi)])] += w;
               if (g.has_flow) {
                 flow_sum[0] += w * g.flow[0];
                 flow_sum[1] += w * g.flow[1];
               }
             });
  const double denom = std::max(o.alpha, settings.eps_alpha);
  o.depth = depth_sum / denom;
  o.instance[std::size_t(settings.num_classes)] += 1.0 - o.alpha;
  o.flow[0] = flow_sum[0] / denom;
  o.flow[1] = flow_sum[1] / denom;
  return o;
}

namespace {

Image channels_to_image(const Tensor& t, int h, int w, int c) {
  Image img(h, w, c);
  img.data = t.val();
  return img;
}

}  // namespace

Image RenderOutput::rgb_image() const { return channels_to_image(rgb, rgb.dim(0), rgb.dim(1), 3); }
Image RenderOutput::depth_image() const {
  return channels_to_image(depth, depth.dim(0), depth.dim(1), 1);
}
Image RenderOutput::alpha_image() const {
  return channels_to_image(alpha, alpha.dim(0), alpha.dim(1), 1);
}
Image RenderOutput::instance_image() const {
  return channels_to_image(instance, instance.dim(0), instance.dim(1), instance.dim(2));
}
Image RenderOutput::flow_image() const {
  return channels_to_image(flow, flow.dim(0), flow.dim(1), 2);
}

std::vector<Image> render_view_protocol(const scene::GaussianData& set, const Camera& base_cam,
                                        const std::vector<std::pair<double, double>>& angles,
                                        const RenderSettings& settings) {
  scene::GaussianData centered = set;
  const Eigen::Vector3d offset = scene::recenter_median(centered);
  Camera base = base_cam;
  // Keep the camera-object geometry: shift the camera with the set.
  Eigen::Matrix4d shift = Eigen::Matrix4d::Identity();
  shift.topRightCorner<3, 1>() = offset;
  base.world_to_cam = base.world_to_cam * shift;

  scene::GaussianSet gs = scene::GaussianSet::from_data(centered, false);
  SceneBatch batch = concat_sets({gs});
  RenderSettings rs = settings;
  rs.num_classes = 1;
  std::vector<Image> views;
  RenderOutput front = render(batch, base, nullptr, rs);
  views.push_back(front.rgb_image());
  for (const auto& [az, el] : angles) {
    const Camera cam = scene::orbit_camera(base, Eigen::Vector3d::Zero(), az, el);
    RenderOutput out = render(batch, cam, nullptr, rs);
    views.push_back(out.rgb_image());
  }
  return views;
}

}  // namespace gmjo::splat
