// SPDX-License-Identifier: Apache-2.0
#include "gmjo/bench/synth.hpp"

#include <cmath>
#include <limits>

#include "gmjo/util.hpp"

namespace gmjo::bench {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTauMin = 1e-9;

struct Pose {
  Eigen::Matrix3d rot;
  Eigen::Vector3d trans;
};

std::vector<Pose> poses_at(const SynthConfig& cfg, int frame) {
  std::vector<Pose> out(cfg.objects.size());
  for (std::size_t k = 0; k < cfg.objects.size(); ++k)
    object_pose(cfg.objects[k], frame, cfg.frames, out[k].rot, out[k].trans);
  return out;
}

/// Object-frame intersection; returns the ray parameter or +inf on a miss.
double intersect_object(const SynthObject& obj, const Eigen::Vector3d& ro,
                        const Eigen::Vector3d& rd) {
  const double inf = std::numeric_limits<double>::infinity();
  if (obj.shape == Shape::Box) {
    double tn = -inf, tf = inf;
    for (int a = 0; a < 3; ++a) {
      if (std::abs(rd[a]) < 1e-12) {
        if (std::abs(ro[a]) > obj.half[a]) return inf;
        continue;
      }
      double t0 = (-obj.half[a] - ro[a]) / rd[a];
      double t1 = (obj.half[a] - ro[a]) / rd[a];
      if (t0 > t1) std::swap(t0, t1);
      tn = std::max(tn, t0);
      tf = std::min(tf, t1);
    }
    return (tn <= tf && tn > kTauMin) ? tn : inf;
  }
  const Eigen::Vector3d o = ro.cwiseQuotient(obj.half);
  const Eigen::Vector3d d = rd.cwiseQuotient(obj.half);
  const double a = d.squaredNorm();
  const double b = o.dot(d);
  const double c = o.squaredNorm() - 1.0;
  const double disc = b * b - a * c;
  if (disc < 0) return inf;
  const double tau = (-b - std::sqrt(disc)) / a;
  return tau > kTauMin ? tau : inf;
}

SurfaceHit trace(const SynthConfig& cfg, const std::vector<Pose>& poses, double u, double v) {
  const double cx = cfg.width / 2.0, cy = cfg.height / 2.0;
  const Eigen::Vector3d dir =
      Eigen::Vector3d((u - cx) / cfg.focal, (v - cy) / cfg.focal, 1.0).normalized();

  SurfaceHit hit;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < cfg.objects.size(); ++k) {
    const Eigen::Vector3d ro = poses[k].rot.transpose() * (-poses[k].trans);
    const Eigen::Vector3d rd = poses[k].rot.transpose() * dir;
    const double tau = intersect_object(cfg.objects[k], ro, rd);
    if (tau < best) {
      best = tau;
      hit.hit = true;
      hit.object = int(k);
      hit.material = ro + tau * rd;
      hit.world = poses[k].rot * hit.material + poses[k].trans;
      hit.z = hit.world.z();
    }
  }
  check(dir.z() > 1e-9, "trace: ray parallel to the background plane");
  const double tau_bg = cfg.bg_depth / dir.z();
  if (tau_bg < best) {
    hit = SurfaceHit{};
    hit.world = tau_bg * dir;
    hit.z = cfg.bg_depth;
  }
  return hit;
}

int checker(const Eigen::Vector3d& p, double period, int axes) {
  int parity = 0;
  for (int a = 0; a < axes; ++a) parity += int(std::floor(p[a] / period));
  return ((parity % 2) + 2) % 2;
}

Eigen::Vector3d object_normal(const SynthObject& obj, const Eigen::Vector3d& m) {
  if (obj.shape == Shape::Box) {
    int axis = 0;
    double best = -1;
    for (int a = 0; a < 3; ++a) {
      const double d = std::abs(m[a]) / obj.half[a];
      if (d > best) {
        best = d;
        axis = a;
      }
    }
    Eigen::Vector3d n = Eigen::Vector3d::Zero();
    n[axis] = m[axis] > 0 ? 1.0 : -1.0;
    return n;
  }
  return m.cwiseQuotient(obj.half.cwiseProduct(obj.half)).normalized();
}

Eigen::Vector3d shade(const SynthConfig& cfg, const Pose* pose, const SurfaceHit& hit) {
  if (!hit.hit) {
    const double g = checker(hit.world, cfg.bg_check, 2) ? 0.42 : 0.28;
    return {g, g, g};
  }
  const SynthObject& obj = cfg.objects[std::size_t(hit.object)];
  const Eigen::Vector3d base =
      checker(hit.material, obj.pattern, 3) ? obj.albedo2 : obj.albedo;
  static const Eigen::Vector3d to_light = Eigen::Vector3d(-0.35, -0.5, -0.75).normalized();
  const Eigen::Vector3d n = pose->rot * object_normal(obj, hit.material);
  const double intensity = 0.35 + 0.65 * std::max(0.0, n.dot(to_light));
  return base.cwiseProduct(Eigen::Vector3d::Constant(intensity)).cwiseMin(1.0).cwiseMax(0.0);
}

Eigen::Vector2d project(const SynthConfig& cfg, const Eigen::Vector3d& p) {
  const double cx = cfg.width / 2.0, cy = cfg.height / 2.0;
  return {cfg.focal * p.x() / p.z() + cx, cfg.focal * p.y() / p.z() + cy};
}

Eigen::Vector3d sample_material(const SynthObject& obj, Rng& rng) {
  if (obj.shape == Shape::Box) {
    const int axis = int(rng.index(3));
    Eigen::Vector3d m;
    for (int a = 0; a < 3; ++a) m[a] = rng.uniform(-obj.half[a], obj.half[a]);
    // Camera looks +z, so the -z face is the one it can see.
    m[axis] = axis == 2 ? -obj.half[axis] : (rng.index(2) ? obj.half[axis] : -obj.half[axis]);
    return m;
  }
  Eigen::Vector3d u;
  double norm = 0;
  Rng* r = &rng;
  do {
    u = {r->normal(), r->normal(), r->normal()};
    norm = u.norm();
  } while (norm < 1e-3);
  u /= norm;
  u.z() = -std::abs(u.z());  // camera-facing hemisphere
  u.normalize();
  return obj.half.cwiseProduct(u);
}

}  // namespace

void object_pose(const SynthObject& obj, int frame, int frames, Eigen::Matrix3d& rot,
                 Eigen::Vector3d& trans) {
  const double s = frames > 1 ? double(frame) / (frames - 1) : 0.0;
  rot = Eigen::AngleAxisd(2.0 * kPi * obj.spin_turns * s, obj.spin_axis.normalized())
            .toRotationMatrix();
  if (obj.path == Path::Linear) {
    trans = obj.start + s * (obj.end - obj.start);
  } else {
    const double angle = 2.0 * kPi * obj.orbit_turns * s + obj.orbit_phase;
    trans = obj.orbit_center +
            obj.orbit_radius * Eigen::Vector3d(std::cos(angle), std::sin(angle), 0.0);
  }
}

SurfaceHit trace_pixel(const SynthConfig& cfg, int frame, double u, double v) {
  return trace(cfg, poses_at(cfg, frame), u, v);
}

SynthConfig crossing_preset(int frames, int size) {
  SynthConfig cfg;
  cfg.width = cfg.height = size;
  cfg.frames = frames;
  cfg.focal = 150.0 * size / 128.0;

  SynthObject ball;
  ball.shape = Shape::Sphere;
  ball.half = {0.38, 0.38, 0.38};
  ball.albedo = {0.78, 0.22, 0.16};
  ball.albedo2 = {0.92, 0.6, 0.2};
  ball.pattern = 0.26;
  ball.start = {-0.55, -0.06, 2.3};
  ball.end = {0.55, -0.06, 2.3};

  SynthObject box;
  box.shape = Shape::Box;
  box.half = {0.22, 0.22, 0.22};
  box.albedo = {0.18, 0.42, 0.82};
  box.albedo2 = {0.85, 0.83, 0.3};
  box.pattern = 0.18;
  box.start = {0.42, 0.08, 1.9};
  box.end = {-0.42, 0.08, 1.9};
  box.spin_axis = {0, 1, 0};
  box.spin_turns = 0.12;

  cfg.objects = {ball, box};
  return cfg;
}

Dataset synthesize(const SynthConfig& cfg) {
  check(cfg.frames >= 2, "synthesize: want at least 2 frames");
  check(!cfg.objects.empty(), "synthesize: no objects");
  Dataset ds;
  ds.width = cfg.width;
  ds.height = cfg.height;
  ds.frames = cfg.frames;
  ds.num_objects = int(cfg.objects.size());

  scene::Camera cam;
  cam.width = cfg.width;
  cam.height = cfg.height;
  cam.fx = cam.fy = cfg.focal;
  cam.cx = cfg.width / 2.0;
  cam.cy = cfg.height / 2.0;
  ds.cameras.assign(static_cast<std::size_t>(cfg.frames), cam);

  ds.masks.assign(cfg.objects.size(), {});
  for (int t = 0; t < cfg.frames; ++t) {
    const std::vector<Pose> poses = poses_at(cfg, t);
    const std::vector<Pose> next =
        t + 1 < cfg.frames ? poses_at(cfg, t + 1) : std::vector<Pose>{};

    Image rgb(cfg.height, cfg.width, 3);
    Image depth(cfg.height, cfg.width, 1);
    Image flow(cfg.height, cfg.width, 2);
    std::vector<Image> masks(cfg.objects.size(), Image(cfg.height, cfg.width, 1));

    for (int row = 0; row < cfg.height; ++row) {
      for (int col = 0; col < cfg.width; ++col) {
        const double u = col + 0.5, v = row + 0.5;
        const SurfaceHit hit = trace(cfg, poses, u, v);
        const Eigen::Vector3d color =
            shade(cfg, hit.hit ? &poses[std::size_t(hit.object)] : nullptr, hit);
        for (int ch = 0; ch < 3; ++ch) rgb.at(row, col, ch) = color[ch];
        depth.at(row, col, 0) = hit.z;
        if (hit.hit) {
          masks[std::size_t(hit.object)].at(row, col, 0) = 1.0;
          if (!next.empty()) {
            const Pose& np = next[std::size_t(hit.object)];
            const Eigen::Vector2d moved =
                project(cfg, np.rot * hit.material + np.trans);
            flow.at(row, col, 0) = moved.x() - u;
            flow.at(row, col, 1) = moved.y() - v;
          }
        }
      }
    }

    ds.rgb.push_back(std::move(rgb));
    ds.depth.push_back(std::move(depth));
    if (t + 1 < cfg.frames) ds.flow.push_back(std::move(flow));
    for (std::size_t k = 0; k < cfg.objects.size(); ++k)
      ds.masks[k].push_back(std::move(masks[k]));
  }

  Rng rng(cfg.seed);
  for (std::size_t k = 0; k < cfg.objects.size(); ++k) {
    for (int i = 0; i < cfg.tracks_per_object; ++i) {
      Track tr;
      tr.object = int(k);
      tr.material = sample_material(cfg.objects[k], rng);
      for (int t = 0; t < cfg.frames; ++t) {
        const std::vector<Pose> poses = poses_at(cfg, t);
        const Eigen::Vector3d p = poses[k].rot * tr.material + poses[k].trans;
        const Eigen::Vector2d px = project(cfg, p);
        TrackPoint tp;
        tp.x = px.x();
        tp.y = px.y();
        tp.z = p.z();
        const bool in_bounds =
            px.x() >= 0 && px.x() < cfg.width && px.y() >= 0 && px.y() < cfg.height;
        if (in_bounds) {
          const SurfaceHit hit = trace(cfg, poses, px.x(), px.y());
          tp.visible = hit.object == int(k) && std::abs(hit.z - p.z()) <= 1e-6;
        }
        tr.points.push_back(tp);
      }
      ds.tracks.push_back(std::move(tr));
    }
  }
  ds.validate();
  return ds;
}

Image trace_object_view(const SynthConfig& cfg, int object, int frame,
                        const scene::Camera& cam) {
  check(object >= 0 && object < int(cfg.objects.size()), "trace_object_view: bad object");
  const SynthObject& obj = cfg.objects[std::size_t(object)];
  Pose pose;
  object_pose(obj, frame, cfg.frames, pose.rot, pose.trans);

  const Eigen::Vector3d origin = cam.center();
  const Eigen::Vector3d ro = pose.rot.transpose() * (origin - pose.trans);
  Image img(cam.height, cam.width, 3);
  for (int r = 0; r < cam.height; ++r) {
    for (int c = 0; c < cam.width; ++c) {
      const Eigen::Vector3d dir =
          (cam.unproject(c + 0.5, r + 0.5, 1.0) - origin).normalized();
      const Eigen::Vector3d rd = pose.rot.transpose() * dir;
      const double tau = intersect_object(obj, ro, rd);
      if (!std::isfinite(tau)) continue;
      SurfaceHit hit;
      hit.hit = true;
      hit.object = object;
      hit.material = ro + tau * rd;
      hit.world = pose.rot * hit.material + pose.trans;
      hit.z = hit.world.z();
      const Eigen::Vector3d rgb = shade(cfg, &pose, hit);
      for (int ch = 0; ch < 3; ++ch) img.at(r, c, ch) = rgb[ch];
    }
  }
  return img;
}

}  // namespace gmjo::bench
