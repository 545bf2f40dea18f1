// SPDX-License-Identifier: Apache-2.0
#include "gmjo/pipeline/tracks.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "gmjo/io.hpp"
#include "gmjo/util.hpp"

namespace gmjo::pipeline {

namespace {

constexpr int kNeighborPool = 12;  // 2d-nearest candidates to consider
constexpr int kAttach = 4;         // front-surface Gaussians a query rides on
constexpr double kDistFloor = 0.25;  // pixels, caps single-point dominance

struct FrameState {
  std::vector<double> world;   // [n,3]
  std::vector<double> pixels;  // [n,2], 1e9 when behind the camera
  std::vector<double> depth;   // [n], camera-space z
};

FrameState frame_state(const FittedObject& obj, const scene::Camera& cam, int t) {
  const scene::GaussianSet set = object_frame_set(obj, cam, t);
  FrameState fs;
  fs.world = set.positions.val();
  const int n = set.size();
  fs.pixels.assign(std::size_t(n) * 2, 1e9);
  fs.depth.assign(std::size_t(n), 1e9);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d p(fs.world[std::size_t(i) * 3], fs.world[std::size_t(i) * 3 + 1],
                            fs.world[std::size_t(i) * 3 + 2]);
    const Eigen::Vector3d pc = cam.to_camera(p);
    fs.depth[std::size_t(i)] = pc.z();
    if (pc.z() <= 1e-6) continue;
    const Eigen::Vector2d uv = cam.project_cam(pc);
    fs.pixels[std::size_t(i) * 2] = uv.x();
    fs.pixels[std::size_t(i) * 2 + 1] = uv.y();
  }
  return fs;
}

}  // namespace

std::vector<TrackQuery> dataset_queries(const bench::Dataset& data) {
  std::vector<TrackQuery> queries;
  for (const bench::Track& tr : data.tracks) {
    TrackQuery q;
    q.object = tr.object;
    q.frame = 0;
    for (int s = 0; s < int(tr.points.size()); ++s) {
      if (tr.points[std::size_t(s)].visible) {
        q.frame = s;
        break;
      }
    }
    q.x = tr.points[std::size_t(q.frame)].x;
    q.y = tr.points[std::size_t(q.frame)].y;
    queries.push_back(q);
  }
  return queries;
}

std::vector<PredictedTrack> predict_tracks(const FitResult& fit, const bench::Dataset& data,
                                           const std::vector<TrackQuery>& queries) {
  const int T = fit.frames, K = int(fit.objects.size());
  check(T == data.frames, "predict_tracks: fit and dataset disagree on frame count");

  // Per-frame state of every object, plus the instance channels for
  // visibility tests.
  std::vector<std::vector<FrameState>> states(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k)
    for (int t = 0; t < T; ++t)
      states[std::size_t(k)].push_back(
          frame_state(fit.objects[std::size_t(k)], data.cameras[std::size_t(t)], t));
  std::vector<Image> instance;
  instance.reserve(std::size_t(T));
  for (int t = 0; t < T; ++t)
    instance.push_back(render_frame(fit, data.cameras, t, false).instance_image());

  std::vector<PredictedTrack> out;
  for (const TrackQuery& q : queries) {
    check(q.object >= 0 && q.object < K, "predict_tracks: query object out of range");
    check(q.frame >= 0 && q.frame < T, "predict_tracks: query frame out of range");
    const FrameState& fs = states[std::size_t(q.object)][std::size_t(q.frame)];
    const int n = int(fs.world.size() / 3);
    const std::vector<double>& logits =
        fit.objects[std::size_t(q.object)].canonical.opacity_logits.val();

    std::vector<std::pair<double, int>> by_dist;
    for (int i = 0; i < n; ++i) {
      if (1.0 / (1.0 + std::exp(-logits[std::size_t(i)])) < 0.05) continue;
      const double dx = fs.pixels[std::size_t(i) * 2] - q.x;
      const double dy = fs.pixels[std::size_t(i) * 2 + 1] - q.y;
      by_dist.push_back({dx * dx + dy * dy, i});
    }
    check(!by_dist.empty(), "predict_tracks: object ", q.object, " has no usable gaussians");
    const int pool = std::min<int>(kNeighborPool, int(by_dist.size()));
    std::partial_sort(by_dist.begin(), by_dist.begin() + pool, by_dist.end());
    by_dist.resize(std::size_t(pool));
    // The query pixel shows the front surface; drop back-side candidates.
    std::sort(by_dist.begin(), by_dist.end(), [&](const auto& a, const auto& b) {
      return fs.depth[std::size_t(a.second)] < fs.depth[std::size_t(b.second)];
    });
    const int attach = std::min<int>(kAttach, pool);
    std::vector<int> ids;
    std::vector<double> weights;
    double wsum = 0;
    for (int j = 0; j < attach; ++j) {
      const int i = by_dist[std::size_t(j)].second;
      const double dx = fs.pixels[std::size_t(i) * 2] - q.x;
      const double dy = fs.pixels[std::size_t(i) * 2 + 1] - q.y;
      const double w = 1.0 / (kDistFloor + std::sqrt(dx * dx + dy * dy));
      ids.push_back(i);
      weights.push_back(w);
      wsum += w;
    }
    for (double& w : weights) w /= wsum;

    PredictedTrack tr;
    for (int t = 0; t < T; ++t) {
      const FrameState& st = states[std::size_t(q.object)][std::size_t(t)];
      double px = 0, py = 0;
      Eigen::Vector3d pw = Eigen::Vector3d::Zero();
      for (int j = 0; j < attach; ++j) {
        const int i = ids[std::size_t(j)];
        px += weights[std::size_t(j)] * st.pixels[std::size_t(i) * 2];
        py += weights[std::size_t(j)] * st.pixels[std::size_t(i) * 2 + 1];
        pw += weights[std::size_t(j)] *
              Eigen::Map<const Eigen::Vector3d>(&st.world[std::size_t(i) * 3]);
      }
      tr.pixels.push_back({px, py});
      tr.world.push_back({pw.x(), pw.y(), pw.z()});

      const Image& inst = instance[std::size_t(t)];
      const int c = int(std::floor(px)), r = int(std::floor(py));
      std::uint8_t vis = 0;
      if (r >= 0 && r < inst.h && c >= 0 && c < inst.w) {
        int best = 0;
        for (int ch = 1; ch < inst.c; ++ch)
          if (inst.at(r, c, ch) > inst.at(r, c, best)) best = ch;
        vis = best == q.object ? 1 : 0;
      }
      tr.visible.push_back(vis);
    }
    out.push_back(std::move(tr));
  }
  return out;
}

bench::PredictedTracks pixel_tracks(const std::vector<PredictedTrack>& tracks) {
  bench::PredictedTracks out;
  for (const PredictedTrack& tr : tracks) out.push_back(tr.pixels);
  return out;
}

void save_tracks_json(const std::string& path, const std::vector<PredictedTrack>& tracks) {
  nlohmann::json j;
  nlohmann::json arr = nlohmann::json::array();
  for (const PredictedTrack& tr : tracks) {
    nlohmann::json item;
    nlohmann::json px = nlohmann::json::array(), pw = nlohmann::json::array(),
                   vis = nlohmann::json::array();
    for (std::size_t t = 0; t < tr.pixels.size(); ++t) {
      px.push_back({tr.pixels[t][0], tr.pixels[t][1]});
      pw.push_back({tr.world[t][0], tr.world[t][1], tr.world[t][2]});
      vis.push_back(int(tr.visible[t]));
    }
    item["pixels"] = px;
    item["world"] = pw;
    item["visible"] = vis;
    arr.push_back(item);
  }
  j["tracks"] = arr;
  spit(path, j.dump());
}

void save_tracks_csv(const std::string& path, const std::vector<PredictedTrack>& tracks) {
  std::ostringstream os;
  os << "track_id,frame,u,v,x,y,z,visible\n";
  char buf[160];
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const PredictedTrack& tr = tracks[i];
    for (std::size_t t = 0; t < tr.pixels.size(); ++t) {
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", i, t,
                    tr.pixels[t][0], tr.pixels[t][1], tr.world[t][0], tr.world[t][1],
                    tr.world[t][2], tr.visible[t] ? 1 : 0);
      os << buf;
    }
  }
  spit(path, os.str());
}

}  // namespace gmjo::pipeline
