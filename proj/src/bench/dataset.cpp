// SPDX-License-Identifier: Apache-2.0
#include "gmjo/bench/dataset.hpp"

#include <array>
#include <cstdio>
#include <filesystem>
#include <json.hpp>
#include <sstream>

#include "gmjo/io.hpp"
#include "gmjo/util.hpp"

namespace gmjo::bench {

namespace {

std::string numbered(const std::string& dir, const char* sub, const char* stem, int t,
                     const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04d%s", stem, t, ext);
  return cat(dir, "/", sub, "/", buf);
}

std::string mask_path(const std::string& dir, int obj, int t) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "obj%d_%04d.pgm", obj, t);
  return cat(dir, "/mask/", buf);
}

}  // namespace

void Dataset::validate() const {
  check(width > 0 && height > 0 && frames > 0, "Dataset: empty frame geometry");
  check(int(cameras.size()) == frames, "Dataset: ", cameras.size(), " cameras for ", frames,
        " frames");
  check(int(rgb.size()) == frames && int(depth.size()) == frames, "Dataset: image count");
  check(int(flow.size()) == frames - 1, "Dataset: want frames-1 flow fields");
  check(int(masks.size()) == num_objects, "Dataset: mask set per object");
  for (const auto& per_obj : masks)
    check(int(per_obj.size()) == frames, "Dataset: mask per frame per object");
  for (const Track& t : tracks) {
    check(t.object >= 0 && t.object < num_objects, "Dataset: track object id");
    check(int(t.points.size()) == frames, "Dataset: track length");
  }
  for (int t = 0; t < frames; ++t) {
    check(rgb[std::size_t(t)].h == height && rgb[std::size_t(t)].w == width &&
              rgb[std::size_t(t)].c == 3,
          "Dataset: rgb shape at frame ", t);
    check(depth[std::size_t(t)].h == height && depth[std::size_t(t)].w == width &&
              depth[std::size_t(t)].c == 1,
          "Dataset: depth shape at frame ", t);
  }
}

void save_dataset(const std::string& dir, const Dataset& ds) {
  ds.validate();
  namespace fs = std::filesystem;
  for (const char* sub : {"rgb", "mask", "depth", "flow"})
    fs::create_directories(fs::path(dir) / sub);

  nlohmann::json meta;
  meta["width"] = ds.width;
  meta["height"] = ds.height;
  meta["frames"] = ds.frames;
  meta["objects"] = ds.num_objects;
  spit(cat(dir, "/dataset.json"), meta.dump(2));

  scene::save_cameras(cat(dir, "/cameras.json"), ds.cameras);

  nlohmann::json tracks = nlohmann::json::array();
  for (const Track& t : ds.tracks) {
    nlohmann::json jt;
    jt["object"] = t.object;
    jt["material"] = {t.material.x(), t.material.y(), t.material.z()};
    nlohmann::json pts = nlohmann::json::array();
    for (const TrackPoint& p : t.points) pts.push_back({p.x, p.y, p.z, p.visible ? 1 : 0});
    jt["points"] = std::move(pts);
    tracks.push_back(std::move(jt));
  }
  spit(cat(dir, "/tracks.json"), tracks.dump());

  for (int t = 0; t < ds.frames; ++t) {
    write_ppm(numbered(dir, "rgb", "frame", t, ".ppm"), ds.rgb[std::size_t(t)]);
    write_planes(numbered(dir, "depth", "frame", t, ".planes"), ds.depth[std::size_t(t)]);
    if (t + 1 < ds.frames)
      write_planes(numbered(dir, "flow", "frame", t, ".planes"), ds.flow[std::size_t(t)]);
    for (int k = 0; k < ds.num_objects; ++k)
      write_pgm(mask_path(dir, k, t), ds.masks[std::size_t(k)][std::size_t(t)]);
  }
}

Dataset load_dataset(const std::string& dir) {
  Dataset ds;
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(slurp(cat(dir, "/dataset.json")));
  } catch (const nlohmann::json::exception& e) {
    fail(cat("load_dataset: bad dataset.json: ", e.what()));
  }
  ds.width = meta.at("width").get<int>();
  ds.height = meta.at("height").get<int>();
  ds.frames = meta.at("frames").get<int>();
  ds.num_objects = meta.at("objects").get<int>();

  ds.cameras = scene::load_cameras(cat(dir, "/cameras.json"));

  nlohmann::json tracks;
  try {
    tracks = nlohmann::json::parse(slurp(cat(dir, "/tracks.json")));
  } catch (const nlohmann::json::exception& e) {
    fail(cat("load_dataset: bad tracks.json: ", e.what()));
  }
  for (const auto& jt : tracks) {
    Track t;
    t.object = jt.at("object").get<int>();
    const auto& m = jt.at("material");
    t.material = {m.at(0).get<double>(), m.at(1).get<double>(), m.at(2).get<double>()};
    for (const auto& jp : jt.at("points")) {
      TrackPoint p;
      p.x = jp.at(0).get<double>();
      p.y = jp.at(1).get<double>();
      p.z = jp.at(2).get<double>();
      p.visible = jp.at(3).get<int>() != 0;
      t.points.push_back(p);
    }
    ds.tracks.push_back(std::move(t));
  }

  ds.masks.resize(static_cast<std::size_t>(ds.num_objects));
  for (int t = 0; t < ds.frames; ++t) {
    ds.rgb.push_back(read_ppm(numbered(dir, "rgb", "frame", t, ".ppm")));
    ds.depth.push_back(read_planes(numbered(dir, "depth", "frame", t, ".planes")));
    if (t + 1 < ds.frames)
      ds.flow.push_back(read_planes(numbered(dir, "flow", "frame", t, ".planes")));
    for (int k = 0; k < ds.num_objects; ++k)
      ds.masks[std::size_t(k)].push_back(read_pgm(mask_path(dir, k, t)));
  }
  ds.validate();
  return ds;
}

namespace {

constexpr const char* kTracksHeader = "track_id,frame,u,v,x,y,z,visible";

}  // namespace

void save_tracks_csv(const std::string& path, const std::vector<Track>& tracks,
                     const std::vector<scene::Camera>& cameras) {
  std::ostringstream os;
  os << kTracksHeader << "\n";
  char buf[160];
  for (std::size_t i = 0; i < tracks.size(); ++i) {
    const Track& tr = tracks[i];
    check(tr.points.size() <= cameras.size(), "save_tracks_csv: track ", i,
          " longer than the camera path");
    for (std::size_t t = 0; t < tr.points.size(); ++t) {
      const TrackPoint& p = tr.points[t];
      const Eigen::Vector3d w = cameras[t].unproject(p.x, p.y, p.z);
      std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", i, t, p.x,
                    p.y, w.x(), w.y(), w.z(), p.visible ? 1 : 0);
      os << buf;
    }
  }
  spit(path, os.str());
}

std::vector<Track> load_tracks_csv(const std::string& path) {
  std::istringstream is(slurp(path));
  std::string line;
  check(bool(std::getline(is, line)), "load_tracks_csv: empty file '", path, "'");
  check(line == kTracksHeader, "load_tracks_csv: bad header in '", path, "'");

  std::vector<Track> tracks;
  int row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::array<std::string, 8> cols;
    std::size_t start = 0;
    for (int c = 0; c < 8; ++c) {
      const std::size_t comma = line.find(',', start);
      const bool last = c == 7;
      check(last == (comma == std::string::npos), "load_tracks_csv: row ", row,
            " wants 8 columns");
      cols[std::size_t(c)] = line.substr(start, last ? std::string::npos : comma - start);
      start = comma + 1;
    }
    std::size_t used = 0;
    const int id = std::stoi(cols[0], &used);
    check(used == cols[0].size() && id >= 0, "load_tracks_csv: bad track id at row ", row);
    const int frame = std::stoi(cols[1], &used);
    check(used == cols[1].size() && frame >= 0, "load_tracks_csv: bad frame at row ", row);
    check(id <= int(tracks.size()), "load_tracks_csv: track ids must be grouped, row ", row);
    if (id == int(tracks.size())) tracks.push_back({});
    Track& tr = tracks[std::size_t(id)];
    check(frame == int(tr.points.size()), "load_tracks_csv: frames must be dense, row ", row);
    TrackPoint p;
    p.x = std::stod(cols[2], &used);
    check(used == cols[2].size(), "load_tracks_csv: bad u at row ", row);
    p.y = std::stod(cols[3], &used);
    check(used == cols[3].size(), "load_tracks_csv: bad v at row ", row);
    p.z = std::stod(cols[6], &used);
    check(used == cols[6].size(), "load_tracks_csv: bad z at row ", row);
    check(cols[7] == "0" || cols[7] == "1", "load_tracks_csv: visible must be 0/1, row ", row);
    p.visible = cols[7] == "1";
    tr.points.push_back(p);
  }
  return tracks;
}

}  // namespace gmjo::bench
