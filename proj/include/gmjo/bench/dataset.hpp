// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "gmjo/image.hpp"
#include "gmjo/scene/camera.hpp"

namespace gmjo::bench {

/// One observed step of a ground-truth track: continuous pixel position,
/// camera depth, and whether the surface point is the visible one.
struct TrackPoint {
  double x = 0, y = 0, z = 0;
  bool visible = false;
};

struct Track {
  int object = 0;
  Eigen::Vector3d material{0, 0, 0};  // surface point in the object frame
  std::vector<TrackPoint> points;     // one per frame
};

/// A monocular multi-object clip with per-frame supervision. Masks are one
/// binary [h,w,1] image per object per frame; `flow` holds frames-1 forward
/// fields (t to t+1); depth is camera z.
struct Dataset {
  int width = 0, height = 0, frames = 0, num_objects = 0;
  std::vector<scene::Camera> cameras;      // [frames]
  std::vector<Image> rgb;                  // [frames] h,w,3
  std::vector<std::vector<Image>> masks;   // [num_objects][frames] h,w,1
  std::vector<Image> depth;                // [frames] h,w,1
  std::vector<Image> flow;                 // [frames-1] h,w,2
  std::vector<Track> tracks;

  void validate() const;
};

/// Directory layout: dataset.json, cameras.json, tracks.json, rgb/*.ppm,
/// mask/*.pgm, depth/*.planes, flow/*.planes. RGB and masks are quantized to
/// 8 bits on disk; depth and flow are float32.
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

/// Interchange rows: track_id,frame,u,v,x,y,z,visible with a header line.
/// World positions come from unprojecting observed depth through the frame
/// cameras. Loading keeps u,v and the visibility; TrackPoint.z then carries
/// the world z column, and object ids are not part of the format.
void save_tracks_csv(const std::string& path, const std::vector<Track>& tracks,
                     const std::vector<scene::Camera>& cameras);
std::vector<Track> load_tracks_csv(const std::string& path);

}  // namespace gmjo::bench
