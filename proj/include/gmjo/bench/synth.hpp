// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "gmjo/bench/dataset.hpp"

namespace gmjo::bench {

enum class Shape { Sphere, Ellipsoid, Box };
enum class Path { Linear, Circular };

/// Rigidly moving textured primitive. The clip parameter s runs 0 to 1 over
/// the frames; linear paths interpolate start to end, circular paths orbit
/// `orbit_center` in the xy plane. Spin rotates the object about its own
/// center by spin_turns full turns over the clip.
struct SynthObject {
  Shape shape = Shape::Sphere;
  Eigen::Vector3d half{0.4, 0.4, 0.4};  // radii / half extents
  Eigen::Vector3d albedo{0.75, 0.25, 0.2};
  Eigen::Vector3d albedo2{0.9, 0.6, 0.25};
  double pattern = 0.25;  // object-frame checker period

  Path path = Path::Linear;
  Eigen::Vector3d start{0, 0, 2.2}, end{0, 0, 2.2};
  Eigen::Vector3d orbit_center{0, 0, 2.2};
  double orbit_radius = 0, orbit_phase = 0, orbit_turns = 1;

  Eigen::Vector3d spin_axis{0, 1, 0};
  double spin_turns = 0;
};

/// Static camera at the origin looking +z over a checkered background plane.
struct SynthConfig {
  int width = 128, height = 128, frames = 24;
  double focal = 150.0;
  double bg_depth = 4.0;
  double bg_check = 0.5;  // world-units checker period of the background
  int tracks_per_object = 5;
  std::uint64_t seed = 7;
  std::vector<SynthObject> objects;
};

/// Two textured primitives crossing paths at different depths, so the front
/// one occludes the back one mid-clip.
SynthConfig crossing_preset(int frames = 24, int size = 128);

/// Rigid pose of one object at frame t: world point = rot * material + trans.
void object_pose(const SynthObject& obj, int frame, int frames, Eigen::Matrix3d& rot,
                 Eigen::Vector3d& trans);

/// Nearest primary-ray intersection at continuous pixel (u, v). `hit` false
/// means the background plane. `material` is the object-frame surface point.
struct SurfaceHit {
  bool hit = false;
  int object = -1;
  double z = 0;
  Eigen::Vector3d world{0, 0, 0};
  Eigen::Vector3d material{0, 0, 0};
};
SurfaceHit trace_pixel(const SynthConfig& cfg, int frame, double u, double v);

/// Renders the full clip with analytic depth, masks, flow, and tracks.
Dataset synthesize(const SynthConfig& cfg);

/// One object alone over black from an arbitrary camera, shaded exactly like
/// the clip renders. Ground truth for novel-view evaluation.
Image trace_object_view(const SynthConfig& cfg, int object, int frame,
                        const scene::Camera& cam);

}  // namespace gmjo::bench
