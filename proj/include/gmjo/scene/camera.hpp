// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace gmjo::scene {

/// Pinhole camera with a rigid world-to-camera transform. Camera space is
/// x right, y down, z forward; pixel (col,row) covers [col,col+1)x[row,row+1)
/// with its sample point at (col + 0.5, row + 0.5).
struct Camera {
  int width = 0, height = 0;
  double fx = 0, fy = 0, cx = 0, cy = 0;
  Eigen::Matrix4d world_to_cam = Eigen::Matrix4d::Identity();

  Eigen::Matrix3d rotation() const { return world_to_cam.topLeftCorner<3, 3>(); }
  Eigen::Vector3d translation() const { return world_to_cam.topRightCorner<3, 1>(); }
  Eigen::Vector3d center() const { return -rotation().transpose() * translation(); }

  Eigen::Vector3d to_camera(const Eigen::Vector3d& p_world) const {
    return rotation() * p_world + translation();
  }
  Eigen::Vector3d to_world(const Eigen::Vector3d& p_cam) const {
    return rotation().transpose() * (p_cam - translation());
  }

  /// Perspective projection of a camera-space point (z > 0).
  Eigen::Vector2d project_cam(const Eigen::Vector3d& p_cam) const {
    return {fx * p_cam.x() / p_cam.z() + cx, fy * p_cam.y() / p_cam.z() + cy};
  }
  Eigen::Vector2d project(const Eigen::Vector3d& p_world) const {
    return project_cam(to_camera(p_world));
  }
  /// Inverse of project at the given camera depth, back to world space.
  Eigen::Vector3d unproject(double u, double v, double z) const {
    return to_world({(u - cx) / fx * z, (v - cy) / fy * z, z});
  }

  /// Rejects non-rigid transforms and degenerate intrinsics.
  void validate(const std::string& what) const;
};

/// Camera positioned on an orbit around `pivot`, looking at it. Azimuth spins
/// about the world up axis, elevation about the start camera's right axis;
/// (0,0) reproduces the base viewpoint direction.
Camera orbit_camera(const Camera& base, const Eigen::Vector3d& pivot, double azimuth_deg,
                    double elevation_deg);

/// Same pose through a rescaled raster; intrinsics scale with the size ratio.
Camera resized_camera(const Camera& cam, int width, int height);

/// JSON file with shared intrinsics and one world-to-cam matrix per frame.
std::vector<Camera> load_cameras(const std::string& path);
void save_cameras(const std::string& path, const std::vector<Camera>& cams);

}  // namespace gmjo::scene
