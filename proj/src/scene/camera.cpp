// SPDX-License-Identifier: Apache-2.0
#include "gmjo/scene/camera.hpp"

#include <cmath>
#include <fstream>
#include <json.hpp>

#include "gmjo/io.hpp"
#include "gmjo/util.hpp"

namespace gmjo::scene {

void Camera::validate(const std::string& what) const {
  check(width > 0 && height > 0, what, ": image size must be positive");
  check(fx > 0 && fy > 0, what, ": focal lengths must be positive");
  const Eigen::Matrix3d r = rotation();
  const double ortho = (r * r.transpose() - Eigen::Matrix3d::Identity()).norm();
  check(ortho < 1e-8, what, ": world_to_cam rotation is not orthonormal (deviation ", ortho, ")");
  check(std::abs(r.determinant() - 1.0) < 1e-8, what, ": rotation determinant must be +1");
  const Eigen::Vector4d bottom = world_to_cam.row(3).transpose();
  check((bottom - Eigen::Vector4d(0, 0, 0, 1)).norm() < 1e-12, what,
        ": last row of world_to_cam must be (0,0,0,1)");
}

Camera orbit_camera(const Camera& base, const Eigen::Vector3d& pivot, double azimuth_deg,
                    double elevation_deg) {
  const Eigen::Vector3d p0 = base.center();
  const Eigen::Vector3d v = p0 - pivot;
  check(v.norm() > 1e-12, "orbit_camera: base camera sits on the pivot");
  const Eigen::Vector3d f0 = (-v).normalized();
  const Eigen::Vector3d world_down(0, 1, 0);
  Eigen::Vector3d right0 = world_down.cross(f0);
  check(right0.norm() > 1e-9, "orbit_camera: viewing direction is degenerate with the up axis");
  right0.normalize();

  const double az = azimuth_deg * M_PI / 180.0, el = elevation_deg * M_PI / 180.0;
  const Eigen::Vector3d v1 = Eigen::AngleAxisd(az, -world_down) * v;
  const Eigen::Vector3d p = pivot + Eigen::AngleAxisd(el, right0) * v1;

  const Eigen::Vector3d f = (pivot - p).normalized();
  Eigen::Vector3d right = world_down.cross(f);
  check(right.norm() > 1e-9, "orbit_camera: resulting view is degenerate with the up axis");
  right.normalize();
  const Eigen::Vector3d down = f.cross(right);

  Camera cam = base;
  Eigen::Matrix3d r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = f.transpose();
  cam.world_to_cam.setIdentity();
  cam.world_to_cam.topLeftCorner<3, 3>() = r;
  cam.world_to_cam.topRightCorner<3, 1>() = -r * p;
  return cam;
}

Camera resized_camera(const Camera& cam, int width, int height) {
  check(width > 0 && height > 0, "resized_camera: target size must be positive");
  Camera out = cam;
  const double rx = double(width) / cam.width, ry = double(height) / cam.height;
  out.width = width;
  out.height = height;
  out.fx = cam.fx * rx;
  out.fy = cam.fy * ry;
  out.cx = cam.cx * rx;
  out.cy = cam.cy * ry;
  return out;
}

std::vector<Camera> load_cameras(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(slurp(path));
  } catch (const nlohmann::json::exception& e) {
    fail(cat("camera file '", path, "': invalid JSON: ", e.what()));
  }
  for (const char* key : {"width", "height", "fx", "fy", "cx", "cy", "frames"})
    check(j.contains(key), "camera file '", path, "': missing key '", key, "'");
  Camera base;
  base.width = j["width"];
  base.height = j["height"];
  base.fx = j["fx"];
  base.fy = j["fy"];
  base.cx = j["cx"];
  base.cy = j["cy"];
  std::vector<Camera> cams;
  for (const auto& fr : j["frames"]) {
    check(fr.size() == 16, "camera file '", path, "': each frame needs 16 matrix entries, got ",
          fr.size());
    Camera c = base;
    for (int i = 0; i < 16; ++i) c.world_to_cam(i / 4, i % 4) = fr[std::size_t(i)];
    c.validate(cat("camera file '", path, "' frame ", cams.size()));
    cams.push_back(c);
  }
  check(!cams.empty(), "camera file '", path, "': no frames");
  return cams;
}

void save_cameras(const std::string& path, const std::vector<Camera>& cams) {
  check(!cams.empty(), "save_cameras: empty camera list");
  nlohmann::json j;
  j["width"] = cams[0].width;
  j["height"] = cams[0].height;
  j["fx"] = cams[0].fx;
  j["fy"] = cams[0].fy;
  j["cx"] = cams[0].cx;
  j["cy"] = cams[0].cy;
  nlohmann::json frames = nlohmann::json::array();
  for (const Camera& c : cams) {
    nlohmann::json m = nlohmann::json::array();
    for (int i = 0; i < 16; ++i) m.push_back(c.world_to_cam(i / 4, i % 4));
    frames.push_back(m);
  }
  j["frames"] = frames;
  spit(path, j.dump(2));
}

}  // namespace gmjo::scene
