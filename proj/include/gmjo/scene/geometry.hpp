// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <cmath>

#include "gmjo/scene/camera.hpp"

namespace gmjo::scene {

/// Rotation matrix of a quaternion (w,x,y,z). The caller normalizes; this
/// treats the input as unit-length.
inline Eigen::Matrix3d quat_to_matrix(const double* q) {
  const double w = q[0], x = q[1], y = q[2], z = q[3];
  Eigen::Matrix3d m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return m;
}

/// World-space covariance M diag(exp(2*log_s)) M^T with M = R(q/|q|).
/// Non-finite scales and zero quaternions are caller errors.
Eigen::Matrix3d build_covariance(const double* quat, const double* log_scales);

/// Projection of one Gaussian into a camera. `visible == false` means the
/// Gaussian is culled (behind the near plane); all other fields are then
/// unspecified. Forward math is shared verbatim by the tiled renderer and the
/// per-pixel oracle so the two can only differ by traversal, not by formula.
struct Projected {
  bool visible = false;
  double u = 0, v = 0;            // pixel coordinates of the projected mean
  double z = 0;                   // camera depth
  double cov_a = 0, cov_b = 0, cov_c = 0;  // screen covariance [[a,b],[b,c]], low-pass added
  double inv_a = 0, inv_b = 0, inv_c = 0;  // its inverse
  double radius = 0;              // 3 * sqrt(max eigenvalue), conservative footprint
  Eigen::Vector3d t;              // camera-space mean
};

struct ProjectionSettings {
  double lambda_lowpass = 0.3;  // pixels^2 added to the screen covariance diagonal
  double near = 1e-3;
};

Projected project_gaussian(const double* pos, const double* log_scales, const double* quat,
                           const Camera& cam, const ProjectionSettings& ps);

/// Real spherical harmonics evaluation of one color channel set.
/// `coeffs` holds (degree+1)^2 triples (rgb per basis function); `dir` is the
/// unit view direction. Output is the raw linear combination; callers add the
/// 0.5 offset and clamp.
void eval_sh(int degree, const Eigen::Vector3d& dir, const double* coeffs, double* rgb_out);

/// Gradient of eval_sh: accumulates d(loss)/d(coeffs) and returns
/// d(loss)/d(dir) given d(loss)/d(rgb).
Eigen::Vector3d eval_sh_backward(int degree, const Eigen::Vector3d& dir, const double* coeffs,
                                 const double* d_rgb, double* d_coeffs);

inline int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

constexpr double kShC0 = 0.28209479177387814;

}  // namespace gmjo::scene
