// SPDX-License-Identifier: Apache-2.0
#include "gmjo/scene/geometry.hpp"

#include "gmjo/util.hpp"

namespace gmjo::scene {

namespace {

constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                           0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};

/// Basis values, and optionally d(basis)/d(dir) rows, for degree <= 3.
int sh_basis(int degree, const Eigen::Vector3d& d, double* b, Eigen::Vector3d* db) {
  const double x = d.x(), y = d.y(), z = d.z();
  b[0] = kShC0;
  if (db) db[0].setZero();
  if (degree == 0) return 1;

  b[1] = -kC1 * y;
  b[2] = kC1 * z;
  b[3] = -kC1 * x;
  if (db) {
    db[1] = {0, -kC1, 0};
    db[2] = {0, 0, kC1};
    db[3] = {-kC1, 0, 0};
  }
  if (degree == 1) return 4;

  const double xx = x * x, yy = y * y, zz = z * z;
  const double xy = x * y, yz = y * z, xz = x * z;
  b[4] = kC2[0] * xy;
  b[5] = kC2[1] * yz;
  b[6] = kC2[2] * (2 * zz - xx - yy);
  b[7] = kC2[3] * xz;
  b[8] = kC2[4] * (xx - yy);
  if (db) {
    db[4] = {kC2[0] * y, kC2[0] * x, 0};
    db[5] = {0, kC2[1] * z, kC2[1] * y};
    db[6] = {-2 * kC2[2] * x, -2 * kC2[2] * y, 4 * kC2[2] * z};
    db[7] = {kC2[3] * z, 0, kC2[3] * x};
    db[8] = {2 * kC2[4] * x, -2 * kC2[4] * y, 0};
  }
  if (degree == 2) return 9;

  b[9] = kC3[0] * y * (3 * xx - yy);
  b[10] = kC3[1] * xy * z;
  b[11] = kC3[2] * y * (4 * zz - xx - yy);
  b[12] = kC3[3] * z * (2 * zz - 3 * xx - 3 * yy);
  b[13] = kC3[4] * x * (4 * zz - xx - yy);
  b[14] = kC3[5] * z * (xx - yy);
  b[15] = kC3[6] * x * (xx - 3 * yy);
  if (db) {
    db[9] = {6 * kC3[0] * xy, 3 * kC3[0] * (xx - yy), 0};
    db[10] = {kC3[1] * yz, kC3[1] * xz, kC3[1] * xy};
    db[11] = {-2 * kC3[2] * xy, kC3[2] * (4 * zz - xx - 3 * yy), 8 * kC3[2] * yz};
    db[12] = {-6 * kC3[3] * xz, -6 * kC3[3] * yz, kC3[3] * (6 * zz - 3 * xx - 3 * yy)};
    db[13] = {kC3[4] * (4 * zz - 3 * xx - yy), -2 * kC3[4] * xy, 8 * kC3[4] * xz};
    db[14] = {2 * kC3[5] * xz, -2 * kC3[5] * yz, kC3[5] * (xx - yy)};
    db[15] = {3 * kC3[6] * (xx - yy), -6 * kC3[6] * xy, 0};
  }
  check(degree == 3, "sh degree must be 0..3, got ", degree);
  return 16;
}

}  // namespace

Eigen::Matrix3d build_covariance(const double* quat, const double* log_scales) {
  double n2 = 0;
  for (int i = 0; i < 4; ++i) n2 += quat[i] * quat[i];
  check(n2 > 0, "build_covariance: zero quaternion");
  const double inv = 1.0 / std::sqrt(n2);
  const double q[4] = {quat[0] * inv, quat[1] * inv, quat[2] * inv, quat[3] * inv};
  const Eigen::Matrix3d m = quat_to_matrix(q);
  Eigen::Vector3d s2;
  for (int i = 0; i < 3; ++i) {
    check(std::isfinite(log_scales[i]), "build_covariance: non-finite log scale");
    s2[i] = std::exp(2.0 * log_scales[i]);
  }
  return m * s2.asDiagonal() * m.transpose();
}

Projected project_gaussian(const double* pos, const double* log_scales, const double* quat,
                           const Camera& cam, const ProjectionSettings& ps) {
  Projected out;
  const Eigen::Vector3d t = cam.to_camera({pos[0], pos[1], pos[2]});
  if (!(t.z() > ps.near)) return out;

  const double iz = 1.0 / t.z();
  out.u = cam.fx * t.x() * iz + cam.cx;
  out.v = cam.fy * t.y() * iz + cam.cy;
  out.z = t.z();
  out.t = t;

  Eigen::Matrix<double, 2, 3> j;
  j << cam.fx * iz, 0, -cam.fx * t.x() * iz * iz,
       0, cam.fy * iz, -cam.fy * t.y() * iz * iz;
  const Eigen::Matrix3d sigma_cam =
      cam.rotation() * build_covariance(quat, log_scales) * cam.rotation().transpose();
  const Eigen::Matrix2d s2 = j * sigma_cam * j.transpose();

  out.cov_a = s2(0, 0) + ps.lambda_lowpass;
  out.cov_b = s2(0, 1);
  out.cov_c = s2(1, 1) + ps.lambda_lowpass;
  const double det = out.cov_a * out.cov_c - out.cov_b * out.cov_b;
  if (!(det > 0)) return out;
  const double idet = 1.0 / det;
  out.inv_a = out.cov_c * idet;
  out.inv_b = -out.cov_b * idet;
  out.inv_c = out.cov_a * idet;

  const double mid = 0.5 * (out.cov_a + out.cov_c);
  const double half = 0.5 * (out.cov_a - out.cov_c);
  const double lmax = mid + std::sqrt(half * half + out.cov_b * out.cov_b);
  out.radius = 3.0 * std::sqrt(lmax);
  out.visible = true;
  return out;
}

void eval_sh(int degree, const Eigen::Vector3d& dir, const double* coeffs, double* rgb_out) {
  double b[16];
  const int n = sh_basis(degree, dir, b, nullptr);
  for (int c = 0; c < 3; ++c) {
    double s = 0;
    for (int k = 0; k < n; ++k) s += b[k] * coeffs[k * 3 + c];
    rgb_out[c] = s;
  }
}

Eigen::Vector3d eval_sh_backward(int degree, const Eigen::Vector3d& dir, const double* coeffs,
                                 const double* d_rgb, double* d_coeffs) {
  double b[16];
  Eigen::Vector3d db[16];
  const int n = sh_basis(degree, dir, b, db);
  Eigen::Vector3d d_dir = Eigen::Vector3d::Zero();
  for (int k = 0; k < n; ++k) {
    double coeff_dot = 0;
    for (int c = 0; c < 3; ++c) {
      d_coeffs[k * 3 + c] += b[k] * d_rgb[c];
      coeff_dot += coeffs[k * 3 + c] * d_rgb[c];
    }
    d_dir += db[k] * coeff_dot;
  }
  return d_dir;
}

}  // namespace gmjo::scene
