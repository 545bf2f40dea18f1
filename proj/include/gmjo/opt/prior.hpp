// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "gmjo/image.hpp"

namespace gmjo::opt {

/// Image-space pull direction supplied by a novel-view critic. The loss term
/// is weight * <rendered, gradient>, so the gradient flows verbatim into the
/// rendered image scaled by weight.
struct PriorResponse {
  Image gradient;  // [h,w,3]
  double weight = 0;
};

/// Critic for renders from unobserved viewpoints. `pose` is the world-to-
/// camera matrix of the queried view; `tau` is the guidance strength knob
/// forwarded to the critic.
class PriorProvider {
 public:
  virtual ~PriorProvider() = default;
  virtual PriorResponse query(const Eigen::Matrix4d& pose, double tau, const Image& reference,
                              const Image& rendered) = 0;
};

/// In-process critic backed by ground-truth views on a pose grid: the pull
/// direction is rendered minus the nearest grid view (nearest by Frobenius
/// distance between poses).
class SyntheticOraclePrior : public PriorProvider {
 public:
  SyntheticOraclePrior(std::vector<std::pair<Eigen::Matrix4d, Image>> views, double weight = 1.0);

  PriorResponse query(const Eigen::Matrix4d& pose, double tau, const Image& reference,
                      const Image& rendered) override;

  const std::vector<std::pair<Eigen::Matrix4d, Image>>& views() const { return views_; }

 private:
  std::vector<std::pair<Eigen::Matrix4d, Image>> views_;
  double weight_;
};

/// Out-of-process critic spoken to over stdin/stdout of a spawned subprocess.
/// Every message is a little-endian u32 byte length followed by the payload.
/// Request payload: pose as 16 row-major f32, tau f32, height u32, width u32,
/// reference [h,w,3] f32, rendered [h,w,3] f32. Response payload: gradient
/// [h,w,3] f32, weight f32.
class PipePrior : public PriorProvider {
 public:
  explicit PipePrior(std::vector<std::string> command);
  ~PipePrior() override;

  PipePrior(const PipePrior&) = delete;
  PipePrior& operator=(const PipePrior&) = delete;

  PriorResponse query(const Eigen::Matrix4d& pose, double tau, const Image& reference,
                      const Image& rendered) override;

 private:
  void send(const std::vector<unsigned char>& payload);
  std::vector<unsigned char> receive();

  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
};

}  // namespace gmjo::opt
