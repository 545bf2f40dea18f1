// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gmjo/diff/tensor.hpp"

namespace gmjo::diff {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// AdamW with bias correction and decoupled weight decay, organized in named
/// groups so stages can give each parameter family its own learning rate.
/// step() applies every group, advances the shared step count, and zeroes the
/// gradients it consumed.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  int add_group(std::string name, double lr, double weight_decay = 0.0);
  void add_param(int group, const Tensor& p);
  void set_lr(int group, double lr);
  double lr(int group) const { return groups_[std::size_t(group)].lr; }
  int find_group(const std::string& name) const;

  void step();
  std::int64_t step_count() const { return t_; }

  /// Swaps a resized parameter in place of an old one. Row i of the new
  /// moment buffers copies from old row src_rows[i], or starts at zero when
  /// src_rows[i] < 0. Row width may differ between old and new only if both
  /// agree with their own tensors.
  void replace_param(const Tensor& old_p, const Tensor& new_p, const std::vector<int>& src_rows);

 private:
  struct Slot {
    Tensor p;
    std::vector<double> m, v;
  };
  struct Group {
    std::string name;
    double lr, weight_decay;
    std::vector<Slot> slots;
  };
  AdamWConfig cfg_;
  std::vector<Group> groups_;
  std::int64_t t_ = 0;
};

}  // namespace gmjo::diff
