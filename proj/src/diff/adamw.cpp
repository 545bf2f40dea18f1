// SPDX-License-Identifier: Apache-2.0
#include "gmjo/diff/adamw.hpp"

#include <cmath>

#include "gmjo/util.hpp"

namespace gmjo::diff {

int AdamW::add_group(std::string name, double lr, double weight_decay) {
  groups_.push_back({std::move(name), lr, weight_decay, {}});
  return int(groups_.size()) - 1;
}

void AdamW::add_param(int group, const Tensor& p) {
  check(p.defined() && p.requires_grad(), "optimizer params must be requires_grad leaves");
  auto& g = groups_[std::size_t(group)];
  g.slots.push_back({p, std::vector<double>(std::size_t(p.numel()), 0.0),
                     std::vector<double>(std::size_t(p.numel()), 0.0)});
}

void AdamW::set_lr(int group, double lr) { groups_[std::size_t(group)].lr = lr; }

int AdamW::find_group(const std::string& name) const {
  for (std::size_t i = 0; i < groups_.size(); ++i)
    if (groups_[i].name == name) return int(i);
  fail(cat("no optimizer group named '", name, "'"));
}

void AdamW::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
  for (auto& g : groups_) {
    for (auto& s : g.slots) {
      auto& theta = s.p.val();
      auto& grad = s.p.grad();  // allocates zeros when nothing flowed
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double gi = grad[i];
        s.m[i] = cfg_.beta1 * s.m[i] + (1.0 - cfg_.beta1) * gi;
        s.v[i] = cfg_.beta2 * s.v[i] + (1.0 - cfg_.beta2) * gi * gi;
        const double mhat = s.m[i] / bc1;
        const double vhat = s.v[i] / bc2;
        theta[i] -= g.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + g.weight_decay * theta[i]);
      }
      s.p.zero_grad();
    }
  }
}

void AdamW::replace_param(const Tensor& old_p, const Tensor& new_p,
                          const std::vector<int>& src_rows) {
  check(new_p.defined() && new_p.requires_grad(), "replacement param must be a requires_grad leaf");
  check(int(src_rows.size()) == new_p.rows(), "replace_param: one source row per new row");
  for (auto& g : groups_) {
    for (auto& s : g.slots) {
      if (s.p.node() != old_p.node()) continue;
      const int old_w = s.p.row_width(), new_w = new_p.row_width();
      check(old_w == new_w, "replace_param: row width changed (", old_w, " vs ", new_w, ")");
      std::vector<double> m(std::size_t(new_p.numel()), 0.0), v(std::size_t(new_p.numel()), 0.0);
      for (std::size_t r = 0; r < src_rows.size(); ++r) {
        const int src = src_rows[r];
        if (src < 0) continue;
        check(src < s.p.rows(), "replace_param: source row out of range");
        for (int j = 0; j < new_w; ++j) {
          m[r * std::size_t(new_w) + j] = s.m[std::size_t(src) * new_w + j];
          v[r * std::size_t(new_w) + j] = s.v[std::size_t(src) * new_w + j];
        }
      }
      s.p = new_p;
      s.m = std::move(m);
      s.v = std::move(v);
      return;
    }
  }
  fail("replace_param: old param not found in any group");
}

}  // namespace gmjo::diff
