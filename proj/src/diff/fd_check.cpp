// SPDX-License-Identifier: Apache-2.0
#include "gmjo/diff/fd_check.hpp"

#include <algorithm>
#include <cmath>

namespace gmjo::diff {

ValueGrad value_and_grad(const ScalarFn& f, const std::vector<Tensor>& params) {
  for (const Tensor& p : params) p.zero_grad();
  Tensor out = f(params);
  check(out.defined() && out.numel() == 1, "value_and_grad: f must return a scalar");
  backward(out);
  ValueGrad vg;
  vg.value = out.item();
  vg.grads.reserve(params.size());
  for (const Tensor& p : params) {
    vg.grads.push_back(p.grad());
    p.zero_grad();
  }
  return vg;
}

namespace {

double eval_at(const ScalarFn& f, const std::vector<Tensor>& params) {
  return f(params).item();
}

struct Probe {
  double central, plus, minus;  // two-sided and the two one-sided estimates
};

Probe probe_diff(const ScalarFn& f, const std::vector<Tensor>& params, std::size_t pi,
                 std::size_t ci, double h, double f0) {
  auto& v = params[pi].val();
  const double saved = v[ci];
  v[ci] = saved + h;
  const double fp = eval_at(f, params);
  v[ci] = saved - h;
  const double fm = eval_at(f, params);
  v[ci] = saved;
  return {(fp - fm) / (2.0 * h), (fp - f0) / h, (f0 - fm) / h};
}

double rel_err(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

}  // namespace

FdReport finite_diff_check(const ScalarFn& f, const std::vector<Tensor>& params,
                           const FdOptions& opt) {
  ValueGrad vg = value_and_grad(f, params);
  FdReport rep;
  Rng rng(opt.subsample_seed);
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    const std::int64_t n = params[pi].numel();
    std::vector<std::int64_t> coords(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) coords[std::size_t(i)] = i;
    if (opt.max_coords_per_param > 0 && n > opt.max_coords_per_param) {
      rng.shuffle(coords);
      coords.resize(std::size_t(opt.max_coords_per_param));
      std::sort(coords.begin(), coords.end());
    }
    const double f0 = eval_at(f, params);
    for (std::int64_t ci : coords) {
      const double analytic = vg.grads[pi][std::size_t(ci)];
      const Probe pr = probe_diff(f, params, pi, std::size_t(ci), opt.h, f0);
      const double err = rel_err(analytic, pr.central, opt.denom_floor);
      ++rep.checked;
      if (err <= opt.tol) {
        rep.max_rel_err = std::max(rep.max_rel_err, err);
        continue;
      }
      // Distinguish a wrong gradient from a kink at the test point: one-sided
      // slopes that disagree mean f is not differentiable here.
      const bool kinked = rel_err(pr.plus, pr.minus, opt.denom_floor) > 0.1;
      FdIssue issue{int(pi), ci, analytic, pr.central, err, kinked};
      rep.issues.push_back(issue);
      if (!kinked) rep.max_rel_err = std::max(rep.max_rel_err, err);
    }
  }
  std::stable_sort(rep.issues.begin(), rep.issues.end(),
                   [](const FdIssue& a, const FdIssue& b) { return a.rel_err > b.rel_err; });
  return rep;
}

}  // namespace gmjo::diff
