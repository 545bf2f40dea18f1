// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "gmjo/diff/tensor.hpp"
#include "gmjo/util.hpp"

namespace gmjo::diff {

/// Scalar-valued function of a parameter list, built from graph ops.
using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

struct ValueGrad {
  double value;
  std::vector<std::vector<double>> grads;  // one per param, matching layout
};

/// Evaluates f, runs backward, returns value plus per-parameter gradients.
/// Clears parameter grads before and after, so repeated calls are independent.
ValueGrad value_and_grad(const ScalarFn& f, const std::vector<Tensor>& params);

struct FdIssue {
  int param = 0;
  std::int64_t coord = 0;
  double analytic = 0, numeric = 0, rel_err = 0;
  bool non_differentiable = false;
};

struct FdReport {
  double max_rel_err = 0;       // over differentiable coordinates
  std::int64_t checked = 0;
  std::vector<FdIssue> issues;  // coordinates failing tolerance, worst first
  // Kinked coordinates are reported but are not gradient failures.
  bool ok() const {
    for (const FdIssue& i : issues)
      if (!i.non_differentiable) return false;
    return true;
  }
};

struct FdOptions {
  double h = 1e-5;
  double tol = 1e-3;
  double denom_floor = 1e-6;       // rel err = |a-n| / max(|a|,|n|,floor)
  int max_coords_per_param = 0;    // 0 = all; otherwise deterministic subsample
  std::uint64_t subsample_seed = 0;
};

/// Central-difference check of value_and_grad against direct evaluation.
/// A failing coordinate is probed again at h/2; if the two estimates disagree
/// wildly the function is kinked there and the coordinate is reported as
/// non-differentiable instead of counted as a failure.
FdReport finite_diff_check(const ScalarFn& f, const std::vector<Tensor>& params,
                           const FdOptions& opt = {});

}  // namespace gmjo::diff
