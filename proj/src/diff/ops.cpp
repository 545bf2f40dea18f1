// SPDX-License-Identifier: Apache-2.0
#include "gmjo/diff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gmjo/util.hpp"

namespace gmjo::diff {

namespace {

// Broadcast rule shared by the binary elementwise ops: a 1-element operand
// repeats; otherwise shapes must match exactly.
struct Bcast {
  std::int64_t n;            // output element count
  std::int64_t sa, sb;       // per-element strides (0 or 1)
  std::vector<int> shape;
};

Bcast bcast(const char* op, const Tensor& a, const Tensor& b) {
  const std::int64_t na = a.numel(), nb = b.numel();
  if (na == nb) {
    check(a.shape() == b.shape() || na == 1, "op '", op, "': shape mismatch");
    return {na, 1, 1, a.shape()};
  }
  if (na == 1) return {nb, 0, 1, b.shape()};
  if (nb == 1) return {na, 1, 0, a.shape()};
  fail(cat("op '", op, "': incompatible sizes ", na, " vs ", nb));
}

void axpy_bcast(std::vector<double>& dst, std::int64_t stride, const std::vector<double>& g,
                const std::vector<double>& coeff, std::int64_t coeff_stride) {
  const std::int64_t n = std::int64_t(g.size());
  if (stride == 1) {
    for (std::int64_t i = 0; i < n; ++i) dst[std::size_t(i)] += g[std::size_t(i)] * coeff[std::size_t(i * coeff_stride)];
  } else {
    double s = 0;
    for (std::int64_t i = 0; i < n; ++i) s += g[std::size_t(i)] * coeff[std::size_t(i * coeff_stride)];
    dst[0] += s;
  }
}

// Unary elementwise op with dy/dx given as a function of (x, y).
template <class Fwd, class Slope>
Tensor unary(const char* name, const Tensor& a, Fwd fwd, Slope slope) {
  const auto& x = a.val();
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  return make_op(name, a.shape(), {a}, std::move(y), [slope](Node& self) {
    const Tensor& a = self.parents[0];
    if (!a.tracked()) return;
    auto& da = a.grad();
    const auto& x = a.val();
    for (std::size_t i = 0; i < x.size(); ++i) da[i] += self.grad[i] * slope(x[i], self.val[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  Bcast bc = bcast("add", a, b);
  const auto &av = a.val(), &bv = b.val();
  std::vector<double> y(std::size_t(bc.n));
  for (std::int64_t i = 0; i < bc.n; ++i)
    y[std::size_t(i)] = av[std::size_t(i * bc.sa)] + bv[std::size_t(i * bc.sb)];
  return make_op("add", bc.shape, {a, b}, std::move(y), [bc](Node& self) {
    const Tensor &a = self.parents[0], &b = self.parents[1];
    if (a.tracked()) {
      auto& da = a.grad();
      if (bc.sa == 1)
        for (std::size_t i = 0; i < self.grad.size(); ++i) da[i] += self.grad[i];
      else
        da[0] += std::accumulate(self.grad.begin(), self.grad.end(), 0.0);
    }
    if (b.tracked()) {
      auto& db = b.grad();
      if (bc.sb == 1)
        for (std::size_t i = 0; i < self.grad.size(); ++i) db[i] += self.grad[i];
      else
        db[0] += std::accumulate(self.grad.begin(), self.grad.end(), 0.0);
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, neg(b)); }
Tensor sub(double a, const Tensor& b) { return add(neg(b), a); }

Tensor mul(const Tensor& a, const Tensor& b) {
  Bcast bc = bcast("mul", a, b);
  const auto &av = a.val(), &bv = b.val();
  std::vector<double> y(std::size_t(bc.n));
  for (std::int64_t i = 0; i < bc.n; ++i)
    y[std::size_t(i)] = av[std::size_t(i * bc.sa)] * bv[std::size_t(i * bc.sb)];
  return make_op("mul", bc.shape, {a, b}, std::move(y), [bc](Node& self) {
    const Tensor &a = self.parents[0], &b = self.parents[1];
    if (a.tracked()) axpy_bcast(a.grad(), bc.sa, self.grad, b.val(), bc.sb);
    if (b.tracked()) axpy_bcast(b.grad(), bc.sb, self.grad, a.val(), bc.sa);
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  Bcast bc = bcast("div", a, b);
  const auto &av = a.val(), &bv = b.val();
  std::vector<double> y(std::size_t(bc.n));
  for (std::int64_t i = 0; i < bc.n; ++i)
    y[std::size_t(i)] = av[std::size_t(i * bc.sa)] / bv[std::size_t(i * bc.sb)];
  return make_op("div", bc.shape, {a, b}, std::move(y), [bc](Node& self) {
    const Tensor &a = self.parents[0], &b = self.parents[1];
    const auto &av = a.val(), &bv = b.val();
    if (a.tracked()) {
      auto& da = a.grad();
      for (std::int64_t i = 0; i < bc.n; ++i) {
        const double d = self.grad[std::size_t(i)] / bv[std::size_t(i * bc.sb)];
        da[std::size_t(i * bc.sa)] += d;
      }
    }
    if (b.tracked()) {
      auto& db = b.grad();
      for (std::int64_t i = 0; i < bc.n; ++i) {
        const double bi = bv[std::size_t(i * bc.sb)];
        db[std::size_t(i * bc.sb)] -= self.grad[std::size_t(i)] * av[std::size_t(i * bc.sa)] / (bi * bi);
      }
    }
  });
}

Tensor add(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
Tensor mul(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }

Tensor neg(const Tensor& a) {
  return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor sqrt(const Tensor& a) {
  return unary("sqrt", a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Tensor tanh(const Tensor& a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary("sigmoid", a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
               [](double, double y) { return y * (1.0 - y); });
}

Tensor sin(const Tensor& a) {
  return unary("sin", a, [](double x) { return std::sin(x); },
               [](double x, double) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
  return unary("cos", a, [](double x) { return std::cos(x); },
               [](double x, double) { return -std::sin(x); });
}

Tensor abs(const Tensor& a) {
  return unary("abs", a, [](double x) { return std::abs(x); },
               [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

Tensor clamp01(const Tensor& a) {
  return unary("clamp01", a, [](double x) { return std::clamp(x, 0.0, 1.0); },
               [](double x, double) { return (x > 0.0 && x < 1.0) ? 1.0 : 0.0; });
}

Tensor clamp_min(const Tensor& a, double lo) {
  return unary("clamp_min", a, [lo](double x) { return std::max(x, lo); },
               [lo](double x, double) { return x > lo ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& a) {
  const double s = std::accumulate(a.val().begin(), a.val().end(), 0.0);
  return make_op("sum", {1}, {a}, {s}, [](Node& self) {
    const Tensor& a = self.parents[0];
    if (!a.tracked()) return;
    auto& da = a.grad();
    const double g = self.grad[0];
    for (double& d : da) d += g;
  });
}

Tensor mean(const Tensor& a) {
  check(a.numel() > 0, "mean of empty tensor");
  return mul(sum(a), 1.0 / double(a.numel()));
}

Tensor dot(const Tensor& a, const Tensor& b) {
  check(a.numel() == b.numel(), "dot: size mismatch");
  const auto &av = a.val(), &bv = b.val();
  double s = 0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  return make_op("dot", {1}, {a, b}, {s}, [](Node& self) {
    const Tensor &a = self.parents[0], &b = self.parents[1];
    const double g = self.grad[0];
    if (a.tracked()) {
      auto& da = a.grad();
      const auto& bv = b.val();
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += g * bv[i];
    }
    if (b.tracked()) {
      auto& db = b.grad();
      const auto& av = a.val();
      for (std::size_t i = 0; i < db.size(); ++i) db[i] += g * av[i];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  check(a.shape().size() == 2 && b.shape().size() == 2 && a.dim(1) == b.dim(0),
        "matmul: needs [m,k] x [k,n]");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const double *A = a.val().data(), *B = b.val().data();
  std::vector<double> y(std::size_t(m) * std::size_t(n), 0.0);
  for (int i = 0; i < m; ++i) {
    double* yi = y.data() + std::size_t(i) * n;
    const double* ai = A + std::size_t(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = ai[p];
      const double* bp = B + std::size_t(p) * n;
      for (int j = 0; j < n; ++j) yi[j] += av * bp[j];
    }
  }
  return make_op("matmul", {m, n}, {a, b}, std::move(y), [m, k, n](Node& self) {
    const Tensor &a = self.parents[0], &b = self.parents[1];
    const double* G = self.grad.data();
    if (a.tracked()) {
      double* dA = a.grad().data();
      const double* B = b.val().data();
      for (int i = 0; i < m; ++i) {
        const double* gi = G + std::size_t(i) * n;
        double* dai = dA + std::size_t(i) * k;
        for (int p = 0; p < k; ++p) {
          const double* bp = B + std::size_t(p) * n;
          double s = 0;
          for (int j = 0; j < n; ++j) s += gi[j] * bp[j];
          dai[p] += s;
        }
      }
    }
    if (b.tracked()) {
      double* dB = b.grad().data();
      const double* A = a.val().data();
      for (int i = 0; i < m; ++i) {
        const double* gi = G + std::size_t(i) * n;
        const double* ai = A + std::size_t(i) * k;
        for (int p = 0; p < k; ++p) {
          const double av = ai[p];
          double* dbp = dB + std::size_t(p) * n;
          for (int j = 0; j < n; ++j) dbp[j] += av * gi[j];
        }
      }
    }
  });
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  check(x.shape().size() == 2 && v.numel() == x.dim(1), "add_rowvec: [n,c] + [c]");
  const int n = x.dim(0), c = x.dim(1);
  std::vector<double> y(x.val());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j) y[std::size_t(i) * c + j] += v.val()[std::size_t(j)];
  return make_op("add_rowvec", x.shape(), {x, v}, std::move(y), [n, c](Node& self) {
    const Tensor &x = self.parents[0], &v = self.parents[1];
    if (x.tracked()) {
      auto& dx = x.grad();
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
    }
    if (v.tracked()) {
      auto& dv = v.grad();
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) dv[std::size_t(j)] += self.grad[std::size_t(i) * c + j];
    }
  });
}

Tensor softmax_rows(const Tensor& x) {
  check(x.shape().size() == 2, "softmax_rows: needs [n,c]");
  const int n = x.dim(0), c = x.dim(1);
  std::vector<double> y(x.val().size());
  for (int i = 0; i < n; ++i) {
    const double* xi = x.val().data() + std::size_t(i) * c;
    double* yi = y.data() + std::size_t(i) * c;
    double mx = xi[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, xi[j]);
    double s = 0;
    for (int j = 0; j < c; ++j) s += (yi[j] = std::exp(xi[j] - mx));
    for (int j = 0; j < c; ++j) yi[j] /= s;
  }
  return make_op("softmax_rows", x.shape(), {x}, std::move(y), [n, c](Node& self) {
    const Tensor& x = self.parents[0];
    if (!x.tracked()) return;
    auto& dx = x.grad();
    for (int i = 0; i < n; ++i) {
      const double* yi = self.val.data() + std::size_t(i) * c;
      const double* gi = self.grad.data() + std::size_t(i) * c;
      double gy = 0;
      for (int j = 0; j < c; ++j) gy += gi[j] * yi[j];
      for (int j = 0; j < c; ++j) dx[std::size_t(i) * c + j] += yi[j] * (gi[j] - gy);
    }
  });
}

Tensor rows_normalize(const Tensor& x) {
  check(x.shape().size() == 2, "rows_normalize: needs [n,c]");
  const int n = x.dim(0), c = x.dim(1);
  std::vector<double> y(x.val().size()), rnorm(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double* xi = x.val().data() + std::size_t(i) * c;
    double s = 0;
    for (int j = 0; j < c; ++j) s += xi[j] * xi[j];
    check(s > 0, "rows_normalize: zero row ", i);
    const double r = std::sqrt(s);
    rnorm[std::size_t(i)] = r;
    for (int j = 0; j < c; ++j) y[std::size_t(i) * c + j] = xi[j] / r;
  }
  return make_op("rows_normalize", x.shape(), {x}, std::move(y),
                 [n, c, rnorm = std::move(rnorm)](Node& self) {
    const Tensor& x = self.parents[0];
    if (!x.tracked()) return;
    auto& dx = x.grad();
    for (int i = 0; i < n; ++i) {
      const double* yi = self.val.data() + std::size_t(i) * c;
      const double* gi = self.grad.data() + std::size_t(i) * c;
      double gy = 0;
      for (int j = 0; j < c; ++j) gy += gi[j] * yi[j];
      for (int j = 0; j < c; ++j)
        dx[std::size_t(i) * c + j] += (gi[j] - yi[j] * gy) / rnorm[std::size_t(i)];
    }
  });
}

Tensor rows_dot(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape() && a.shape().size() == 2, "rows_dot: matching [n,c]");
  const int n = a.dim(0), c = a.dim(1);
  std::vector<double> y(std::size_t(n), 0.0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < c; ++j)
      y[std::size_t(i)] += a.val()[std::size_t(i) * c + j] * b.val()[std::size_t(i) * c + j];
  return make_op("rows_dot", {n}, {a, b}, std::move(y), [n, c](Node& self) {
    const Tensor &a = self.parents[0], &b = self.parents[1];
    for (int i = 0; i < n; ++i) {
      const double g = self.grad[std::size_t(i)];
      for (int j = 0; j < c; ++j) {
        const std::size_t at = std::size_t(i) * c + j;
        if (a.tracked()) a.grad()[at] += g * b.val()[at];
        if (b.tracked()) b.grad()[at] += g * a.val()[at];
      }
    }
  });
}

Tensor qmul_rows(const Tensor& a, const Tensor& b) {
  check(a.shape() == b.shape() && a.shape().size() == 2 && a.dim(1) == 4,
        "qmul_rows: matching [n,4]");
  const int n = a.dim(0);
  std::vector<double> y(a.val().size());
  for (int i = 0; i < n; ++i) {
    const double* p = a.val().data() + std::size_t(i) * 4;
    const double* q = b.val().data() + std::size_t(i) * 4;
    double* o = y.data() + std::size_t(i) * 4;
    o[0] = p[0] * q[0] - p[1] * q[1] - p[2] * q[2] - p[3] * q[3];
    o[1] = p[0] * q[1] + p[1] * q[0] + p[2] * q[3] - p[3] * q[2];
    o[2] = p[0] * q[2] - p[1] * q[3] + p[2] * q[0] + p[3] * q[1];
    o[3] = p[0] * q[3] + p[1] * q[2] - p[2] * q[1] + p[3] * q[0];
  }
  return make_op("qmul_rows", a.shape(), {a, b}, std::move(y), [n](Node& self) {
    const Tensor &a = self.parents[0], &b = self.parents[1];
    for (int i = 0; i < n; ++i) {
      const double* g = self.grad.data() + std::size_t(i) * 4;
      const double* p = a.val().data() + std::size_t(i) * 4;
      const double* q = b.val().data() + std::size_t(i) * 4;
      if (a.tracked()) {
        double* da = a.grad().data() + std::size_t(i) * 4;
        da[0] += g[0] * q[0] + g[1] * q[1] + g[2] * q[2] + g[3] * q[3];
        da[1] += -g[0] * q[1] + g[1] * q[0] - g[2] * q[3] + g[3] * q[2];
        da[2] += -g[0] * q[2] + g[1] * q[3] + g[2] * q[0] - g[3] * q[1];
        da[3] += -g[0] * q[3] - g[1] * q[2] + g[2] * q[1] + g[3] * q[0];
      }
      if (b.tracked()) {
        double* db = b.grad().data() + std::size_t(i) * 4;
        db[0] += g[0] * p[0] + g[1] * p[1] + g[2] * p[2] + g[3] * p[3];
        db[1] += -g[0] * p[1] + g[1] * p[0] + g[2] * p[3] - g[3] * p[2];
        db[2] += -g[0] * p[2] - g[1] * p[3] + g[2] * p[0] + g[3] * p[1];
        db[3] += -g[0] * p[3] + g[1] * p[2] - g[2] * p[1] + g[3] * p[0];
      }
    }
  });
}

Tensor gather_rows(const Tensor& x, std::vector<int> idx) {
  check(x.shape().size() == 2, "gather_rows: needs [n,c]");
  const int n = x.dim(0), c = x.dim(1);
  const int m = int(idx.size());
  std::vector<double> y(idx.size() * std::size_t(c));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    check(idx[i] >= 0 && idx[i] < n, "gather_rows: index ", idx[i], " out of range");
    std::copy_n(x.val().data() + std::size_t(idx[i]) * c, c, y.data() + i * std::size_t(c));
  }
  return make_op("gather_rows", {m, c}, {x}, std::move(y),
                 [c, idx = std::move(idx)](Node& self) {
    const Tensor& x = self.parents[0];
    if (!x.tracked()) return;
    auto& dx = x.grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (int j = 0; j < c; ++j)
        dx[std::size_t(idx[i]) * c + j] += self.grad[i * std::size_t(c) + j];
  });
}

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  check(n == x.numel(), "reshape: element count mismatch");
  return make_op("reshape", std::move(shape), {x}, x.val(), [](Node& self) {
    const Tensor& x = self.parents[0];
    if (!x.tracked()) return;
    auto& dx = x.grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += self.grad[i];
  });
}

Tensor slice_flat(const Tensor& x, std::int64_t offset, std::vector<int> shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  check(offset >= 0 && offset + n <= x.numel(), "slice_flat: out of range");
  std::vector<double> y(x.val().begin() + offset, x.val().begin() + offset + n);
  return make_op("slice_flat", std::move(shape), {x}, std::move(y), [offset](Node& self) {
    const Tensor& x = self.parents[0];
    if (!x.tracked()) return;
    auto& dx = x.grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) dx[std::size_t(offset) + i] += self.grad[i];
  });
}

Tensor concat_flat(const std::vector<Tensor>& parts, std::vector<int> shape) {
  check(!parts.empty(), "concat_flat: empty input");
  std::vector<double> y;
  std::int64_t total = 0;
  for (const Tensor& p : parts) total += p.numel();
  y.reserve(std::size_t(total));
  for (const Tensor& p : parts) y.insert(y.end(), p.val().begin(), p.val().end());
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  check(n == total, "concat_flat: shape/element count mismatch");
  return make_op("concat_flat", std::move(shape), parts, std::move(y), [](Node& self) {
    std::size_t at = 0;
    for (const Tensor& p : self.parents) {
      const std::size_t n = p.val().size();
      if (p.tracked()) {
        auto& dp = p.grad();
        for (std::size_t i = 0; i < n; ++i) dp[i] += self.grad[at + i];
      }
      at += n;
    }
  });
}

Tensor bilinear_sample(const Tensor& grid, std::vector<double> rowcol) {
  check(grid.shape().size() == 3, "bilinear_sample: grid must be [h,w,c]");
  check(rowcol.size() % 2 == 0, "bilinear_sample: coordinate list must be pairs");
  const int h = grid.dim(0), w = grid.dim(1), c = grid.dim(2);
  const int n = int(rowcol.size() / 2);
  // Corner indices and weights are fixed by the coordinates; precompute once
  // and reuse in backward.
  struct Tap { int r0, c0; double fr, fc; };
  std::vector<Tap> taps(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double r = std::clamp(rowcol[std::size_t(i) * 2], 0.0, double(h - 1));
    double col = std::clamp(rowcol[std::size_t(i) * 2 + 1], 0.0, double(w - 1));
    int r0 = std::min(int(std::floor(r)), std::max(h - 2, 0));
    int c0 = std::min(int(std::floor(col)), std::max(w - 2, 0));
    taps[std::size_t(i)] = {r0, c0, r - r0, col - c0};
  }
  const double* g = grid.val().data();
  std::vector<double> y(std::size_t(n) * c);
  auto corner = [&](int r, int cc) { return g + (std::size_t(r) * w + cc) * c; };
  for (int i = 0; i < n; ++i) {
    const Tap& t = taps[std::size_t(i)];
    const int r1 = std::min(t.r0 + 1, h - 1), c1 = std::min(t.c0 + 1, w - 1);
    const double w00 = (1 - t.fr) * (1 - t.fc), w01 = (1 - t.fr) * t.fc;
    const double w10 = t.fr * (1 - t.fc), w11 = t.fr * t.fc;
    const double *g00 = corner(t.r0, t.c0), *g01 = corner(t.r0, c1);
    const double *g10 = corner(r1, t.c0), *g11 = corner(r1, c1);
    double* yi = y.data() + std::size_t(i) * c;
    for (int j = 0; j < c; ++j) yi[j] = w00 * g00[j] + w01 * g01[j] + w10 * g10[j] + w11 * g11[j];
  }
  return make_op("bilinear_sample", {n, c}, {grid}, std::move(y),
                 [h, w, c, n, taps = std::move(taps)](Node& self) {
    const Tensor& grid = self.parents[0];
    if (!grid.tracked()) return;
    double* dg = grid.grad().data();
    auto corner = [&](int r, int cc) { return dg + (std::size_t(r) * w + cc) * c; };
    for (int i = 0; i < n; ++i) {
      const Tap& t = taps[std::size_t(i)];
      const int r1 = std::min(t.r0 + 1, h - 1), c1 = std::min(t.c0 + 1, w - 1);
      const double w00 = (1 - t.fr) * (1 - t.fc), w01 = (1 - t.fr) * t.fc;
      const double w10 = t.fr * (1 - t.fc), w11 = t.fr * t.fc;
      double *g00 = corner(t.r0, t.c0), *g01 = corner(t.r0, c1);
      double *g10 = corner(r1, t.c0), *g11 = corner(r1, c1);
      const double* gi = self.grad.data() + std::size_t(i) * c;
      for (int j = 0; j < c; ++j) {
        g00[j] += w00 * gi[j];
        g01[j] += w01 * gi[j];
        g10[j] += w10 * gi[j];
        g11[j] += w11 * gi[j];
      }
    }
  });
}

namespace {

void blur_values(int h, int w, int c, const std::vector<double>& kernel,
                 const double* src, double* dst, double* scratch) {
  const int rad = int(kernel.size()) / 2;
  // Horizontal pass into scratch.
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < w; ++col) {
      for (int ch = 0; ch < c; ++ch) {
        double s = 0;
        for (int k = -rad; k <= rad; ++k) {
          const int cc = col + k;
          if (cc < 0 || cc >= w) continue;
          s += kernel[std::size_t(k + rad)] * src[(std::size_t(r) * w + cc) * c + ch];
        }
        scratch[(std::size_t(r) * w + col) * c + ch] = s;
      }
    }
  }
  // Vertical pass into dst.
  for (int r = 0; r < h; ++r) {
    for (int col = 0; col < w; ++col) {
      for (int ch = 0; ch < c; ++ch) {
        double s = 0;
        for (int k = -rad; k <= rad; ++k) {
          const int rr = r + k;
          if (rr < 0 || rr >= h) continue;
          s += kernel[std::size_t(k + rad)] * scratch[(std::size_t(rr) * w + col) * c + ch];
        }
        dst[(std::size_t(r) * w + col) * c + ch] = s;
      }
    }
  }
}

}  // namespace

Tensor blur_separable(const Tensor& img, std::vector<double> kernel) {
  check(img.shape().size() == 3, "blur_separable: image must be [h,w,c]");
  check(kernel.size() % 2 == 1, "blur_separable: kernel length must be odd");
  for (std::size_t i = 0; i < kernel.size() / 2; ++i)
    check(kernel[i] == kernel[kernel.size() - 1 - i], "blur_separable: kernel must be symmetric");
  const int h = img.dim(0), w = img.dim(1), c = img.dim(2);
  std::vector<double> y(img.val().size()), scratch(img.val().size());
  blur_values(h, w, c, kernel, img.val().data(), y.data(), scratch.data());
  return make_op("blur_separable", img.shape(), {img}, std::move(y),
                 [h, w, c, kernel = std::move(kernel)](Node& self) {
    const Tensor& img = self.parents[0];
    if (!img.tracked()) return;
    // Self-adjoint: the adjoint of zero-padded symmetric correlation is the
    // same correlation.
    std::vector<double> dsrc(self.grad.size()), scratch(self.grad.size());
    blur_values(h, w, c, kernel, self.grad.data(), dsrc.data(), scratch.data());
    auto& dx = img.grad();
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dsrc[i];
  });
}

Tensor masked_median(const Tensor& x, const std::vector<std::uint8_t>& mask) {
  check(std::int64_t(mask.size()) == x.numel(), "masked_median: mask size mismatch");
  std::vector<std::pair<double, std::size_t>> sel;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) sel.emplace_back(x.val()[i], i);
  check(!sel.empty(), "masked_median: empty mask");
  std::sort(sel.begin(), sel.end());
  double v;
  std::vector<std::pair<std::size_t, double>> routes;  // (source index, weight)
  if (sel.size() % 2 == 1) {
    const auto& m = sel[sel.size() / 2];
    v = m.first;
    routes = {{m.second, 1.0}};
  } else {
    const auto &a = sel[sel.size() / 2 - 1], &b = sel[sel.size() / 2];
    v = 0.5 * (a.first + b.first);
    routes = {{a.second, 0.5}, {b.second, 0.5}};
  }
  return make_op("masked_median", {1}, {x}, {v}, [routes = std::move(routes)](Node& self) {
    const Tensor& x = self.parents[0];
    if (!x.tracked()) return;
    auto& dx = x.grad();
    for (const auto& [i, wgt] : routes) dx[i] += wgt * self.grad[0];
  });
}

}  // namespace gmjo::diff
