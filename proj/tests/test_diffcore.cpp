// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "gmjo/diff/adamw.hpp"
#include "gmjo/diff/fd_check.hpp"
#include "gmjo/diff/ops.hpp"
#include "gmjo/diff/tensor.hpp"
#include "gmjo/util.hpp"

using namespace gmjo;
using namespace gmjo::diff;

namespace {

Tensor param(std::vector<int> shape, std::vector<double> v) {
  return Tensor::leaf(std::move(shape), std::move(v), true);
}

std::vector<double> randv(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("square function gradient") {
  Tensor x = param({1}, {3.0});
  Tensor y = x * x;
  backward(y);
  CHECK(y.item() == doctest::Approx(9.0));
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("sum gradient is all ones") {
  Tensor x = param({3}, {1.0, -2.0, 5.0});
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == doctest::Approx(1.0));
}

TEST_CASE("multi-path accumulation") {
  // z = x*y + x, dz/dx = y + 1, dz/dy = x
  Tensor x = param({1}, {2.0});
  Tensor y = param({1}, {5.0});
  backward(x * y + x);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
  CHECK(y.grad()[0] == doctest::Approx(2.0));
}

TEST_CASE("same tensor used twice") {
  Tensor x = param({2}, {3.0, -1.0});
  backward(sum(x * x));
  CHECK(x.grad()[0] == doctest::Approx(6.0));
  CHECK(x.grad()[1] == doctest::Approx(-2.0));
}

TEST_CASE("scalar broadcast both directions") {
  Tensor x = param({3}, {1.0, 2.0, 3.0});
  Tensor s = param({1}, {2.0});
  backward(sum(x * s) + sum(s * x));
  CHECK(s.grad()[0] == doctest::Approx(12.0));
  CHECK(x.grad()[0] == doctest::Approx(4.0));
}

TEST_CASE("elementwise op gradients against finite differences") {
  Rng rng(7);
  auto fns = std::vector<std::pair<const char*, ScalarFn>>{
      {"exp", [](const std::vector<Tensor>& p) { return sum(exp(p[0])); }},
      {"log", [](const std::vector<Tensor>& p) { return sum(log(clamp_min(p[0], 0.05) + 1.5)); }},
      {"sqrt", [](const std::vector<Tensor>& p) { return sum(sqrt(p[0] + 2.0)); }},
      {"tanh", [](const std::vector<Tensor>& p) { return sum(tanh(p[0])); }},
      {"sigmoid", [](const std::vector<Tensor>& p) { return sum(sigmoid(p[0])); }},
      {"div", [](const std::vector<Tensor>& p) { return sum(div(p[0], p[0] + 3.0)); }},
      {"softmax",
       [](const std::vector<Tensor>& p) {
         Tensor sm = softmax_rows(reshape(p[0], {2, 3}));
         return sum(sm * sm);
       }},
  };
  for (auto& [name, fn] : fns) {
    CAPTURE(name);
    std::vector<Tensor> params{param({6}, randv(rng, 6))};
    FdReport rep = finite_diff_check(fn, params);
    CHECK_MESSAGE(rep.ok(), name, " max rel err ", rep.max_rel_err);
  }
}

TEST_CASE("matmul and add_rowvec gradients") {
  Rng rng(11);
  std::vector<Tensor> params{param({3, 4}, randv(rng, 12)), param({4, 2}, randv(rng, 8)),
                             param({2}, randv(rng, 2))};
  ScalarFn f = [](const std::vector<Tensor>& p) {
    Tensor y = add_rowvec(matmul(p[0], p[1]), p[2]);
    return sum(y * y);
  };
  FdReport rep = finite_diff_check(f, params);
  CHECK_MESSAGE(rep.ok(), "max rel err ", rep.max_rel_err);
}

TEST_CASE("row ops gradients") {
  Rng rng(13);
  SUBCASE("rows_normalize") {
    std::vector<Tensor> params{param({3, 4}, randv(rng, 12, 0.5, 1.5))};
    ScalarFn f = [](const std::vector<Tensor>& p) {
      Tensor y = rows_normalize(p[0]);
      return sum(y * y * y);
    };
    CHECK(finite_diff_check(f, params).ok());
  }
  SUBCASE("qmul_rows") {
    std::vector<Tensor> params{param({2, 4}, randv(rng, 8)), param({2, 4}, randv(rng, 8))};
    ScalarFn f = [](const std::vector<Tensor>& p) {
      Tensor y = qmul_rows(p[0], p[1]);
      return sum(y * y);
    };
    CHECK(finite_diff_check(f, params).ok());
  }
  SUBCASE("rows_dot") {
    std::vector<Tensor> params{param({3, 3}, randv(rng, 9)), param({3, 3}, randv(rng, 9))};
    ScalarFn f = [](const std::vector<Tensor>& p) { return sum(exp(rows_dot(p[0], p[1]))); };
    CHECK(finite_diff_check(f, params).ok());
  }
}

TEST_CASE("quaternion identity times q is exactly q") {
  Tensor id = Tensor::constant({2, 4}, {1, 0, 0, 0, 1, 0, 0, 0});
  Tensor q = Tensor::constant({2, 4}, {0.3, -0.4, 0.5, 0.7, 0.1, 0.2, -0.9, 0.4});
  Tensor out = qmul_rows(id, q);
  for (int i = 0; i < 8; ++i) CHECK(out.val()[std::size_t(i)] == q.val()[std::size_t(i)]);
}

TEST_CASE("layout op gradients") {
  Rng rng(17);
  std::vector<Tensor> params{param({2, 3}, randv(rng, 6)), param({4}, randv(rng, 4))};
  ScalarFn f = [](const std::vector<Tensor>& p) {
    Tensor c = concat_flat({reshape(p[0], {6}), p[1]}, {10});
    Tensor s = slice_flat(c, 2, {5});
    Tensor g = gather_rows(reshape(s, {5, 1}), {4, 0, 0, 2});
    return sum(g * g) + mean(c);
  };
  CHECK(finite_diff_check(f, params).ok());
}

TEST_CASE("bilinear_sample exact at nodes and fd in between") {
  Tensor grid = param({2, 3, 2}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  SUBCASE("node exactness") {
    Tensor y = bilinear_sample(grid, {1.0, 2.0});
    CHECK(y.val()[0] == 10.0);
    CHECK(y.val()[1] == 11.0);
  }
  SUBCASE("midpoint") {
    Tensor y = bilinear_sample(grid, {0.5, 0.5});
    // mean of the four surrounding corners, per channel
    CHECK(y.val()[0] == doctest::Approx((0 + 2 + 6 + 8) / 4.0));
    CHECK(y.val()[1] == doctest::Approx((1 + 3 + 7 + 9) / 4.0));
  }
  SUBCASE("clamped outside the domain") {
    Tensor y = bilinear_sample(grid, {-5.0, 99.0});
    CHECK(y.val()[0] == 4.0);
    CHECK(y.val()[1] == 5.0);
  }
  SUBCASE("gradients") {
    std::vector<Tensor> params{grid};
    ScalarFn f = [](const std::vector<Tensor>& p) {
      Tensor y = bilinear_sample(p[0], {0.3, 1.7, 0.9, 0.1});
      return sum(y * y);
    };
    CHECK(finite_diff_check(f, params).ok());
  }
}

TEST_CASE("blur_separable is self-adjoint") {
  Rng rng(23);
  const std::vector<double> kernel{0.25, 0.5, 0.25};
  Tensor a = Tensor::constant({4, 5, 2}, randv(rng, 40));
  Tensor b = Tensor::constant({4, 5, 2}, randv(rng, 40));
  const double lhs = dot(blur_separable(a, kernel), b).item();
  const double rhs = dot(a, blur_separable(b, kernel)).item();
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));

  std::vector<Tensor> params{param({4, 5, 2}, randv(rng, 40))};
  ScalarFn f = [&kernel](const std::vector<Tensor>& p) {
    Tensor y = blur_separable(p[0], kernel);
    return sum(y * y);
  };
  CHECK(finite_diff_check(f, params).ok());
}

TEST_CASE("masked_median") {
  SUBCASE("odd count routes to the argmedian") {
    Tensor x = param({5}, {5.0, 1.0, 3.0, 9.0, 7.0});
    Tensor m = masked_median(x, {1, 1, 1, 1, 1});
    CHECK(m.item() == 5.0);
    backward(m);
    CHECK(x.grad() == std::vector<double>{1, 0, 0, 0, 0});
  }
  SUBCASE("even count splits 0.5/0.5") {
    Tensor x = param({4}, {4.0, 1.0, 3.0, 9.0});
    Tensor m = masked_median(x, {1, 1, 1, 1});
    CHECK(m.item() == 3.5);
    backward(m);
    CHECK(x.grad() == std::vector<double>{0.5, 0, 0.5, 0});
  }
  SUBCASE("mask excludes entries") {
    Tensor x = param({4}, {4.0, 1.0, 3.0, 9.0});
    CHECK(masked_median(x, {0, 1, 0, 1}).item() == 5.0);
    CHECK_THROWS(masked_median(x, {0, 0, 0, 0}));
  }
}

TEST_CASE("non-finite forward value names the op") {
  Tensor x = Tensor::constant({1}, {-2.0});
  CHECK_THROWS_WITH_AS(log(x), doctest::Contains("log"), std::runtime_error);
}

TEST_CASE("value_and_grad clears and returns grads") {
  Tensor x = param({2}, {0.3, 0.4});
  ScalarFn f = [](const std::vector<Tensor>& p) { return sum(sin(p[0])); };
  ValueGrad vg = value_and_grad(f, {x});
  CHECK(vg.value == doctest::Approx(std::sin(0.3) + std::sin(0.4)));
  CHECK(vg.grads[0][0] == doctest::Approx(std::cos(0.3)));
  CHECK(vg.grads[0][1] == doctest::Approx(std::cos(0.4)));
  CHECK(x.grad()[0] == 0.0);  // cleared afterwards
}

TEST_CASE("finite_diff_check on smooth function is tight") {
  Tensor x = param({1}, {0.3});
  ScalarFn f = [](const std::vector<Tensor>& p) { return sin(p[0]); };
  FdOptions opt;
  opt.tol = 1e-6;
  FdReport rep = finite_diff_check(f, {x}, opt);
  CHECK(rep.ok());
  CHECK(rep.max_rel_err <= 1e-6);
}

TEST_CASE("finite_diff_check flags a kink as non-differentiable") {
  Tensor x = param({1}, {0.0});
  ScalarFn f = [](const std::vector<Tensor>& p) { return sum(clamp_min(p[0], 0.0)); };
  FdReport rep = finite_diff_check(f, {x});
  REQUIRE(rep.issues.size() == 1);
  CHECK(rep.issues[0].non_differentiable);
  CHECK(rep.ok());  // a kink is not a wrong gradient
}

TEST_CASE("finite_diff_check catches a wrong gradient") {
  // A deliberately broken op: forward x*x, backward claims slope 1.
  Tensor x = param({1}, {1.5});
  ScalarFn f = [](const std::vector<Tensor>& p) {
    const double v = p[0].val()[0];
    return make_op("broken_square", {1}, {p[0]}, {v * v}, [](Node& self) {
      self.parents[0].grad()[0] += self.grad[0];
    });
  };
  FdReport rep = finite_diff_check(f, {x});
  REQUIRE_FALSE(rep.ok());
  CHECK_FALSE(rep.issues[0].non_differentiable);
}

TEST_CASE("adamw first step with plain gradient") {
  Tensor x = param({1}, {1.0});
  AdamW opt;
  const int g = opt.add_group("main", 0.01);
  opt.add_param(g, x);
  x.grad()[0] = 0.5;
  opt.step();
  CHECK(x.val()[0] == doctest::Approx(0.99).epsilon(1e-7));
  CHECK(x.grad()[0] == 0.0);
  CHECK(opt.step_count() == 1);
}

TEST_CASE("adamw decoupled weight decay with zero gradient") {
  Tensor x = param({1}, {1.0});
  AdamW opt;
  const int g = opt.add_group("main", 0.01, 0.1);
  opt.add_param(g, x);
  opt.step();
  CHECK(x.val()[0] == doctest::Approx(0.999).epsilon(1e-12));
}

TEST_CASE("adamw identity cases") {
  SUBCASE("zero gradient, zero decay") {
    Tensor x = param({3}, {1.0, -2.0, 0.5});
    AdamW opt;
    opt.add_param(opt.add_group("main", 0.01), x);
    opt.step();
    CHECK(x.val() == std::vector<double>{1.0, -2.0, 0.5});
  }
  SUBCASE("zero learning rate") {
    Tensor x = param({2}, {1.0, 2.0});
    AdamW opt;
    const int g = opt.add_group("main", 0.0, 0.3);
    opt.add_param(g, x);
    x.grad()[0] = 5.0;
    x.grad()[1] = -5.0;
    opt.step();
    CHECK(x.val() == std::vector<double>{1.0, 2.0});
  }
}

TEST_CASE("adamw replace_param carries moments by row") {
  Tensor x = param({2, 2}, {1.0, 1.0, 1.0, 1.0});
  AdamW opt;
  const int g = opt.add_group("main", 0.1);
  opt.add_param(g, x);
  x.grad() = {1.0, 1.0, 0.0, 0.0};  // momentum builds only in row 0
  opt.step();
  const double moved = x.val()[0];
  CHECK(moved < 1.0);
  CHECK(x.val()[2] == 1.0);

  // New param: row0 <- old row0, row1 fresh, row2 <- old row1.
  Tensor y = Tensor::leaf({3, 2}, {5.0, 5.0, 5.0, 5.0, 5.0, 5.0}, true);
  opt.replace_param(x, y, {0, -1, 1});
  opt.step();  // zero gradients everywhere; only carried momentum moves rows
  CHECK(y.val()[0] < 5.0);   // inherited momentum keeps pushing
  CHECK(y.val()[2] == 5.0);  // fresh row holds still
  CHECK(y.val()[4] == 5.0);  // old row1 never had momentum

  Tensor bad = Tensor::leaf({2, 3}, std::vector<double>(6, 0.0), true);
  CHECK_THROWS(opt.replace_param(y, bad, {0, 1}));
}

TEST_CASE("leaf shape validation") {
  CHECK_THROWS(Tensor::leaf({2, 2}, {1.0, 2.0}, false));
  CHECK_THROWS(matmul(Tensor::constant({2, 2}, {1, 2, 3, 4}), Tensor::constant({3}, {1, 2, 3})));
}
