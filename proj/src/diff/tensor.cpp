// SPDX-License-Identifier: Apache-2.0
#include "gmjo/diff/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

#include "gmjo/util.hpp"

namespace gmjo::diff {

namespace {

std::atomic<std::uint64_t> g_next_id{1};
bool g_finite_checks = true;

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) n *= d;
  return n;
}

void check_finite(const char* op, const std::vector<double>& v) {
  if (!g_finite_checks) return;
  for (double x : v)
    if (!std::isfinite(x)) fail(cat("non-finite value produced by op '", op, "'"));
}

}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks() { return g_finite_checks; }

std::vector<double>& Node::grad_ref() {
  if (grad.empty()) grad.assign(val.size(), 0.0);
  return grad;
}

Tensor Tensor::leaf(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
  check(shape_numel(shape) == std::int64_t(values.size()),
        "leaf tensor: shape/value size mismatch (", shape_numel(shape), " vs ", values.size(), ")");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->val = std::move(values);
  n->id = g_next_id.fetch_add(1);
  n->requires_grad = requires_grad;
  n->tracked = requires_grad;
  check_finite("leaf", n->val);
  return Tensor(std::move(n));
}

Tensor Tensor::constant(std::vector<int> shape, std::vector<double> values) {
  return leaf(std::move(shape), std::move(values), false);
}

Tensor Tensor::scalar(double v) { return leaf({1}, {v}, false); }

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  std::vector<double> v(std::size_t(shape_numel(shape)), 0.0);
  return leaf(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::full(std::vector<int> shape, double value, bool requires_grad) {
  std::vector<double> v(std::size_t(shape_numel(shape)), value);
  return leaf(std::move(shape), std::move(v), requires_grad);
}

double Tensor::item() const {
  check(numel() == 1, "item() on tensor with ", numel(), " elements");
  return n_->val[0];
}

void Tensor::zero_grad() const {
  if (!n_->grad.empty()) std::fill(n_->grad.begin(), n_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  return constant(n_->shape, n_->val);
}

Tensor make_op(const char* op, std::vector<int> shape, std::vector<Tensor> parents,
               std::vector<double> values, std::function<void(Node&)> backprop) {
  check(shape_numel(shape) == std::int64_t(values.size()),
        "op '", op, "': shape/value size mismatch");
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->val = std::move(values);
  n->op = op;
  n->id = g_next_id.fetch_add(1);
  for (const Tensor& p : parents) {
    check(p.defined(), "op '", op, "': undefined parent");
    n->tracked = n->tracked || p.tracked();
  }
  n->parents = std::move(parents);
  if (n->tracked) n->backprop = std::move(backprop);
  check_finite(n->op, n->val);
  return Tensor(std::move(n));
}

void backward(const Tensor& root) {
  check(root.defined() && root.numel() == 1, "backward() requires a defined scalar root");

  // Collect the tracked subgraph.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<Node*> stack{root.node()};
  seen.insert(root.node());
  while (!stack.empty()) {
    Node* n = stack.back();
    stack.pop_back();
    order.push_back(n);
    for (const Tensor& p : n->parents) {
      Node* pn = p.node();
      if (pn->tracked && seen.insert(pn).second) stack.push_back(pn);
    }
  }
  std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });

  root.node()->grad_ref()[0] += 1.0;
  for (Node* n : order) {
    if (n->backprop && !n->grad.empty()) n->backprop(*n);
  }
}

}  // namespace gmjo::diff
