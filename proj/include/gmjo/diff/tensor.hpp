// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace gmjo::diff {

class Tensor;

/// One node of the computation graph. Values and gradients are dense
/// row-major 64-bit arrays; `grad` stays empty until something flows into it.
struct Node {
  std::vector<int> shape;
  std::vector<double> val;
  std::vector<double> grad;
  std::vector<Tensor> parents;
  std::function<void(Node&)> backprop;
  const char* op = "leaf";
  std::uint64_t id = 0;
  bool requires_grad = false;  // optimizable leaf
  bool tracked = false;        // some leaf with requires_grad feeds this node

  std::vector<double>& grad_ref();  // allocates zeros on first use
};

/// Shared handle to a Node. Copies alias the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor leaf(std::vector<int> shape, std::vector<double> values, bool requires_grad);
  static Tensor constant(std::vector<int> shape, std::vector<double> values);
  static Tensor scalar(double v);
  static Tensor zeros(std::vector<int> shape, bool requires_grad);
  static Tensor full(std::vector<int> shape, double v, bool requires_grad);

  bool defined() const { return n_ != nullptr; }
  Node* node() const { return n_.get(); }

  const std::vector<int>& shape() const { return n_->shape; }
  int dim(int i) const { return n_->shape[std::size_t(i)]; }
  std::int64_t numel() const { return std::int64_t(n_->val.size()); }
  int rows() const { return n_->shape.empty() ? 1 : n_->shape[0]; }
  int row_width() const { return int(numel()) / rows(); }

  std::vector<double>& val() const { return n_->val; }
  std::vector<double>& grad() const { return n_->grad_ref(); }
  bool has_grad() const { return !n_->grad.empty(); }
  double item() const;

  bool requires_grad() const { return n_->requires_grad; }
  bool tracked() const { return n_->tracked; }
  void zero_grad() const;

  /// Same values, detached from the graph.
  Tensor detach() const;

 private:
  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}
  std::shared_ptr<Node> n_;
  friend Tensor make_op(const char* op, std::vector<int> shape, std::vector<Tensor> parents,
                        std::vector<double> values, std::function<void(Node&)> backprop);
};

/// Builds a graph node. `backprop` reads self.grad and accumulates (always +=)
/// into parents' grad_ref(); it is dropped when no parent is tracked.
/// Every op's forward output is scanned for non-finite values; offenders
/// raise an error naming the op.
Tensor make_op(const char* op, std::vector<int> shape, std::vector<Tensor> parents,
               std::vector<double> values, std::function<void(Node&)> backprop);

/// Reverse-mode sweep from a scalar root. Seeds d(root)/d(root)=1, then visits
/// reachable tracked nodes in reverse creation order (a valid topological
/// order, since parents always predate children).
void backward(const Tensor& root);

/// Forward-pass finite checks toggle (on by default).
void set_finite_checks(bool enabled);
bool finite_checks();

}  // namespace gmjo::diff
