#pragma once

#include "greenprune/tensor.hpp"

#include <functional>
#include <memory>
#include <vector>

namespace greenprune::ad {

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  /// Adds `g` into this node's gradient, allocating it if needed.
  void accumulate(std::span<const double> g);
  Tensor& grad_buffer();
};

/// Handle to a node of the recorded computation graph.
class Var {
 public:
  Var() = default;

  /// Graph leaf holding a copy of `value`.
  static Var leaf(Tensor value, bool requires_grad = false);

  const Tensor& value() const { return node_->value; }
  /// Gradient after backward(); zero-filled if nothing reached this node.
  Tensor grad() const;
  bool requires_grad() const { return node_->requires_grad; }
  const std::shared_ptr<Node>& node() const { return node_; }
  bool valid() const { return static_cast<bool>(node_); }

  static Var from_node(std::shared_ptr<Node> node);

 private:
  std::shared_ptr<Node> node_;
};

/// NCHW convolution. `bias` may be an invalid Var for no bias.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
/// x is [B, in]; weight [out, in]; bias [out].
Var linear(const Var& x, const Var& weight, const Var& bias);
Var relu(const Var& x);
Var maxpool2d(const Var& x, int kernel, int stride, int pad);
Var avgpool2d(const Var& x, int kernel, int stride, int pad);
/// [B, ...] -> [B, prod(...)]
Var flatten(const Var& x);
Var add(const Var& a, const Var& b);
/// x is [B, C]; returns x[b, c] * scale[c] + shift[c] with constant
/// scale and shift.
Var scale_shift(const Var& x, std::span<const double> scale, std::span<const double> shift);
/// Elementwise clamp; gradient is zero where the input was clipped.
Var clamp(const Var& x, double lo, double hi);

/// Mean over batch and categories of 2*logsigma + r^2 * exp(-2*logsigma),
/// r = target - mu. Throws RuntimeFailure on non-finite inputs.
Var uncert_loss(const Var& mu, const Var& logsigma, const Tensor& target);

/// Root of the mean squared residual.
Var squared_error_loss(const Var& mu, const Tensor& target);

/// Mean squared residual (no root).
Var mean_squared_error(const Var& mu, const Tensor& target);

/// Reverse sweep from a scalar `loss`, accumulating into every node that
/// requires a gradient.
void backward(const Var& loss);

}  // namespace greenprune::ad
