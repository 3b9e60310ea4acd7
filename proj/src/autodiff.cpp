#include "greenprune/autodiff.hpp"

#include "greenprune/error.hpp"
#include "greenprune/kernels/conv2d.hpp"
#include "greenprune/kernels/dense.hpp"
#include "greenprune/kernels/pool.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace greenprune::ad {

namespace {

Var make_node(Tensor value, std::vector<std::shared_ptr<Node>> parents, std::function<void(Node&)> fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad =
      std::any_of(parents.begin(), parents.end(), [](const auto& p) { return p && p->requires_grad; });
  if (node->requires_grad) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(fn);
  }
  return Var::from_node(std::move(node));
}

void require_rank(const Var& v, std::size_t rank, const char* op) {
  if (v.value().rank() != rank)
    throw ConfigError(fmt::format("{}: expected rank {} input, got {}", op, rank, shape_string(v.value().shape())));
}

kernels::Pool2dShape pool_shape(const Tensor& x, int kernel, int stride, int pad) {
  kernels::Pool2dShape s;
  s.batch = static_cast<int>(x.dim(0));
  s.channels = static_cast<int>(x.dim(1));
  s.height = static_cast<int>(x.dim(2));
  s.width = static_cast<int>(x.dim(3));
  s.kernel = kernel;
  s.stride = stride;
  s.pad = pad;
  if (s.out_h() < 1 || s.out_w() < 1) throw ConfigError("pool2d: non-positive output size");
  return s;
}

void check_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw RuntimeFailure(fmt::format("non-finite values in {}", what));
}

}  // namespace

void Node::accumulate(std::span<const double> g) {
  auto& buf = grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

Tensor& Node::grad_buffer() {
  if (grad.size() != value.size()) grad = Tensor(value.shape(), 0.0);
  return grad;
}

Var Var::leaf(Tensor value, bool requires_grad) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  return from_node(std::move(node));
}

Var Var::from_node(std::shared_ptr<Node> node) {
  Var v;
  v.node_ = std::move(node);
  return v;
}

Tensor Var::grad() const {
  if (node_->grad.size() == node_->value.size()) return node_->grad;
  return Tensor(node_->value.shape(), 0.0);
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad) {
  require_rank(x, 4, "conv2d");
  require_rank(weight, 4, "conv2d weight");
  const auto& xv = x.value();
  const auto& wv = weight.value();
  kernels::Conv2dShape s;
  s.batch = static_cast<int>(xv.dim(0));
  s.c_in = static_cast<int>(xv.dim(1));
  s.height = static_cast<int>(xv.dim(2));
  s.width = static_cast<int>(xv.dim(3));
  s.c_out = static_cast<int>(wv.dim(0));
  s.kernel = static_cast<int>(wv.dim(2));
  s.stride = stride;
  s.pad = pad;
  if (static_cast<int>(wv.dim(1)) != s.c_in)
    throw ConfigError(fmt::format("conv2d: input has {} channels, weight expects {}", s.c_in, wv.dim(1)));
  if (s.out_h() < 1 || s.out_w() < 1) throw ConfigError("conv2d: non-positive output size");

  Tensor out({static_cast<std::size_t>(s.batch), static_cast<std::size_t>(s.c_out),
              static_cast<std::size_t>(s.out_h()), static_cast<std::size_t>(s.out_w())});
  const std::span<const double> bias_span = bias.valid() ? bias.value().values() : std::span<const double>{};
  kernels::conv2d_forward(s, xv.values(), wv.values(), bias_span, out.values());

  std::vector<std::shared_ptr<Node>> parents{x.node(), weight.node()};
  if (bias.valid()) parents.push_back(bias.node());
  return make_node(std::move(out), std::move(parents), [s](Node& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    Node* bn = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
    if (xn.requires_grad) {
      std::vector<double> gx(s.input_size());
      kernels::conv2d_backward_input(s, self.grad.values(), wn.value.values(), gx);
      xn.accumulate(gx);
    }
    if (wn.requires_grad || (bn && bn->requires_grad)) {
      std::vector<double> gw(s.weight_size());
      std::vector<double> gb(static_cast<std::size_t>(s.c_out));
      kernels::conv2d_backward_params(s, self.grad.values(), xn.value.values(), gw, gb);
      if (wn.requires_grad) wn.accumulate(gw);
      if (bn && bn->requires_grad) bn->accumulate(gb);
    }
  });
}

Var linear(const Var& x, const Var& weight, const Var& bias) {
  require_rank(x, 2, "linear");
  require_rank(weight, 2, "linear weight");
  kernels::DenseShape s;
  s.batch = static_cast<int>(x.value().dim(0));
  s.in = static_cast<int>(x.value().dim(1));
  s.out = static_cast<int>(weight.value().dim(0));
  if (static_cast<int>(weight.value().dim(1)) != s.in)
    throw ConfigError(fmt::format("linear: input has {} features, weight expects {}", s.in, weight.value().dim(1)));
  Tensor out({static_cast<std::size_t>(s.batch), static_cast<std::size_t>(s.out)});
  const std::span<const double> bias_span = bias.valid() ? bias.value().values() : std::span<const double>{};
  kernels::dense_forward(s, x.value().values(), weight.value().values(), bias_span, out.values());

  std::vector<std::shared_ptr<Node>> parents{x.node(), weight.node()};
  if (bias.valid()) parents.push_back(bias.node());
  return make_node(std::move(out), std::move(parents), [s](Node& self) {
    auto& xn = *self.parents[0];
    auto& wn = *self.parents[1];
    Node* bn = self.parents.size() > 2 ? self.parents[2].get() : nullptr;
    std::vector<double> gx(xn.requires_grad ? xn.value.size() : 0);
    std::vector<double> gw(wn.requires_grad ? wn.value.size() : 0);
    std::vector<double> gb(bn && bn->requires_grad ? static_cast<std::size_t>(s.out) : 0);
    kernels::dense_backward(s, self.grad.values(), xn.value.values(), wn.value.values(), gx, gw, gb);
    if (!gx.empty()) xn.accumulate(gx);
    if (!gw.empty()) wn.accumulate(gw);
    if (!gb.empty()) bn->accumulate(gb);
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
  return make_node(std::move(out), {x.node()}, [](Node& self) {
    auto& xn = *self.parents[0];
    auto& gx = xn.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i)
      if (xn.value[i] > 0.0) gx[i] += self.grad[i];
  });
}

Var maxpool2d(const Var& x, int kernel, int stride, int pad) {
  require_rank(x, 4, "maxpool2d");
  const auto s = pool_shape(x.value(), kernel, stride, pad);
  Tensor out({x.value().dim(0), x.value().dim(1), static_cast<std::size_t>(s.out_h()),
              static_cast<std::size_t>(s.out_w())});
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
  kernels::maxpool2d_forward(s, x.value().values(), out.values(), *argmax);
  return make_node(std::move(out), {x.node()}, [s, argmax](Node& self) {
    auto& xn = *self.parents[0];
    std::vector<double> gx(xn.value.size());
    kernels::maxpool2d_backward(s, self.grad.values(), *argmax, gx);
    xn.accumulate(gx);
  });
}

Var avgpool2d(const Var& x, int kernel, int stride, int pad) {
  require_rank(x, 4, "avgpool2d");
  const auto s = pool_shape(x.value(), kernel, stride, pad);
  Tensor out({x.value().dim(0), x.value().dim(1), static_cast<std::size_t>(s.out_h()),
              static_cast<std::size_t>(s.out_w())});
  kernels::avgpool2d_forward(s, x.value().values(), out.values());
  return make_node(std::move(out), {x.node()}, [s](Node& self) {
    auto& xn = *self.parents[0];
    std::vector<double> gx(xn.value.size());
    kernels::avgpool2d_backward(s, self.grad.values(), gx);
    xn.accumulate(gx);
  });
}

Var flatten(const Var& x) {
  const auto& v = x.value();
  if (v.rank() < 1) throw ConfigError("flatten: scalar input");
  const std::size_t batch = v.dim(0);
  const std::size_t features = batch == 0 ? 0 : v.size() / batch;
  return make_node(v.reshaped({batch, features}), {x.node()},
                   [](Node& self) { self.parents[0]->accumulate(self.grad.values()); });
}

Var add(const Var& a, const Var& b) {
  if (a.value().shape() != b.value().shape())
    throw ConfigError(fmt::format("add: shape mismatch {} vs {}", shape_string(a.value().shape()),
                                  shape_string(b.value().shape())));
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_node(std::move(out), {a.node(), b.node()}, [](Node& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->accumulate(self.grad.values());
  });
}

Var scale_shift(const Var& x, std::span<const double> scale, std::span<const double> shift) {
  const auto& xv = x.value();
  if (xv.rank() != 2 || xv.dim(1) != scale.size() || xv.dim(1) != shift.size())
    throw ConfigError(fmt::format("scale_shift: input {} does not match {} columns", shape_string(xv.shape()),
                                  scale.size()));
  const std::size_t cols = scale.size();
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * scale[i % cols] + shift[i % cols];
  std::vector<double> s(scale.begin(), scale.end());
  return make_node(std::move(out), {x.node()}, [s = std::move(s)](Node& self) {
    auto& gx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * s[i % s.size()];
  });
}

Var clamp(const Var& x, double lo, double hi) {
  Tensor out = x.value();
  for (auto& v : out.values()) v = std::clamp(v, lo, hi);
  return make_node(std::move(out), {x.node()}, [lo, hi](Node& self) {
    auto& xn = *self.parents[0];
    auto& gx = xn.grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const double v = xn.value[i];
      if (v >= lo && v <= hi) gx[i] += self.grad[i];
    }
  });
}

Var uncert_loss(const Var& mu, const Var& logsigma, const Tensor& target) {
  const auto& m = mu.value();
  const auto& ls = logsigma.value();
  if (m.shape() != target.shape() || ls.shape() != target.shape())
    throw ConfigError(fmt::format("uncert_loss: shapes {} {} {} disagree", shape_string(m.shape()),
                                  shape_string(ls.shape()), shape_string(target.shape())));
  check_finite(m, "uncert_loss mu");
  check_finite(ls, "uncert_loss logsigma");
  check_finite(target, "uncert_loss target");
  const double n = static_cast<double>(target.size());
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double r = target[i] - m[i];
    total += 2.0 * ls[i] + r * r * std::exp(-2.0 * ls[i]);
  }
  Tensor out({1}, total / n);
  return make_node(std::move(out), {mu.node(), logsigma.node()}, [target, n](Node& self) {
    auto& mn = *self.parents[0];
    auto& ln = *self.parents[1];
    const double g = self.grad[0] / n;
    if (mn.requires_grad) {
      auto& gm = mn.grad_buffer();
      for (std::size_t i = 0; i < gm.size(); ++i) {
        const double r = target[i] - mn.value[i];
        gm[i] += g * (-2.0 * r * std::exp(-2.0 * ln.value[i]));
      }
    }
    if (ln.requires_grad) {
      auto& gl = ln.grad_buffer();
      for (std::size_t i = 0; i < gl.size(); ++i) {
        const double r = target[i] - mn.value[i];
        gl[i] += g * (2.0 - 2.0 * r * r * std::exp(-2.0 * ln.value[i]));
      }
    }
  });
}

Var mean_squared_error(const Var& mu, const Tensor& target) {
  const auto& m = mu.value();
  if (m.shape() != target.shape())
    throw ConfigError(fmt::format("mean_squared_error: shapes {} and {} disagree", shape_string(m.shape()),
                                  shape_string(target.shape())));
  check_finite(m, "mean_squared_error mu");
  check_finite(target, "mean_squared_error target");
  const double n = static_cast<double>(target.size());
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double r = target[i] - m[i];
    total += r * r;
  }
  return make_node(Tensor({1}, total / n), {mu.node()}, [target, n](Node& self) {
    auto& mn = *self.parents[0];
    auto& gm = mn.grad_buffer();
    const double g = self.grad[0] / n;
    for (std::size_t i = 0; i < gm.size(); ++i) gm[i] += g * (-2.0 * (target[i] - mn.value[i]));
  });
}

Var squared_error_loss(const Var& mu, const Tensor& target) {
  const auto& m = mu.value();
  if (m.shape() != target.shape())
    throw ConfigError(fmt::format("squared_error_loss: shapes {} and {} disagree", shape_string(m.shape()),
                                  shape_string(target.shape())));
  check_finite(m, "squared_error_loss mu");
  check_finite(target, "squared_error_loss target");
  const double n = static_cast<double>(target.size());
  double total = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double r = target[i] - m[i];
    total += r * r;
  }
  const double root = std::sqrt(total / n);
  return make_node(Tensor({1}, root), {mu.node()}, [target, n, root](Node& self) {
    if (root == 0.0) return;  // subgradient 0 at the minimum
    auto& mn = *self.parents[0];
    auto& gm = mn.grad_buffer();
    const double g = self.grad[0] / (n * root);
    for (std::size_t i = 0; i < gm.size(); ++i) gm[i] += g * (-(target[i] - mn.value[i]));
  });
}

void backward(const Var& loss) {
  if (loss.value().size() != 1) throw ConfigError("backward: loss must be a scalar");
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{loss.node().get(), 0}};
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent && parent->requires_grad && seen.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->grad.size() == n->value.size()) n->backward_fn(*n);
  }
}

}  // namespace greenprune::ad
