#include "greenprune/kernels/dense.hpp"

#include <algorithm>

namespace greenprune::kernels {

namespace reference {

void dense_forward(const DenseShape& s, std::span<const double> x, std::span<const double> weight,
                   std::span<const double> bias, std::span<double> y) {
  for (int b = 0; b < s.batch; ++b) {
    for (int o = 0; o < s.out; ++o) {
      double acc = bias.empty() ? 0.0 : bias[o];
      for (int i = 0; i < s.in; ++i)
        acc += weight[static_cast<std::size_t>(o) * s.in + i] * x[static_cast<std::size_t>(b) * s.in + i];
      y[static_cast<std::size_t>(b) * s.out + o] = acc;
    }
  }
}

void dense_backward(const DenseShape& s, std::span<const double> grad_y, std::span<const double> x,
                    std::span<const double> weight, std::span<double> grad_x, std::span<double> grad_weight,
                    std::span<double> grad_bias) {
  std::fill(grad_x.begin(), grad_x.end(), 0.0);
  std::fill(grad_weight.begin(), grad_weight.end(), 0.0);
  std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
  for (int b = 0; b < s.batch; ++b) {
    for (int o = 0; o < s.out; ++o) {
      const double g = grad_y[static_cast<std::size_t>(b) * s.out + o];
      if (!grad_bias.empty()) grad_bias[o] += g;
      for (int i = 0; i < s.in; ++i) {
        if (!grad_x.empty())
          grad_x[static_cast<std::size_t>(b) * s.in + i] += g * weight[static_cast<std::size_t>(o) * s.in + i];
        if (!grad_weight.empty())
          grad_weight[static_cast<std::size_t>(o) * s.in + i] += g * x[static_cast<std::size_t>(b) * s.in + i];
      }
    }
  }
}

}  // namespace reference

void dense_forward(const DenseShape& s, std::span<const double> x, std::span<const double> weight,
                   std::span<const double> bias, std::span<double> y) {
#pragma omp parallel for schedule(static)
  for (int b = 0; b < s.batch; ++b) {
    const double* xb = x.data() + static_cast<std::size_t>(b) * s.in;
    for (int o = 0; o < s.out; ++o) {
      const double* w = weight.data() + static_cast<std::size_t>(o) * s.in;
      double acc = bias.empty() ? 0.0 : bias[o];
      for (int i = 0; i < s.in; ++i) acc += w[i] * xb[i];
      y[static_cast<std::size_t>(b) * s.out + o] = acc;
    }
  }
}

void dense_backward(const DenseShape& s, std::span<const double> grad_y, std::span<const double> x,
                    std::span<const double> weight, std::span<double> grad_x, std::span<double> grad_weight,
                    std::span<double> grad_bias) {
  if (!grad_x.empty()) {
#pragma omp parallel for schedule(static)
    for (int b = 0; b < s.batch; ++b) {
      double* gx = grad_x.data() + static_cast<std::size_t>(b) * s.in;
      std::fill(gx, gx + s.in, 0.0);
      for (int o = 0; o < s.out; ++o) {
        const double g = grad_y[static_cast<std::size_t>(b) * s.out + o];
        const double* w = weight.data() + static_cast<std::size_t>(o) * s.in;
        for (int i = 0; i < s.in; ++i) gx[i] += g * w[i];
      }
    }
  }
  if (!grad_weight.empty() || !grad_bias.empty()) {
#pragma omp parallel for schedule(static)
    for (int o = 0; o < s.out; ++o) {
      double* gw = grad_weight.empty() ? nullptr : grad_weight.data() + static_cast<std::size_t>(o) * s.in;
      if (gw) std::fill(gw, gw + s.in, 0.0);
      double gb = 0.0;
      for (int b = 0; b < s.batch; ++b) {
        const double g = grad_y[static_cast<std::size_t>(b) * s.out + o];
        gb += g;
        if (!gw) continue;
        const double* xb = x.data() + static_cast<std::size_t>(b) * s.in;
        for (int i = 0; i < s.in; ++i) gw[i] += g * xb[i];
      }
      if (!grad_bias.empty()) grad_bias[o] = gb;
    }
  }
}

}  // namespace greenprune::kernels
