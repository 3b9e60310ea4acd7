#pragma once

#include <cstddef>
#include <span>

namespace greenprune::kernels {

/// y[b][o] = bias[o] + sum_i weight[o][i] * x[b][i]
struct DenseShape {
  int batch = 1;
  int in = 1;
  int out = 1;
};

namespace reference {

void dense_forward(const DenseShape& s, std::span<const double> x, std::span<const double> weight,
                   std::span<const double> bias, std::span<double> y);

void dense_backward(const DenseShape& s, std::span<const double> grad_y, std::span<const double> x,
                    std::span<const double> weight, std::span<double> grad_x, std::span<double> grad_weight,
                    std::span<double> grad_bias);

}  // namespace reference

void dense_forward(const DenseShape& s, std::span<const double> x, std::span<const double> weight,
                   std::span<const double> bias, std::span<double> y);

/// Any of the output spans may be empty to skip that gradient.
void dense_backward(const DenseShape& s, std::span<const double> grad_y, std::span<const double> x,
                    std::span<const double> weight, std::span<double> grad_x, std::span<double> grad_weight,
                    std::span<double> grad_bias);

}  // namespace greenprune::kernels
