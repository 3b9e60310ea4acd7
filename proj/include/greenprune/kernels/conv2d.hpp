#pragma once

#include <cstddef>
#include <span>

namespace greenprune::kernels {

/// Geometry of a batched 2-D convolution over NCHW tensors.
/// Weights are laid out [c_out][c_in][kernel][kernel].
struct Conv2dShape {
  int batch = 1;
  int c_in = 1;
  int height = 1;
  int width = 1;
  int c_out = 1;
  int kernel = 1;
  int stride = 1;
  int pad = 0;

  int out_h() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (width + 2 * pad - kernel) / stride + 1; }
  std::size_t input_size() const { return static_cast<std::size_t>(batch) * c_in * height * width; }
  std::size_t output_size() const { return static_cast<std::size_t>(batch) * c_out * out_h() * out_w(); }
  std::size_t weight_size() const { return static_cast<std::size_t>(c_out) * c_in * kernel * kernel; }
};

// Serial direct-loop implementation. Kept as the reference the parallel
// kernels are tested against.
namespace reference {

void conv2d_forward(const Conv2dShape& s, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output);

void conv2d_backward_input(const Conv2dShape& s, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input);

void conv2d_backward_params(const Conv2dShape& s, std::span<const double> grad_output,
                            std::span<const double> input, std::span<double> grad_weight,
                            std::span<double> grad_bias);

}  // namespace reference

// OpenMP im2col implementation. Every output element is reduced by a single
// thread in a fixed order, so results do not depend on the thread count.
void conv2d_forward(const Conv2dShape& s, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output);

void conv2d_backward_input(const Conv2dShape& s, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input);

void conv2d_backward_params(const Conv2dShape& s, std::span<const double> grad_output,
                            std::span<const double> input, std::span<double> grad_weight,
                            std::span<double> grad_bias);

}  // namespace greenprune::kernels
