#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace greenprune::kernels {

struct Pool2dShape {
  int batch = 1;
  int channels = 1;
  int height = 1;
  int width = 1;
  int kernel = 2;
  int stride = 2;
  int pad = 0;

  int out_h() const { return (height + 2 * pad - kernel) / stride + 1; }
  int out_w() const { return (width + 2 * pad - kernel) / stride + 1; }
  std::size_t output_size() const { return static_cast<std::size_t>(batch) * channels * out_h() * out_w(); }
};

/// Records the flat input index of each window's maximum in `argmax`.
/// Padding cells never win.
void maxpool2d_forward(const Pool2dShape& s, std::span<const double> input, std::span<double> output,
                       std::span<std::int64_t> argmax);
void maxpool2d_backward(const Pool2dShape& s, std::span<const double> grad_output,
                        std::span<const std::int64_t> argmax, std::span<double> grad_input);

/// Averages over the full kernel window (padding counts as zero).
void avgpool2d_forward(const Pool2dShape& s, std::span<const double> input, std::span<double> output);
void avgpool2d_backward(const Pool2dShape& s, std::span<const double> grad_output, std::span<double> grad_input);

}  // namespace greenprune::kernels
