#include "greenprune/kernels/conv2d.hpp"

#include <algorithm>

namespace greenprune::kernels::reference {

void conv2d_forward(const Conv2dShape& s, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output) {
  const int oh = s.out_h(), ow = s.out_w();
  for (int b = 0; b < s.batch; ++b) {
    for (int co = 0; co < s.c_out; ++co) {
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          double acc = bias.empty() ? 0.0 : bias[co];
          for (int ci = 0; ci < s.c_in; ++ci) {
            for (int ky = 0; ky < s.kernel; ++ky) {
              const int iy = y * s.stride - s.pad + ky;
              if (iy < 0 || iy >= s.height) continue;
              for (int kx = 0; kx < s.kernel; ++kx) {
                const int ix = x * s.stride - s.pad + kx;
                if (ix < 0 || ix >= s.width) continue;
                acc += weight[((static_cast<std::size_t>(co) * s.c_in + ci) * s.kernel + ky) * s.kernel + kx] *
                       input[((static_cast<std::size_t>(b) * s.c_in + ci) * s.height + iy) * s.width + ix];
              }
            }
          }
          output[((static_cast<std::size_t>(b) * s.c_out + co) * oh + y) * ow + x] = acc;
        }
      }
    }
  }
}

void conv2d_backward_input(const Conv2dShape& s, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input) {
  const int oh = s.out_h(), ow = s.out_w();
  std::fill(grad_input.begin(), grad_input.end(), 0.0);
  for (int b = 0; b < s.batch; ++b) {
    for (int co = 0; co < s.c_out; ++co) {
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          const double g = grad_output[((static_cast<std::size_t>(b) * s.c_out + co) * oh + y) * ow + x];
          for (int ci = 0; ci < s.c_in; ++ci) {
            for (int ky = 0; ky < s.kernel; ++ky) {
              const int iy = y * s.stride - s.pad + ky;
              if (iy < 0 || iy >= s.height) continue;
              for (int kx = 0; kx < s.kernel; ++kx) {
                const int ix = x * s.stride - s.pad + kx;
                if (ix < 0 || ix >= s.width) continue;
                grad_input[((static_cast<std::size_t>(b) * s.c_in + ci) * s.height + iy) * s.width + ix] +=
                    g * weight[((static_cast<std::size_t>(co) * s.c_in + ci) * s.kernel + ky) * s.kernel + kx];
              }
            }
          }
        }
      }
    }
  }
}

void conv2d_backward_params(const Conv2dShape& s, std::span<const double> grad_output,
                            std::span<const double> input, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const int oh = s.out_h(), ow = s.out_w();
  std::fill(grad_weight.begin(), grad_weight.end(), 0.0);
  std::fill(grad_bias.begin(), grad_bias.end(), 0.0);
  for (int b = 0; b < s.batch; ++b) {
    for (int co = 0; co < s.c_out; ++co) {
      for (int y = 0; y < oh; ++y) {
        for (int x = 0; x < ow; ++x) {
          const double g = grad_output[((static_cast<std::size_t>(b) * s.c_out + co) * oh + y) * ow + x];
          if (!grad_bias.empty()) grad_bias[co] += g;
          for (int ci = 0; ci < s.c_in; ++ci) {
            for (int ky = 0; ky < s.kernel; ++ky) {
              const int iy = y * s.stride - s.pad + ky;
              if (iy < 0 || iy >= s.height) continue;
              for (int kx = 0; kx < s.kernel; ++kx) {
                const int ix = x * s.stride - s.pad + kx;
                if (ix < 0 || ix >= s.width) continue;
                grad_weight[((static_cast<std::size_t>(co) * s.c_in + ci) * s.kernel + ky) * s.kernel + kx] +=
                    g * input[((static_cast<std::size_t>(b) * s.c_in + ci) * s.height + iy) * s.width + ix];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace greenprune::kernels::reference
