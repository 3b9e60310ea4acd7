#include "greenprune/kernels/pool.hpp"

#include <algorithm>
#include <limits>

namespace greenprune::kernels {

void maxpool2d_forward(const Pool2dShape& s, std::span<const double> input, std::span<double> output,
                       std::span<std::int64_t> argmax) {
  const int oh = s.out_h(), ow = s.out_w();
  const int planes = s.batch * s.channels;
#pragma omp parallel for schedule(static)
  for (int plane = 0; plane < planes; ++plane) {
    const std::size_t in_base = static_cast<std::size_t>(plane) * s.height * s.width;
    const std::size_t out_base = static_cast<std::size_t>(plane) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double best = -std::numeric_limits<double>::infinity();
        std::int64_t best_idx = -1;
        for (int ky = 0; ky < s.kernel; ++ky) {
          const int iy = y * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.height) continue;
          for (int kx = 0; kx < s.kernel; ++kx) {
            const int ix = x * s.stride - s.pad + kx;
            if (ix < 0 || ix >= s.width) continue;
            const std::size_t idx = in_base + static_cast<std::size_t>(iy) * s.width + ix;
            if (best_idx < 0 || input[idx] > best) {
              best = input[idx];
              best_idx = static_cast<std::int64_t>(idx);
            }
          }
        }
        const std::size_t o = out_base + static_cast<std::size_t>(y) * ow + x;
        output[o] = best_idx < 0 ? 0.0 : best;
        argmax[o] = best_idx;
      }
    }
  }
}

void maxpool2d_backward(const Pool2dShape& s, std::span<const double> grad_output,
                        std::span<const std::int64_t> argmax, std::span<double> grad_input) {
  const std::size_t plane_in = static_cast<std::size_t>(s.height) * s.width;
  const std::size_t plane_out = static_cast<std::size_t>(s.out_h()) * s.out_w();
  const int planes = s.batch * s.channels;
  // Windows of one plane only touch that plane, so planes are independent.
#pragma omp parallel for schedule(static)
  for (int plane = 0; plane < planes; ++plane) {
    double* gi = grad_input.data() + plane * plane_in;
    std::fill(gi, gi + plane_in, 0.0);
    for (std::size_t o = plane * plane_out; o < (plane + 1) * plane_out; ++o) {
      if (argmax[o] >= 0) grad_input[static_cast<std::size_t>(argmax[o])] += grad_output[o];
    }
  }
}

void avgpool2d_forward(const Pool2dShape& s, std::span<const double> input, std::span<double> output) {
  const int oh = s.out_h(), ow = s.out_w();
  const int planes = s.batch * s.channels;
  const double inv = 1.0 / (static_cast<double>(s.kernel) * s.kernel);
#pragma omp parallel for schedule(static)
  for (int plane = 0; plane < planes; ++plane) {
    const std::size_t in_base = static_cast<std::size_t>(plane) * s.height * s.width;
    const std::size_t out_base = static_cast<std::size_t>(plane) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int ky = 0; ky < s.kernel; ++ky) {
          const int iy = y * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.height) continue;
          for (int kx = 0; kx < s.kernel; ++kx) {
            const int ix = x * s.stride - s.pad + kx;
            if (ix < 0 || ix >= s.width) continue;
            acc += input[in_base + static_cast<std::size_t>(iy) * s.width + ix];
          }
        }
        output[out_base + static_cast<std::size_t>(y) * ow + x] = acc * inv;
      }
    }
  }
}

void avgpool2d_backward(const Pool2dShape& s, std::span<const double> grad_output, std::span<double> grad_input) {
  const int oh = s.out_h(), ow = s.out_w();
  const int planes = s.batch * s.channels;
  const double inv = 1.0 / (static_cast<double>(s.kernel) * s.kernel);
#pragma omp parallel for schedule(static)
  for (int plane = 0; plane < planes; ++plane) {
    const std::size_t in_base = static_cast<std::size_t>(plane) * s.height * s.width;
    const std::size_t out_base = static_cast<std::size_t>(plane) * oh * ow;
    std::fill(grad_input.begin() + in_base, grad_input.begin() + in_base + static_cast<std::size_t>(s.height) * s.width,
              0.0);
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const double g = grad_output[out_base + static_cast<std::size_t>(y) * ow + x] * inv;
        for (int ky = 0; ky < s.kernel; ++ky) {
          const int iy = y * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.height) continue;
          for (int kx = 0; kx < s.kernel; ++kx) {
            const int ix = x * s.stride - s.pad + kx;
            if (ix < 0 || ix >= s.width) continue;
            grad_input[in_base + static_cast<std::size_t>(iy) * s.width + ix] += g;
          }
        }
      }
    }
  }
}

}  // namespace greenprune::kernels
