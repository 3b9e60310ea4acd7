#include "greenprune/kernels/conv2d.hpp"

#include <algorithm>
#include <vector>

namespace greenprune::kernels {

namespace {

// Unrolls one image into rows of (ci, ky, kx) by columns of output position.
void im2col(const Conv2dShape& s, const double* image, double* col) {
  const int oh = s.out_h(), ow = s.out_w();
  const std::size_t spatial = static_cast<std::size_t>(oh) * ow;
  for (int ci = 0; ci < s.c_in; ++ci) {
    for (int ky = 0; ky < s.kernel; ++ky) {
      for (int kx = 0; kx < s.kernel; ++kx) {
        double* row = col + ((static_cast<std::size_t>(ci) * s.kernel + ky) * s.kernel + kx) * spatial;
        const double* plane = image + static_cast<std::size_t>(ci) * s.height * s.width;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * s.stride - s.pad + ky;
          double* out = row + static_cast<std::size_t>(y) * ow;
          if (iy < 0 || iy >= s.height) {
            std::fill(out, out + ow, 0.0);
            continue;
          }
          for (int x = 0; x < ow; ++x) {
            const int ix = x * s.stride - s.pad + kx;
            out[x] = (ix < 0 || ix >= s.width) ? 0.0 : plane[static_cast<std::size_t>(iy) * s.width + ix];
          }
        }
      }
    }
  }
}

// Transposed unroll: one row of (ci, ky, kx) values per output position.
void im2col_transposed(const Conv2dShape& s, const double* image, double* col_t) {
  const int oh = s.out_h(), ow = s.out_w();
  const std::size_t rows = static_cast<std::size_t>(s.c_in) * s.kernel * s.kernel;
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double* out = col_t + (static_cast<std::size_t>(y) * ow + x) * rows;
      std::size_t r = 0;
      for (int ci = 0; ci < s.c_in; ++ci) {
        const double* plane = image + static_cast<std::size_t>(ci) * s.height * s.width;
        for (int ky = 0; ky < s.kernel; ++ky) {
          const int iy = y * s.stride - s.pad + ky;
          for (int kx = 0; kx < s.kernel; ++kx, ++r) {
            const int ix = x * s.stride - s.pad + kx;
            out[r] = (iy < 0 || iy >= s.height || ix < 0 || ix >= s.width)
                         ? 0.0
                         : plane[static_cast<std::size_t>(iy) * s.width + ix];
          }
        }
      }
    }
  }
}

void col2im_accumulate(const Conv2dShape& s, const double* col, double* image) {
  const int oh = s.out_h(), ow = s.out_w();
  const std::size_t spatial = static_cast<std::size_t>(oh) * ow;
  for (int ci = 0; ci < s.c_in; ++ci) {
    double* plane = image + static_cast<std::size_t>(ci) * s.height * s.width;
    for (int ky = 0; ky < s.kernel; ++ky) {
      for (int kx = 0; kx < s.kernel; ++kx) {
        const double* row = col + ((static_cast<std::size_t>(ci) * s.kernel + ky) * s.kernel + kx) * spatial;
        for (int y = 0; y < oh; ++y) {
          const int iy = y * s.stride - s.pad + ky;
          if (iy < 0 || iy >= s.height) continue;
          for (int x = 0; x < ow; ++x) {
            const int ix = x * s.stride - s.pad + kx;
            if (ix < 0 || ix >= s.width) continue;
            plane[static_cast<std::size_t>(iy) * s.width + ix] += row[static_cast<std::size_t>(y) * ow + x];
          }
        }
      }
    }
  }
}

}  // namespace

void conv2d_forward(const Conv2dShape& s, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output) {
  const std::size_t spatial = static_cast<std::size_t>(s.out_h()) * s.out_w();
  const std::size_t rows = static_cast<std::size_t>(s.c_in) * s.kernel * s.kernel;
  const std::size_t in_stride = static_cast<std::size_t>(s.c_in) * s.height * s.width;

#pragma omp parallel
  {
    std::vector<double> col(rows * spatial);
#pragma omp for schedule(static)
    for (int b = 0; b < s.batch; ++b) {
      im2col(s, input.data() + b * in_stride, col.data());
      for (int co = 0; co < s.c_out; ++co) {
        double* out = output.data() + (static_cast<std::size_t>(b) * s.c_out + co) * spatial;
        std::fill(out, out + spatial, bias.empty() ? 0.0 : bias[co]);
        const double* w = weight.data() + co * rows;
        for (std::size_t r = 0; r < rows; ++r) {
          const double wr = w[r];
          const double* c = col.data() + r * spatial;
          for (std::size_t p = 0; p < spatial; ++p) out[p] += wr * c[p];
        }
      }
    }
  }
}

void conv2d_backward_input(const Conv2dShape& s, std::span<const double> grad_output,
                           std::span<const double> weight, std::span<double> grad_input) {
  const std::size_t spatial = static_cast<std::size_t>(s.out_h()) * s.out_w();
  const std::size_t rows = static_cast<std::size_t>(s.c_in) * s.kernel * s.kernel;
  const std::size_t in_stride = static_cast<std::size_t>(s.c_in) * s.height * s.width;

#pragma omp parallel
  {
    std::vector<double> dcol(rows * spatial);
#pragma omp for schedule(static)
    for (int b = 0; b < s.batch; ++b) {
      std::fill(dcol.begin(), dcol.end(), 0.0);
      for (int co = 0; co < s.c_out; ++co) {
        const double* g = grad_output.data() + (static_cast<std::size_t>(b) * s.c_out + co) * spatial;
        const double* w = weight.data() + co * rows;
        for (std::size_t r = 0; r < rows; ++r) {
          const double wr = w[r];
          double* d = dcol.data() + r * spatial;
          for (std::size_t p = 0; p < spatial; ++p) d[p] += wr * g[p];
        }
      }
      double* image = grad_input.data() + b * in_stride;
      std::fill(image, image + in_stride, 0.0);
      col2im_accumulate(s, dcol.data(), image);
    }
  }
}

void conv2d_backward_params(const Conv2dShape& s, std::span<const double> grad_output,
                            std::span<const double> input, std::span<double> grad_weight,
                            std::span<double> grad_bias) {
  const std::size_t spatial = static_cast<std::size_t>(s.out_h()) * s.out_w();
  const std::size_t rows = static_cast<std::size_t>(s.c_in) * s.kernel * s.kernel;
  const std::size_t in_stride = static_cast<std::size_t>(s.c_in) * s.height * s.width;
  const std::size_t wsize = s.weight_size();

  // Per-sample partials, reduced afterwards in sample order.
  std::vector<double> partial_w(static_cast<std::size_t>(s.batch) * wsize, 0.0);
  std::vector<double> partial_b(static_cast<std::size_t>(s.batch) * s.c_out, 0.0);

#pragma omp parallel
  {
    std::vector<double> col_t(spatial * rows);
#pragma omp for schedule(static)
    for (int b = 0; b < s.batch; ++b) {
      im2col_transposed(s, input.data() + b * in_stride, col_t.data());
      double* dw = partial_w.data() + b * wsize;
      for (int co = 0; co < s.c_out; ++co) {
        const double* g = grad_output.data() + (static_cast<std::size_t>(b) * s.c_out + co) * spatial;
        double* dw_row = dw + co * rows;
        double gsum = 0.0;
        for (std::size_t p = 0; p < spatial; ++p) {
          const double gp = g[p];
          gsum += gp;
          const double* c = col_t.data() + p * rows;
          for (std::size_t r = 0; r < rows; ++r) dw_row[r] += gp * c[r];
        }
        partial_b[static_cast<std::size_t>(b) * s.c_out + co] = gsum;
      }
    }

#pragma omp for schedule(static)
    for (std::size_t i = 0; i < wsize; ++i) {
      double acc = 0.0;
      for (int b = 0; b < s.batch; ++b) acc += partial_w[b * wsize + i];
      grad_weight[i] = acc;
    }
  }
  if (!grad_bias.empty()) {
    for (int co = 0; co < s.c_out; ++co) {
      double acc = 0.0;
      for (int b = 0; b < s.batch; ++b) acc += partial_b[static_cast<std::size_t>(b) * s.c_out + co];
      grad_bias[co] = acc;
    }
  }
}

}  // namespace greenprune::kernels
