#include "diffcore/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "common/errors.hpp"

namespace pbcnn::diffcore {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Examples per im2col block; bounds scratch memory for the big layers.
constexpr std::size_t kConvBlock = 8;

struct ImageGeometry {
  std::size_t batch, height, width, channels;
};

ImageGeometry image_geometry(const Extents& e, const char* what) {
  if (e.size() == 3) return {1, e[0], e[1], e[2]};
  if (e.size() == 4) return {e[0], e[1], e[2], e[3]};
  throw ShapeError(std::string(what) + ": expected [h,w,c] or [n,h,w,c], got " + describe(e));
}

Extents image_extents(const Extents& like, std::size_t n, std::size_t h, std::size_t w,
                      std::size_t c) {
  if (like.size() == 3) return {h, w, c};
  return {n, h, w, c};
}

struct KernelGeometry {
  std::size_t kh, kw, cin, cout;
  std::size_t taps() const { return kh * kw * cin; }
};

KernelGeometry kernel_geometry(const Array& kernel) {
  if (kernel.rank() != 4) {
    throw ShapeError("conv2d kernel must be [kh,kw,cin,cout], got " + describe(kernel.extents()));
  }
  KernelGeometry g{kernel.extent(0), kernel.extent(1), kernel.extent(2), kernel.extent(3)};
  if (g.kh % 2 == 0 || g.kw % 2 == 0) {
    throw ShapeError("conv2d kernel extents must be odd, got " + describe(kernel.extents()));
  }
  return g;
}

// Rows: output pixels of `count` images starting at `first`; columns: kernel taps.
void im2col(const double* input, const ImageGeometry& img, const KernelGeometry& k,
            std::size_t first, std::size_t count, double* col) {
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(k.kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(k.kw / 2);
  const std::size_t taps = k.taps();
  const std::size_t image_size = img.height * img.width * img.channels;
  for (std::size_t b = 0; b < count; ++b) {
    const double* src = input + (first + b) * image_size;
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) {
        double* row = col + ((b * img.height + y) * img.width + x) * taps;
        for (std::size_t ky = 0; ky < k.kh; ++ky) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - ph;
          for (std::size_t kx = 0; kx < k.kw; ++kx) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - pw;
            double* dst = row + (ky * k.kw + kx) * k.cin;
            if (sy < 0 || sx < 0 || sy >= static_cast<std::ptrdiff_t>(img.height) ||
                sx >= static_cast<std::ptrdiff_t>(img.width)) {
              std::fill(dst, dst + k.cin, 0.0);
            } else {
              const double* s = src + (static_cast<std::size_t>(sy) * img.width +
                                       static_cast<std::size_t>(sx)) * img.channels;
              std::copy(s, s + k.cin, dst);
            }
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ImageGeometry& img, const KernelGeometry& k,
                std::size_t first, std::size_t count, double* grad_input) {
  const std::ptrdiff_t ph = static_cast<std::ptrdiff_t>(k.kh / 2);
  const std::ptrdiff_t pw = static_cast<std::ptrdiff_t>(k.kw / 2);
  const std::size_t taps = k.taps();
  const std::size_t image_size = img.height * img.width * img.channels;
  for (std::size_t b = 0; b < count; ++b) {
    double* dst_image = grad_input + (first + b) * image_size;
    for (std::size_t y = 0; y < img.height; ++y) {
      for (std::size_t x = 0; x < img.width; ++x) {
        const double* row = col + ((b * img.height + y) * img.width + x) * taps;
        for (std::size_t ky = 0; ky < k.kh; ++ky) {
          const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - ph;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(img.height)) continue;
          for (std::size_t kx = 0; kx < k.kw; ++kx) {
            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + kx) - pw;
            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(img.width)) continue;
            const double* s = row + (ky * k.kw + kx) * k.cin;
            double* d = dst_image + (static_cast<std::size_t>(sy) * img.width +
                                     static_cast<std::size_t>(sx)) * img.channels;
            for (std::size_t c = 0; c < k.cin; ++c) d[c] += s[c];
          }
        }
      }
    }
  }
}

void check_channels(const ImageGeometry& img, const KernelGeometry& k) {
  if (img.channels != k.cin) {
    throw ShapeError("conv2d channel mismatch: input has " + std::to_string(img.channels) +
                     ", kernel expects " + std::to_string(k.cin));
  }
}

}  // namespace

Array conv2d(const Array& input, const Array& kernel, const Array& bias) {
  const ImageGeometry img = image_geometry(input.extents(), "conv2d input");
  const KernelGeometry k = kernel_geometry(kernel);
  check_channels(img, k);
  if (bias.size() != k.cout) {
    throw ShapeError("conv2d bias length " + std::to_string(bias.size()) + " != cout " +
                     std::to_string(k.cout));
  }
  Array out(image_extents(input.extents(), img.batch, img.height, img.width, k.cout));
  const std::size_t pixels = img.height * img.width;
  const std::size_t taps = k.taps();
  std::vector<double> col(std::min(kConvBlock, img.batch) * pixels * taps);
  ConstMatrixMap w(kernel.data(), static_cast<Eigen::Index>(taps),
                   static_cast<Eigen::Index>(k.cout));
  Eigen::Map<const Eigen::RowVectorXd> b(bias.data(), static_cast<Eigen::Index>(k.cout));
  for (std::size_t first = 0; first < img.batch; first += kConvBlock) {
    const std::size_t count = std::min(kConvBlock, img.batch - first);
    im2col(input.data(), img, k, first, count, col.data());
    const auto rows = static_cast<Eigen::Index>(count * pixels);
    ConstMatrixMap c(col.data(), rows, static_cast<Eigen::Index>(taps));
    MatrixMap o(out.data() + first * pixels * k.cout, rows, static_cast<Eigen::Index>(k.cout));
    o.noalias() = c * w;
    o.rowwise() += b;
  }
  return out;
}

Array conv2d_grad_input(const Array& grad_out, const Array& kernel,
                        const Extents& input_extents) {
  const ImageGeometry img = image_geometry(input_extents, "conv2d input");
  const KernelGeometry k = kernel_geometry(kernel);
  check_channels(img, k);
  const std::size_t pixels = img.height * img.width;
  const std::size_t taps = k.taps();
  if (grad_out.size() != img.batch * pixels * k.cout) {
    throw ShapeError("conv2d_grad_input: gradient extents " + describe(grad_out.extents()));
  }
  Array grad_in(input_extents);
  std::vector<double> col(std::min(kConvBlock, img.batch) * pixels * taps);
  ConstMatrixMap w(kernel.data(), static_cast<Eigen::Index>(taps),
                   static_cast<Eigen::Index>(k.cout));
  for (std::size_t first = 0; first < img.batch; first += kConvBlock) {
    const std::size_t count = std::min(kConvBlock, img.batch - first);
    const auto rows = static_cast<Eigen::Index>(count * pixels);
    ConstMatrixMap g(grad_out.data() + first * pixels * k.cout, rows,
                     static_cast<Eigen::Index>(k.cout));
    MatrixMap c(col.data(), rows, static_cast<Eigen::Index>(taps));
    c.noalias() = g * w.transpose();
    col2im_add(col.data(), img, k, first, count, grad_in.data());
  }
  return grad_in;
}

Array conv2d_grad_kernel(const Array& input, const Array& grad_out,
                         const Extents& kernel_extents) {
  const ImageGeometry img = image_geometry(input.extents(), "conv2d input");
  if (kernel_extents.size() != 4) throw ShapeError("conv2d_grad_kernel: kernel rank");
  const KernelGeometry k{kernel_extents[0], kernel_extents[1], kernel_extents[2],
                         kernel_extents[3]};
  check_channels(img, k);
  const std::size_t pixels = img.height * img.width;
  const std::size_t taps = k.taps();
  if (grad_out.size() != img.batch * pixels * k.cout) {
    throw ShapeError("conv2d_grad_kernel: gradient extents " + describe(grad_out.extents()));
  }
  Array grad_k(kernel_extents);
  MatrixMap gk(grad_k.data(), static_cast<Eigen::Index>(taps), static_cast<Eigen::Index>(k.cout));
  std::vector<double> col(std::min(kConvBlock, img.batch) * pixels * taps);
  for (std::size_t first = 0; first < img.batch; first += kConvBlock) {
    const std::size_t count = std::min(kConvBlock, img.batch - first);
    im2col(input.data(), img, k, first, count, col.data());
    const auto rows = static_cast<Eigen::Index>(count * pixels);
    ConstMatrixMap c(col.data(), rows, static_cast<Eigen::Index>(taps));
    ConstMatrixMap g(grad_out.data() + first * pixels * k.cout, rows,
                     static_cast<Eigen::Index>(k.cout));
    gk.noalias() += c.transpose() * g;
  }
  return grad_k;
}

Array conv2d_grad_bias(const Array& grad_out) {
  const std::size_t cout = grad_out.extents().back();
  Array gb({cout});
  const std::size_t rows = grad_out.size() / cout;
  for (std::size_t r = 0; r < rows; ++r) {
    const double* g = grad_out.data() + r * cout;
    for (std::size_t c = 0; c < cout; ++c) gb[c] += g[c];
  }
  return gb;
}

PoolResult maxpool2d_indexed(const Array& input) {
  const ImageGeometry img = image_geometry(input.extents(), "maxpool2d input");
  if (img.height < 2 || img.width < 2) {
    throw ShapeError("maxpool2d needs h,w >= 2, got " + describe(input.extents()));
  }
  const std::size_t oh = img.height / 2;
  const std::size_t ow = img.width / 2;
  const std::size_t c = img.channels;
  PoolResult r{Array(image_extents(input.extents(), img.batch, oh, ow, c)), {}};
  r.argmax.resize(r.output.size());
  const double* in = input.data();
  std::size_t o = 0;
  for (std::size_t n = 0; n < img.batch; ++n) {
    const std::size_t base = n * img.height * img.width * c;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t x = 0; x < ow; ++x) {
        for (std::size_t ch = 0; ch < c; ++ch, ++o) {
          std::size_t best = base + ((2 * y) * img.width + 2 * x) * c + ch;
          for (std::size_t dy = 0; dy < 2; ++dy) {
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t idx = base + ((2 * y + dy) * img.width + 2 * x + dx) * c + ch;
              if (in[idx] > in[best]) best = idx;
            }
          }
          r.output[o] = in[best];
          r.argmax[o] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return r;
}

Array maxpool2d(const Array& input) { return maxpool2d_indexed(input).output; }

Array maxpool2d_grad(const Array& grad_out, const std::vector<std::uint32_t>& argmax,
                     const Extents& input_extents) {
  if (grad_out.size() != argmax.size()) throw ShapeError("maxpool2d_grad: extents mismatch");
  Array grad_in(input_extents);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad_in[argmax[i]] += grad_out[i];
  return grad_in;
}

Array dense_affine(const Array& input, const Array& weight, const Array& bias) {
  if (input.rank() != 2 || weight.rank() != 2 || input.extent(1) != weight.extent(0)) {
    throw ShapeError("dense_affine: input " + describe(input.extents()) + " vs weight " +
                     describe(weight.extents()));
  }
  const std::size_t n = input.extent(0);
  const std::size_t din = weight.extent(0);
  const std::size_t dout = weight.extent(1);
  if (bias.size() != dout) {
    throw ShapeError("dense_affine: bias length " + std::to_string(bias.size()) + " != " +
                     std::to_string(dout));
  }
  Array out({n, dout});
  ConstMatrixMap x(input.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(din));
  ConstMatrixMap w(weight.data(), static_cast<Eigen::Index>(din),
                   static_cast<Eigen::Index>(dout));
  Eigen::Map<const Eigen::RowVectorXd> b(bias.data(), static_cast<Eigen::Index>(dout));
  MatrixMap o(out.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dout));
  o.noalias() = x * w;
  o.rowwise() += b;
  return out;
}

Array dense_grad_input(const Array& grad_out, const Array& weight) {
  const std::size_t n = grad_out.extent(0);
  const std::size_t din = weight.extent(0);
  const std::size_t dout = weight.extent(1);
  Array gi({n, din});
  ConstMatrixMap g(grad_out.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dout));
  ConstMatrixMap w(weight.data(), static_cast<Eigen::Index>(din),
                   static_cast<Eigen::Index>(dout));
  MatrixMap o(gi.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(din));
  o.noalias() = g * w.transpose();
  return gi;
}

Array dense_grad_weight(const Array& input, const Array& grad_out) {
  const std::size_t n = input.extent(0);
  const std::size_t din = input.extent(1);
  const std::size_t dout = grad_out.extent(1);
  Array gw({din, dout});
  ConstMatrixMap x(input.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(din));
  ConstMatrixMap g(grad_out.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dout));
  MatrixMap o(gw.data(), static_cast<Eigen::Index>(din), static_cast<Eigen::Index>(dout));
  o.noalias() = x.transpose() * g;
  return gw;
}

Array dense_grad_bias(const Array& grad_out) { return conv2d_grad_bias(grad_out); }

Array relu(const Array& input) {
  Array out = input;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return out;
}

Array softmax(const Array& logits) {
  if (logits.rank() == 0) throw ShapeError("softmax of a scalar");
  const std::size_t cols = logits.extents().back();
  if (cols == 0) throw ShapeError("softmax over empty axis");
  Array out = logits;
  const std::size_t rows = logits.size() / cols;
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out.data() + r * cols;
    double peak = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cols; ++c) {
      if (std::isnan(row[c])) throw NumericError("softmax: NaN logit");
      peak = std::max(peak, row[c]);
    }
    if (!std::isfinite(peak)) throw NumericError("softmax: non-finite logit");
    double total = 0.0;
    for (std::size_t c = 0; c < cols; ++c) {
      row[c] = std::exp(row[c] - peak);
      total += row[c];
    }
    for (std::size_t c = 0; c < cols; ++c) row[c] /= total;
  }
  return out;
}

}  // namespace pbcnn::diffcore
