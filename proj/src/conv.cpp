// im2col + GEMM convolution, plus the matching adjoints.

#include "rwta/conv.hpp"

#include <Eigen/Dense>

namespace rwta {

namespace {

template <class T>
using MatMap =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class T>
using ConstMatMap = Eigen::Map<
    const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

struct ConvDims {
  int pad_h = 0, pad_w = 0;
  int out_h = 0, out_w = 0;
};

ConvDims conv_dims(Shape4 input, Shape4 kernel, Padding padding) {
  if (kernel.c != input.c)
    throw ShapeError("conv2d: kernel input channels do not match input, kernel " +
                     kernel.str() + " vs input " + input.str());
  ConvDims d;
  if (padding == Padding::Same) {
    if (kernel.h % 2 == 0 || kernel.w % 2 == 0)
      throw ConfigError("conv2d: same padding requires odd kernel dims, got " +
                        kernel.str());
    d.pad_h = (kernel.h - 1) / 2;
    d.pad_w = (kernel.w - 1) / 2;
    d.out_h = input.h;
    d.out_w = input.w;
  } else {
    d.out_h = input.h - kernel.h + 1;
    d.out_w = input.w - kernel.w + 1;
    if (d.out_h <= 0 || d.out_w <= 0)
      throw ShapeError("conv2d: valid padding with kernel " + kernel.str() +
                       " larger than input " + input.str());
  }
  return d;
}

// The flip form above equals cross-correlation with a spatially flipped
// kernel; flipping once lets im2col walk the input in natural order.
template <class T>
Tensor4<T> flip_kernel(const Tensor4<T>& k) {
  Tensor4<T> out(k.shape);
  for (int f = 0; f < k.shape.n; ++f)
    for (int a = 0; a < k.shape.c; ++a)
      for (int b = 0; b < k.shape.h; ++b)
        for (int c = 0; c < k.shape.w; ++c)
          out.at(f, a, k.shape.h - 1 - b, k.shape.w - 1 - c) = k.at(f, a, b, c);
  return out;
}

// Columns for one sample: rows (in_c * kh * kw), cols (out_h * out_w).
template <class T>
void im2col(const Tensor4<T>& input, int sample, Shape4 kernel,
            const ConvDims& d, std::vector<T>& col) {
  const int in_h = input.shape.h, in_w = input.shape.w;
  const size_t out_hw = size_t(d.out_h) * d.out_w;
  col.assign(size_t(kernel.c) * kernel.h * kernel.w * out_hw, T(0));
  size_t row = 0;
  for (int a = 0; a < kernel.c; ++a) {
    const T* src = input.plane(sample, a);
    for (int b = 0; b < kernel.h; ++b) {
      for (int c = 0; c < kernel.w; ++c, ++row) {
        T* dst = col.data() + row * out_hw;
        for (int i = 0; i < d.out_h; ++i) {
          const int r = i - d.pad_h + b;
          if (r < 0 || r >= in_h) continue;
          for (int j = 0; j < d.out_w; ++j) {
            const int s = j - d.pad_w + c;
            if (s < 0 || s >= in_w) continue;
            dst[size_t(i) * d.out_w + j] = src[size_t(r) * in_w + s];
          }
        }
      }
    }
  }
}

// Scatter-add transpose of im2col.
template <class T>
void col2im(const std::vector<T>& col, Shape4 kernel, const ConvDims& d,
            Tensor4<T>& grad_input, int sample) {
  const int in_h = grad_input.shape.h, in_w = grad_input.shape.w;
  const size_t out_hw = size_t(d.out_h) * d.out_w;
  size_t row = 0;
  for (int a = 0; a < kernel.c; ++a) {
    T* dst = grad_input.plane(sample, a);
    for (int b = 0; b < kernel.h; ++b) {
      for (int c = 0; c < kernel.w; ++c, ++row) {
        const T* src = col.data() + row * out_hw;
        for (int i = 0; i < d.out_h; ++i) {
          const int r = i - d.pad_h + b;
          if (r < 0 || r >= in_h) continue;
          for (int j = 0; j < d.out_w; ++j) {
            const int s = j - d.pad_w + c;
            if (s < 0 || s >= in_w) continue;
            dst[size_t(r) * in_w + s] += src[size_t(i) * d.out_w + j];
          }
        }
      }
    }
  }
}

}  // namespace

Shape4 conv2d_output_shape(Shape4 input, Shape4 kernel, Padding padding) {
  ConvDims d = conv_dims(input, kernel, padding);
  return {input.n, kernel.n, d.out_h, d.out_w};
}

template <class T>
Tensor4<T> conv2d(const Tensor4<T>& input, const Tensor4<T>& kernel,
                  const Tensor4<T>& bias, Padding padding) {
  const ConvDims d = conv_dims(input.shape, kernel.shape, padding);
  const int out_c = kernel.shape.n;
  if (!bias.empty() && bias.shape != Shape4{1, out_c, 1, 1})
    throw ShapeError("conv2d: bias shape " + bias.shape.str() +
                     " does not match output channels " + std::to_string(out_c));

  Tensor4<T> flipped = flip_kernel(kernel);
  const Eigen::Index rows = Eigen::Index(kernel.shape.c) * kernel.shape.h * kernel.shape.w;
  const Eigen::Index out_hw = Eigen::Index(d.out_h) * d.out_w;
  ConstMatMap<T> kmat(flipped.ptr(), out_c, rows);

  Tensor4<T> out({input.shape.n, out_c, d.out_h, d.out_w});
  std::vector<T> col;
  for (int n = 0; n < input.shape.n; ++n) {
    im2col(input, n, kernel.shape, d, col);
    ConstMatMap<T> cmat(col.data(), rows, out_hw);
    MatMap<T> ymat(out.plane(n, 0), out_c, out_hw);
    ymat.noalias() = kmat * cmat;
  }
  if (!bias.empty()) {
    for (int n = 0; n < input.shape.n; ++n)
      for (int f = 0; f < out_c; ++f) {
        T* dst = out.plane(n, f);
        const T b = bias.data[f];
        for (Eigen::Index i = 0; i < out_hw; ++i) dst[i] += b;
      }
  }
  return out;
}

template <class T>
Tensor4<T> conv2d_grad_input(const Tensor4<T>& grad_out, const Tensor4<T>& kernel,
                             Shape4 input_shape, Padding padding) {
  const ConvDims d = conv_dims(input_shape, kernel.shape, padding);
  require_same_shape(grad_out.shape, {input_shape.n, kernel.shape.n, d.out_h, d.out_w},
                     "conv2d_grad_input upstream gradient");
  Tensor4<T> flipped = flip_kernel(kernel);
  const Eigen::Index rows = Eigen::Index(kernel.shape.c) * kernel.shape.h * kernel.shape.w;
  const Eigen::Index out_hw = Eigen::Index(d.out_h) * d.out_w;
  ConstMatMap<T> kmat(flipped.ptr(), kernel.shape.n, rows);

  Tensor4<T> grad_input(input_shape);
  std::vector<T> col(size_t(rows) * out_hw);
  for (int n = 0; n < input_shape.n; ++n) {
    ConstMatMap<T> gmat(grad_out.plane(n, 0), kernel.shape.n, out_hw);
    MatMap<T> cmat(col.data(), rows, out_hw);
    cmat.noalias() = kmat.transpose() * gmat;
    col2im(col, kernel.shape, d, grad_input, n);
  }
  return grad_input;
}

template <class T>
Tensor4<T> conv2d_grad_kernel(const Tensor4<T>& grad_out, const Tensor4<T>& input,
                              Shape4 kernel_shape, Padding padding) {
  const ConvDims d = conv_dims(input.shape, kernel_shape, padding);
  require_same_shape(grad_out.shape, {input.shape.n, kernel_shape.n, d.out_h, d.out_w},
                     "conv2d_grad_kernel upstream gradient");
  const Eigen::Index rows = Eigen::Index(kernel_shape.c) * kernel_shape.h * kernel_shape.w;
  const Eigen::Index out_hw = Eigen::Index(d.out_h) * d.out_w;

  Tensor4<T> grad_flipped(kernel_shape);
  MatMap<T> gk(grad_flipped.ptr(), kernel_shape.n, rows);
  std::vector<T> col;
  for (int n = 0; n < input.shape.n; ++n) {
    im2col(input, n, kernel_shape, d, col);
    ConstMatMap<T> cmat(col.data(), rows, out_hw);
    ConstMatMap<T> gmat(grad_out.plane(n, 0), kernel_shape.n, out_hw);
    gk.noalias() += gmat * cmat.transpose();
  }
  // The forward used the flipped kernel, so unflip the adjoint.
  return flip_kernel(grad_flipped);
}

template <class T>
Tensor4<T> conv2d_grad_bias(const Tensor4<T>& grad_out) {
  Tensor4<T> grad_bias({1, grad_out.shape.c, 1, 1});
  for (int n = 0; n < grad_out.shape.n; ++n)
    for (int f = 0; f < grad_out.shape.c; ++f) {
      const T* src = grad_out.plane(n, f);
      T acc = 0;
      const size_t hw = size_t(grad_out.shape.h) * grad_out.shape.w;
      for (size_t i = 0; i < hw; ++i) acc += src[i];
      grad_bias.data[f] += acc;
    }
  return grad_bias;
}

#define RWTA_INSTANTIATE(T)                                                      \
  template Tensor4<T> conv2d(const Tensor4<T>&, const Tensor4<T>&,               \
                             const Tensor4<T>&, Padding);                        \
  template Tensor4<T> conv2d_grad_input(const Tensor4<T>&, const Tensor4<T>&,    \
                                        Shape4, Padding);                        \
  template Tensor4<T> conv2d_grad_kernel(const Tensor4<T>&, const Tensor4<T>&,   \
                                         Shape4, Padding);                       \
  template Tensor4<T> conv2d_grad_bias(const Tensor4<T>&);

RWTA_INSTANTIATE(float)
RWTA_INSTANTIATE(double)
#undef RWTA_INSTANTIATE

}  // namespace rwta
