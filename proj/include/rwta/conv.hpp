#pragma once

#include "rwta/tensor.hpp"

namespace rwta {

enum class Padding { Same, Valid };

// Multi-channel convolution in the flip form
//   y[n,f,i,j] = sum_{a,b,c} kernel[f,a,b,c] * x[n,a,i-b,j-c] + bias[f]
// with the output origin chosen so Same padding (zero fill) preserves the
// spatial dims (odd kernels only) and Valid keeps the fully-overlapping
// window, shrinking each axis by kernel-1.
//
// kernel shape: (out_channels, in_channels, kh, kw).
// bias: (1, out_channels, 1, 1), or empty for none.
template <class T>
Tensor4<T> conv2d(const Tensor4<T>& input, const Tensor4<T>& kernel,
                  const Tensor4<T>& bias, Padding padding);

// Adjoints. Shapes are those of the corresponding forward operand.
template <class T>
Tensor4<T> conv2d_grad_input(const Tensor4<T>& grad_out, const Tensor4<T>& kernel,
                             Shape4 input_shape, Padding padding);
template <class T>
Tensor4<T> conv2d_grad_kernel(const Tensor4<T>& grad_out, const Tensor4<T>& input,
                              Shape4 kernel_shape, Padding padding);
template <class T>
Tensor4<T> conv2d_grad_bias(const Tensor4<T>& grad_out);

Shape4 conv2d_output_shape(Shape4 input, Shape4 kernel, Padding padding);

}  // namespace rwta
