#pragma once

// Deliberately naive reference implementations used to check the fast paths.
// Everything here is plain loops over the defining formulas -- no im2col, no
// BLAS, no shortcuts -- so a bug in the production code can't hide in a
// shared helper.

#include <functional>
#include <vector>

#include "rwta/conv.hpp"
#include "rwta/rng.hpp"
#include "rwta/tensor.hpp"

namespace oracle {

using rwta::Padding;
using rwta::SeededRng;
using rwta::Shape4;
using rwta::Tensor4;

// Direct evaluation of the flip-form convolution:
//   y[n, o, i, j] = bias[o] + sum_{a, b, c} k[o, a, b, c] * x[n, a, i - b + off_h, j - c + off_w]
// where out-of-range taps read zero. "Same" keeps the input size (odd kernels,
// offset (k-1)/2); "Valid" shrinks by kernel-1 and starts at offset kernel-1.
template <class T>
Tensor4<T> conv2d_flip(const Tensor4<T>& input, const Tensor4<T>& kernel,
                       const Tensor4<T>& bias, Padding padding);

// Center-difference gradient of `f` with respect to every element of `param`.
template <class T>
Tensor4<T> numeric_grad(const std::function<T()>& f, Tensor4<T>& param, T eps);

// Plain loop max pooling.
template <class T>
Tensor4<T> maxpool(const Tensor4<T>& input, int window, int stride);

template <class T>
Tensor4<T> random_tensor(const Shape4& shape, SeededRng& rng, T lo = T(-1), T hi = T(1));

}  // namespace oracle
