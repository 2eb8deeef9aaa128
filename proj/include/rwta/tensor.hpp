#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rwta/errors.hpp"

namespace rwta {

// Dimensions of a rank-4 array, (batch, channels, rows, cols).
struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::int64_t elements() const {
    return std::int64_t(n) * c * h * w;
  }
  bool operator==(const Shape4& o) const {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
  bool operator!=(const Shape4& o) const { return !(*this == o); }
  std::string str() const;
};

// Throws ShapeError with a message naming both shapes.
void require_same_shape(const Shape4& a, const Shape4& b, const char* what);

// Rank-4 numeric array in contiguous row-major (n, c, h, w) order.
// The universal value type: frames, feature maps, kernels, gradients.
// T is float or double, chosen per run.
template <class T>
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 s) : shape(s), data(static_cast<size_t>(s.elements()), T(0)) {
    check();
  }
  Tensor4(Shape4 s, std::vector<T> values) : shape(s), data(std::move(values)) {
    if (static_cast<std::int64_t>(data.size()) != shape.elements())
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape.str());
    check();
  }

  static Tensor4 zeros(Shape4 s) { return Tensor4(s); }
  static Tensor4 full(Shape4 s, T value) {
    Tensor4 t(s);
    for (auto& v : t.data) v = value;
    return t;
  }
  // Scalar wrapped as a 1x1x1x1 tensor.
  static Tensor4 scalar(T value) { return full({1, 1, 1, 1}, value); }

  std::int64_t size() const { return shape.elements(); }
  bool empty() const { return data.empty(); }

  T& at(int n, int c, int h, int w) {
    return data[((static_cast<size_t>(n) * shape.c + c) * shape.h + h) * shape.w + w];
  }
  T at(int n, int c, int h, int w) const {
    return data[((static_cast<size_t>(n) * shape.c + c) * shape.h + h) * shape.w + w];
  }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  // Pointer to the (n, c) spatial plane.
  T* plane(int n, int c) {
    return data.data() + (static_cast<size_t>(n) * shape.c + c) * shape.h * shape.w;
  }
  const T* plane(int n, int c) const {
    return data.data() + (static_cast<size_t>(n) * shape.c + c) * shape.h * shape.w;
  }

  Shape4 shape;
  std::vector<T> data;

 private:
  void check() const {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0)
      throw ShapeError("negative dimension in shape " + shape.str());
  }
};

// ---- elementwise operations ----

template <class T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b);
template <class T>
Tensor4<T> sub(const Tensor4<T>& a, const Tensor4<T>& b);
template <class T>
Tensor4<T> mul(const Tensor4<T>& a, const Tensor4<T>& b);
template <class T>
Tensor4<T> scale(const Tensor4<T>& a, T factor);
// max(x, 0); the subgradient convention at 0 lives in the tape op.
template <class T>
Tensor4<T> relu(const Tensor4<T>& a);

// dst += src (shape-checked accumulate used by backward passes).
template <class T>
void accumulate(Tensor4<T>& dst, const Tensor4<T>& src);

// ---- reductions / utilities ----

template <class T>
T sum(const Tensor4<T>& a);
template <class T>
T max_abs(const Tensor4<T>& a);
template <class T>
bool all_finite(const Tensor4<T>& a);
template <class T>
bool allclose(const Tensor4<T>& a, const Tensor4<T>& b, T atol);
template <class T>
bool bit_equal(const Tensor4<T>& a, const Tensor4<T>& b);

template <class To, class From>
Tensor4<To> cast(const Tensor4<From>& src) {
  Tensor4<To> out(src.shape);
  for (std::int64_t i = 0; i < src.size(); ++i)
    out.data[i] = static_cast<To>(src.data[i]);
  return out;
}

// Per-channel max over strided windows; forward-only (feature extraction,
// not trained through). Output spatial dims floor((dim - window)/stride)+1.
template <class T>
Tensor4<T> maxpool2d(const Tensor4<T>& input, int window_h, int window_w,
                     int stride_h, int stride_w);

extern template class Tensor4<float>;
extern template class Tensor4<double>;

}  // namespace rwta
