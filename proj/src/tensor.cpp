#include "rwta/tensor.hpp"

#include <cmath>
#include <cstring>

namespace rwta {

std::string Shape4::str() const {
  return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) +
         "x" + std::to_string(w);
}

void require_same_shape(const Shape4& a, const Shape4& b, const char* what) {
  if (a != b)
    throw ShapeError(std::string(what) + ": shape mismatch " + a.str() +
                     " vs " + b.str());
}

template <class T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a.shape, b.shape, "add");
  Tensor4<T> out(a.shape);
  for (std::int64_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] + b.data[i];
  return out;
}

template <class T>
Tensor4<T> sub(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a.shape, b.shape, "sub");
  Tensor4<T> out(a.shape);
  for (std::int64_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] - b.data[i];
  return out;
}

template <class T>
Tensor4<T> mul(const Tensor4<T>& a, const Tensor4<T>& b) {
  require_same_shape(a.shape, b.shape, "mul");
  Tensor4<T> out(a.shape);
  for (std::int64_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * b.data[i];
  return out;
}

template <class T>
Tensor4<T> scale(const Tensor4<T>& a, T factor) {
  Tensor4<T> out(a.shape);
  for (std::int64_t i = 0; i < a.size(); ++i) out.data[i] = a.data[i] * factor;
  return out;
}

template <class T>
Tensor4<T> relu(const Tensor4<T>& a) {
  Tensor4<T> out(a.shape);
  for (std::int64_t i = 0; i < a.size(); ++i)
    out.data[i] = a.data[i] > T(0) ? a.data[i] : T(0);
  return out;
}

template <class T>
void accumulate(Tensor4<T>& dst, const Tensor4<T>& src) {
  if (dst.empty()) {
    dst = src;
    return;
  }
  require_same_shape(dst.shape, src.shape, "accumulate");
  for (std::int64_t i = 0; i < src.size(); ++i) dst.data[i] += src.data[i];
}

template <class T>
T sum(const Tensor4<T>& a) {
  T acc = 0;
  for (std::int64_t i = 0; i < a.size(); ++i) acc += a.data[i];
  return acc;
}

template <class T>
T max_abs(const Tensor4<T>& a) {
  T best = 0;
  for (std::int64_t i = 0; i < a.size(); ++i)
    best = std::max(best, std::abs(a.data[i]));
  return best;
}

template <class T>
bool all_finite(const Tensor4<T>& a) {
  for (std::int64_t i = 0; i < a.size(); ++i)
    if (!std::isfinite(a.data[i])) return false;
  return true;
}

template <class T>
bool allclose(const Tensor4<T>& a, const Tensor4<T>& b, T atol) {
  if (a.shape != b.shape) return false;
  for (std::int64_t i = 0; i < a.size(); ++i)
    if (std::abs(a.data[i] - b.data[i]) > atol) return false;
  return true;
}

template <class T>
bool bit_equal(const Tensor4<T>& a, const Tensor4<T>& b) {
  if (a.shape != b.shape) return false;
  if (a.size() == 0) return true;
  return std::memcmp(a.ptr(), b.ptr(), sizeof(T) * a.size()) == 0;
}

template <class T>
Tensor4<T> maxpool2d(const Tensor4<T>& input, int window_h, int window_w,
                     int stride_h, int stride_w) {
  if (window_h <= 0 || window_w <= 0 || stride_h <= 0 || stride_w <= 0)
    throw ConfigError("maxpool2d: window and stride must be positive");
  if (window_h > input.shape.h || window_w > input.shape.w)
    throw ShapeError("maxpool2d: window " + std::to_string(window_h) + "x" +
                     std::to_string(window_w) + " exceeds input " +
                     input.shape.str());
  const int out_h = (input.shape.h - window_h) / stride_h + 1;
  const int out_w = (input.shape.w - window_w) / stride_w + 1;
  Tensor4<T> out({input.shape.n, input.shape.c, out_h, out_w});
  for (int n = 0; n < input.shape.n; ++n) {
    for (int c = 0; c < input.shape.c; ++c) {
      const T* src = input.plane(n, c);
      T* dst = out.plane(n, c);
      for (int i = 0; i < out_h; ++i) {
        for (int j = 0; j < out_w; ++j) {
          T best = src[(i * stride_h) * input.shape.w + j * stride_w];
          for (int r = 0; r < window_h; ++r)
            for (int s = 0; s < window_w; ++s)
              best = std::max(best,
                              src[(i * stride_h + r) * input.shape.w +
                                  (j * stride_w + s)]);
          dst[i * out_w + j] = best;
        }
      }
    }
  }
  return out;
}

template class Tensor4<float>;
template class Tensor4<double>;

#define RWTA_INSTANTIATE(T)                                            \
  template Tensor4<T> add(const Tensor4<T>&, const Tensor4<T>&);       \
  template Tensor4<T> sub(const Tensor4<T>&, const Tensor4<T>&);       \
  template Tensor4<T> mul(const Tensor4<T>&, const Tensor4<T>&);       \
  template Tensor4<T> scale(const Tensor4<T>&, T);                     \
  template Tensor4<T> relu(const Tensor4<T>&);                         \
  template void accumulate(Tensor4<T>&, const Tensor4<T>&);            \
  template T sum(const Tensor4<T>&);                                   \
  template T max_abs(const Tensor4<T>&);                               \
  template bool all_finite(const Tensor4<T>&);                         \
  template bool allclose(const Tensor4<T>&, const Tensor4<T>&, T);     \
  template bool bit_equal(const Tensor4<T>&, const Tensor4<T>&);       \
  template Tensor4<T> maxpool2d(const Tensor4<T>&, int, int, int, int);

RWTA_INSTANTIATE(float)
RWTA_INSTANTIATE(double)
#undef RWTA_INSTANTIATE

}  // namespace rwta
