#include "rwta/wta.hpp"

namespace rwta {

template <class T>
WtaResult<T> wta(const Tensor4<T>& map) {
  WtaResult<T> out{Tensor4<T>(map.shape), Tensor4<T>(map.shape)};
  const size_t hw = size_t(map.shape.h) * map.shape.w;
  for (int n = 0; n < map.shape.n; ++n) {
    for (int c = 0; c < map.shape.c; ++c) {
      const T* src = map.plane(n, c);
      size_t best = 0;
      for (size_t i = 1; i < hw; ++i)
        if (src[i] > src[best]) best = i;
      out.sparse.plane(n, c)[best] = src[best];
      out.mask.plane(n, c)[best] = T(1);
    }
  }
  return out;
}

template <class T>
Tensor4<T> wta_backward(const Tensor4<T>& mask, const Tensor4<T>& upstream) {
  require_same_shape(mask.shape, upstream.shape, "wta_backward");
  return mul(mask, upstream);
}

template WtaResult<float> wta(const Tensor4<float>&);
template WtaResult<double> wta(const Tensor4<double>&);
template Tensor4<float> wta_backward(const Tensor4<float>&, const Tensor4<float>&);
template Tensor4<double> wta_backward(const Tensor4<double>&, const Tensor4<double>&);

}  // namespace rwta
