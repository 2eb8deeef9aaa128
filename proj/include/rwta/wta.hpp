#pragma once

#include "rwta/tensor.hpp"

namespace rwta {

template <class T>
struct WtaResult {
  Tensor4<T> sparse;  // spatial max kept at its location, rest zeroed
  Tensor4<T> mask;    // exactly one 1 per (sample, channel)
};

// Per sample and per channel, keep the spatial maximum at its location and
// zero every other position. Ties keep the first winner in row-major order.
template <class T>
WtaResult<T> wta(const Tensor4<T>& map);

// Upstream gradient routed through the forward winner positions only.
template <class T>
Tensor4<T> wta_backward(const Tensor4<T>& mask, const Tensor4<T>& upstream);

}  // namespace rwta
