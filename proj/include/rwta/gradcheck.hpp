#pragma once

#include <functional>
#include <vector>

#include "rwta/rng.hpp"
#include "rwta/tape.hpp"

namespace rwta {

// |analytic - numeric| / max(|analytic|, |numeric|, 1e-12)
double relative_error(double analytic, double numeric);

struct GradCheckReport {
  double max_rel_error = 0.0;
  int worst_param = -1;
  std::int64_t worst_coord = -1;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

// Records the loss graph on the tape from the current contents of the
// parameter tensors the caller owns, and appends the parameter leaf ids
// in a fixed order. Must be deterministic given the parameters.
template <class T>
using GraphBuilder = std::function<NodeId(Tape<T>&, std::vector<NodeId>&)>;

// Central-difference check of the tape's adjoints. Samples up to
// samples_per_tensor coordinates from each parameter (all of them when the
// tensor is small), perturbs in place by +-eps, and compares against the
// analytic gradient from one backward pass. Returns the worst relative
// error over all sampled coordinates.
template <class T>
GradCheckReport grad_check(const GraphBuilder<T>& build,
                           const std::vector<Tensor4<T>*>& params, T eps,
                           int samples_per_tensor, SeededRng& rng);

// Same sweep but against caller-supplied analytic gradients (one tensor
// per parameter, same shapes). loss() must evaluate the closure at the
// current parameter values.
template <class T>
GradCheckReport grad_check_values(const std::function<double()>& loss,
                                  const std::vector<Tensor4<T>*>& params,
                                  const std::vector<Tensor4<T>>& analytic,
                                  T eps, int samples_per_tensor, SeededRng& rng);

}  // namespace rwta
