#include "rwta/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace rwta {

double relative_error(double analytic, double numeric) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), 1e-12});
  return std::abs(analytic - numeric) / denom;
}

namespace {

std::vector<std::int64_t> sample_coords(std::int64_t size, int samples,
                                        SeededRng& rng) {
  if (size <= samples) {
    std::vector<std::int64_t> all(size);
    for (std::int64_t i = 0; i < size; ++i) all[i] = i;
    return all;
  }
  std::unordered_set<std::int64_t> seen;
  std::vector<std::int64_t> out;
  out.reserve(samples);
  while (int(out.size()) < samples) {
    auto idx = std::int64_t(rng.uniform_index(std::uint64_t(size)));
    if (seen.insert(idx).second) out.push_back(idx);
  }
  return out;
}

}  // namespace

template <class T>
GradCheckReport grad_check_values(const std::function<double()>& loss,
                                  const std::vector<Tensor4<T>*>& params,
                                  const std::vector<Tensor4<T>>& analytic,
                                  T eps, int samples_per_tensor,
                                  SeededRng& rng) {
  if (analytic.size() != params.size())
    throw ContractError("grad_check: analytic gradient count mismatch");
  GradCheckReport report;
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor4<T>& theta = *params[p];
    for (std::int64_t coord :
         sample_coords(theta.size(), samples_per_tensor, rng)) {
      const T orig = theta.data[coord];
      theta.data[coord] = orig + eps;
      const double plus = loss();
      theta.data[coord] = orig - eps;
      const double minus = loss();
      theta.data[coord] = orig;
      if (!std::isfinite(plus) || !std::isfinite(minus))
        throw EvalError("grad_check: non-finite loss at perturbed point");
      const double numeric = (plus - minus) / (2.0 * double(eps));
      const double a =
          analytic[p].empty() ? 0.0 : double(analytic[p].data[coord]);
      const double err = relative_error(a, numeric);
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = int(p);
        report.worst_coord = coord;
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
  }
  return report;
}

template <class T>
GradCheckReport grad_check(const GraphBuilder<T>& build,
                           const std::vector<Tensor4<T>*>& params, T eps,
                           int samples_per_tensor, SeededRng& rng) {
  std::vector<NodeId> ids;
  Tape<T> tape;
  NodeId loss_node = build(tape, ids);
  if (ids.size() != params.size())
    throw ContractError("grad_check: builder registered " +
                        std::to_string(ids.size()) + " leaves for " +
                        std::to_string(params.size()) + " parameters");
  const double base = double(tape.scalar_value(loss_node));
  if (!std::isfinite(base)) throw EvalError("grad_check: non-finite loss");
  Gradients<T> grads = tape.backward(loss_node);

  std::vector<Tensor4<T>> analytic(params.size());
  for (size_t p = 0; p < params.size(); ++p)
    if (grads.has(ids[p])) analytic[p] = grads.at(ids[p]);

  auto loss = [&]() {
    Tape<T> t;
    std::vector<NodeId> scratch;
    return double(t.scalar_value(build(t, scratch)));
  };
  return grad_check_values<T>(loss, params, analytic, eps, samples_per_tensor,
                              rng);
}

#define RWTA_INSTANTIATE(T)                                                   \
  template GradCheckReport grad_check(const GraphBuilder<T>&,                 \
                                      const std::vector<Tensor4<T>*>&, T,     \
                                      int, SeededRng&);                       \
  template GradCheckReport grad_check_values(                                 \
      const std::function<double()>&, const std::vector<Tensor4<T>*>&,        \
      const std::vector<Tensor4<T>>&, T, int, SeededRng&);

RWTA_INSTANTIATE(float)
RWTA_INSTANTIATE(double)
#undef RWTA_INSTANTIATE

}  // namespace rwta
