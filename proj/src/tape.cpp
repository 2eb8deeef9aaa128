#include "rwta/tape.hpp"

#include <cmath>
#include <limits>
#include <string_view>

namespace rwta {

namespace {

template <class T>
void accum(std::vector<Tensor4<T>>& grads, int id, const Tensor4<T>& g) {
  accumulate(grads[id], g);
}

}  // namespace

template <class T>
const typename Tape<T>::Node& Tape<T>::node(NodeId id) const {
  if (!id.valid() || id.index >= int(nodes_.size()))
    throw ContractError("Tape: invalid node id");
  return nodes_[id.index];
}

template <class T>
NodeId Tape<T>::push(Node n) {
  nodes_.push_back(std::move(n));
  return NodeId{int(nodes_.size()) - 1};
}

template <class T>
T Tape<T>::scalar_value(NodeId id) const {
  const Tensor4<T>& v = value(id);
  if (v.size() != 1)
    throw ContractError("Tape: node is not a scalar, shape " + v.shape.str());
  return v.data[0];
}

template <class T>
const Tensor4<T>& Tape<T>::wta_mask(NodeId id) const {
  const Node& n = node(id);
  if (std::string_view(n.op) != "wta")
    throw ContractError("Tape: wta_mask on a non-wta node");
  return n.saved;
}

template <class T>
NodeId Tape<T>::leaf(Tensor4<T> value) {
  Node n;
  n.value = std::move(value);
  n.op = "leaf";
  return push(std::move(n));
}

template <class T>
NodeId Tape<T>::conv2d(NodeId input, NodeId kernel, NodeId bias, Padding padding) {
  const Tensor4<T>& x = value(input);
  const Tensor4<T>& k = value(kernel);
  static const Tensor4<T> no_bias;
  const Tensor4<T>& b = bias.valid() ? value(bias) : no_bias;

  Node n;
  n.value = rwta::conv2d(x, k, b, padding);
  n.inputs = bias.valid() ? std::vector<int>{input.index, kernel.index, bias.index}
                          : std::vector<int>{input.index, kernel.index};
  n.op = "conv2d";
  n.backward = [padding](const Tape& t, const Node& self, const Tensor4<T>& gout,
                         std::vector<Tensor4<T>>& grads) {
    const Tensor4<T>& x = t.nodes_[self.inputs[0]].value;
    const Tensor4<T>& k = t.nodes_[self.inputs[1]].value;
    accum(grads, self.inputs[0], conv2d_grad_input(gout, k, x.shape, padding));
    accum(grads, self.inputs[1], conv2d_grad_kernel(gout, x, k.shape, padding));
    if (self.inputs.size() > 2)
      accum(grads, self.inputs[2], conv2d_grad_bias(gout));
  };
  n.replay = [padding](const Tape& t, const Node& self) {
    static const Tensor4<T> no_bias;
    return rwta::conv2d(t.nodes_[self.inputs[0]].value,
                        t.nodes_[self.inputs[1]].value,
                        self.inputs.size() > 2 ? t.nodes_[self.inputs[2]].value
                                               : no_bias,
                        padding);
  };
  return push(std::move(n));
}

template <class T>
NodeId Tape<T>::relu(NodeId x) {
  Node n;
  n.value = rwta::relu(value(x));
  n.inputs = {x.index};
  n.op = "relu";
  // Adjoint masks by forward positivity; the subgradient at exactly 0 is 0.
  n.backward = [](const Tape& t, const Node& self, const Tensor4<T>& gout,
                  std::vector<Tensor4<T>>& grads) {
    const Tensor4<T>& x = t.nodes_[self.inputs[0]].value;
    Tensor4<T> g(gout.shape);
    for (std::int64_t i = 0; i < gout.size(); ++i)
      g.data[i] = x.data[i] > T(0) ? gout.data[i] : T(0);
    accum(grads, self.inputs[0], g);
  };
  n.replay = [](const Tape& t, const Node& self) {
    return rwta::relu(t.nodes_[self.inputs[0]].value);
  };
  return push(std::move(n));
}

template <class T>
NodeId Tape<T>::add(NodeId a, NodeId b) {
  Node n;
  n.value = rwta::add(value(a), value(b));
  n.inputs = {a.index, b.index};
  n.op = "add";
  n.backward = [](const Tape&, const Node& self, const Tensor4<T>& gout,
                  std::vector<Tensor4<T>>& grads) {
    accum(grads, self.inputs[0], gout);
    accum(grads, self.inputs[1], gout);
  };
  n.replay = [](const Tape& t, const Node& self) {
    return rwta::add(t.nodes_[self.inputs[0]].value, t.nodes_[self.inputs[1]].value);
  };
  return push(std::move(n));
}

template <class T>
NodeId Tape<T>::sub(NodeId a, NodeId b) {
  Node n;
  n.value = rwta::sub(value(a), value(b));
  n.inputs = {a.index, b.index};
  n.op = "sub";
  n.backward = [](const Tape&, const Node& self, const Tensor4<T>& gout,
                  std::vector<Tensor4<T>>& grads) {
    accum(grads, self.inputs[0], gout);
    accum(grads, self.inputs[1], rwta::scale(gout, T(-1)));
  };
  n.replay = [](const Tape& t, const Node& self) {
    return rwta::sub(t.nodes_[self.inputs[0]].value, t.nodes_[self.inputs[1]].value);
  };
  return push(std::move(n));
}

template <class T>
NodeId Tape<T>::mul(NodeId a, NodeId b) {
  Node n;
  n.value = rwta::mul(value(a), value(b));
  n.inputs = {a.index, b.index};
  n.op = "mul";
  n.backward = [](const Tape& t, const Node& self, const Tensor4<T>& gout,
                  std::vector<Tensor4<T>>& grads) {
    accum(grads, self.inputs[0], rwta::mul(gout, t.nodes_[self.inputs[1]].value));
    accum(grads, self.inputs[1], rwta::mul(gout, t.nodes_[self.inputs[0]].value));
  };
  n.replay = [](const Tape& t, const Node& self) {
    return rwta::mul(t.nodes_[self.inputs[0]].value, t.nodes_[self.inputs[1]].value);
  };
  return push(std::move(n));
}

template <class T>
NodeId Tape<T>::scale(NodeId x, T factor) {
  Node n;
  n.value = rwta::scale(value(x), factor);
  n.inputs = {x.index};
  n.op = "scale";
  n.backward = [factor](const Tape&, const Node& self, const Tensor4<T>& gout,
                        std::vector<Tensor4<T>>& grads) {
    accum(grads, self.inputs[0], rwta::scale(gout, factor));
  };
  n.replay = [factor](const Tape& t, const Node& self) {
    return rwta::scale(t.nodes_[self.inputs[0]].value, factor);
  };
  return push(std::move(n));
}

template <class T>
NodeId Tape<T>::wta(NodeId x, WtaRule rule) {
  WtaResult<T> r = rwta::wta(value(x));
  Node n;
  n.value = std::move(r.sparse);
  n.saved = std::move(r.mask);
  n.inputs = {x.index};
  n.op = "wta";
  n.backward = [rule](const Tape&, const Node& self, const Tensor4<T>& gout,
                      std::vector<Tensor4<T>>& grads) {
    if (rule == WtaRule::Mask) {
      accum(grads, self.inputs[0], wta_backward(self.saved, gout));
    } else {
      accum(grads, self.inputs[0], rwta::wta(gout).sparse);
    }
  };
  n.replay = [](const Tape& t, const Node& self) {
    return rwta::wta(t.nodes_[self.inputs[0]].value).sparse;
  };
  return push(std::move(n));
}

template <class T>
NodeId Tape<T>::sum_all(NodeId x) {
  Node n;
  n.value = Tensor4<T>::scalar(rwta::sum(value(x)));
  n.inputs = {x.index};
  n.op = "sum_all";
  n.backward = [](const Tape& t, const Node& self, const Tensor4<T>& gout,
                  std::vector<Tensor4<T>>& grads) {
    accum(grads, self.inputs[0],
          Tensor4<T>::full(t.nodes_[self.inputs[0]].value.shape, gout.data[0]));
  };
  n.replay = [](const Tape& t, const Node& self) {
    return Tensor4<T>::scalar(rwta::sum(t.nodes_[self.inputs[0]].value));
  };
  return push(std::move(n));
}

template <class T>
NodeId Tape<T>::spatial_mean(NodeId x) {
  const Tensor4<T>& v = value(x);
  auto forward = [](const Tensor4<T>& v) {
    Tensor4<T> out({v.shape.n, v.shape.c, 1, 1});
    const size_t hw = size_t(v.shape.h) * v.shape.w;
    for (int n = 0; n < v.shape.n; ++n)
      for (int c = 0; c < v.shape.c; ++c) {
        const T* src = v.plane(n, c);
        T acc = 0;
        for (size_t i = 0; i < hw; ++i) acc += src[i];
        out.at(n, c, 0, 0) = acc / T(hw);
      }
    return out;
  };
  Node n;
  n.value = forward(v);
  n.inputs = {x.index};
  n.op = "spatial_mean";
  n.backward = [](const Tape& t, const Node& self, const Tensor4<T>& gout,
                  std::vector<Tensor4<T>>& grads) {
    const Shape4 s = t.nodes_[self.inputs[0]].value.shape;
    const size_t hw = size_t(s.h) * s.w;
    Tensor4<T> g(s);
    for (int n = 0; n < s.n; ++n)
      for (int c = 0; c < s.c; ++c) {
        T* dst = g.plane(n, c);
        const T v = gout.at(n, c, 0, 0) / T(hw);
        for (size_t i = 0; i < hw; ++i) dst[i] = v;
      }
    accum(grads, self.inputs[0], g);
  };
  n.replay = [forward](const Tape& t, const Node& self) {
    return forward(t.nodes_[self.inputs[0]].value);
  };
  return push(std::move(n));
}

template <class T>
NodeId Tape<T>::softmax_xent(NodeId logits, std::vector<int> labels) {
  const Tensor4<T>& z = value(logits);
  if (z.shape.h != 1 || z.shape.w != 1)
    throw ShapeError("softmax_xent: logits must be (n, k, 1, 1), got " +
                     z.shape.str());
  if (int(labels.size()) != z.shape.n)
    throw ContractError("softmax_xent: " + std::to_string(labels.size()) +
                        " labels for batch of " + std::to_string(z.shape.n));
  for (int l : labels)
    if (l < 0 || l >= z.shape.c)
      throw DataError("softmax_xent: label " + std::to_string(l) +
                      " out of range [0, " + std::to_string(z.shape.c) + ")");

  auto softmax = [](const Tensor4<T>& z) {
    Tensor4<T> p(z.shape);
    for (int n = 0; n < z.shape.n; ++n) {
      T zmax = z.at(n, 0, 0, 0);
      for (int k = 1; k < z.shape.c; ++k) zmax = std::max(zmax, z.at(n, k, 0, 0));
      T denom = 0;
      for (int k = 0; k < z.shape.c; ++k) {
        T e = std::exp(z.at(n, k, 0, 0) - zmax);
        p.at(n, k, 0, 0) = e;
        denom += e;
      }
      for (int k = 0; k < z.shape.c; ++k) p.at(n, k, 0, 0) /= denom;
    }
    return p;
  };

  Node n;
  n.saved = softmax(z);
  T loss = 0;
  for (int i = 0; i < z.shape.n; ++i)
    loss -= std::log(std::max(n.saved.at(i, labels[i], 0, 0),
                              std::numeric_limits<T>::min()));
  n.value = Tensor4<T>::scalar(loss / T(z.shape.n));
  n.inputs = {logits.index};
  n.op = "softmax_xent";
  n.backward = [labels](const Tape&, const Node& self, const Tensor4<T>& gout,
                        std::vector<Tensor4<T>>& grads) {
    // (softmax - onehot) / n, scaled by the upstream scalar.
    Tensor4<T> g = self.saved;
    const int batch = g.shape.n;
    for (int i = 0; i < batch; ++i) g.at(i, labels[i], 0, 0) -= T(1);
    accum(grads, self.inputs[0], rwta::scale(g, gout.data[0] / T(batch)));
  };
  n.replay = [labels, softmax](const Tape& t, const Node& self) {
    const Tensor4<T>& z = t.nodes_[self.inputs[0]].value;
    Tensor4<T> p = softmax(z);
    T loss = 0;
    for (int i = 0; i < z.shape.n; ++i)
      loss -= std::log(std::max(p.at(i, labels[i], 0, 0),
                                std::numeric_limits<T>::min()));
    return Tensor4<T>::scalar(loss / T(z.shape.n));
  };
  return push(std::move(n));
}

template <class T>
Gradients<T> Tape<T>::backward(NodeId loss) const {
  const Tensor4<T>& lv = value(loss);
  if (lv.shape != Shape4{1, 1, 1, 1})
    throw ContractError("backward: loss must be a 1x1x1x1 scalar, got " +
                        lv.shape.str());
  std::vector<Tensor4<T>> grads(nodes_.size());
  grads[loss.index] = Tensor4<T>::scalar(T(1));
  for (int i = loss.index; i >= 0; --i) {
    if (grads[i].empty() || !nodes_[i].backward) continue;
    nodes_[i].backward(*this, nodes_[i], grads[i], grads);
  }
  return Gradients<T>(std::move(grads));
}

template <class T>
bool Tape<T>::replay_bit_exact() const {
  for (const Node& n : nodes_) {
    if (!n.replay) continue;
    if (!bit_equal(n.replay(*this, n), n.value)) return false;
  }
  return true;
}

template class Tape<float>;
template class Tape<double>;

}  // namespace rwta
