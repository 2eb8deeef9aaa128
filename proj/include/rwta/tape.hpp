#pragma once

#include <functional>
#include <vector>

#include "rwta/conv.hpp"
#include "rwta/tensor.hpp"
#include "rwta/wta.hpp"

namespace rwta {

struct NodeId {
  int index = -1;
  bool valid() const { return index >= 0; }
  bool operator==(const NodeId& o) const { return index == o.index; }
};

// How the winner-take-all adjoint is computed. Mask routes the upstream
// gradient through the forward winner position; Literal applies WTA to the
// upstream gradient itself.
enum class WtaRule { Mask, Literal };

template <class T>
class Gradients {
 public:
  explicit Gradients(std::vector<Tensor4<T>> by_node)
      : by_node_(std::move(by_node)) {}
  bool has(NodeId id) const {
    return id.valid() && id.index < int(by_node_.size()) &&
           !by_node_[id.index].empty();
  }
  const Tensor4<T>& at(NodeId id) const {
    if (!has(id)) throw ContractError("Gradients: no gradient for node");
    return by_node_[id.index];
  }

 private:
  std::vector<Tensor4<T>> by_node_;
};

// Append-only record of operations. Forward values are computed eagerly at
// record time; backward() walks the record in reverse creation order, which
// is a valid reverse-topological order because inputs always precede their
// consumers. The accumulation order is fixed, so repeated runs are
// bit-identical. A Tape belongs to one logical execution stream.
template <class T>
class Tape {
 public:
  NodeId leaf(Tensor4<T> value);

  // bias may be an invalid NodeId for a bias-free convolution.
  NodeId conv2d(NodeId input, NodeId kernel, NodeId bias, Padding padding);
  NodeId relu(NodeId x);
  NodeId add(NodeId a, NodeId b);
  NodeId sub(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId x, T factor);
  NodeId wta(NodeId x, WtaRule rule = WtaRule::Mask);
  // Sum of all elements as a 1x1x1x1 scalar.
  NodeId sum_all(NodeId x);
  // (n, c, h, w) -> (n, c, 1, 1), mean over the spatial plane.
  NodeId spatial_mean(NodeId x);
  // Mean over the batch of -log softmax(logits)[label]; logits (n, k, 1, 1).
  NodeId softmax_xent(NodeId logits, std::vector<int> labels);

  const Tensor4<T>& value(NodeId id) const { return node(id).value; }
  T scalar_value(NodeId id) const;
  // Mask recorded by a wta node.
  const Tensor4<T>& wta_mask(NodeId id) const;
  int size() const { return int(nodes_.size()); }

  // Reverse accumulation from a scalar loss node. Gradient of the loss
  // w.r.t. itself is 1; leaves used at several places (shared parameters)
  // receive the sum of their per-use adjoints.
  Gradients<T> backward(NodeId loss) const;

  // Recomputes every non-leaf value from its recorded inputs and checks
  // the results are bit-identical to what was recorded.
  bool replay_bit_exact() const;

 private:
  struct Node {
    Tensor4<T> value;
    Tensor4<T> saved;  // op-specific (wta mask, softmax probabilities)
    std::vector<int> inputs;
    std::function<void(const Tape&, const Node&, const Tensor4<T>& gout,
                       std::vector<Tensor4<T>>& grads)>
        backward;
    std::function<Tensor4<T>(const Tape&, const Node&)> replay;
    const char* op = "";
  };

  const Node& node(NodeId id) const;
  NodeId push(Node n);

  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace rwta
