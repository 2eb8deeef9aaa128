#pragma once

#include <string>
#include <vector>

#include "rwta/rng.hpp"
#include "rwta/tape.hpp"

namespace rwta {

// Architecture: two shared convolutional encoder layers, a convolutional
// recurrent cell, and a single shared (Siamese) linear convolutional
// decoder -- 4 layers deep, WTA applied exactly once, right before the
// decoder. All convolutions use same padding so state and frame spatial
// dims match across time.
struct ModelConfig {
  int channels = 16;       // one value for all hidden layers
  int enc_kernel = 3;      // odd
  int dec_kernel = 7;      // odd
  int input_channels = 1;  // 1 (grayscale) or 3 (RGB)

  void validate() const;
  bool operator==(const ModelConfig& o) const = default;

  // key=value lines, fixed order; used by checkpoints.
  std::string serialize() const;
  static ModelConfig parse(const std::string& text);
};

template <class T>
struct ConvLayer {
  Tensor4<T> weight;  // (out, in, k, k)
  Tensor4<T> bias;    // (1, out, 1, 1)
};

// State update: relu(hidden_kernel * prev_state + input_kernel * input + bias),
// all same-padded, so the state keeps its shape over time.
template <class T>
struct ConvRnnCell {
  Tensor4<T> hidden_kernel;  // (channels, channels, k, k)
  Tensor4<T> input_kernel;   // (channels, feature_channels, k, k)
  Tensor4<T> bias;           // (1, channels, 1, 1)
};

template <class T>
struct TwoStreamNet {
  ModelConfig config;
  ConvLayer<T> enc1, enc2;
  ConvRnnCell<T> cell;
  ConvLayer<T> dec;

  // Glorot-uniform kernels, zero biases. Draw order is fixed, so a given
  // seed always produces the same network.
  static TwoStreamNet create(const ModelConfig& config, SeededRng& rng);

  // Fixed order, matching parameter_names(). The stateless stream reuses
  // cell.input_kernel and cell.bias, so every parameter appears once.
  std::vector<Tensor4<T>*> parameters();
  std::vector<const Tensor4<T>*> parameters() const;
  static std::vector<std::string> parameter_names();
};

// One time step of the cell (value level).
template <class T>
Tensor4<T> convrnn_step(const ConvRnnCell<T>& cell, const Tensor4<T>& prev_state,
                        const Tensor4<T>& input);

// Sparse code of the stateless stream for one frame.
template <class T>
Tensor4<T> stateless_encode(const TwoStreamNet<T>& net, const Tensor4<T>& frame);

template <class T>
struct RecurrentCodes {
  std::vector<Tensor4<T>> codes;  // sparse, one per frame
  Tensor4<T> final_state;         // dense, after the last frame
};

// Runs the recurrent stream over every frame. The dense state drives the
// recurrence; WTA is applied only to the decoder-facing copy.
template <class T>
RecurrentCodes<T> recurrent_encode(const TwoStreamNet<T>& net,
                                   const std::vector<Tensor4<T>>& frames,
                                   const Tensor4<T>& initial_state);
template <class T>
RecurrentCodes<T> recurrent_encode(const TwoStreamNet<T>& net,
                                   const std::vector<Tensor4<T>>& frames);

// Dense per-frame states (pre-WTA), for the supervised head.
template <class T>
std::vector<Tensor4<T>> recurrent_states(const TwoStreamNet<T>& net,
                                         const std::vector<Tensor4<T>>& frames);

// Linear convolutional decode of a sparse code back to frame space.
template <class T>
Tensor4<T> decode(const TwoStreamNet<T>& net, const Tensor4<T>& code);

// ---- tape-level graph building ----

// Leaf ids of the parameters on a tape, in parameter order.
template <class T>
struct NetOnTape {
  NodeId enc1_w, enc1_b, enc2_w, enc2_b;
  NodeId cell_w, cell_v, cell_b;
  NodeId dec_w, dec_b;
  std::vector<NodeId> ordered() const {
    return {enc1_w, enc1_b, enc2_w, enc2_b, cell_w, cell_v, cell_b, dec_w, dec_b};
  }
};

template <class T>
NetOnTape<T> put_on_tape(Tape<T>& tape, const TwoStreamNet<T>& net);

// relu(enc2(relu(enc1(x)))) -- the shared feature stack.
template <class T>
NodeId encoder_features(Tape<T>& tape, const NetOnTape<T>& net, NodeId frame);

template <class T>
struct LossGraph {
  NodeId loss, recon_loss, pred_loss;  // scalars
  std::vector<NodeId> static_codes, recurrent_codes;  // post-WTA, one per frame
  std::vector<NodeId> reconstructions, predictions;   // decoder outputs, one per frame
  NodeId final_state;
  NetOnTape<T> params;
};

// Two-stream objective over a sequence of at least two frames. From the
// second frame on, the stateless stream reconstructs the previous frame and
// the recurrent stream predicts the current one; both squared errors are
// averaged over time steps, batch, and pixels.
template <class T>
LossGraph<T> forward_loss(Tape<T>& tape, const TwoStreamNet<T>& net,
                          const std::vector<Tensor4<T>>& frames,
                          WtaRule rule = WtaRule::Mask);

template <class T>
struct StreamOutputs {
  std::vector<Tensor4<T>> static_codes, recurrent_codes;
  std::vector<Tensor4<T>> reconstructions, predictions;
  Tensor4<T> final_state;
};

template <class T>
struct LossReport {
  T loss = 0, recon = 0, pred = 0;
  StreamOutputs<T> outputs;
};

// Value-level convenience around the graph version.
template <class T>
LossReport<T> forward_loss(const TwoStreamNet<T>& net,
                           const std::vector<Tensor4<T>>& frames,
                           WtaRule rule = WtaRule::Mask);

}  // namespace rwta
