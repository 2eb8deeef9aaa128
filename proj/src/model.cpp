#include "rwta/model.hpp"

#include <sstream>

#include "rwta/conv.hpp"
#include "rwta/errors.hpp"
#include "rwta/wta.hpp"

namespace rwta {

void ModelConfig::validate() const {
  if (channels < 1) throw ConfigError("channels must be >= 1, got " + std::to_string(channels));
  if (enc_kernel < 1 || enc_kernel % 2 == 0)
    throw ConfigError("enc_kernel must be odd and >= 1, got " + std::to_string(enc_kernel));
  if (dec_kernel < 1 || dec_kernel % 2 == 0)
    throw ConfigError("dec_kernel must be odd and >= 1, got " + std::to_string(dec_kernel));
  if (input_channels != 1 && input_channels != 3)
    throw ConfigError("input_channels must be 1 or 3, got " + std::to_string(input_channels));
}

std::string ModelConfig::serialize() const {
  std::ostringstream os;
  os << "channels=" << channels << "\n"
     << "enc_kernel=" << enc_kernel << "\n"
     << "dec_kernel=" << dec_kernel << "\n"
     << "input_channels=" << input_channels << "\n";
  return os.str();
}

ModelConfig ModelConfig::parse(const std::string& text) {
  ModelConfig cfg;
  bool seen[4] = {false, false, false, false};
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("bad model config line: " + line);
    std::string key = line.substr(0, eq);
    int value = 0;
    try {
      value = std::stoi(line.substr(eq + 1));
    } catch (const std::exception&) {
      throw ConfigError("bad model config value in line: " + line);
    }
    if (key == "channels") { cfg.channels = value; seen[0] = true; }
    else if (key == "enc_kernel") { cfg.enc_kernel = value; seen[1] = true; }
    else if (key == "dec_kernel") { cfg.dec_kernel = value; seen[2] = true; }
    else if (key == "input_channels") { cfg.input_channels = value; seen[3] = true; }
    else throw ConfigError("unknown model config key: " + key);
  }
  for (bool s : seen)
    if (!s) throw ConfigError("incomplete model config text");
  cfg.validate();
  return cfg;
}

template <class T>
TwoStreamNet<T> TwoStreamNet<T>::create(const ModelConfig& config, SeededRng& rng) {
  config.validate();
  const int f = config.channels, ek = config.enc_kernel, dk = config.dec_kernel;
  const int ic = config.input_channels;
  TwoStreamNet<T> net;
  net.config = config;
  net.enc1.weight = glorot_uniform<T>({f, ic, ek, ek}, rng);
  net.enc1.bias = Tensor4<T>::zeros({1, f, 1, 1});
  net.enc2.weight = glorot_uniform<T>({f, f, ek, ek}, rng);
  net.enc2.bias = Tensor4<T>::zeros({1, f, 1, 1});
  net.cell.hidden_kernel = glorot_uniform<T>({f, f, ek, ek}, rng);
  net.cell.input_kernel = glorot_uniform<T>({f, f, ek, ek}, rng);
  net.cell.bias = Tensor4<T>::zeros({1, f, 1, 1});
  net.dec.weight = glorot_uniform<T>({ic, f, dk, dk}, rng);
  net.dec.bias = Tensor4<T>::zeros({1, ic, 1, 1});
  return net;
}

template <class T>
std::vector<Tensor4<T>*> TwoStreamNet<T>::parameters() {
  return {&enc1.weight, &enc1.bias, &enc2.weight, &enc2.bias,
          &cell.hidden_kernel, &cell.input_kernel, &cell.bias,
          &dec.weight, &dec.bias};
}

template <class T>
std::vector<const Tensor4<T>*> TwoStreamNet<T>::parameters() const {
  return {&enc1.weight, &enc1.bias, &enc2.weight, &enc2.bias,
          &cell.hidden_kernel, &cell.input_kernel, &cell.bias,
          &dec.weight, &dec.bias};
}

template <class T>
std::vector<std::string> TwoStreamNet<T>::parameter_names() {
  return {"enc1.weight", "enc1.bias", "enc2.weight", "enc2.bias",
          "cell.hidden_kernel", "cell.input_kernel", "cell.bias",
          "dec.weight", "dec.bias"};
}

template <class T>
Tensor4<T> convrnn_step(const ConvRnnCell<T>& cell, const Tensor4<T>& prev_state,
                        const Tensor4<T>& input) {
  Tensor4<T> from_state = conv2d(prev_state, cell.hidden_kernel, Tensor4<T>{}, Padding::Same);
  Tensor4<T> from_input = conv2d(input, cell.input_kernel, cell.bias, Padding::Same);
  return relu(add(from_state, from_input));
}

template <class T>
static Tensor4<T> feature_stack(const TwoStreamNet<T>& net, const Tensor4<T>& frame) {
  Tensor4<T> a = relu(conv2d(frame, net.enc1.weight, net.enc1.bias, Padding::Same));
  return relu(conv2d(a, net.enc2.weight, net.enc2.bias, Padding::Same));
}

template <class T>
Tensor4<T> stateless_encode(const TwoStreamNet<T>& net, const Tensor4<T>& frame) {
  Tensor4<T> feat = feature_stack(net, frame);
  Tensor4<T> pre = conv2d(feat, net.cell.input_kernel, net.cell.bias, Padding::Same);
  return wta(relu(pre)).sparse;
}

template <class T>
RecurrentCodes<T> recurrent_encode(const TwoStreamNet<T>& net,
                                   const std::vector<Tensor4<T>>& frames,
                                   const Tensor4<T>& initial_state) {
  if (frames.empty()) throw ContractError("recurrent_encode: no frames");
  Shape4 want{frames[0].shape.n, net.config.channels, frames[0].shape.h, frames[0].shape.w};
  if (!(initial_state.shape == want))
    throw ShapeError("initial state shape " + initial_state.shape.str() + " does not match " +
                     want.str());
  RecurrentCodes<T> out;
  Tensor4<T> h = initial_state;
  for (const Tensor4<T>& frame : frames) {
    h = convrnn_step(net.cell, h, feature_stack(net, frame));
    out.codes.push_back(wta(h).sparse);
  }
  out.final_state = std::move(h);
  return out;
}

template <class T>
RecurrentCodes<T> recurrent_encode(const TwoStreamNet<T>& net,
                                   const std::vector<Tensor4<T>>& frames) {
  if (frames.empty()) throw ContractError("recurrent_encode: no frames");
  Shape4 s{frames[0].shape.n, net.config.channels, frames[0].shape.h, frames[0].shape.w};
  return recurrent_encode(net, frames, Tensor4<T>::zeros(s));
}

template <class T>
std::vector<Tensor4<T>> recurrent_states(const TwoStreamNet<T>& net,
                                         const std::vector<Tensor4<T>>& frames) {
  if (frames.empty()) throw ContractError("recurrent_states: no frames");
  Shape4 s{frames[0].shape.n, net.config.channels, frames[0].shape.h, frames[0].shape.w};
  std::vector<Tensor4<T>> states;
  Tensor4<T> h = Tensor4<T>::zeros(s);
  for (const Tensor4<T>& frame : frames) {
    h = convrnn_step(net.cell, h, feature_stack(net, frame));
    states.push_back(h);
  }
  return states;
}

template <class T>
Tensor4<T> decode(const TwoStreamNet<T>& net, const Tensor4<T>& code) {
  return conv2d(code, net.dec.weight, net.dec.bias, Padding::Same);
}

template <class T>
NetOnTape<T> put_on_tape(Tape<T>& tape, const TwoStreamNet<T>& net) {
  NetOnTape<T> ids;
  ids.enc1_w = tape.leaf(net.enc1.weight);
  ids.enc1_b = tape.leaf(net.enc1.bias);
  ids.enc2_w = tape.leaf(net.enc2.weight);
  ids.enc2_b = tape.leaf(net.enc2.bias);
  ids.cell_w = tape.leaf(net.cell.hidden_kernel);
  ids.cell_v = tape.leaf(net.cell.input_kernel);
  ids.cell_b = tape.leaf(net.cell.bias);
  ids.dec_w = tape.leaf(net.dec.weight);
  ids.dec_b = tape.leaf(net.dec.bias);
  return ids;
}

template <class T>
NodeId encoder_features(Tape<T>& tape, const NetOnTape<T>& net, NodeId frame) {
  NodeId a = tape.relu(tape.conv2d(frame, net.enc1_w, net.enc1_b, Padding::Same));
  return tape.relu(tape.conv2d(a, net.enc2_w, net.enc2_b, Padding::Same));
}

template <class T>
LossGraph<T> forward_loss(Tape<T>& tape, const TwoStreamNet<T>& net,
                          const std::vector<Tensor4<T>>& frames, WtaRule rule) {
  if (frames.size() < 2)
    throw ContractError("two-stream loss needs at least 2 frames, got " +
                        std::to_string(frames.size()));
  for (size_t i = 1; i < frames.size(); ++i)
    require_same_shape(frames[0].shape, frames[i].shape, "video frames");

  LossGraph<T> g;
  g.params = put_on_tape(tape, net);

  const Shape4 fs = frames[0].shape;
  const Shape4 state_shape{fs.n, net.config.channels, fs.h, fs.w};
  NodeId h = tape.leaf(Tensor4<T>::zeros(state_shape));
  NodeId recon_acc, pred_acc;

  // The state warms up on frame 1; losses are scored on steps 2..T.
  NodeId prev = tape.leaf(frames[0]);
  for (size_t t = 1; t < frames.size(); ++t) {
    NodeId feat = encoder_features(tape, g.params, prev);
    NodeId pre = tape.conv2d(feat, g.params.cell_v, g.params.cell_b, Padding::Same);

    NodeId code_static = tape.wta(tape.relu(pre), rule);
    NodeId recon = tape.conv2d(code_static, g.params.dec_w, g.params.dec_b, Padding::Same);
    NodeId err_s = tape.sub(prev, recon);
    NodeId sum_s = tape.sum_all(tape.mul(err_s, err_s));
    recon_acc = recon_acc.valid() ? tape.add(recon_acc, sum_s) : sum_s;

    h = tape.relu(tape.add(tape.conv2d(h, g.params.cell_w, NodeId{}, Padding::Same), pre));
    NodeId code_rec = tape.wta(h, rule);
    NodeId pred = tape.conv2d(code_rec, g.params.dec_w, g.params.dec_b, Padding::Same);
    NodeId target = tape.leaf(frames[t]);
    NodeId err_r = tape.sub(target, pred);
    NodeId sum_r = tape.sum_all(tape.mul(err_r, err_r));
    pred_acc = pred_acc.valid() ? tape.add(pred_acc, sum_r) : sum_r;

    g.static_codes.push_back(code_static);
    g.recurrent_codes.push_back(code_rec);
    g.reconstructions.push_back(recon);
    g.predictions.push_back(pred);
    prev = target;
  }

  const T norm = T(1) / (T(frames.size() - 1) * T(fs.elements()));
  g.recon_loss = tape.scale(recon_acc, norm);
  g.pred_loss = tape.scale(pred_acc, norm);
  g.loss = tape.add(g.recon_loss, g.pred_loss);
  g.final_state = h;
  return g;
}

template <class T>
LossReport<T> forward_loss(const TwoStreamNet<T>& net, const std::vector<Tensor4<T>>& frames,
                           WtaRule rule) {
  Tape<T> tape;
  LossGraph<T> g = forward_loss(tape, net, frames, rule);
  LossReport<T> r;
  r.loss = tape.scalar_value(g.loss);
  r.recon = tape.scalar_value(g.recon_loss);
  r.pred = tape.scalar_value(g.pred_loss);
  for (NodeId id : g.static_codes) r.outputs.static_codes.push_back(tape.value(id));
  for (NodeId id : g.recurrent_codes) r.outputs.recurrent_codes.push_back(tape.value(id));
  for (NodeId id : g.reconstructions) r.outputs.reconstructions.push_back(tape.value(id));
  for (NodeId id : g.predictions) r.outputs.predictions.push_back(tape.value(id));
  r.outputs.final_state = tape.value(g.final_state);
  return r;
}

#define RWTA_MODEL_INSTANTIATE(T)                                                        \
  template struct TwoStreamNet<T>;                                                       \
  template Tensor4<T> convrnn_step(const ConvRnnCell<T>&, const Tensor4<T>&,             \
                                   const Tensor4<T>&);                                   \
  template Tensor4<T> stateless_encode(const TwoStreamNet<T>&, const Tensor4<T>&);       \
  template RecurrentCodes<T> recurrent_encode(const TwoStreamNet<T>&,                    \
                                              const std::vector<Tensor4<T>>&,            \
                                              const Tensor4<T>&);                        \
  template RecurrentCodes<T> recurrent_encode(const TwoStreamNet<T>&,                    \
                                              const std::vector<Tensor4<T>>&);           \
  template std::vector<Tensor4<T>> recurrent_states(const TwoStreamNet<T>&,              \
                                                    const std::vector<Tensor4<T>>&);     \
  template Tensor4<T> decode(const TwoStreamNet<T>&, const Tensor4<T>&);                 \
  template NetOnTape<T> put_on_tape(Tape<T>&, const TwoStreamNet<T>&);                   \
  template NodeId encoder_features(Tape<T>&, const NetOnTape<T>&, NodeId);               \
  template LossGraph<T> forward_loss(Tape<T>&, const TwoStreamNet<T>&,                   \
                                     const std::vector<Tensor4<T>>&, WtaRule);           \
  template LossReport<T> forward_loss(const TwoStreamNet<T>&,                            \
                                      const std::vector<Tensor4<T>>&, WtaRule);

RWTA_MODEL_INSTANTIATE(float)
RWTA_MODEL_INSTANTIATE(double)

}  // namespace rwta
