#include "rwta/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "rwta/io.hpp"

namespace rwta {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& line) {
  try {
    size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument("trailing junk");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value in line: " + line);
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (sequence_length < 2 || sequence_length > 10)
    throw ConfigError("sequence length must be in [2, 10], got " +
                      std::to_string(sequence_length));
  if (epochs < 1) throw ConfigError("epochs must be >= 1, got " + std::to_string(epochs));
  if (batch_size < 1)
    throw ConfigError("batch size must be >= 1, got " + std::to_string(batch_size));
  if (precision != "float" && precision != "double")
    throw ConfigError("precision must be float or double, got " + precision);
  if (log_every < 1)
    throw ConfigError("log_every must be >= 1, got " + std::to_string(log_every));
  if (!(lr >= 0) || !std::isfinite(lr))
    throw ConfigError("learning rate must be finite and >= 0, got " + fmt_double(lr));
  if (max_updates < 0)
    throw ConfigError("max_updates must be >= 0, got " + std::to_string(max_updates));
  if (clip_norm < 0 || !std::isfinite(clip_norm))
    throw ConfigError("clip_norm must be finite and >= 0, got " + fmt_double(clip_norm));
}

std::string TrainConfig::serialize() const {
  std::ostringstream os;
  os << "epochs=" << epochs << "\n"
     << "batch_size=" << batch_size << "\n"
     << "sequence_length=" << sequence_length << "\n"
     << "precision=" << precision << "\n"
     << "seed=" << seed << "\n"
     << "wta_rule=" << (wta_rule == WtaRule::Mask ? "mask" : "literal") << "\n"
     << "log_every=" << log_every << "\n"
     << "lr=" << fmt_double(lr) << "\n"
     << "max_updates=" << max_updates << "\n"
     << "deterministic=" << (deterministic ? 1 : 0) << "\n"
     << "clip_norm=" << fmt_double(clip_norm) << "\n";
  return os.str();
}

TrainConfig TrainConfig::parse(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("bad train config line: " + line);
    const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    if (key == "epochs") cfg.epochs = int(parse_double(val, line));
    else if (key == "batch_size") cfg.batch_size = int(parse_double(val, line));
    else if (key == "sequence_length") cfg.sequence_length = int(parse_double(val, line));
    else if (key == "precision") cfg.precision = val;
    else if (key == "seed") cfg.seed = std::strtoull(val.c_str(), nullptr, 10);
    else if (key == "wta_rule") {
      if (val == "mask") cfg.wta_rule = WtaRule::Mask;
      else if (val == "literal") cfg.wta_rule = WtaRule::Literal;
      else throw ConfigError("unknown wta_rule: " + val);
    } else if (key == "log_every") cfg.log_every = int(parse_double(val, line));
    else if (key == "lr") cfg.lr = parse_double(val, line);
    else if (key == "max_updates") cfg.max_updates = std::int64_t(parse_double(val, line));
    else if (key == "deterministic") cfg.deterministic = parse_double(val, line) != 0;
    else if (key == "clip_norm") cfg.clip_norm = parse_double(val, line);
    else throw ConfigError("unknown train config key: " + key);
  }
  cfg.validate();
  return cfg;
}

// ---- metrics ----

std::string MetricsLog::to_csv() const {
  std::ostringstream os;
  os << "step,epoch,loss_recon,loss_pred,loss_total,wall_ms\n";
  for (const auto& r : rows)
    os << r.step << "," << r.epoch << "," << fmt_double(r.loss_recon) << ","
       << fmt_double(r.loss_pred) << "," << fmt_double(r.loss_total) << ","
       << fmt_double(r.wall_ms) << "\n";
  return os.str();
}

void MetricsLog::save_csv(const std::string& path) const { io::spit(path, to_csv()); }

MetricsLog MetricsLog::parse_csv(const std::string& text) {
  MetricsLog log;
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "step,epoch,loss_recon,loss_pred,loss_total,wall_ms")
    throw FormatError("bad metrics header: " + line);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ls, field, ',')) fields.push_back(field);
    if (fields.size() != 6) throw FormatError("bad metrics row: " + line);
    MetricsRow r;
    r.step = std::int64_t(parse_double(fields[0], line));
    r.epoch = int(parse_double(fields[1], line));
    r.loss_recon = parse_double(fields[2], line);
    r.loss_pred = parse_double(fields[3], line);
    r.loss_total = parse_double(fields[4], line);
    r.wall_ms = parse_double(fields[5], line);
    log.rows.push_back(r);
  }
  return log;
}

// ---- Adam ----

template <class T>
AdamState<T> AdamState<T>::init(const std::vector<Tensor4<T>*>& params, T lr_in) {
  AdamState<T> s;
  s.lr = lr_in;
  for (const auto* p : params) {
    s.m.push_back(Tensor4<T>::zeros(p->shape));
    s.v.push_back(Tensor4<T>::zeros(p->shape));
  }
  return s;
}

template <class T>
void adam_step(const std::vector<Tensor4<T>*>& params, const std::vector<Tensor4<T>>& grads,
               AdamState<T>& state, const std::vector<std::string>& names) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ContractError("adam_step: have " + std::to_string(params.size()) + " parameters, " +
                        std::to_string(grads.size()) + " gradients, " +
                        std::to_string(state.m.size()) + " moment pairs");
  auto name_of = [&](size_t i) {
    return i < names.size() ? names[i] : "parameter " + std::to_string(i);
  };
  for (size_t i = 0; i < params.size(); ++i) {
    require_same_shape(params[i]->shape, grads[i].shape, "adam_step gradient");
    if (!all_finite(grads[i]))
      throw TrainError("non-finite gradient for " + name_of(i) + " at step " +
                       std::to_string(state.t + 1));
  }
  state.t += 1;
  const T b1t = T(1) - T(std::pow(double(state.beta1), double(state.t)));
  const T b2t = T(1) - T(std::pow(double(state.beta2), double(state.t)));
  for (size_t i = 0; i < params.size(); ++i) {
    T* theta = params[i]->ptr();
    T* m = state.m[i].ptr();
    T* v = state.v[i].ptr();
    const T* g = grads[i].ptr();
    const std::int64_t n = params[i]->size();
    for (std::int64_t k = 0; k < n; ++k) {
      m[k] = state.beta1 * m[k] + (T(1) - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (T(1) - state.beta2) * g[k] * g[k];
      const T mhat = m[k] / b1t;
      const T vhat = v[k] / b2t;
      theta[k] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

// ---- classifier head ----

template <class T>
ClassifierHead<T> ClassifierHead<T>::create(int channels, int classes, SeededRng& rng) {
  if (channels < 1 || classes < 1)
    throw ConfigError("classifier head needs positive channels/classes, got " +
                      std::to_string(channels) + "/" + std::to_string(classes));
  ClassifierHead<T> h;
  h.weight = glorot_uniform<T>({classes, channels, 1, 1}, rng);
  h.bias = Tensor4<T>::zeros({1, classes, 1, 1});
  return h;
}

// ---- checkpoints ----

template <class T>
Checkpoint<T> Checkpoint<T>::take(const TwoStreamNet<T>& net, const TrainConfig& cfg,
                                  const AdamState<T>* adam, const SeededRng* rng,
                                  std::int64_t step_in, const ClassifierHead<T>* head) {
  Checkpoint<T> c;
  c.model = net.config;
  c.train = cfg;
  c.names = TwoStreamNet<T>::parameter_names();
  for (const auto* p : net.parameters()) c.tensors.push_back(*p);
  if (head) {
    c.has_head = true;
    c.names.push_back("head.weight");
    c.names.push_back("head.bias");
    c.tensors.push_back(head->weight);
    c.tensors.push_back(head->bias);
  }
  if (adam) {
    if (adam->m.size() != c.names.size())
      throw ContractError("checkpoint: optimizer tracks " + std::to_string(adam->m.size()) +
                          " tensors, run has " + std::to_string(c.names.size()));
    c.has_adam = true;
    c.adam = *adam;
  }
  if (rng) c.rng_blob = rng->serialize();
  c.step = step_in;
  return c;
}

template <class T>
void Checkpoint<T>::restore(TwoStreamNet<T>& net, AdamState<T>* adam_out, SeededRng* rng_out,
                            ClassifierHead<T>* head_out) const {
  const auto expect = TwoStreamNet<T>::parameter_names();
  if (names.size() < expect.size())
    throw FormatError("checkpoint holds " + std::to_string(names.size()) + " tensors, expected " +
                      std::to_string(expect.size()));
  for (size_t i = 0; i < expect.size(); ++i)
    if (names[i] != expect[i])
      throw FormatError("checkpoint tensor " + std::to_string(i) + " is '" + names[i] +
                        "', expected '" + expect[i] + "'");
  net.config = model;
  auto params = net.parameters();
  for (size_t i = 0; i < params.size(); ++i) *params[i] = tensors[i];
  if (head_out && has_head) {
    head_out->weight = tensors[expect.size()];
    head_out->bias = tensors[expect.size() + 1];
  }
  if (adam_out && has_adam) *adam_out = adam;
  if (rng_out && !rng_blob.empty()) *rng_out = SeededRng::deserialize(rng_blob);
}

// File layout (little-endian, FNV-1a-64 checksum of everything before it
// in the trailing 8 bytes):
//   0  "RWTA"                16 step (u64)
//   4  version=1             24 config digest (u64, FNV of config text)
//   8  scalar bytes (4|8)    32 flags (1 adam, 2 rng, 4 head)
//  12  tensor block count    36 zero pad to 64
//  64  model config text (u32 length + bytes)
//      train config text (u32 length + bytes)
//      rng blob (u32 length + bytes) when flagged
//      tensor blocks: u32 name length, name, shape (4 x i32), scalars
//      trailing checksum (u64)

template <class T>
static void write_tensor_block(io::Writer& w, const std::string& name, const Tensor4<T>& t) {
  w.u32(std::uint32_t(name.size()));
  w.bytes(name.data(), name.size());
  w.i32(t.shape.n);
  w.i32(t.shape.c);
  w.i32(t.shape.h);
  w.i32(t.shape.w);
  w.array(t.ptr(), size_t(t.size()));
}

template <class T>
static Tensor4<T> read_tensor_block(io::Reader& r, std::string& name) {
  const auto len = r.u32("tensor name length");
  if (len > 4096) throw FormatError("unreasonable tensor name length " + std::to_string(len));
  name.resize(len);
  if (len) r.bytes(name.data(), len, "tensor name");
  Shape4 s;
  s.n = r.i32("tensor shape");
  s.c = r.i32("tensor shape");
  s.h = r.i32("tensor shape");
  s.w = r.i32("tensor shape");
  if (s.n < 0 || s.c < 0 || s.h < 0 || s.w < 0 || s.elements() > (1ll << 33))
    throw FormatError("bad tensor shape " + s.str() + " for '" + name + "'");
  Tensor4<T> t(s);
  r.array(t.ptr(), size_t(t.size()), "tensor data");
  return t;
}

template <class T>
void save_checkpoint(const Checkpoint<T>& ckpt, const std::string& path) {
  if (ckpt.names.size() != ckpt.tensors.size())
    throw ContractError("checkpoint name/tensor count mismatch");
  const std::string model_text = ckpt.model.serialize();
  const std::string train_text = ckpt.train.serialize();
  io::Fnv1a digest;
  digest.update_str(model_text);
  digest.update_str(train_text);

  std::uint32_t flags = 0;
  if (ckpt.has_adam) flags |= 1;
  if (!ckpt.rng_blob.empty()) flags |= 2;
  if (ckpt.has_head) flags |= 4;
  const std::uint32_t blocks =
      std::uint32_t(ckpt.tensors.size() * (ckpt.has_adam ? 3 : 1));

  std::ostringstream buf;
  io::Writer w(buf);
  w.bytes("RWTA", 4);
  w.u32(1);
  w.u32(sizeof(T));
  w.u32(blocks);
  w.u64(std::uint64_t(ckpt.step));
  w.u64(digest.digest());
  w.u32(flags);
  w.pad_to(64);
  w.u32(std::uint32_t(model_text.size()));
  w.bytes(model_text.data(), model_text.size());
  w.u32(std::uint32_t(train_text.size()));
  w.bytes(train_text.data(), train_text.size());
  if (flags & 2) {
    w.u32(std::uint32_t(ckpt.rng_blob.size()));
    w.bytes(ckpt.rng_blob.data(), ckpt.rng_blob.size());
  }
  for (size_t i = 0; i < ckpt.tensors.size(); ++i)
    write_tensor_block(w, ckpt.names[i], ckpt.tensors[i]);
  if (ckpt.has_adam) {
    if (ckpt.adam.m.size() != ckpt.tensors.size())
      throw ContractError("checkpoint optimizer state misaligned with tensors");
    // Optimizer scalars ride in the same text block for exact round trips.
    for (size_t i = 0; i < ckpt.tensors.size(); ++i)
      write_tensor_block(w, "adam.m." + ckpt.names[i], ckpt.adam.m[i]);
    for (size_t i = 0; i < ckpt.tensors.size(); ++i)
      write_tensor_block(w, "adam.v." + ckpt.names[i], ckpt.adam.v[i]);
    w.u64(std::uint64_t(ckpt.adam.t));
    w.f64(double(ckpt.adam.lr));
    w.f64(double(ckpt.adam.beta1));
    w.f64(double(ckpt.adam.beta2));
    w.f64(double(ckpt.adam.eps));
  }
  const std::string payload = std::move(buf).str();
  io::Fnv1a sum;
  sum.update(payload.data(), payload.size());
  std::ostringstream tail;
  io::Writer tw(tail);
  tw.u64(sum.digest());
  io::spit(path, payload + tail.str());
}

template <class T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  const std::string bytes = io::slurp(path);
  if (bytes.size() < 72)
    throw FormatError("checkpoint too short: " + std::to_string(bytes.size()) + " bytes in " +
                      path);
  io::Fnv1a sum;
  sum.update(bytes.data(), bytes.size() - 8);
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= std::uint64_t(std::uint8_t(bytes[bytes.size() - 8 + i])) << (8 * i);
  if (stored != sum.digest())
    throw FormatError("checksum mismatch in " + path + ": file is corrupt");

  std::istringstream in(bytes.substr(0, bytes.size() - 8));
  io::Reader r(in);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, "RWTA", 4) != 0)
    throw FormatError("bad magic at byte 0 in " + path + ": not a checkpoint");
  const auto version = r.u32("version");
  if (version != 1)
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto prec = r.u32("precision");
  if (prec != sizeof(T))
    throw FormatError("checkpoint stores " + std::to_string(prec) + "-byte scalars, loader wants " +
                      std::to_string(sizeof(T)));
  const auto blocks = r.u32("tensor count");
  Checkpoint<T> c;
  c.step = std::int64_t(r.u64("step"));
  const auto digest = r.u64("config digest");
  const auto flags = r.u32("flags");
  r.skip_to(64, "header padding");

  const auto model_len = r.u32("model config length");
  std::string model_text(model_len, '\0');
  if (model_len) r.bytes(model_text.data(), model_len, "model config");
  const auto train_len = r.u32("train config length");
  std::string train_text(train_len, '\0');
  if (train_len) r.bytes(train_text.data(), train_len, "train config");
  io::Fnv1a check;
  check.update_str(model_text);
  check.update_str(train_text);
  if (check.digest() != digest)
    throw FormatError("config digest mismatch in " + path);
  c.model = ModelConfig::parse(model_text);
  c.train = TrainConfig::parse(train_text);

  if (flags & 2) {
    const auto len = r.u32("rng blob length");
    c.rng_blob.resize(len);
    if (len) r.bytes(c.rng_blob.data(), len, "rng blob");
  }
  c.has_adam = flags & 1;
  c.has_head = flags & 4;
  const std::uint32_t per = c.has_adam ? 3 : 1;
  if (blocks % per != 0)
    throw FormatError("tensor block count " + std::to_string(blocks) +
                      " does not fit the layout");
  const std::uint32_t count = blocks / per;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name;
    c.tensors.push_back(read_tensor_block<T>(r, name));
    c.names.push_back(name);
  }
  if (c.has_adam) {
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name;
      c.adam.m.push_back(read_tensor_block<T>(r, name));
      if (name != "adam.m." + c.names[i])
        throw FormatError("optimizer block '" + name + "' out of order");
    }
    for (std::uint32_t i = 0; i < count; ++i) {
      std::string name;
      c.adam.v.push_back(read_tensor_block<T>(r, name));
      if (name != "adam.v." + c.names[i])
        throw FormatError("optimizer block '" + name + "' out of order");
    }
    c.adam.t = std::int64_t(r.u64("optimizer step"));
    c.adam.lr = T(r.f64("optimizer lr"));
    c.adam.beta1 = T(r.f64("optimizer beta1"));
    c.adam.beta2 = T(r.f64("optimizer beta2"));
    c.adam.eps = T(r.f64("optimizer eps"));
  }
  return c;
}

// ---- training loops ----

namespace {

template <class T>
std::vector<Tensor4<T>> collect_grads(const Tape<T>& tape, const Gradients<T>& grads,
                                      const std::vector<NodeId>& ids) {
  std::vector<Tensor4<T>> out;
  for (NodeId id : ids)
    out.push_back(grads.has(id) ? grads.at(id) : Tensor4<T>::zeros(tape.value(id).shape));
  return out;
}

template <class T>
bool grads_finite(const std::vector<Tensor4<T>>& grads) {
  for (const auto& g : grads)
    if (!all_finite(g)) return false;
  return true;
}

template <class T>
void clip_global_norm(std::vector<Tensor4<T>>& grads, double clip) {
  double sq = 0;
  for (const auto& g : grads)
    for (const T v : g.data) sq += double(v) * double(v);
  const double norm = std::sqrt(sq);
  if (norm <= clip || norm == 0) return;
  const T s = T(clip / norm);
  for (auto& g : grads)
    for (auto& v : g.data) v *= s;
}

std::vector<int> epoch_order(int count, std::uint64_t seed, int epoch, std::uint64_t salt) {
  std::vector<int> order(count);
  for (int i = 0; i < count; ++i) order[i] = i;
  SeededRng rng = SeededRng(seed).fork(salt + std::uint64_t(epoch));
  rng.shuffle(order.begin(), order.end());
  return order;
}

double elapsed_ms(std::chrono::steady_clock::time_point from) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - from)
      .count();
}

}  // namespace

template <class T>
TrainResult<T> train_unsupervised(TwoStreamNet<T>& net, const VideoDataset<T>& ds,
                                  const TrainConfig& cfg, const Checkpoint<T>* resume) {
  cfg.validate();
  ds.validate();
  if (ds.count() < 1) throw TrainError("empty training dataset");
  if (ds.frames() < 2)
    throw TrainError("training needs sequences of at least 2 frames, dataset has " +
                     std::to_string(ds.frames()));
  if (ds.frames() != cfg.sequence_length)
    throw ConfigError("config sequence_length " + std::to_string(cfg.sequence_length) +
                      " does not match dataset frames " + std::to_string(ds.frames()));

  auto params = net.parameters();
  const auto names = TwoStreamNet<T>::parameter_names();
  AdamState<T> adam = AdamState<T>::init(params, T(cfg.lr));
  SeededRng root(cfg.seed);
  std::int64_t step = 0;
  if (resume) {
    if (!(resume->model == net.config))
      throw ConfigError("resume checkpoint was built for a different architecture");
    resume->restore(net, &adam, &root);
    step = resume->step;
  }

  const int batches = (ds.count() + cfg.batch_size - 1) / cfg.batch_size;
  std::int64_t total = std::int64_t(cfg.epochs) * batches;
  if (cfg.max_updates > 0) total = std::min(total, cfg.max_updates);

  TrainResult<T> res;
  Checkpoint<T> last_good = Checkpoint<T>::take(net, cfg, &adam, &root, step);

  const int start_epoch = int(step / batches);
  const int start_batch = int(step % batches);
  for (int epoch = start_epoch; epoch < cfg.epochs && step < total; ++epoch) {
    const auto order = epoch_order(ds.count(), cfg.seed, epoch, 1000);
    for (int b = (epoch == start_epoch ? start_batch : 0); b < batches && step < total; ++b) {
      const auto t0 = std::chrono::steady_clock::now();
      const int lo = b * cfg.batch_size;
      const int hi = std::min(lo + cfg.batch_size, ds.count());
      const std::vector<int> indices(order.begin() + lo, order.begin() + hi);
      const auto frames = gather_frames(ds, indices);

      Tape<T> tape;
      LossGraph<T> g = forward_loss(tape, net, frames, cfg.wta_rule);
      const double total_loss = double(tape.scalar_value(g.loss));
      if (!std::isfinite(total_loss)) {
        last_good.restore(net, &adam, &root);
        res.checkpoint = std::move(last_good);
        res.diverged = true;
        res.steps = step;
        return res;
      }
      Gradients<T> grads = tape.backward(g.loss);
      auto gvec = collect_grads(tape, grads, g.params.ordered());
      if (!grads_finite(gvec)) {
        last_good.restore(net, &adam, &root);
        res.checkpoint = std::move(last_good);
        res.diverged = true;
        res.steps = step;
        return res;
      }
      if (cfg.clip_norm > 0) clip_global_norm(gvec, cfg.clip_norm);
      adam_step(params, gvec, adam, names);
      ++step;

      if (step % cfg.log_every == 0 || step == total) {
        MetricsRow row;
        row.step = step;
        row.epoch = epoch;
        row.loss_recon = double(tape.scalar_value(g.recon_loss));
        row.loss_pred = double(tape.scalar_value(g.pred_loss));
        row.loss_total = total_loss;
        row.wall_ms = cfg.deterministic ? 0.0 : elapsed_ms(t0);
        res.log.rows.push_back(row);
      }
      last_good = Checkpoint<T>::take(net, cfg, &adam, &root, step);
    }
  }
  res.checkpoint = Checkpoint<T>::take(net, cfg, &adam, &root, step);
  res.steps = step;
  return res;
}

// Class-score graph shared by training and (value-level) inference: run the
// recurrent stream over every frame, sum the dense states over time, average
// spatially, then a 1x1 linear map to class scores.
template <class T>
static NodeId class_logits(Tape<T>& tape, const NetOnTape<T>& ids, NodeId hw, NodeId hb,
                           const std::vector<Tensor4<T>>& frames, int channels) {
  const Shape4 fs = frames[0].shape;
  NodeId h = tape.leaf(Tensor4<T>::zeros({fs.n, channels, fs.h, fs.w}));
  NodeId acc;
  for (const auto& frame : frames) {
    NodeId feat = encoder_features(tape, ids, tape.leaf(frame));
    NodeId pre = tape.conv2d(feat, ids.cell_v, ids.cell_b, Padding::Same);
    h = tape.relu(tape.add(tape.conv2d(h, ids.cell_w, NodeId{}, Padding::Same), pre));
    acc = acc.valid() ? tape.add(acc, h) : h;
  }
  NodeId pooled = tape.spatial_mean(acc);
  return tape.conv2d(pooled, hw, hb, Padding::Same);
}

template <class T>
std::vector<int> classify(const TwoStreamNet<T>& net, const ClassifierHead<T>& head,
                          const std::vector<Tensor4<T>>& frames) {
  if (frames.empty()) throw ContractError("classify: no frames");
  Tape<T> tape;
  NetOnTape<T> ids = put_on_tape(tape, net);
  NodeId logits = class_logits(tape, ids, tape.leaf(head.weight), tape.leaf(head.bias), frames,
                               net.config.channels);
  const Tensor4<T>& z = tape.value(logits);
  std::vector<int> out(z.shape.n);
  for (int i = 0; i < z.shape.n; ++i) {
    int best = 0;
    for (int k = 1; k < z.shape.c; ++k)
      if (z.at(i, k, 0, 0) > z.at(i, best, 0, 0)) best = k;  // ties keep the lowest index
    out[i] = best;
  }
  return out;
}

namespace {

template <class T>
double dataset_accuracy(const TwoStreamNet<T>& net, const ClassifierHead<T>& head,
                        const VideoDataset<T>& ds, int batch_size) {
  int hits = 0;
  for (int lo = 0; lo < ds.count(); lo += batch_size) {
    const int hi = std::min(lo + batch_size, ds.count());
    std::vector<int> idx(hi - lo);
    for (int i = lo; i < hi; ++i) idx[i - lo] = i;
    const auto pred = classify(net, head, gather_frames(ds, idx));
    for (int i = lo; i < hi; ++i) hits += pred[i - lo] == ds.labels[i];
  }
  return double(hits) / ds.count();
}

}  // namespace

template <class T>
FinetuneResult<T> finetune_supervised(TwoStreamNet<T>& net, ClassifierHead<T>& head,
                                      const VideoDataset<T>& train_ds,
                                      const VideoDataset<T>* val_ds, const TrainConfig& cfg) {
  cfg.validate();
  train_ds.validate();
  if (train_ds.labels.empty()) throw DataError("supervised training needs labels");
  if (val_ds) {
    val_ds->validate();
    if (val_ds->labels.empty()) throw DataError("validation set has no labels");
  }
  if (train_ds.frames() != cfg.sequence_length)
    throw ConfigError("config sequence_length " + std::to_string(cfg.sequence_length) +
                      " does not match dataset frames " + std::to_string(train_ds.frames()));
  const int classes = train_ds.class_count;
  require_same_shape(head.weight.shape, {classes, net.config.channels, 1, 1},
                     "classifier head weight");
  require_same_shape(head.bias.shape, {1, classes, 1, 1}, "classifier head bias");

  auto params = net.parameters();
  auto names = TwoStreamNet<T>::parameter_names();
  params.push_back(&head.weight);
  params.push_back(&head.bias);
  names.push_back("head.weight");
  names.push_back("head.bias");
  AdamState<T> adam = AdamState<T>::init(params, T(cfg.lr));
  SeededRng root(cfg.seed);

  const int batches = (train_ds.count() + cfg.batch_size - 1) / cfg.batch_size;
  std::int64_t total = std::int64_t(cfg.epochs) * batches;
  if (cfg.max_updates > 0) total = std::min(total, cfg.max_updates);

  FinetuneResult<T> res;
  Checkpoint<T> last_good = Checkpoint<T>::take(net, cfg, &adam, &root, 0, &head);
  std::int64_t step = 0;
  for (int epoch = 0; epoch < cfg.epochs && step < total; ++epoch) {
    const auto order = epoch_order(train_ds.count(), cfg.seed, epoch, 2000);
    for (int b = 0; b < batches && step < total; ++b) {
      const auto t0 = std::chrono::steady_clock::now();
      const int lo = b * cfg.batch_size;
      const int hi = std::min(lo + cfg.batch_size, train_ds.count());
      const std::vector<int> indices(order.begin() + lo, order.begin() + hi);
      const auto frames = gather_frames(train_ds, indices);
      std::vector<int> labels;
      for (int i : indices) labels.push_back(train_ds.labels[i]);

      Tape<T> tape;
      NetOnTape<T> ids = put_on_tape(tape, net);
      NodeId hw = tape.leaf(head.weight), hb = tape.leaf(head.bias);
      NodeId logits = class_logits(tape, ids, hw, hb, frames, net.config.channels);
      NodeId loss = tape.softmax_xent(logits, labels);
      const double loss_v = double(tape.scalar_value(loss));
      if (!std::isfinite(loss_v)) {
        last_good.restore(net, &adam, &root, &head);
        res.checkpoint = std::move(last_good);
        res.diverged = true;
        return res;
      }
      Gradients<T> grads = tape.backward(loss);
      auto reg = ids.ordered();
      reg.push_back(hw);
      reg.push_back(hb);
      auto gvec = collect_grads(tape, grads, reg);
      if (!grads_finite(gvec)) {
        last_good.restore(net, &adam, &root, &head);
        res.checkpoint = std::move(last_good);
        res.diverged = true;
        return res;
      }
      if (cfg.clip_norm > 0) clip_global_norm(gvec, cfg.clip_norm);
      adam_step(params, gvec, adam, names);
      ++step;
      if (step % cfg.log_every == 0 || step == total) {
        MetricsRow row;
        row.step = step;
        row.epoch = epoch;
        row.loss_total = loss_v;
        row.wall_ms = cfg.deterministic ? 0.0 : elapsed_ms(t0);
        res.log.rows.push_back(row);
      }
      last_good = Checkpoint<T>::take(net, cfg, &adam, &root, step, &head);
    }
    res.train_accuracy.push_back(dataset_accuracy(net, head, train_ds, cfg.batch_size));
    if (val_ds)
      res.val_accuracy.push_back(dataset_accuracy(net, head, *val_ds, cfg.batch_size));
  }
  res.checkpoint = Checkpoint<T>::take(net, cfg, &adam, &root, step, &head);
  return res;
}

#define RWTA_TRAIN_INSTANTIATE(T)                                                            \
  template struct AdamState<T>;                                                              \
  template void adam_step(const std::vector<Tensor4<T>*>&, const std::vector<Tensor4<T>>&,   \
                          AdamState<T>&, const std::vector<std::string>&);                   \
  template struct ClassifierHead<T>;                                                         \
  template struct Checkpoint<T>;                                                             \
  template void save_checkpoint(const Checkpoint<T>&, const std::string&);                   \
  template Checkpoint<T> load_checkpoint(const std::string&);                                \
  template TrainResult<T> train_unsupervised(TwoStreamNet<T>&, const VideoDataset<T>&,       \
                                             const TrainConfig&, const Checkpoint<T>*);      \
  template FinetuneResult<T> finetune_supervised(TwoStreamNet<T>&, ClassifierHead<T>&,       \
                                                 const VideoDataset<T>&,                     \
                                                 const VideoDataset<T>*, const TrainConfig&); \
  template std::vector<int> classify(const TwoStreamNet<T>&, const ClassifierHead<T>&,       \
                                     const std::vector<Tensor4<T>>&);

RWTA_TRAIN_INSTANTIATE(float)
RWTA_TRAIN_INSTANTIATE(double)

}  // namespace rwta
