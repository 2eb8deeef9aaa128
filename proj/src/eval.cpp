#include "rwta/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "rwta/io.hpp"
#include "rwta/parallel.hpp"

namespace rwta {

FeatureMode parse_feature_mode(const std::string& s) {
  if (s == "sum") return FeatureMode::SumCollapse;
  if (s == "last") return FeatureMode::LastState;
  if (s == "pooled") return FeatureMode::Pooled;
  if (s == "raw") return FeatureMode::RawPixels;
  throw ConfigError("unknown feature mode '" + s + "' (want sum, last, pooled or raw)");
}

std::string feature_mode_name(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::SumCollapse: return "sum";
    case FeatureMode::LastState: return "last";
    case FeatureMode::Pooled: return "pooled";
    case FeatureMode::RawPixels: return "raw";
  }
  throw ContractError("unhandled feature mode");
}

namespace {

template <class T>
std::vector<Tensor4<T>> split_frames(const Tensor4<T>& video) {
  if (video.shape.n < 1) throw ContractError("video has no frames");
  std::vector<Tensor4<T>> frames;
  const std::int64_t chw = std::int64_t(video.shape.c) * video.shape.h * video.shape.w;
  for (int t = 0; t < video.shape.n; ++t) {
    Tensor4<T> f({1, video.shape.c, video.shape.h, video.shape.w});
    std::copy_n(video.plane(t, 0), chw, f.ptr());
    frames.push_back(std::move(f));
  }
  return frames;
}

template <class T>
void append_flat(std::vector<T>& out, const Tensor4<T>& t) {
  out.insert(out.end(), t.data.begin(), t.data.end());
}

// Per-frame codes of one video from a zero initial state.
template <class T>
std::vector<Tensor4<T>> video_codes(const TwoStreamNet<T>& net, const Tensor4<T>& video,
                                    CodeKind kind) {
  const auto frames = split_frames(video);
  if (kind == CodeKind::Sparse) return recurrent_encode(net, frames).codes;
  return recurrent_states(net, frames);
}

}  // namespace

template <class T>
FeatureVector<T> extract_features(const TwoStreamNet<T>& net, const Tensor4<T>& video,
                                  FeatureMode mode, CodeKind kind) {
  FeatureVector<T> out;
  out.source = mode;
  if (mode == FeatureMode::RawPixels) {
    const auto frames = split_frames(video);
    append_flat(out.values, frames.back());
    return out;
  }
  const auto codes = video_codes(net, video, kind);
  switch (mode) {
    case FeatureMode::SumCollapse: {
      Tensor4<T> acc = codes[0];
      for (size_t t = 1; t < codes.size(); ++t) accumulate(acc, codes[t]);
      append_flat(out.values, acc);
      break;
    }
    case FeatureMode::LastState:
      append_flat(out.values, codes.back());
      break;
    case FeatureMode::Pooled:
      for (const auto& code : codes) append_flat(out.values, maxpool2d(code, 5, 5, 3, 3));
      break;
    default:
      throw ContractError("unhandled feature mode");
  }
  return out;
}

template <class T>
std::vector<std::vector<T>> per_frame_features(const TwoStreamNet<T>& net,
                                               const Tensor4<T>& video, CodeKind kind) {
  const auto codes = video_codes(net, video, kind);
  std::vector<std::vector<T>> out;
  for (const auto& code : codes) {
    std::vector<T> row;
    append_flat(row, maxpool2d(code, 5, 5, 3, 3));
    out.push_back(std::move(row));
  }
  return out;
}

template <class T>
std::vector<FeatureVector<T>> extract_dataset_features(const TwoStreamNet<T>& net,
                                                       const VideoDataset<T>& ds,
                                                       FeatureMode mode, CodeKind kind,
                                                       bool deterministic) {
  ds.validate();
  if (ds.count() == 0) throw DataError("feature extraction on an empty dataset");
  std::vector<FeatureVector<T>> out(ds.count());
  parallel_for(ds.count(), worker_count(deterministic),
               [&](int i) { out[i] = extract_features(net, ds.videos[i], mode, kind); });
  return out;
}

template <class T>
std::vector<std::vector<double>> feature_rows(const std::vector<FeatureVector<T>>& features) {
  std::vector<std::vector<double>> rows;
  for (const auto& f : features) rows.emplace_back(f.values.begin(), f.values.end());
  return rows;
}

// ---- SVM ----

LinearSvm svm_train(const std::vector<std::vector<double>>& features,
                    const std::vector<int>& labels, const SvmConfig& cfg, SeededRng& rng) {
  if (features.empty()) throw ContractError("svm_train: no training features");
  if (features.size() != labels.size())
    throw ContractError("svm_train: " + std::to_string(features.size()) + " features vs " +
                        std::to_string(labels.size()) + " labels");
  if (cfg.reg < 0 || cfg.epochs < 1) throw ConfigError("svm_train: bad reg/epochs");
  const int n = int(features.size());
  const int dim = int(features[0].size());
  int classes = 0;
  for (int y : labels) {
    if (y < 0) throw DataError("svm_train: negative label " + std::to_string(y));
    classes = std::max(classes, y + 1);
  }
  {
    std::vector<char> seen(classes, 0);
    for (int y : labels) seen[y] = 1;
    int distinct = 0;
    for (char s : seen) distinct += s;
    if (distinct < 2) throw ContractError("svm_train: need at least 2 distinct classes");
  }
  for (const auto& f : features)
    if (int(f.size()) != dim)
      throw ShapeError("svm_train: ragged features (" + std::to_string(f.size()) + " vs " +
                       std::to_string(dim) + ")");

  LinearSvm svm;
  svm.classes = classes;
  svm.dim = dim;
  svm.reg = cfg.reg;
  svm.mean.assign(dim, 0.0);
  svm.scale.assign(dim, 0.0);
  for (const auto& f : features)
    for (int d = 0; d < dim; ++d) svm.mean[d] += f[d];
  for (int d = 0; d < dim; ++d) svm.mean[d] /= n;
  std::vector<double> var(dim, 0.0);
  for (const auto& f : features)
    for (int d = 0; d < dim; ++d) {
      const double c = f[d] - svm.mean[d];
      var[d] += c * c;
    }
  for (int d = 0; d < dim; ++d) {
    const double sd = std::sqrt(var[d] / n);
    svm.scale[d] = sd > 1e-12 ? 1.0 / sd : 0.0;  // constant dims drop out
  }

  // Standardize once up front; SGD touches every sample each epoch.
  std::vector<double> z(size_t(n) * dim);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < dim; ++d)
      z[size_t(i) * dim + d] = (features[i][d] - svm.mean[d]) * svm.scale[d];

  svm.weights.assign(size_t(classes) * dim, 0.0);
  svm.bias.assign(classes, 0.0);
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  // One-vs-rest hinge with L2 on the weights (bias unregularized). Plain
  // SGD with a step that halves every pass, then the iterates from the
  // last half of the epochs are averaged -- the raw final iterate circles
  // the optimum at radius ~eta, the tail average sits at its center.
  std::vector<double> avg_w(svm.weights.size(), 0.0), avg_b(classes, 0.0);
  int snapshots = 0;
  std::int64_t t = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (int i : order) {
      ++t;
      const double eta = 1.0 / (1.0 + double(t) / n);
      const double* x = &z[size_t(i) * dim];
      for (int k = 0; k < classes; ++k) {
        const double y = labels[i] == k ? 1.0 : -1.0;
        double* w = &svm.weights[size_t(k) * dim];
        double s = svm.bias[k];
        for (int d = 0; d < dim; ++d) s += w[d] * x[d];
        const double shrink = 1.0 - eta * cfg.reg;
        if (y * s < 1.0) {
          for (int d = 0; d < dim; ++d) w[d] = shrink * w[d] + eta * y * x[d];
          svm.bias[k] += eta * y;
        } else {
          for (int d = 0; d < dim; ++d) w[d] *= shrink;
        }
      }
    }
    if (2 * (epoch + 1) > cfg.epochs) {
      for (size_t j = 0; j < avg_w.size(); ++j) avg_w[j] += svm.weights[j];
      for (int k = 0; k < classes; ++k) avg_b[k] += svm.bias[k];
      ++snapshots;
    }
  }
  for (size_t j = 0; j < avg_w.size(); ++j) svm.weights[j] = avg_w[j] / snapshots;
  for (int k = 0; k < classes; ++k) svm.bias[k] = avg_b[k] / snapshots;
  return svm;
}

std::vector<double> svm_scores(const LinearSvm& svm, const std::vector<double>& features) {
  if (int(features.size()) != svm.dim)
    throw ShapeError("svm_predict: feature length " + std::to_string(features.size()) +
                     ", model expects " + std::to_string(svm.dim));
  std::vector<double> scores(svm.classes);
  for (int k = 0; k < svm.classes; ++k) {
    const double* w = &svm.weights[size_t(k) * svm.dim];
    double s = svm.bias[k];
    for (int d = 0; d < svm.dim; ++d)
      s += w[d] * (features[d] - svm.mean[d]) * svm.scale[d];
    scores[k] = s;
  }
  return scores;
}

int svm_predict(const LinearSvm& svm, const std::vector<double>& features) {
  const auto scores = svm_scores(svm, features);
  int best = 0;
  for (int k = 1; k < svm.classes; ++k)
    if (scores[k] > scores[best]) best = k;  // ties keep the lowest index
  return best;
}

std::vector<int> svm_predict_all(const LinearSvm& svm,
                                 const std::vector<std::vector<double>>& features) {
  std::vector<int> out;
  for (const auto& f : features) out.push_back(svm_predict(svm, f));
  return out;
}

// "RSVM" + version, then counts and the four double arrays, checksummed
// like the other binary formats.
void save_svm(const LinearSvm& svm, const std::string& path) {
  std::ostringstream buf;
  io::Writer w(buf);
  w.bytes("RSVM", 4);
  w.u32(1);
  w.i32(svm.classes);
  w.i32(svm.dim);
  w.f64(svm.reg);
  w.array(svm.weights.data(), svm.weights.size());
  w.array(svm.bias.data(), svm.bias.size());
  w.array(svm.mean.data(), svm.mean.size());
  w.array(svm.scale.data(), svm.scale.size());
  const std::string payload = std::move(buf).str();
  io::Fnv1a sum;
  sum.update(payload.data(), payload.size());
  std::ostringstream tail;
  io::Writer tw(tail);
  tw.u64(sum.digest());
  io::spit(path, payload + tail.str());
}

LinearSvm load_svm(const std::string& path) {
  const std::string bytes = io::slurp(path);
  if (bytes.size() < 32)
    throw FormatError("svm file too short: " + std::to_string(bytes.size()) + " bytes");
  io::Fnv1a sum;
  sum.update(bytes.data(), bytes.size() - 8);
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i)
    stored |= std::uint64_t(std::uint8_t(bytes[bytes.size() - 8 + i])) << (8 * i);
  if (stored != sum.digest()) throw FormatError("checksum mismatch in " + path);
  std::istringstream in(bytes.substr(0, bytes.size() - 8));
  io::Reader r(in);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::string(magic, 4) != "RSVM")
    throw FormatError("bad magic at byte 0 in " + path + ": not an svm file");
  if (r.u32("version") != 1) throw FormatError("unsupported svm version");
  LinearSvm svm;
  svm.classes = r.i32("classes");
  svm.dim = r.i32("dim");
  if (svm.classes < 2 || svm.dim < 1)
    throw FormatError("bad svm geometry " + std::to_string(svm.classes) + "x" +
                      std::to_string(svm.dim));
  svm.reg = r.f64("reg");
  svm.weights.resize(size_t(svm.classes) * svm.dim);
  svm.bias.resize(svm.classes);
  svm.mean.resize(svm.dim);
  svm.scale.resize(svm.dim);
  r.array(svm.weights.data(), svm.weights.size(), "weights");
  r.array(svm.bias.data(), svm.bias.size(), "bias");
  r.array(svm.mean.data(), svm.mean.size(), "mean");
  r.array(svm.scale.data(), svm.scale.size(), "scale");
  return svm;
}

// ---- voting ----

namespace {

VoteResult tally(const std::vector<int>& preds, int classes) {
  VoteResult res;
  res.votes.assign(classes, 0);
  for (int p : preds) res.votes[p] += 1;
  res.label = 0;
  for (int k = 1; k < classes; ++k)
    if (res.votes[k] > res.votes[res.label]) res.label = k;
  return res;
}

}  // namespace

template <class T>
VoteResult sliding_window_vote(const TwoStreamNet<T>& net, const LinearSvm& svm,
                               const Tensor4<T>& video, int window, FeatureMode mode,
                               CodeKind kind) {
  if (window < 1) throw ConfigError("window must be >= 1, got " + std::to_string(window));
  if (video.shape.n < window)
    throw ContractError("video of " + std::to_string(video.shape.n) +
                        " frames is shorter than the window " + std::to_string(window));
  const std::int64_t chw = std::int64_t(video.shape.c) * video.shape.h * video.shape.w;
  std::vector<int> preds;
  for (int start = 0; start + window <= video.shape.n; ++start) {
    Tensor4<T> view({window, video.shape.c, video.shape.h, video.shape.w});
    std::copy_n(video.plane(start, 0), chw * window, view.ptr());
    const auto f = extract_features(net, view, mode, kind);
    preds.push_back(svm_predict(svm, std::vector<double>(f.values.begin(), f.values.end())));
  }
  return tally(preds, svm.classes);
}

template <class T>
VoteResult per_frame_vote(const TwoStreamNet<T>& net, const LinearSvm& svm,
                          const Tensor4<T>& video, CodeKind kind) {
  std::vector<int> preds;
  for (const auto& row : per_frame_features(net, video, kind))
    preds.push_back(svm_predict(svm, std::vector<double>(row.begin(), row.end())));
  return tally(preds, svm.classes);
}

// ---- reports ----

EvalReport report(const std::vector<int>& predictions, const std::vector<int>& labels,
                  int class_count) {
  if (predictions.size() != labels.size())
    throw ContractError("report: " + std::to_string(predictions.size()) + " predictions vs " +
                        std::to_string(labels.size()) + " labels");
  if (predictions.empty()) throw ContractError("report: nothing to score");
  int classes = class_count;
  for (size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] < 0 || labels[i] < 0)
      throw DataError("report: negative class id at position " + std::to_string(i));
    classes = std::max(classes, std::max(predictions[i], labels[i]) + 1);
  }
  EvalReport rep;
  rep.total = int(predictions.size());
  rep.confusion.assign(classes, std::vector<int>(classes, 0));
  int hits = 0;
  for (size_t i = 0; i < labels.size(); ++i) {
    rep.confusion[labels[i]][predictions[i]] += 1;
    hits += predictions[i] == labels[i];
  }
  rep.accuracy = double(hits) / rep.total;
  rep.error_rate = 1.0 - rep.accuracy;
  return rep;
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "accuracy,error_rate,total\n";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g,%.17g,%d\n", accuracy, error_rate, total);
  os << buf;
  os << "confusion";
  for (size_t k = 0; k < confusion.size(); ++k) os << ",pred_" << k;
  os << "\n";
  for (size_t i = 0; i < confusion.size(); ++i) {
    os << "true_" << i;
    for (int v : confusion[i]) os << "," << v;
    os << "\n";
  }
  return os.str();
}

std::string EvalReport::summary() const {
  char buf[128];
  std::snprintf(buf, sizeof buf, "accuracy %.4f (error %.4f) over %d samples", accuracy,
                error_rate, total);
  return buf;
}

template <class T>
std::string features_to_csv(const std::vector<FeatureVector<T>>& features,
                            const std::vector<int>& labels) {
  if (features.empty()) throw ContractError("features_to_csv: nothing to write");
  if (!labels.empty() && labels.size() != features.size())
    throw ContractError("features_to_csv: label count mismatch");
  const size_t dim = features[0].values.size();
  std::ostringstream os;
  os << "video_id,label";
  for (size_t d = 0; d < dim; ++d) os << ",f_" << d;
  os << "\n";
  char buf[40];
  for (size_t i = 0; i < features.size(); ++i) {
    if (features[i].values.size() != dim)
      throw ContractError("features_to_csv: ragged feature lengths");
    os << i << "," << (labels.empty() ? -1 : labels[i]);
    for (const T v : features[i].values) {
      std::snprintf(buf, sizeof buf, "%.17g", double(v));
      os << "," << buf;
    }
    os << "\n";
  }
  return os.str();
}

template <class T>
double temporal_coherence_ratio(const TwoStreamNet<T>& net, const VideoDataset<T>& ds,
                                int random_pairs, SeededRng& rng, CodeKind kind) {
  ds.validate();
  if (ds.count() < 2 || ds.frames() < 2)
    throw ContractError("coherence ratio needs >= 2 videos of >= 2 frames");
  if (random_pairs < 1) throw ConfigError("need at least one random pair");

  std::vector<std::vector<Tensor4<T>>> codes(ds.count());
  for (int i = 0; i < ds.count(); ++i) codes[i] = video_codes(net, ds.videos[i], kind);

  auto distance = [](const Tensor4<T>& a, const Tensor4<T>& b) {
    double sq = 0;
    for (std::int64_t i = 0; i < a.size(); ++i) {
      const double d = double(a.ptr()[i]) - double(b.ptr()[i]);
      sq += d * d;
    }
    return std::sqrt(sq);
  };

  double consecutive = 0;
  std::int64_t pairs = 0;
  for (const auto& vc : codes)
    for (size_t t = 0; t + 1 < vc.size(); ++t) {
      consecutive += distance(vc[t], vc[t + 1]);
      ++pairs;
    }
  consecutive /= double(pairs);

  double random = 0;
  for (int i = 0; i < random_pairs; ++i) {
    const int a = int(rng.uniform_index(std::uint64_t(ds.count())));
    int b = int(rng.uniform_index(std::uint64_t(ds.count() - 1)));
    if (b >= a) ++b;  // distinct videos
    const int ta = int(rng.uniform_index(std::uint64_t(ds.frames())));
    const int tb = int(rng.uniform_index(std::uint64_t(ds.frames())));
    random += distance(codes[a][ta], codes[b][tb]);
  }
  random /= double(random_pairs);
  if (random <= 0) throw ContractError("degenerate codes: zero random-pair distance");
  return consecutive / random;
}

// ---- filter visualization ----

template <class T>
std::vector<GrayImage> decoder_filter_images(const TwoStreamNet<T>& net) {
  const Shape4 ws = net.dec.weight.shape;  // (input_channels, channels, k, k)
  std::vector<GrayImage> out;
  for (int c = 0; c < ws.c; ++c) {
    GrayImage img;
    img.height = ws.n * ws.h;
    img.width = ws.w;
    T lo = net.dec.weight.at(0, c, 0, 0), hi = lo;
    for (int p = 0; p < ws.n; ++p)
      for (int i = 0; i < ws.h; ++i)
        for (int j = 0; j < ws.w; ++j) {
          const T v = net.dec.weight.at(p, c, i, j);
          lo = std::min(lo, v);
          hi = std::max(hi, v);
        }
    const double span = double(hi) - double(lo);
    for (int p = 0; p < ws.n; ++p)
      for (int i = 0; i < ws.h; ++i)
        for (int j = 0; j < ws.w; ++j) {
          const double v = double(net.dec.weight.at(p, c, i, j));
          const double norm = span > 0 ? (v - double(lo)) / span : 0.5;
          img.pixels.push_back(std::uint8_t(std::lround(norm * 255.0)));
        }
    out.push_back(std::move(img));
  }
  return out;
}

template <class T>
GrayImage decoder_filter_grid(const TwoStreamNet<T>& net) {
  const auto tiles = decoder_filter_images(net);
  const int th = tiles[0].height, tw = tiles[0].width;
  int cols = 1;
  while (cols * cols < int(tiles.size())) ++cols;
  const int rows = (int(tiles.size()) + cols - 1) / cols;
  GrayImage grid;
  grid.height = rows * th + (rows - 1);
  grid.width = cols * tw + (cols - 1);
  grid.pixels.assign(size_t(grid.height) * grid.width, 0);
  for (size_t t = 0; t < tiles.size(); ++t) {
    const int r0 = int(t) / cols * (th + 1);
    const int c0 = int(t) % cols * (tw + 1);
    for (int i = 0; i < th; ++i)
      for (int j = 0; j < tw; ++j)
        grid.pixels[size_t(r0 + i) * grid.width + c0 + j] = tiles[t].pixels[size_t(i) * tw + j];
  }
  return grid;
}

#define RWTA_EVAL_INSTANTIATE(T)                                                              \
  template std::vector<GrayImage> decoder_filter_images(const TwoStreamNet<T>&);              \
  template GrayImage decoder_filter_grid(const TwoStreamNet<T>&);                             \
  template struct FeatureVector<T>;                                                           \
  template FeatureVector<T> extract_features(const TwoStreamNet<T>&, const Tensor4<T>&,       \
                                             FeatureMode, CodeKind);                          \
  template std::vector<std::vector<T>> per_frame_features(const TwoStreamNet<T>&,             \
                                                          const Tensor4<T>&, CodeKind);       \
  template std::vector<FeatureVector<T>> extract_dataset_features(                            \
      const TwoStreamNet<T>&, const VideoDataset<T>&, FeatureMode, CodeKind, bool);           \
  template std::vector<std::vector<double>> feature_rows(const std::vector<FeatureVector<T>>&); \
  template VoteResult sliding_window_vote(const TwoStreamNet<T>&, const LinearSvm&,           \
                                          const Tensor4<T>&, int, FeatureMode, CodeKind);     \
  template VoteResult per_frame_vote(const TwoStreamNet<T>&, const LinearSvm&,                \
                                     const Tensor4<T>&, CodeKind);                            \
  template std::string features_to_csv(const std::vector<FeatureVector<T>>&,                  \
                                       const std::vector<int>&);                              \
  template double temporal_coherence_ratio(const TwoStreamNet<T>&, const VideoDataset<T>&,    \
                                           int, SeededRng&, CodeKind);

RWTA_EVAL_INSTANTIATE(float)
RWTA_EVAL_INSTANTIATE(double)

}  // namespace rwta
