#include "rwta/data.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>

#include "rwta/io.hpp"

namespace rwta {

template <class T>
void ImageDataset<T>::validate() const {
  if (!labels.empty() && int(labels.size()) != images.shape.n)
    throw DataError("image dataset has " + std::to_string(images.shape.n) + " images but " +
                    std::to_string(labels.size()) + " labels");
  for (int l : labels)
    if (l < 0 || l >= class_count)
      throw DataError("label " + std::to_string(l) + " outside [0, " +
                      std::to_string(class_count) + ")");
}

template <class T>
void VideoDataset<T>::validate() const {
  for (const auto& v : videos)
    require_same_shape(videos[0].shape, v.shape, "videos in one dataset");
  if (!labels.empty() && labels.size() != videos.size())
    throw DataError("video dataset has " + std::to_string(videos.size()) + " videos but " +
                    std::to_string(labels.size()) + " labels");
  if (!source_ids.empty() && source_ids.size() != videos.size())
    throw DataError("video dataset has " + std::to_string(videos.size()) + " videos but " +
                    std::to_string(source_ids.size()) + " source ids");
  for (int l : labels)
    if (l < 0 || l >= class_count)
      throw DataError("label " + std::to_string(l) + " outside [0, " +
                      std::to_string(class_count) + ")");
}

// ---- IDX ----

template <class T>
ImageDataset<T> load_idx(const std::string& images_path, const std::string& labels_path) {
  ImageDataset<T> ds;
  {
    std::ifstream f(images_path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + images_path);
    io::Reader r(f);
    const auto magic = r.u32_be("image magic");
    if (magic != 0x00000803u)
      throw FormatError("bad image magic " + std::to_string(magic) + " at byte 0 in " +
                        images_path);
    const int n = int(r.u32_be("image count"));
    const int rows = int(r.u32_be("row count"));
    const int cols = int(r.u32_be("column count"));
    ds.images = Tensor4<T>({n, 1, rows, cols});
    std::vector<unsigned char> buf(size_t(rows) * cols);
    for (int i = 0; i < n; ++i) {
      r.bytes(buf.data(), buf.size(), "pixel data");
      T* dst = ds.images.plane(i, 0);
      for (size_t p = 0; p < buf.size(); ++p) dst[p] = T(buf[p]) / T(255);
    }
  }
  {
    std::ifstream f(labels_path, std::ios::binary);
    if (!f) throw FormatError("cannot open " + labels_path);
    io::Reader r(f);
    const auto magic = r.u32_be("label magic");
    if (magic != 0x00000801u)
      throw FormatError("bad label magic " + std::to_string(magic) + " at byte 0 in " +
                        labels_path);
    const int n = int(r.u32_be("label count"));
    if (n != ds.images.shape.n)
      throw FormatError("label count " + std::to_string(n) + " does not match image count " +
                        std::to_string(ds.images.shape.n));
    ds.labels.resize(n);
    for (int i = 0; i < n; ++i) ds.labels[i] = r.u8("label");
  }
  for (int l : ds.labels) ds.class_count = std::max(ds.class_count, l + 1);
  ds.validate();
  return ds;
}

template <class T>
void save_idx(const std::string& images_path, const std::string& labels_path,
              const ImageDataset<T>& ds) {
  ds.validate();
  if (ds.images.shape.c != 1)
    throw FormatError("IDX export is single-channel, dataset has " +
                      std::to_string(ds.images.shape.c) + " channels");
  if (ds.labels.empty()) throw DataError("IDX export needs labels");
  {
    std::ofstream f(images_path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open " + images_path + " for writing");
    io::Writer w(f);
    w.u32_be(0x00000803u);
    w.u32_be(std::uint32_t(ds.images.shape.n));
    w.u32_be(std::uint32_t(ds.images.shape.h));
    w.u32_be(std::uint32_t(ds.images.shape.w));
    std::vector<unsigned char> buf(size_t(ds.images.shape.h) * ds.images.shape.w);
    for (int i = 0; i < ds.images.shape.n; ++i) {
      const T* src = ds.images.plane(i, 0);
      for (size_t p = 0; p < buf.size(); ++p) {
        double v = std::round(double(src[p]) * 255.0);
        buf[p] = (unsigned char)std::clamp(v, 0.0, 255.0);
      }
      w.bytes(buf.data(), buf.size());
    }
  }
  {
    std::ofstream f(labels_path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("cannot open " + labels_path + " for writing");
    io::Writer w(f);
    w.u32_be(0x00000801u);
    w.u32_be(std::uint32_t(ds.labels.size()));
    for (int l : ds.labels) {
      if (l > 255) throw DataError("IDX labels are bytes, got " + std::to_string(l));
      w.u8(std::uint8_t(l));
    }
  }
}

// ---- rotation ----

template <class T>
Tensor4<T> rotate_image(const Tensor4<T>& image, double degrees) {
  if (image.shape.n != 1)
    throw ShapeError("rotate_image wants a single image, got batch " +
                     std::to_string(image.shape.n));
  const int c = image.shape.c, h = image.shape.h, w = image.shape.w;
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  const double rad = degrees * std::numbers::pi / 180.0;
  const double co = std::cos(rad), si = std::sin(rad);
  Tensor4<T> out({1, c, h, w});
  for (int r = 0; r < h; ++r)
    for (int q = 0; q < w; ++q) {
      // Inverse map: where in the source does this output pixel come from?
      // With x = column, y = row, this is counter-clockwise on screen.
      const double dx = q - cx, dy = r - cy;
      const double sx = co * dx - si * dy + cx;
      const double sy = si * dx + co * dy + cy;
      const int x0 = int(std::floor(sx)), y0 = int(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      for (int ch = 0; ch < c; ++ch) {
        auto tap = [&](int yy, int xx) -> double {
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
          return double(image.at(0, ch, yy, xx));
        };
        const double v = (1 - fy) * ((1 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)) +
                         fy * ((1 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1));
        out.at(0, ch, r, q) = T(v);
      }
    }
  return out;
}

template <class T>
Tensor4<T> rotate_video(const Tensor4<T>& image, int frames, double step_degrees) {
  if (frames < 2)
    throw ConfigError("rotation video needs at least 2 frames, got " + std::to_string(frames));
  Tensor4<T> video({frames, image.shape.c, image.shape.h, image.shape.w});
  for (int k = 0; k < frames; ++k) {
    Tensor4<T> f = rotate_image(image, k * step_degrees);
    std::memcpy(video.plane(k, 0), f.ptr(), sizeof(T) * size_t(f.size()));
  }
  return video;
}

// ---- scanning windows ----

template <class T>
Tensor4<T> scan_video(const Tensor4<T>& image, int window, int stride) {
  if (image.shape.n != 1)
    throw ShapeError("scan_video wants a single image, got batch " +
                     std::to_string(image.shape.n));
  const int c = image.shape.c, h = image.shape.h, w = image.shape.w;
  if (window < 1 || stride < 1 || window > h || window > w)
    throw ConfigError("scan window " + std::to_string(window) + " / stride " +
                      std::to_string(stride) + " does not fit a " + std::to_string(h) + "x" +
                      std::to_string(w) + " image");
  if ((h - window) % stride != 0 || (w - window) % stride != 0)
    throw ConfigError("scan stride " + std::to_string(stride) +
                      " does not evenly cover the image: (" + std::to_string(h) + "-" +
                      std::to_string(window) + ") and (" + std::to_string(w) + "-" +
                      std::to_string(window) + ") must be divisible by it");
  const int down = (h - window) / stride + 1;
  const int right = (w - window) / stride + 1;
  Tensor4<T> video({down * right, c, window, window});
  int k = 0;
  for (int cpos = 0; cpos < right; ++cpos)        // column position moves last
    for (int rpos = 0; rpos < down; ++rpos, ++k)  // rows scanned downward first
      for (int ch = 0; ch < c; ++ch)
        for (int i = 0; i < window; ++i)
          std::memcpy(video.plane(k, ch) + size_t(i) * window,
                      image.plane(0, ch) + size_t(rpos * stride + i) * w + cpos * stride,
                      sizeof(T) * size_t(window));
  return video;
}

// ---- dataset builders ----

template <class T>
VideoDataset<T> make_rotation_dataset(const ImageDataset<T>& images, int frames,
                                      double step_degrees) {
  images.validate();
  VideoDataset<T> ds;
  ds.labels = images.labels;
  ds.class_count = images.class_count;
  std::ostringstream tag;
  tag << "rotate frames=" << frames << " step=" << step_degrees;
  ds.transform = tag.str();
  for (int i = 0; i < images.count(); ++i) {
    Tensor4<T> still({1, images.images.shape.c, images.images.shape.h, images.images.shape.w});
    std::memcpy(still.ptr(), images.images.plane(i, 0), sizeof(T) * size_t(still.size()));
    ds.videos.push_back(rotate_video(still, frames, step_degrees));
    ds.source_ids.push_back(i);
  }
  ds.validate();
  return ds;
}

template <class T>
VideoDataset<T> make_scan_dataset(const ImageDataset<T>& images, int window, int stride) {
  images.validate();
  VideoDataset<T> ds;
  ds.labels = images.labels;
  ds.class_count = images.class_count;
  std::ostringstream tag;
  tag << "scan window=" << window << " stride=" << stride;
  ds.transform = tag.str();
  for (int i = 0; i < images.count(); ++i) {
    Tensor4<T> still({1, images.images.shape.c, images.images.shape.h, images.images.shape.w});
    std::memcpy(still.ptr(), images.images.plane(i, 0), sizeof(T) * size_t(still.size()));
    ds.videos.push_back(scan_video(still, window, stride));
    ds.source_ids.push_back(i);
  }
  ds.validate();
  return ds;
}

// ---- ZCA ----

template <class T>
ZcaTransform zca_fit(const Tensor4<T>& samples, double epsilon) {
  const int n = samples.shape.n;
  const int d = int(samples.shape.c) * samples.shape.h * samples.shape.w;
  if (n < 1 || d < 1) throw DataError("zca_fit: empty input");
  if (!all_finite(samples)) throw DataError("zca_fit: non-finite input");
  if (epsilon == 0.0 && n <= d)
    throw ConfigError("zca_fit with epsilon=0 needs more samples than dimensions, got " +
                      std::to_string(n) + " samples for dimension " + std::to_string(d));

  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = double(samples.data[size_t(i) * d + j]);
  Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  Eigen::MatrixXd cov = (x.transpose() * x) / double(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw DataError("zca_fit: eigendecomposition failed");
  Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);

  double eps = epsilon;
  if (eps < 0) eps = 0.01 * lam.mean();
  if (!(lam.minCoeff() + eps > 0))
    throw ConfigError("zca_fit: degenerate covariance; provide a positive epsilon");

  Eigen::VectorXd inv_sqrt = (lam.array() + eps).rsqrt();
  Eigen::MatrixXd w = eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();

  ZcaTransform t;
  t.dim = d;
  t.epsilon = eps;
  t.mean.assign(mean.data(), mean.data() + d);
  t.whiten.resize(size_t(d) * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) t.whiten[size_t(i) * d + j] = w(i, j);
  return t;
}

template <class T>
Tensor4<T> zca_apply(const ZcaTransform& t, const Tensor4<T>& samples) {
  const int n = samples.shape.n;
  const int d = int(samples.shape.c) * samples.shape.h * samples.shape.w;
  if (d != t.dim)
    throw ShapeError("zca_apply: sample dimension " + std::to_string(d) +
                     " does not match fitted dimension " + std::to_string(t.dim));
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) x(i, j) = double(samples.data[size_t(i) * d + j]) - t.mean[j];
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> w(
      t.whiten.data(), d, d);
  Eigen::MatrixXd y = x * w;
  Tensor4<T> out(samples.shape);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.data[size_t(i) * d + j] = T(y(i, j));
  return out;
}

template <class T>
VideoDataset<T> zca_apply(const ZcaTransform& t, const VideoDataset<T>& ds) {
  VideoDataset<T> out = ds;
  for (auto& v : out.videos) v = zca_apply(t, v);
  out.transform = ds.transform.empty() ? "zca" : ds.transform + " + zca";
  return out;
}

template <class T>
Tensor4<T> stack_frames(const VideoDataset<T>& ds) {
  ds.validate();
  if (ds.videos.empty()) throw DataError("stack_frames: empty dataset");
  const Shape4 vs = ds.video_shape();
  Tensor4<T> out({ds.count() * vs.n, vs.c, vs.h, vs.w});
  T* dst = out.ptr();
  for (const auto& v : ds.videos) {
    std::memcpy(dst, v.ptr(), sizeof(T) * size_t(v.size()));
    dst += v.size();
  }
  return out;
}

void ZcaTransform::save(const std::string& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  io::Writer w(f);
  w.bytes("RZCA", 4);
  w.u32(1);  // version
  w.u32(std::uint32_t(dim));
  w.f64(epsilon);
  w.array(mean.data(), mean.size());
  w.array(whiten.data(), whiten.size());
}

ZcaTransform ZcaTransform::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  io::Reader r(f);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, "RZCA", 4) != 0)
    throw FormatError("bad magic at byte 0 in " + path + ": not a whitening transform file");
  const auto version = r.u32("version");
  if (version != 1)
    throw FormatError("unsupported whitening file version " + std::to_string(version));
  ZcaTransform t;
  t.dim = int(r.u32("dimension"));
  if (t.dim < 1) throw FormatError("bad dimension " + std::to_string(t.dim) + " in " + path);
  t.epsilon = r.f64("epsilon");
  t.mean.resize(t.dim);
  r.array(t.mean.data(), t.mean.size(), "mean");
  t.whiten.resize(size_t(t.dim) * t.dim);
  r.array(t.whiten.data(), t.whiten.size(), "whitening matrix");
  return t;
}

// ---- batching ----

template <class T>
BatchIter<T>::BatchIter(const VideoDataset<T>& ds, int batch_size, bool shuffle, SeededRng rng)
    : ds_(ds), batch_size_(batch_size), shuffle_(shuffle), rng_(rng) {
  if (batch_size < 1)
    throw ConfigError("batch size must be >= 1, got " + std::to_string(batch_size));
  ds.validate();
  order_.resize(ds.count());
  for (int i = 0; i < ds.count(); ++i) order_[i] = i;
  if (shuffle_) rng_.shuffle(order_.begin(), order_.end());
}

template <class T>
void BatchIter<T>::reset() {
  cursor_ = 0;
  if (shuffle_) rng_.shuffle(order_.begin(), order_.end());
}

template <class T>
int BatchIter<T>::batches() const {
  return int((order_.size() + batch_size_ - 1) / batch_size_);
}

template <class T>
bool BatchIter<T>::next(Batch<T>& out) {
  if (cursor_ >= int(order_.size())) return false;
  const int end = std::min(cursor_ + batch_size_, int(order_.size()));
  out.indices.assign(order_.begin() + cursor_, order_.begin() + end);
  cursor_ = end;
  out.frames = gather_frames(ds_, out.indices);
  out.labels.clear();
  if (!ds_.labels.empty())
    for (int i : out.indices) out.labels.push_back(ds_.labels[i]);
  return true;
}

template <class T>
std::vector<Tensor4<T>> gather_frames(const VideoDataset<T>& ds,
                                      const std::vector<int>& indices) {
  if (ds.videos.empty() || indices.empty()) throw DataError("gather_frames: nothing to gather");
  const Shape4 vs = ds.video_shape();
  const size_t chw = size_t(vs.c) * vs.h * vs.w;
  std::vector<Tensor4<T>> frames;
  for (int t = 0; t < vs.n; ++t) {
    Tensor4<T> f({int(indices.size()), vs.c, vs.h, vs.w});
    for (size_t b = 0; b < indices.size(); ++b) {
      const int v = indices[b];
      if (v < 0 || v >= ds.count())
        throw DataError("gather_frames: index " + std::to_string(v) + " outside dataset of " +
                        std::to_string(ds.count()));
      std::memcpy(f.ptr() + b * chw, ds.videos[v].plane(t, 0), sizeof(T) * chw);
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

// ---- container file ----
// Layout (little-endian):
//   0  "RWTV"              28 height
//   4  version=1           32 width
//   8  scalar bytes (4|8)  36 class_count
//  12  video count         40 flags (1 labels, 2 source ids, 4 transform)
//  16  frames per video    44 label block offset (u64)
//  20  channels            52 zero pad to 64
//  64  video scalars, video-major
//  then at the label offset: labels i32[count], source ids i32[count],
//  transform text (u32 length + bytes), each present per its flag.

template <class T>
void save_dataset(const std::string& path, const VideoDataset<T>& ds) {
  ds.validate();
  if (ds.videos.empty()) throw DataError("refusing to save an empty dataset");
  const Shape4 vs = ds.video_shape();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError("cannot open " + path + " for writing");
  io::Writer w(f);
  std::uint32_t flags = 0;
  if (!ds.labels.empty()) flags |= 1;
  if (!ds.source_ids.empty()) flags |= 2;
  if (!ds.transform.empty()) flags |= 4;
  const std::uint64_t data_bytes = std::uint64_t(ds.count()) * vs.elements() * sizeof(T);
  const std::uint64_t label_offset = flags ? 64 + data_bytes : 0;

  w.bytes("RWTV", 4);
  w.u32(1);
  w.u32(sizeof(T));
  w.u32(std::uint32_t(ds.count()));
  w.u32(std::uint32_t(vs.n));
  w.u32(std::uint32_t(vs.c));
  w.u32(std::uint32_t(vs.h));
  w.u32(std::uint32_t(vs.w));
  w.u32(std::uint32_t(ds.class_count));
  w.u32(flags);
  w.u64(label_offset);
  w.pad_to(64);
  for (const auto& v : ds.videos) w.array(v.ptr(), size_t(v.size()));
  if (flags & 1)
    for (int l : ds.labels) w.i32(l);
  if (flags & 2)
    for (int s : ds.source_ids) w.i32(s);
  if (flags & 4) {
    w.u32(std::uint32_t(ds.transform.size()));
    w.bytes(ds.transform.data(), ds.transform.size());
  }
}

template <class T>
VideoDataset<T> load_dataset(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path);
  io::Reader r(f);
  char magic[4];
  r.bytes(magic, 4, "magic");
  if (std::memcmp(magic, "RWTV", 4) != 0)
    throw FormatError("bad magic at byte 0 in " + path + ": not a video dataset file");
  const auto version = r.u32("version");
  if (version != 1)
    throw FormatError("unsupported dataset version " + std::to_string(version));
  const auto prec = r.u32("precision");
  if (prec != 4 && prec != 8)
    throw FormatError("bad scalar width " + std::to_string(prec) + " at byte 8 in " + path);
  const int count = int(r.u32("video count"));
  const int frames = int(r.u32("frame count"));
  const int c = int(r.u32("channels"));
  const int h = int(r.u32("height"));
  const int w = int(r.u32("width"));
  VideoDataset<T> ds;
  ds.class_count = int(r.u32("class count"));
  const auto flags = r.u32("flags");
  const auto label_offset = r.u64("label offset");
  r.skip_to(64, "header padding");

  const Shape4 vs{frames, c, h, w};
  if (count < 1 || vs.elements() < 1)
    throw FormatError("bad dimensions in " + path + ": " + std::to_string(count) + " videos of " +
                      vs.str());
  for (int i = 0; i < count; ++i) {
    Tensor4<T> v(vs);
    if (prec == sizeof(T)) {
      r.array(v.ptr(), size_t(v.size()), "video data");
    } else if (prec == 4) {
      Tensor4<float> tmp(vs);
      r.array(tmp.ptr(), size_t(tmp.size()), "video data");
      v = cast<T>(tmp);
    } else {
      Tensor4<double> tmp(vs);
      r.array(tmp.ptr(), size_t(tmp.size()), "video data");
      v = cast<T>(tmp);
    }
    ds.videos.push_back(std::move(v));
  }
  if (flags) {
    if (r.offset() != label_offset)
      throw FormatError("label block expected at byte " + std::to_string(label_offset) +
                        " but video data ends at byte " + std::to_string(r.offset()));
    if (flags & 1) {
      ds.labels.resize(count);
      for (int i = 0; i < count; ++i) ds.labels[i] = r.i32("label");
    }
    if (flags & 2) {
      ds.source_ids.resize(count);
      for (int i = 0; i < count; ++i) ds.source_ids[i] = r.i32("source id");
    }
    if (flags & 4) {
      const auto len = r.u32("transform length");
      ds.transform.resize(len);
      if (len) r.bytes(ds.transform.data(), len, "transform text");
    }
  }
  ds.validate();
  return ds;
}

#define RWTA_DATA_INSTANTIATE(T)                                                            \
  template struct ImageDataset<T>;                                                          \
  template struct VideoDataset<T>;                                                          \
  template ImageDataset<T> load_idx(const std::string&, const std::string&);                \
  template void save_idx(const std::string&, const std::string&, const ImageDataset<T>&);   \
  template Tensor4<T> rotate_image(const Tensor4<T>&, double);                              \
  template Tensor4<T> rotate_video(const Tensor4<T>&, int, double);                         \
  template Tensor4<T> scan_video(const Tensor4<T>&, int, int);                              \
  template VideoDataset<T> make_rotation_dataset(const ImageDataset<T>&, int, double);      \
  template VideoDataset<T> make_scan_dataset(const ImageDataset<T>&, int, int);             \
  template ZcaTransform zca_fit(const Tensor4<T>&, double);                                 \
  template Tensor4<T> zca_apply(const ZcaTransform&, const Tensor4<T>&);                    \
  template VideoDataset<T> zca_apply(const ZcaTransform&, const VideoDataset<T>&);          \
  template Tensor4<T> stack_frames(const VideoDataset<T>&);                                 \
  template class BatchIter<T>;                                                              \
  template std::vector<Tensor4<T>> gather_frames(const VideoDataset<T>&,                    \
                                                 const std::vector<int>&);                  \
  template void save_dataset(const std::string&, const VideoDataset<T>&);                   \
  template VideoDataset<T> load_dataset(const std::string&);

RWTA_DATA_INSTANTIATE(float)
RWTA_DATA_INSTANTIATE(double)

}  // namespace rwta
