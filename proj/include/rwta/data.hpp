#pragma once

#include <string>
#include <vector>

#include "rwta/rng.hpp"
#include "rwta/tensor.hpp"

namespace rwta {

// Labeled still images, pixel values in [0, 1].
template <class T>
struct ImageDataset {
  Tensor4<T> images;        // (N, C, H, W)
  std::vector<int> labels;  // size N, or empty when unlabeled
  int class_count = 0;

  int count() const { return images.shape.n; }
  void validate() const;
};

// Fixed-length frame sequences synthesized from stills. Every video in a
// dataset shares (frames, C, h, w); labels and source image ids ride along.
template <class T>
struct VideoDataset {
  std::vector<Tensor4<T>> videos;  // each (frames, C, h, w)
  std::vector<int> labels;         // per video, or empty
  std::vector<int> source_ids;     // index into the source image set, or empty
  std::string transform;           // how the videos were synthesized
  int class_count = 0;

  int count() const { return int(videos.size()); }
  int frames() const { return videos.empty() ? 0 : videos[0].shape.n; }
  Shape4 video_shape() const { return videos.empty() ? Shape4{} : videos[0].shape; }
  void validate() const;
};

// ---- IDX image files (big-endian, magics 2051 images / 2049 labels) ----

template <class T>
ImageDataset<T> load_idx(const std::string& images_path, const std::string& labels_path);
template <class T>
void save_idx(const std::string& images_path, const std::string& labels_path,
              const ImageDataset<T>& ds);

// ---- video synthesis ----

// Counter-clockwise rotation about the image center ((H-1)/2, (W-1)/2),
// bilinear interpolation, zero outside the source. image is (1, C, H, W).
template <class T>
Tensor4<T> rotate_image(const Tensor4<T>& image, double degrees);

// Frame k = source rotated by k * step_degrees, k = 0..frames-1.
template <class T>
Tensor4<T> rotate_video(const Tensor4<T>& image, int frames, double step_degrees);

// Sliding window over a still, vertical-first from the upper-left corner:
// the window walks down each column position before moving right.
template <class T>
Tensor4<T> scan_video(const Tensor4<T>& image, int window, int stride);

template <class T>
VideoDataset<T> make_rotation_dataset(const ImageDataset<T>& images, int frames,
                                      double step_degrees);
template <class T>
VideoDataset<T> make_scan_dataset(const ImageDataset<T>& images, int window, int stride);

// ---- synthetic digit stills ----

// Deterministic stand-in for a handwritten-digit corpus: parametric stroke
// glyphs for 0-9 rendered at 28x28 with seeded affine jitter (rotation,
// scale, shear, translation) and pen-width variation. Labels cycle 0-9.
template <class T>
ImageDataset<T> synthetic_digits(int count, SeededRng& rng);

// ---- ZCA whitening ----

struct ZcaTransform {
  int dim = 0;
  double epsilon = 0;          // eigenvalue floor actually used
  std::vector<double> mean;    // D
  std::vector<double> whiten;  // D x D, row-major, symmetric

  void save(const std::string& path) const;
  static ZcaTransform load(const std::string& path);
};

// Fits on rows = samples, D = C*h*w. epsilon < 0 selects 1e-2 of the mean
// eigenvalue. Requires more samples than dimensions unless epsilon > 0.
template <class T>
ZcaTransform zca_fit(const Tensor4<T>& samples, double epsilon);

// (x - mean) * whiten per sample, reshaped back to the input layout.
template <class T>
Tensor4<T> zca_apply(const ZcaTransform& t, const Tensor4<T>& samples);
template <class T>
VideoDataset<T> zca_apply(const ZcaTransform& t, const VideoDataset<T>& ds);

// All frames of all videos stacked on the batch axis, video-major.
template <class T>
Tensor4<T> stack_frames(const VideoDataset<T>& ds);

// ---- batching ----

template <class T>
struct Batch {
  std::vector<int> indices;        // dataset positions in this batch
  std::vector<Tensor4<T>> frames;  // frames[t] is (B, C, h, w)
  std::vector<int> labels;         // per video, empty if unlabeled
};

// Partitions the dataset into consecutive batches of a (possibly shuffled)
// seeded permutation; the final short batch is emitted.
template <class T>
class BatchIter {
 public:
  BatchIter(const VideoDataset<T>& ds, int batch_size, bool shuffle, SeededRng rng);
  bool next(Batch<T>& out);
  void reset();  // rewinds and reshuffles from the same rng state
  int batches() const;

 private:
  const VideoDataset<T>& ds_;
  int batch_size_;
  bool shuffle_;
  SeededRng rng_;
  std::vector<int> order_;
  int cursor_ = 0;
};

template <class T>
std::vector<Tensor4<T>> gather_frames(const VideoDataset<T>& ds,
                                      const std::vector<int>& indices);

// ---- dataset container file ----

template <class T>
void save_dataset(const std::string& path, const VideoDataset<T>& ds);
template <class T>
VideoDataset<T> load_dataset(const std::string& path);

}  // namespace rwta
