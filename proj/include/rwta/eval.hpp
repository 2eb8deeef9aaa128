#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rwta/data.hpp"
#include "rwta/model.hpp"

namespace rwta {

// How a video becomes one feature vector.
//   SumCollapse: elementwise sum of the per-frame recurrent codes.
//   LastState:   the code of the final frame only.
//   Pooled:      every per-frame code maxpooled 5x5 at stride 3, concatenated.
//   RawPixels:   the last frame itself, flattened (baseline, ignores the net).
enum class FeatureMode { SumCollapse, LastState, Pooled, RawPixels };

// Codes can be taken after the winner-take-all step (sparse, the default) or
// as the dense pre-WTA recurrent state.
enum class CodeKind { Sparse, Dense };

FeatureMode parse_feature_mode(const std::string& s);  // sum|last|pooled|raw
std::string feature_mode_name(FeatureMode mode);

template <class T>
struct FeatureVector {
  std::vector<T> values;
  FeatureMode source = FeatureMode::SumCollapse;
};

// video is one (frames, C, h, w) tensor; the recurrence starts from a zero
// state at frame 0. Pooled features keep per-frame order, so their length is
// frames * channels * pooled_h * pooled_w.
template <class T>
FeatureVector<T> extract_features(const TwoStreamNet<T>& net, const Tensor4<T>& video,
                                  FeatureMode mode, CodeKind kind = CodeKind::Sparse);

// One pooled feature vector per frame, state carried across the whole video.
// This is the per-frame protocol behind majority voting over long videos.
template <class T>
std::vector<std::vector<T>> per_frame_features(const TwoStreamNet<T>& net,
                                               const Tensor4<T>& video,
                                               CodeKind kind = CodeKind::Sparse);

// Whole-dataset extraction. Videos are independent, so the work is sharded
// across workers (capped by RWTA_THREADS) unless deterministic is set.
// Output order always matches dataset order.
template <class T>
std::vector<FeatureVector<T>> extract_dataset_features(const TwoStreamNet<T>& net,
                                                       const VideoDataset<T>& ds,
                                                       FeatureMode mode,
                                                       CodeKind kind = CodeKind::Sparse,
                                                       bool deterministic = true);

// Features as double rows, ready for the SVM.
template <class T>
std::vector<std::vector<double>> feature_rows(const std::vector<FeatureVector<T>>& features);

// ---- linear SVM (one-vs-rest hinge, L2 regularized, seeded SGD) ----

struct SvmConfig {
  double reg = 1e-4;  // L2 coefficient
  int epochs = 50;
};

// Inputs are standardized per dimension with statistics fit on the training
// split; the fitted mean/scale travel with the model. Constant dimensions
// get scale 0 and drop out of the score.
struct LinearSvm {
  int classes = 0;
  int dim = 0;
  std::vector<double> weights;  // classes x dim, row major
  std::vector<double> bias;     // per class
  std::vector<double> mean;     // per dim
  std::vector<double> scale;    // per dim, 1/std or 0
  double reg = 0;
};

LinearSvm svm_train(const std::vector<std::vector<double>>& features,
                    const std::vector<int>& labels, const SvmConfig& cfg, SeededRng& rng);

std::vector<double> svm_scores(const LinearSvm& svm, const std::vector<double>& features);
int svm_predict(const LinearSvm& svm, const std::vector<double>& features);
std::vector<int> svm_predict_all(const LinearSvm& svm,
                                 const std::vector<std::vector<double>>& features);

void save_svm(const LinearSvm& svm, const std::string& path);
LinearSvm load_svm(const std::string& path);

// ---- voting over long videos ----

struct VoteResult {
  int label = 0;
  std::vector<int> votes;  // per class
};

// Slides a length-`window` view over the video one frame at a time, encodes
// each view from a zero state, classifies it, and returns the modal class
// (ties to the lowest index) plus the full histogram.
template <class T>
VoteResult sliding_window_vote(const TwoStreamNet<T>& net, const LinearSvm& svm,
                               const Tensor4<T>& video, int window = 5,
                               FeatureMode mode = FeatureMode::LastState,
                               CodeKind kind = CodeKind::Sparse);

// Majority vote over per-frame pooled features with carried state.
template <class T>
VoteResult per_frame_vote(const TwoStreamNet<T>& net, const LinearSvm& svm,
                          const Tensor4<T>& video, CodeKind kind = CodeKind::Sparse);

// ---- reports ----

struct EvalReport {
  double accuracy = 0;
  double error_rate = 0;
  int total = 0;
  std::vector<std::vector<int>> confusion;  // [true][predicted]

  std::string to_csv() const;
  std::string summary() const;  // one line for stdout
};

EvalReport report(const std::vector<int>& predictions, const std::vector<int>& labels,
                  int class_count = 0);  // 0 = infer from the data

// video_id,label,f_0..f_{D-1}; label -1 when unlabeled.
template <class T>
std::string features_to_csv(const std::vector<FeatureVector<T>>& features,
                            const std::vector<int>& labels);

// Mean code distance between consecutive frames of the same video, divided
// by the mean distance between random frames of different videos. Trained
// models hold codes steady across a sequence, pushing the ratio below 1.
template <class T>
double temporal_coherence_ratio(const TwoStreamNet<T>& net, const VideoDataset<T>& ds,
                                int random_pairs, SeededRng& rng,
                                CodeKind kind = CodeKind::Sparse);

// ---- filter visualization ----

struct GrayImage {
  int height = 0, width = 0;
  std::vector<std::uint8_t> pixels;  // row major
};

// One image per decoder code channel, min-max normalized to [0, 255]
// independently. Multi-plane filters (color inputs) stack vertically.
template <class T>
std::vector<GrayImage> decoder_filter_images(const TwoStreamNet<T>& net);

// All channels side by side in a near-square grid with 1-pixel black rules.
template <class T>
GrayImage decoder_filter_grid(const TwoStreamNet<T>& net);

}  // namespace rwta
