#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rwta/data.hpp"
#include "rwta/model.hpp"

namespace rwta {

// Adam with bias correction. Defaults: lr 0.001, beta1 0.9, beta2 0.999,
// eps 1e-8.
template <class T>
struct AdamState {
  std::vector<Tensor4<T>> m, v;  // one pair per parameter, registration order
  std::int64_t t = 0;
  T lr = T(0.001);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);

  static AdamState init(const std::vector<Tensor4<T>*>& params, T lr);
};

// In-place update of every parameter. The step count increments first, so
// the bias correction sees t >= 1. A non-finite gradient aborts with an
// error naming the offending parameter.
template <class T>
void adam_step(const std::vector<Tensor4<T>*>& params,
               const std::vector<Tensor4<T>>& grads, AdamState<T>& state,
               const std::vector<std::string>& names = {});

struct TrainConfig {
  int epochs = 3;
  int batch_size = 25;
  int sequence_length = 5;  // frames per video; must match the dataset
  std::string precision = "float";  // "float" | "double"
  std::uint64_t seed = 1;
  WtaRule wta_rule = WtaRule::Mask;
  int log_every = 1;
  double lr = 0.001;
  std::int64_t max_updates = 0;  // 0 = run all epochs
  bool deterministic = true;      // single stream, wall_ms logged as 0
  double clip_norm = 0.0;         // global-norm gradient clip, 0 = off

  void validate() const;  // sequence_length in [2, 10], etc.
  std::string serialize() const;
  static TrainConfig parse(const std::string& text);
  bool operator==(const TrainConfig&) const = default;
};

struct MetricsRow {
  std::int64_t step = 0;
  int epoch = 0;
  double loss_recon = 0, loss_pred = 0, loss_total = 0;
  double wall_ms = 0;
};

struct MetricsLog {
  std::vector<MetricsRow> rows;

  std::string to_csv() const;  // header: step,epoch,loss_recon,loss_pred,loss_total,wall_ms
  void save_csv(const std::string& path) const;
  static MetricsLog parse_csv(const std::string& text);
};

// Linear classification head applied to the time-summed, spatially averaged
// dense recurrent state.
template <class T>
struct ClassifierHead {
  Tensor4<T> weight;  // (classes, channels, 1, 1)
  Tensor4<T> bias;    // (1, classes, 1, 1)

  static ClassifierHead create(int channels, int classes, SeededRng& rng);
};

// Versioned snapshot of everything needed to resume a run bit-exactly.
template <class T>
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  std::vector<std::string> names;
  std::vector<Tensor4<T>> tensors;  // net parameters (+ head when present)
  AdamState<T> adam;                // m/v aligned with the first 'names'
  bool has_adam = false;
  bool has_head = false;
  std::string rng_blob;
  std::int64_t step = 0;

  static Checkpoint take(const TwoStreamNet<T>& net, const TrainConfig& cfg,
                         const AdamState<T>* adam, const SeededRng* rng,
                         std::int64_t step, const ClassifierHead<T>* head = nullptr);
  // Writes parameters back; adam/head/rng restored when present in both.
  void restore(TwoStreamNet<T>& net, AdamState<T>* adam = nullptr,
               SeededRng* rng = nullptr, ClassifierHead<T>* head = nullptr) const;
};

template <class T>
void save_checkpoint(const Checkpoint<T>& ckpt, const std::string& path);
template <class T>
Checkpoint<T> load_checkpoint(const std::string& path);

template <class T>
struct TrainResult {
  Checkpoint<T> checkpoint;
  MetricsLog log;
  bool diverged = false;
  std::int64_t steps = 0;
};

// Minimizes the two-stream objective with Adam over shuffled batches.
// Deterministic by construction: epoch e's batch order comes from a child
// stream fork(1000 + e) of the config seed, so a run can be resumed from a
// checkpointed step and continue exactly as the unbroken run would.
// A non-finite loss aborts and returns the last finite-state checkpoint
// with diverged = true.
template <class T>
TrainResult<T> train_unsupervised(TwoStreamNet<T>& net, const VideoDataset<T>& ds,
                                  const TrainConfig& cfg,
                                  const Checkpoint<T>* resume = nullptr);

template <class T>
struct FinetuneResult {
  Checkpoint<T> checkpoint;
  MetricsLog log;
  std::vector<double> train_accuracy;  // per epoch
  std::vector<double> val_accuracy;    // per epoch; empty if no val set
  bool diverged = false;
};

// End-to-end supervised training: frames run through the recurrent stream,
// dense states are summed over time, spatially averaged, and classified by
// a linear head under softmax cross-entropy. Gradients flow through the
// whole network (BPTT), not just the head.
template <class T>
FinetuneResult<T> finetune_supervised(TwoStreamNet<T>& net, ClassifierHead<T>& head,
                                      const VideoDataset<T>& train_ds,
                                      const VideoDataset<T>* val_ds,
                                      const TrainConfig& cfg);

// Class scores for a batch of videos (value level, no tape).
template <class T>
std::vector<int> classify(const TwoStreamNet<T>& net, const ClassifierHead<T>& head,
                          const std::vector<Tensor4<T>>& frames);

}  // namespace rwta
