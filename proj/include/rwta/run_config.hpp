#pragma once

#include <string>

#include "rwta/eval.hpp"
#include "rwta/model.hpp"
#include "rwta/train.hpp"

namespace rwta {

// Everything a run needs, as a flat key=value file. serialize() writes every
// key with defaults filled in, so the file dropped next to a run's outputs
// reproduces it exactly; parse() rejects keys it does not know.
struct RunConfig {
  ModelConfig model;  // model.*
  TrainConfig train;  // train.*

  // synth.*: how source images become videos
  std::string synth_mode = "rotate";    // rotate | scan
  std::string synth_source = "digits";  // digits (built-in generator) | idx
  int synth_count = 100;                // images drawn from the generator
  int synth_frames = 5;                 // rotation video length
  double synth_step_degrees = 18.0;     // per-frame rotation
  int synth_window = 16;                // scan crop size
  int synth_stride = 6;                 // scan step
  std::string synth_images;             // idx pixel file when source=idx
  std::string synth_labels;             // idx label file when source=idx

  // data.* / init.*: file inputs for train / finetune / eval
  std::string data_train;
  std::string data_val;
  std::string init_checkpoint;

  // eval.*
  std::string eval_features = "sum";  // sum | last | pooled | raw
  std::string eval_kind = "sparse";   // sparse | dense
  double eval_reg = 1e-4;
  int eval_epochs = 50;
  int eval_window = 5;

  void validate() const;
  std::string serialize() const;
  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;

  FeatureMode feature_mode() const { return parse_feature_mode(eval_features); }
  CodeKind code_kind() const;

  bool operator==(const RunConfig&) const = default;
};

}  // namespace rwta
