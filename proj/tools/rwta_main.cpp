// Command-line front end: dataset synthesis, training, fine-tuning,
// SVM evaluation, gradient checking, and decoder filter export.
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "rwta/eval.hpp"
#include "rwta/gradcheck.hpp"
#include "rwta/io.hpp"
#include "rwta/run_config.hpp"

namespace fs = std::filesystem;
using namespace rwta;

namespace {

void ensure_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw FormatError("cannot create output directory " + out + ": " + ec.message());
}

std::string join(const std::string& dir, const char* name) {
  return (fs::path(dir) / name).string();
}

// ---- synth ----

template <class T>
int do_synth(const RunConfig& cfg, const std::string& out) {
  SeededRng rng(cfg.train.seed);
  ImageDataset<T> images;
  if (cfg.synth_source == "digits") {
    images = synthetic_digits<T>(cfg.synth_count, rng);
  } else {
    images = load_idx<T>(cfg.synth_images, cfg.synth_labels);
  }
  VideoDataset<T> ds;
  if (cfg.synth_mode == "rotate") {
    ds = make_rotation_dataset(images, cfg.synth_frames, cfg.synth_step_degrees);
  } else {
    ds = make_scan_dataset(images, cfg.synth_window, cfg.synth_stride);
  }
  ensure_dir(out);
  save_dataset(join(out, "dataset.rwtv"), ds);
  cfg.save(join(out, "resolved.cfg"));
  const Shape4 vs = ds.video_shape();
  std::printf("wrote %d videos of %d frames (%dx%dx%d) to %s\n", ds.count(), ds.frames(),
              vs.c, vs.h, vs.w, join(out, "dataset.rwtv").c_str());
  return 0;
}

// ---- train ----

template <class T>
int do_train(const RunConfig& cfg, const std::string& out) {
  if (cfg.data_train.empty()) throw ConfigError("train needs --data (or data.train in config)");
  const auto ds = load_dataset<T>(cfg.data_train);
  SeededRng rng(cfg.train.seed);
  auto net = TwoStreamNet<T>::create(cfg.model, rng);

  std::optional<Checkpoint<T>> resume;
  if (!cfg.init_checkpoint.empty()) resume = load_checkpoint<T>(cfg.init_checkpoint);

  const auto res = train_unsupervised(net, ds, cfg.train, resume ? &*resume : nullptr);
  ensure_dir(out);
  save_checkpoint(res.checkpoint, join(out, "checkpoint.rwta"));
  res.log.save_csv(join(out, "metrics.csv"));
  cfg.save(join(out, "resolved.cfg"));
  if (res.diverged) {
    std::fprintf(stderr, "training diverged at step %lld; last finite checkpoint kept\n",
                 static_cast<long long>(res.steps));
    return 1;
  }
  const double last = res.log.rows.empty() ? 0.0 : res.log.rows.back().loss_total;
  std::printf("trained %lld updates, final loss %.6g, checkpoint in %s\n",
              static_cast<long long>(res.steps), last, out.c_str());
  return 0;
}

// ---- finetune ----

template <class T>
int do_finetune(const RunConfig& cfg, const std::string& out) {
  if (cfg.data_train.empty())
    throw ConfigError("finetune needs --data (or data.train in config)");
  const auto train_ds = load_dataset<T>(cfg.data_train);
  std::optional<VideoDataset<T>> val_ds;
  if (!cfg.data_val.empty()) val_ds = load_dataset<T>(cfg.data_val);

  ModelConfig mc = cfg.model;
  std::optional<Checkpoint<T>> init;
  if (!cfg.init_checkpoint.empty()) {
    init = load_checkpoint<T>(cfg.init_checkpoint);
    mc = init->model;
  }
  SeededRng rng(cfg.train.seed);
  auto net = TwoStreamNet<T>::create(mc, rng);
  if (init) init->restore(net);
  // The head draws from a forked stream so its starting point is the same
  // whether the trunk was pretrained or fresh.
  SeededRng head_rng = SeededRng(cfg.train.seed).fork(7000);
  auto head = ClassifierHead<T>::create(mc.channels, train_ds.class_count, head_rng);

  const auto res =
      finetune_supervised(net, head, train_ds, val_ds ? &*val_ds : nullptr, cfg.train);
  ensure_dir(out);
  save_checkpoint(res.checkpoint, join(out, "checkpoint.rwta"));
  res.log.save_csv(join(out, "metrics.csv"));
  {
    std::string acc = "epoch,train_accuracy,val_accuracy\n";
    for (size_t e = 0; e < res.train_accuracy.size(); ++e) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", e, res.train_accuracy[e],
                    e < res.val_accuracy.size() ? res.val_accuracy[e] : -1.0);
      acc += buf;
    }
    io::spit(join(out, "accuracy.csv"), acc);
  }
  cfg.save(join(out, "resolved.cfg"));
  if (res.diverged) {
    std::fprintf(stderr, "finetuning diverged; last finite checkpoint kept\n");
    return 1;
  }
  std::printf("finetune done: train accuracy %.4f", res.train_accuracy.back());
  if (!res.val_accuracy.empty()) std::printf(", val accuracy %.4f", res.val_accuracy.back());
  std::printf("\n");
  return 0;
}

// ---- eval ----

template <class T>
int do_eval(const RunConfig& cfg, const std::string& out, const std::string& test_path,
            const std::string& protocol, bool dump) {
  if (cfg.data_train.empty())
    throw ConfigError("eval needs --train-data to fit the classifier");
  if (test_path.empty()) throw ConfigError("eval needs --test-data");
  const auto train_ds = load_dataset<T>(cfg.data_train);
  const auto test_ds = load_dataset<T>(test_path);
  if (train_ds.labels.empty() || test_ds.labels.empty())
    throw DataError("eval needs labeled datasets");

  const FeatureMode mode = cfg.feature_mode();
  ModelConfig mc = cfg.model;
  TwoStreamNet<T> net;
  if (!cfg.init_checkpoint.empty()) {
    const auto ckpt = load_checkpoint<T>(cfg.init_checkpoint);
    mc = ckpt.model;
    SeededRng rng(cfg.train.seed);
    net = TwoStreamNet<T>::create(mc, rng);
    ckpt.restore(net);
  } else if (mode == FeatureMode::RawPixels) {
    SeededRng rng(cfg.train.seed);
    net = TwoStreamNet<T>::create(mc, rng);  // raw features never touch it
  } else {
    throw ConfigError("eval on model features needs --checkpoint");
  }

  const auto train_feats = extract_dataset_features(net, train_ds, mode, cfg.code_kind(),
                                                    cfg.train.deterministic);
  const auto train_rows = feature_rows(train_feats);
  SeededRng svm_rng(cfg.train.seed);
  const auto svm =
      svm_train(train_rows, train_ds.labels, {cfg.eval_reg, cfg.eval_epochs}, svm_rng);

  ensure_dir(out);
  std::vector<int> preds;
  if (protocol == "svm") {
    const auto test_feats =
        extract_dataset_features(net, test_ds, mode, cfg.code_kind(), cfg.train.deterministic);
    preds = svm_predict_all(svm, feature_rows(test_feats));
    if (dump) {
      io::spit(join(out, "features_train.csv"), features_to_csv(train_feats, train_ds.labels));
      io::spit(join(out, "features_test.csv"), features_to_csv(test_feats, test_ds.labels));
    }
  } else {  // vote
    std::string votes = "video_id,label,predicted,votes\n";
    for (int i = 0; i < test_ds.count(); ++i) {
      const auto res = sliding_window_vote(net, svm, test_ds.videos[i], cfg.eval_window, mode,
                                           cfg.code_kind());
      preds.push_back(res.label);
      votes += std::to_string(i) + "," + std::to_string(test_ds.labels[i]) + "," +
               std::to_string(res.label) + ",";
      for (size_t v = 0; v < res.votes.size(); ++v)
        votes += (v ? ";" : "") + std::to_string(res.votes[v]);
      votes += "\n";
    }
    io::spit(join(out, "votes.csv"), votes);
  }

  const auto rep = report(preds, test_ds.labels,
                          std::max(train_ds.class_count, test_ds.class_count));
  io::spit(join(out, "report.csv"), rep.to_csv());
  save_svm(svm, join(out, "model.rsvm"));
  cfg.save(join(out, "resolved.cfg"));
  std::printf("%s\n", rep.summary().c_str());
  return 0;
}

// ---- gradcheck ----

template <class T>
int do_gradcheck(std::uint64_t seed) {
  ModelConfig mc;
  mc.channels = 8;
  mc.enc_kernel = 3;
  mc.dec_kernel = 5;
  mc.input_channels = 1;
  SeededRng rng(seed);
  auto net = TwoStreamNet<T>::create(mc, rng);
  std::vector<Tensor4<T>> frames;
  for (int t = 0; t < 3; ++t) {
    Tensor4<T> f({2, 1, 8, 8});
    for (auto& v : f.data) v = T(rng.uniform());
    frames.push_back(std::move(f));
  }
  const GraphBuilder<T> build = [&](Tape<T>& tape, std::vector<NodeId>& param_ids) {
    const auto g = forward_loss(tape, net, frames, WtaRule::Mask);
    param_ids = g.params.ordered();
    return g.loss;
  };
  const T eps = sizeof(T) == 8 ? T(1e-5) : T(1e-2);
  const double threshold = sizeof(T) == 8 ? 1e-4 : 5e-2;
  SeededRng check_rng(seed + 1);
  const auto rep = grad_check<T>(build, net.parameters(), eps, 25, check_rng);
  std::printf("max relative gradient error %.3g (parameter %d, coordinate %lld)\n",
              rep.max_rel_error, rep.worst_param,
              static_cast<long long>(rep.worst_coord));
  if (rep.max_rel_error < threshold) return 0;
  std::fprintf(stderr, "exceeds threshold %.3g\n", threshold);
  return 1;
}

// ---- dump-filters ----

template <class T>
int do_dump_filters(const RunConfig& cfg, const std::string& out) {
  if (cfg.init_checkpoint.empty()) throw ConfigError("dump-filters needs --checkpoint");
  const auto ckpt = load_checkpoint<T>(cfg.init_checkpoint);
  SeededRng rng(1);
  auto net = TwoStreamNet<T>::create(ckpt.model, rng);
  ckpt.restore(net);
  ensure_dir(out);
  const auto tiles = decoder_filter_images(net);
  for (size_t c = 0; c < tiles.size(); ++c) {
    char name[32];
    std::snprintf(name, sizeof name, "filter_%03zu.pgm", c);
    io::write_pgm(join(out, name), tiles[c].height, tiles[c].width, tiles[c].pixels);
  }
  const auto grid = decoder_filter_grid(net);
  io::write_pgm(join(out, "grid.pgm"), grid.height, grid.width, grid.pixels);
  std::printf("wrote %zu filter images and grid.pgm to %s\n", tiles.size(), out.c_str());
  return 0;
}

bool use_double(const RunConfig& cfg) { return cfg.train.precision == "double"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"recurrent winner-take-all video autoencoder"};
  app.require_subcommand(1);

  std::string config_path, out_dir, test_data, protocol = "svm";
  std::optional<std::uint64_t> seed;
  std::optional<int> precision, frames, count, window, stride, epochs, batch_size,
      max_updates, svm_epochs, vote_window;
  std::optional<double> step, lr, reg;
  std::optional<std::string> mode, source, images, labels, data, val, init, features, kind;
  bool deterministic = false, dump = false;

  const auto add_common = [&](CLI::App* cmd, bool needs_out) {
    cmd->add_option("--config", config_path, "key=value run config file");
    cmd->add_option("--seed", seed, "rng seed");
    cmd->add_option("--precision", precision, "scalar width")
        ->check(CLI::IsMember({32, 64}));
    cmd->add_flag("--deterministic", deterministic, "single stream, zeroed wall times");
    auto* out = cmd->add_option("--out", out_dir, "output directory");
    if (needs_out) out->required();
  };

  auto* synth = app.add_subcommand("synth", "build a video dataset from stills");
  add_common(synth, true);
  synth->add_option("--mode", mode, "rotate | scan");
  synth->add_option("--source", source, "digits | idx");
  synth->add_option("--count", count, "images to draw from the digit generator");
  synth->add_option("--frames", frames, "frames per rotation video");
  synth->add_option("--step", step, "degrees rotated per frame");
  synth->add_option("--window", window, "scan crop size");
  synth->add_option("--stride", stride, "scan step");
  synth->add_option("--images", images, "idx pixel file");
  synth->add_option("--labels", labels, "idx label file");

  auto* train = app.add_subcommand("train", "unsupervised two-stream training");
  add_common(train, true);
  train->add_option("--data", data, "training dataset (.rwtv)");
  train->add_option("--init", init, "checkpoint to resume from");
  train->add_option("--epochs", epochs, "training epochs");
  train->add_option("--batch-size", batch_size, "videos per update");
  train->add_option("--lr", lr, "Adam learning rate");
  train->add_option("--max-updates", max_updates, "hard cap on updates (0 = all epochs)");

  auto* finetune = app.add_subcommand("finetune", "supervised classifier training");
  add_common(finetune, true);
  finetune->add_option("--data", data, "labeled training dataset (.rwtv)");
  finetune->add_option("--val", val, "labeled validation dataset");
  finetune->add_option("--init", init, "pretrained checkpoint (omit to start fresh)");
  finetune->add_option("--epochs", epochs, "training epochs");
  finetune->add_option("--batch-size", batch_size, "videos per update");
  finetune->add_option("--lr", lr, "Adam learning rate");
  finetune->add_option("--max-updates", max_updates, "hard cap on updates");

  auto* eval = app.add_subcommand("eval", "fit a linear SVM on features and score it");
  add_common(eval, true);
  eval->add_option("--checkpoint", init, "trained model checkpoint");
  eval->add_option("--train-data", data, "labeled dataset the SVM fits on");
  eval->add_option("--test-data", test_data, "labeled dataset to score")->required();
  eval->add_option("--protocol", protocol, "svm | vote")
      ->check(CLI::IsMember({"svm", "vote"}));
  eval->add_option("--features", features, "sum | last | pooled | raw");
  eval->add_option("--kind", kind, "sparse | dense codes");
  eval->add_option("--reg", reg, "SVM L2 coefficient");
  eval->add_option("--svm-epochs", svm_epochs, "SVM training passes");
  eval->add_option("--window", vote_window, "voting window length");
  eval->add_flag("--dump-features", dump, "write feature CSVs");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  gradcheck->add_option("--seed", seed, "rng seed");
  gradcheck->add_option("--precision", precision, "scalar width")
      ->check(CLI::IsMember({32, 64}));

  auto* dumpf = app.add_subcommand("dump-filters", "decoder kernels as PGM images");
  add_common(dumpf, true);
  dumpf->add_option("--checkpoint", init, "trained model checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    RunConfig cfg;
    if (!config_path.empty()) cfg = RunConfig::load(config_path);
    if (seed) cfg.train.seed = *seed;
    if (precision) cfg.train.precision = *precision == 64 ? "double" : "float";
    if (deterministic) cfg.train.deterministic = true;
    if (mode) cfg.synth_mode = *mode;
    if (source) cfg.synth_source = *source;
    if (count) cfg.synth_count = *count;
    if (frames) cfg.synth_frames = *frames;
    if (step) cfg.synth_step_degrees = *step;
    if (window) cfg.synth_window = *window;
    if (stride) cfg.synth_stride = *stride;
    if (images) cfg.synth_images = *images;
    if (labels) cfg.synth_labels = *labels;
    if (data) cfg.data_train = *data;
    if (val) cfg.data_val = *val;
    if (init) cfg.init_checkpoint = *init;
    if (epochs) cfg.train.epochs = *epochs;
    if (batch_size) cfg.train.batch_size = *batch_size;
    if (lr) cfg.train.lr = *lr;
    if (max_updates) cfg.train.max_updates = *max_updates;
    if (features) cfg.eval_features = *features;
    if (kind) cfg.eval_kind = *kind;
    if (reg) cfg.eval_reg = *reg;
    if (svm_epochs) cfg.eval_epochs = *svm_epochs;
    if (vote_window) cfg.eval_window = *vote_window;

    if (app.got_subcommand(gradcheck)) {
      const std::uint64_t s = seed.value_or(1);
      return precision.value_or(64) == 64 ? do_gradcheck<double>(s) : do_gradcheck<float>(s);
    }
    cfg.validate();
    if (app.got_subcommand(synth))
      return use_double(cfg) ? do_synth<double>(cfg, out_dir) : do_synth<float>(cfg, out_dir);
    if (app.got_subcommand(train))
      return use_double(cfg) ? do_train<double>(cfg, out_dir) : do_train<float>(cfg, out_dir);
    if (app.got_subcommand(finetune))
      return use_double(cfg) ? do_finetune<double>(cfg, out_dir)
                             : do_finetune<float>(cfg, out_dir);
    if (app.got_subcommand(eval))
      return use_double(cfg) ? do_eval<double>(cfg, out_dir, test_data, protocol, dump)
                             : do_eval<float>(cfg, out_dir, test_data, protocol, dump);
    if (app.got_subcommand(dumpf))
      return use_double(cfg) ? do_dump_filters<double>(cfg, out_dir)
                             : do_dump_filters<float>(cfg, out_dir);
    std::fprintf(stderr, "no command\n");
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
