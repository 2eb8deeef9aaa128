// Python surface over the double-precision core: convolution, winner-take-all,
// dataset synthesis, the two-stream network, training, and the linear SVM.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "rwta/eval.hpp"
#include "rwta/train.hpp"

namespace py = pybind11;
using namespace rwta;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor4<double> to_tensor(const Array& a) {
  if (a.ndim() != 4) throw py::value_error("expected a 4-d array (n, c, h, w)");
  Tensor4<double> t({int(a.shape(0)), int(a.shape(1)), int(a.shape(2)), int(a.shape(3))});
  std::copy(a.data(), a.data() + a.size(), t.data.begin());
  return t;
}

py::array from_tensor(const Tensor4<double>& t) {
  py::array_t<double> a({t.shape.n, t.shape.c, t.shape.h, t.shape.w});
  std::copy(t.data.begin(), t.data.end(), a.mutable_data());
  return a;
}

// (frames, c, h, w) -> per-frame batch-of-one tensors.
std::vector<Tensor4<double>> video_frames(const Array& video) {
  const auto v = to_tensor(video);
  std::vector<Tensor4<double>> frames;
  for (int t = 0; t < v.shape.n; ++t) {
    Tensor4<double> f({1, v.shape.c, v.shape.h, v.shape.w});
    const auto plane = size_t(v.shape.c) * v.shape.h * v.shape.w;
    std::copy_n(v.data.begin() + size_t(t) * plane, plane, f.data.begin());
    frames.push_back(std::move(f));
  }
  return frames;
}

// (count, frames, c, h, w) plus optional labels -> dataset.
VideoDataset<double> to_dataset(const Array& videos, const py::object& labels) {
  if (videos.ndim() != 5)
    throw py::value_error("expected a 5-d array (count, frames, c, h, w)");
  VideoDataset<double> ds;
  const int n = int(videos.shape(0));
  const Shape4 vs{int(videos.shape(1)), int(videos.shape(2)), int(videos.shape(3)),
                  int(videos.shape(4))};
  const auto stride = size_t(vs.n) * vs.c * vs.h * vs.w;
  for (int i = 0; i < n; ++i) {
    Tensor4<double> v(vs);
    std::copy_n(videos.data() + size_t(i) * stride, stride, v.data.begin());
    ds.videos.push_back(std::move(v));
  }
  if (!labels.is_none()) {
    ds.labels = labels.cast<std::vector<int>>();
    for (int l : ds.labels) ds.class_count = std::max(ds.class_count, l + 1);
  }
  ds.transform = "python";
  ds.validate();
  return ds;
}

py::tuple dataset_to_python(const VideoDataset<double>& ds) {
  const Shape4 vs = ds.video_shape();
  py::array_t<double> videos({ds.count(), vs.n, vs.c, vs.h, vs.w});
  const auto stride = size_t(vs.n) * vs.c * vs.h * vs.w;
  for (int i = 0; i < ds.count(); ++i)
    std::copy(ds.videos[i].data.begin(), ds.videos[i].data.end(),
              videos.mutable_data() + size_t(i) * stride);
  py::array_t<int> labels(py::ssize_t(ds.labels.size()));
  std::copy(ds.labels.begin(), ds.labels.end(), labels.mutable_data());
  return py::make_tuple(videos, labels);
}

FeatureMode mode_from(const std::string& name) { return parse_feature_mode(name); }

CodeKind kind_from(const std::string& name) {
  if (name == "sparse") return CodeKind::Sparse;
  if (name == "dense") return CodeKind::Dense;
  throw py::value_error("kind must be 'sparse' or 'dense'");
}

TrainConfig make_train_config(int sequence_length, int epochs, int batch_size, double lr,
                              std::uint64_t seed, bool deterministic,
                              std::int64_t max_updates) {
  TrainConfig cfg;
  cfg.sequence_length = sequence_length;
  cfg.epochs = epochs;
  cfg.batch_size = batch_size;
  cfg.lr = lr;
  cfg.seed = seed;
  cfg.deterministic = deterministic;
  cfg.max_updates = max_updates;
  cfg.precision = "double";
  return cfg;
}

py::dict result_dict(const TrainResult<double>& res) {
  py::list losses;
  for (const auto& row : res.log.rows) losses.append(row.loss_total);
  py::dict out;
  out["losses"] = losses;
  out["steps"] = res.steps;
  out["diverged"] = res.diverged;
  return out;
}

}  // namespace

PYBIND11_MODULE(_rwta, m) {
  m.doc() = "recurrent winner-take-all video autoencoder (double precision core)";

  m.def("conv2d",
        [](const Array& input, const Array& kernel, const Array& bias,
           const std::string& padding) {
          const Padding p = padding == "same"    ? Padding::Same
                            : padding == "valid" ? Padding::Valid
                                                 : throw py::value_error(
                                                       "padding must be 'same' or 'valid'");
          return from_tensor(conv2d(to_tensor(input), to_tensor(kernel), to_tensor(bias), p));
        },
        py::arg("input"), py::arg("kernel"), py::arg("bias"), py::arg("padding") = "same",
        "Flip-form 2-d convolution over (n, c, h, w) arrays.");

  m.def("wta",
        [](const Array& x) { return from_tensor(wta(to_tensor(x)).sparse); },
        py::arg("x"),
        "Keep the spatial max per (sample, channel), zero the rest.");

  m.def("rotation_videos",
        [](int count, int frames, double step_degrees, std::uint64_t seed) {
          SeededRng rng(seed);
          const auto images = synthetic_digits<double>(count, rng);
          return dataset_to_python(make_rotation_dataset(images, frames, step_degrees));
        },
        py::arg("count"), py::arg("frames") = 5, py::arg("step_degrees") = 18.0,
        py::arg("seed") = 1,
        "Synthetic rotating-digit videos: (videos, labels) arrays.");

  m.def("scan_videos",
        [](int count, int window, int stride, std::uint64_t seed) {
          SeededRng rng(seed);
          const auto images = synthetic_digits<double>(count, rng);
          return dataset_to_python(make_scan_dataset(images, window, stride));
        },
        py::arg("count"), py::arg("window") = 16, py::arg("stride") = 6, py::arg("seed") = 1,
        "Synthetic digit videos scanned left-right, top-down by a sliding crop.");

  py::class_<TwoStreamNet<double>>(m, "Net")
      .def(py::init([](int channels, int enc_kernel, int dec_kernel, int input_channels,
                       std::uint64_t seed) {
             ModelConfig cfg;
             cfg.channels = channels;
             cfg.enc_kernel = enc_kernel;
             cfg.dec_kernel = dec_kernel;
             cfg.input_channels = input_channels;
             cfg.validate();
             SeededRng rng(seed);
             return TwoStreamNet<double>::create(cfg, rng);
           }),
           py::arg("channels") = 16, py::arg("enc_kernel") = 3, py::arg("dec_kernel") = 7,
           py::arg("input_channels") = 1, py::arg("seed") = 1)
      .def_property_readonly("channels",
                             [](const TwoStreamNet<double>& n) { return n.config.channels; })
      .def("loss",
           [](const TwoStreamNet<double>& net, const Array& video) {
             const auto rep = forward_loss(net, video_frames(video));
             py::dict out;
             out["total"] = rep.loss;
             out["recon"] = rep.recon;
             out["pred"] = rep.pred;
             return out;
           },
           py::arg("video"), "Reconstruction + prediction loss of one (t, c, h, w) video.")
      .def("encode",
           [](const TwoStreamNet<double>& net, const Array& video) {
             const auto enc = recurrent_encode(net, video_frames(video));
             py::list codes;
             for (const auto& c : enc.codes) codes.append(from_tensor(c));
             return codes;
           },
           py::arg("video"), "Sparse recurrent-stream code per frame.")
      .def("features",
           [](const TwoStreamNet<double>& net, const Array& video, const std::string& mode,
              const std::string& kind) {
             const auto f =
                 extract_features(net, to_tensor(video), mode_from(mode), kind_from(kind));
             py::array_t<double> a(py::ssize_t(f.values.size()));
             std::copy(f.values.begin(), f.values.end(), a.mutable_data());
             return a;
           },
           py::arg("video"), py::arg("mode") = "sum", py::arg("kind") = "sparse",
           "Classifier-ready feature vector for one video.")
      .def("parameters",
           [](const TwoStreamNet<double>& net) {
             py::dict out;
             const auto names = TwoStreamNet<double>::parameter_names();
             const auto params = net.parameters();
             for (size_t i = 0; i < names.size(); ++i)
               out[names[i].c_str()] = from_tensor(*params[i]);
             return out;
           },
           "Copies of all parameter tensors, keyed by name.")
      .def("save",
           [](const TwoStreamNet<double>& net, const std::string& path) {
             TrainConfig cfg;
             cfg.precision = "double";
             save_checkpoint(Checkpoint<double>::take(net, cfg, nullptr, nullptr, 0), path);
           },
           py::arg("path"), "Write a checkpoint holding just the model.")
      .def_static("load",
                  [](const std::string& path) {
                    const auto ckpt = load_checkpoint<double>(path);
                    SeededRng rng(1);
                    auto net = TwoStreamNet<double>::create(ckpt.model, rng);
                    ckpt.restore(net);
                    return net;
                  },
                  py::arg("path"), "Rebuild a model from a checkpoint file.");

  m.def("train_unsupervised",
        [](TwoStreamNet<double>& net, const Array& videos, int epochs, int batch_size,
           double lr, std::uint64_t seed, bool deterministic, std::int64_t max_updates) {
          const auto ds = to_dataset(videos, py::none());
          const auto cfg = make_train_config(ds.frames(), epochs, batch_size, lr, seed,
                                             deterministic, max_updates);
          return result_dict(train_unsupervised(net, ds, cfg));
        },
        py::arg("net"), py::arg("videos"), py::arg("epochs") = 3, py::arg("batch_size") = 25,
        py::arg("lr") = 1e-3, py::arg("seed") = 1, py::arg("deterministic") = true,
        py::arg("max_updates") = 0,
        "Train the two streams in place on (count, frames, c, h, w) videos.");

  py::class_<LinearSvm>(m, "LinearSvm")
      .def_property_readonly("classes", [](const LinearSvm& s) { return s.classes; })
      .def_property_readonly("dim", [](const LinearSvm& s) { return s.dim; })
      .def("predict",
           [](const LinearSvm& svm, const py::array_t<double, py::array::c_style |
                                                                  py::array::forcecast>& x) {
             if (x.ndim() != 2) throw py::value_error("expected (n, dim) features");
             std::vector<std::vector<double>> rows(x.shape(0));
             for (py::ssize_t i = 0; i < x.shape(0); ++i)
               rows[i].assign(x.data() + i * x.shape(1), x.data() + (i + 1) * x.shape(1));
             const auto preds = svm_predict_all(svm, rows);
             py::array_t<int> out(py::ssize_t(preds.size()));
             std::copy(preds.begin(), preds.end(), out.mutable_data());
             return out;
           },
           py::arg("features"))
      .def("save", [](const LinearSvm& s, const std::string& p) { save_svm(s, p); },
           py::arg("path"))
      .def_static("load", [](const std::string& p) { return load_svm(p); }, py::arg("path"));

  m.def("train_svm",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& x,
           const std::vector<int>& labels, double reg, int epochs, std::uint64_t seed) {
          if (x.ndim() != 2) throw py::value_error("expected (n, dim) features");
          std::vector<std::vector<double>> rows(x.shape(0));
          for (py::ssize_t i = 0; i < x.shape(0); ++i)
            rows[i].assign(x.data() + i * x.shape(1), x.data() + (i + 1) * x.shape(1));
          SeededRng rng(seed);
          return svm_train(rows, labels, {reg, epochs}, rng);
        },
        py::arg("features"), py::arg("labels"), py::arg("reg") = 1e-4,
        py::arg("epochs") = 50, py::arg("seed") = 1,
        "One-vs-rest linear SVM with standardized inputs.");

  py::register_exception<Error>(m, "RwtaError");
}
