#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "oracles.hpp"
#include "rwta/io.hpp"
#include "rwta/train.hpp"

using namespace rwta;

namespace {

// Scalar Adam recurrence written independently of the library loop.
struct ScalarAdam {
  double m = 0, v = 0;
  long t = 0;
  double lr = 0.001, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double step(double theta, double g) {
    t += 1;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    return theta - lr * mhat / (std::sqrt(vhat) + eps);
  }
};

VideoDataset<double> tiny_rotation_set(int count, int h, std::uint64_t seed) {
  SeededRng rng(seed);
  ImageDataset<double> imgs;
  imgs.images = Tensor4<double>({count, 1, h, h});
  for (auto& v : imgs.images.data) v = rng.uniform();
  for (int i = 0; i < count; ++i) imgs.labels.push_back(i % 2);
  imgs.class_count = 2;
  return make_rotation_dataset(imgs, 3, 30.0);
}

ModelConfig tiny_model() {
  ModelConfig mc;
  mc.channels = 4;
  mc.enc_kernel = 3;
  mc.dec_kernel = 3;
  mc.input_channels = 1;
  return mc;
}

TrainConfig tiny_train(int epochs, int batch) {
  TrainConfig tc;
  tc.epochs = epochs;
  tc.batch_size = batch;
  tc.sequence_length = 3;
  tc.precision = "double";
  tc.seed = 7;
  tc.lr = 0.01;
  return tc;
}

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("adam matches a scalar oracle over many steps") {
  Tensor4<double> p = Tensor4<double>::scalar(0.5);
  std::vector<Tensor4<double>*> params{&p};
  AdamState<double> st = AdamState<double>::init(params, 0.001);
  ScalarAdam oracle;
  double theta = 0.5;
  SeededRng rng(3);
  for (int i = 0; i < 50; ++i) {
    const double g = rng.normal();
    theta = oracle.step(theta, g);
    std::vector<Tensor4<double>> grads{Tensor4<double>::scalar(g)};
    adam_step(params, grads, st);
    CHECK(p.at(0, 0, 0, 0) == doctest::Approx(theta).epsilon(1e-12));
  }
  CHECK(st.t == 50);
}

TEST_CASE("first adam step moves by about -lr * sign(g)") {
  Tensor4<double> p = Tensor4<double>::zeros({1, 1, 1, 2});
  p.at(0, 0, 0, 0) = 1.0;
  p.at(0, 0, 0, 1) = 1.0;
  std::vector<Tensor4<double>*> params{&p};
  AdamState<double> st = AdamState<double>::init(params, 0.001);
  Tensor4<double> g = Tensor4<double>::zeros({1, 1, 1, 2});
  g.at(0, 0, 0, 0) = 4.2;    // positive gradient: step down
  g.at(0, 0, 0, 1) = -0.3;   // negative gradient: step up
  adam_step(params, {g}, st);
  CHECK(p.at(0, 0, 0, 0) == doctest::Approx(1.0 - 0.001).epsilon(1e-6));
  CHECK(p.at(0, 0, 0, 1) == doctest::Approx(1.0 + 0.001).epsilon(1e-6));
}

TEST_CASE("zero gradient leaves parameters untouched but advances the step") {
  Tensor4<double> p = Tensor4<double>::full({1, 2, 1, 1}, 3.25);
  std::vector<Tensor4<double>*> params{&p};
  AdamState<double> st = AdamState<double>::init(params, 0.001);
  adam_step(params, {Tensor4<double>::zeros(p.shape)}, st);
  CHECK(p.at(0, 0, 0, 0) == 3.25);
  CHECK(p.at(0, 1, 0, 0) == 3.25);
  CHECK(st.t == 1);
}

TEST_CASE("non-finite gradient aborts and names the parameter") {
  Tensor4<double> p = Tensor4<double>::scalar(1.0);
  std::vector<Tensor4<double>*> params{&p};
  AdamState<double> st = AdamState<double>::init(params, 0.001);
  Tensor4<double> g = Tensor4<double>::scalar(std::nan(""));
  CHECK_THROWS_WITH_AS(adam_step(params, {g}, st, {"enc1.weight"}),
                       doctest::Contains("enc1.weight"), TrainError);
  CHECK(p.at(0, 0, 0, 0) == 1.0);  // nothing applied
}

TEST_CASE("train config round trips and rejects bad values") {
  TrainConfig tc;
  tc.epochs = 9;
  tc.sequence_length = 4;
  tc.lr = 0.0012345678901234567;
  tc.wta_rule = WtaRule::Literal;
  tc.deterministic = false;
  tc.clip_norm = 2.5;
  const TrainConfig back = TrainConfig::parse(tc.serialize());
  CHECK(back == tc);

  TrainConfig bad = tc;
  bad.sequence_length = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.sequence_length = 11;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(TrainConfig::parse("nonsense"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::parse("wta_rule=soft\n"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::parse("frobnicate=1\n"), ConfigError);
}

TEST_CASE("metrics csv round trips at full precision") {
  MetricsLog log;
  log.rows.push_back({12, 3, 0.125, 1.0 / 3.0, 0.125 + 1.0 / 3.0, 0.0});
  log.rows.push_back({13, 3, 1e-17, 2.0, 2.0 + 1e-17, 4.5});
  const MetricsLog back = MetricsLog::parse_csv(log.to_csv());
  REQUIRE(back.rows.size() == 2);
  CHECK(back.rows[0].step == 12);
  CHECK(back.rows[0].loss_pred == 1.0 / 3.0);
  CHECK(back.rows[1].loss_total == 2.0 + 1e-17);
  CHECK(back.rows[1].wall_ms == 4.5);
  CHECK_THROWS_AS(MetricsLog::parse_csv("step,epoch\n"), FormatError);
}

TEST_CASE("training reduces the loss on a tiny rotation set") {
  const auto ds = tiny_rotation_set(6, 9, 11);
  SeededRng rng(5);
  auto net = TwoStreamNet<double>::create(tiny_model(), rng);
  TrainConfig tc = tiny_train(8, 6);
  const auto res = train_unsupervised(net, ds, tc);
  REQUIRE(!res.diverged);
  REQUIRE(res.steps == 8);
  REQUIRE(res.log.rows.size() == 8);
  CHECK(res.log.rows.back().loss_total < res.log.rows.front().loss_total);
  for (const auto& r : res.log.rows) {
    CHECK(std::isfinite(r.loss_total));
    CHECK(r.loss_total == doctest::Approx(r.loss_recon + r.loss_pred).epsilon(1e-12));
    CHECK(r.wall_ms == 0.0);  // deterministic mode reports no wall time
  }
}

TEST_CASE("lr zero leaves the full-batch loss trace constant") {
  // One video so batch composition and summation order cannot change.
  const auto ds = tiny_rotation_set(1, 8, 21);
  SeededRng rng(5);
  auto net = TwoStreamNet<double>::create(tiny_model(), rng);
  TrainConfig tc = tiny_train(3, 1);
  tc.lr = 0.0;
  const auto res = train_unsupervised(net, ds, tc);
  REQUIRE(res.log.rows.size() == 3);
  CHECK(res.log.rows[1].loss_total == res.log.rows[0].loss_total);
  CHECK(res.log.rows[2].loss_total == res.log.rows[0].loss_total);
}

TEST_CASE("same seed gives a bit-identical training trace") {
  const auto ds = tiny_rotation_set(6, 8, 31);
  TrainConfig tc = tiny_train(2, 3);
  SeededRng r1(5), r2(5);
  auto n1 = TwoStreamNet<double>::create(tiny_model(), r1);
  auto n2 = TwoStreamNet<double>::create(tiny_model(), r2);
  const auto a = train_unsupervised(n1, ds, tc);
  const auto b = train_unsupervised(n2, ds, tc);
  CHECK(a.log.to_csv() == b.log.to_csv());
  const auto pa = n1.parameters(), pb = n2.parameters();
  for (size_t i = 0; i < pa.size(); ++i) CHECK(bit_equal(*pa[i], *pb[i]));
}

TEST_CASE("checkpoint files round trip byte for byte") {
  const auto ds = tiny_rotation_set(4, 8, 41);
  SeededRng rng(9);
  auto net = TwoStreamNet<double>::create(tiny_model(), rng);
  TrainConfig tc = tiny_train(1, 2);
  const auto res = train_unsupervised(net, ds, tc);

  const std::string p1 = temp_path("ckpt_a.rwta"), p2 = temp_path("ckpt_b.rwta");
  save_checkpoint(res.checkpoint, p1);
  const auto loaded = load_checkpoint<double>(p1);
  save_checkpoint(loaded, p2);
  CHECK(io::slurp(p1) == io::slurp(p2));

  CHECK(loaded.step == res.checkpoint.step);
  CHECK(loaded.train == tc);
  CHECK(loaded.model == tiny_model());
  CHECK(loaded.has_adam);
  CHECK(loaded.rng_blob == res.checkpoint.rng_blob);
  REQUIRE(loaded.tensors.size() == res.checkpoint.tensors.size());
  for (size_t i = 0; i < loaded.tensors.size(); ++i) {
    CHECK(loaded.names[i] == res.checkpoint.names[i]);
    CHECK(bit_equal(loaded.tensors[i], res.checkpoint.tensors[i]));
    CHECK(bit_equal(loaded.adam.m[i], res.checkpoint.adam.m[i]));
    CHECK(bit_equal(loaded.adam.v[i], res.checkpoint.adam.v[i]));
  }
  CHECK(loaded.adam.t == res.checkpoint.adam.t);

  SUBCASE("a flipped byte is caught by the checksum") {
    std::string bytes = io::slurp(p1);
    bytes[bytes.size() / 2] ^= 0x40;
    io::spit(p2, bytes);
    CHECK_THROWS_WITH_AS(load_checkpoint<double>(p2), doctest::Contains("checksum"),
                         FormatError);
  }
  SUBCASE("precision mismatch is reported, not silently cast") {
    CHECK_THROWS_WITH_AS(load_checkpoint<float>(p1), doctest::Contains("8-byte"), FormatError);
  }
  SUBCASE("junk is rejected as such") {
    io::spit(p2, "definitely not a checkpoint, far too short either way......");
    CHECK_THROWS_AS(load_checkpoint<double>(p2), FormatError);
  }
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("resuming from a checkpoint matches the unbroken run exactly") {
  const auto ds = tiny_rotation_set(6, 8, 51);
  TrainConfig tc = tiny_train(3, 2);  // 3 batches/epoch, 9 updates total

  SeededRng r1(13);
  auto full = TwoStreamNet<double>::create(tiny_model(), r1);
  const auto whole = train_unsupervised(full, ds, tc);
  REQUIRE(whole.steps == 9);

  SeededRng r2(13);
  auto split = TwoStreamNet<double>::create(tiny_model(), r2);
  TrainConfig first = tc;
  first.max_updates = 4;  // stop mid-epoch to exercise in-epoch resume
  const auto part1 = train_unsupervised(split, ds, first);
  REQUIRE(part1.steps == 4);

  const std::string path = temp_path("ckpt_resume.rwta");
  save_checkpoint(part1.checkpoint, path);
  const auto resumed_from = load_checkpoint<double>(path);
  std::remove(path.c_str());

  const auto part2 = train_unsupervised(split, ds, tc, &resumed_from);
  REQUIRE(part2.steps == 9);

  const auto pw = full.parameters(), ps = split.parameters();
  for (size_t i = 0; i < pw.size(); ++i) CHECK(bit_equal(*pw[i], *ps[i]));

  // The stitched trace equals the unbroken one.
  MetricsLog stitched;
  stitched.rows = part1.log.rows;
  stitched.rows.insert(stitched.rows.end(), part2.log.rows.begin(), part2.log.rows.end());
  CHECK(stitched.to_csv() == whole.log.to_csv());

  SUBCASE("a checkpoint for another architecture is refused") {
    ModelConfig other = tiny_model();
    other.channels = 5;
    SeededRng r3(1);
    auto wrong = TwoStreamNet<double>::create(other, r3);
    CHECK_THROWS_AS(train_unsupervised(wrong, ds, tc, &resumed_from), ConfigError);
  }
}

TEST_CASE("an exploding run aborts with the last finite checkpoint") {
  const auto ds = tiny_rotation_set(4, 8, 61);
  SeededRng rng(5);
  auto net = TwoStreamNet<float>::create(tiny_model(), rng);
  auto fds = VideoDataset<float>{};
  for (const auto& v : ds.videos) fds.videos.push_back(cast<float>(v));
  fds.labels = ds.labels;
  fds.class_count = ds.class_count;
  fds.transform = ds.transform;
  TrainConfig tc = tiny_train(5, 4);
  tc.precision = "float";
  tc.lr = 1e18;  // guaranteed blow-up
  const auto res = train_unsupervised(net, fds, tc);
  CHECK(res.diverged);
  CHECK(res.steps < 20);
  for (const auto* p : net.parameters()) CHECK(all_finite(*p));
  CHECK(res.checkpoint.step == res.steps);
}

TEST_CASE("config and dataset disagreements are refused") {
  const auto ds = tiny_rotation_set(4, 8, 71);
  SeededRng rng(5);
  auto net = TwoStreamNet<double>::create(tiny_model(), rng);
  TrainConfig tc = tiny_train(1, 2);
  tc.sequence_length = 5;  // dataset has 3 frames
  CHECK_THROWS_AS(train_unsupervised(net, ds, tc), ConfigError);
}

TEST_CASE("finetuning drives a tiny labeled set to full accuracy") {
  // Two sharply distinct classes: bright uniform vs dark uniform frames.
  VideoDataset<double> ds;
  SeededRng noise(3);
  for (int i = 0; i < 6; ++i) {
    Tensor4<double> v({3, 1, 8, 8});
    const double base = (i % 2 == 0) ? 0.9 : 0.1;
    for (auto& x : v.data) x = base + 0.02 * noise.uniform();
    ds.videos.push_back(v);
    ds.labels.push_back(i % 2);
  }
  ds.class_count = 2;
  ds.transform = "none";

  SeededRng rng(5);
  auto net = TwoStreamNet<double>::create(tiny_model(), rng);
  auto head = ClassifierHead<double>::create(tiny_model().channels, 2, rng);
  TrainConfig tc = tiny_train(30, 6);
  tc.lr = 0.005;
  const auto res = finetune_supervised<double>(net, head, ds, nullptr, tc);
  REQUIRE(!res.diverged);
  REQUIRE(res.train_accuracy.size() == 30);
  CHECK(res.train_accuracy.back() == 1.0);
  CHECK(res.val_accuracy.empty());

  SUBCASE("the head checkpoint restores onto a fresh net") {
    const std::string path = temp_path("ckpt_head.rwta");
    save_checkpoint(res.checkpoint, path);
    const auto loaded = load_checkpoint<double>(path);
    std::remove(path.c_str());
    REQUIRE(loaded.has_head);

    SeededRng r2(99);
    auto net2 = TwoStreamNet<double>::create(tiny_model(), r2);
    auto head2 = ClassifierHead<double>::create(tiny_model().channels, 2, r2);
    loaded.restore(net2, nullptr, nullptr, &head2);
    const auto idx = std::vector<int>{0, 1, 2, 3, 4, 5};
    const auto before = classify(net, head, gather_frames(ds, idx));
    const auto after = classify(net2, head2, gather_frames(ds, idx));
    CHECK(before == after);
    for (int i = 0; i < 6; ++i) CHECK(after[i] == ds.labels[i]);
  }

  SUBCASE("unlabeled data is refused") {
    VideoDataset<double> bare = ds;
    bare.labels.clear();
    CHECK_THROWS_AS(finetune_supervised<double>(net, head, bare, nullptr, tc), DataError);
  }
}

TEST_CASE("classify breaks score ties toward the lowest class index") {
  // Zero net weights make every logit equal; the first class must win.
  ModelConfig mc = tiny_model();
  SeededRng rng(5);
  auto net = TwoStreamNet<double>::create(mc, rng);
  for (auto* p : net.parameters())
    for (auto& v : p->data) v = 0;
  ClassifierHead<double> head;
  head.weight = Tensor4<double>::zeros({3, mc.channels, 1, 1});
  head.bias = Tensor4<double>::zeros({1, 3, 1, 1});
  std::vector<Tensor4<double>> frames{Tensor4<double>::full({2, 1, 6, 6}, 0.5),
                                      Tensor4<double>::full({2, 1, 6, 6}, 0.25)};
  const auto pred = classify(net, head, frames);
  CHECK(pred == std::vector<int>{0, 0});
}
