#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "rwta/gradcheck.hpp"
#include "rwta/model.hpp"

using namespace rwta;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.channels = 4;
  c.enc_kernel = 3;
  c.dec_kernel = 5;
  c.input_channels = 1;
  return c;
}

template <class T>
std::vector<Tensor4<T>> random_video(int frames, Shape4 fs, SeededRng& rng) {
  std::vector<Tensor4<T>> v;
  for (int t = 0; t < frames; ++t)
    v.push_back(oracle::random_tensor<T>(fs, rng, T(0), T(1)));
  return v;
}

}  // namespace

TEST_CASE("config validation and text round trip") {
  ModelConfig c = tiny();
  CHECK_NOTHROW(c.validate());
  CHECK(ModelConfig::parse(c.serialize()) == c);

  ModelConfig bad = c;
  bad.enc_kernel = 4;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.input_channels = 2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = c;
  bad.channels = 0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(ModelConfig::parse("channels=8\n"), ConfigError);
  CHECK_THROWS_AS(ModelConfig::parse(c.serialize() + "extra=1\n"), ConfigError);
}

TEST_CASE("parameter shapes, order, and seeded determinism") {
  SeededRng r1(10), r2(10), r3(11);
  auto n1 = TwoStreamNet<double>::create(tiny(), r1);
  auto n2 = TwoStreamNet<double>::create(tiny(), r2);
  auto n3 = TwoStreamNet<double>::create(tiny(), r3);

  auto names = TwoStreamNet<double>::parameter_names();
  auto params = n1.parameters();
  REQUIRE(names.size() == params.size());
  REQUIRE(params.size() == 9);
  CHECK(names[0] == "enc1.weight");
  CHECK(names[4] == "cell.hidden_kernel");
  CHECK(names[8] == "dec.bias");

  CHECK(n1.enc1.weight.shape == Shape4{4, 1, 3, 3});
  CHECK(n1.enc2.weight.shape == Shape4{4, 4, 3, 3});
  CHECK(n1.cell.hidden_kernel.shape == Shape4{4, 4, 3, 3});
  CHECK(n1.cell.input_kernel.shape == Shape4{4, 4, 3, 3});
  CHECK(n1.dec.weight.shape == Shape4{1, 4, 5, 5});
  CHECK(n1.cell.bias.shape == Shape4{1, 4, 1, 1});
  CHECK(max_abs(n1.cell.bias) == 0.0);
  CHECK(max_abs(n1.dec.bias) == 0.0);

  for (size_t i = 0; i < params.size(); ++i)
    CHECK(bit_equal(*params[i], *n2.parameters()[i]));
  CHECK_FALSE(bit_equal(n1.enc1.weight, n3.enc1.weight));
}

TEST_CASE("each code keeps at most one active unit per channel plane") {
  SeededRng rng(31);
  auto net = TwoStreamNet<double>::create(tiny(), rng);
  auto frame = oracle::random_tensor<double>({2, 1, 8, 8}, rng, 0.0, 1.0);
  auto code = stateless_encode(net, frame);
  REQUIRE(code.shape == Shape4{2, 4, 8, 8});
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 4; ++c) {
      int nz = 0;
      for (int i = 0; i < 64; ++i) nz += code.plane(n, c)[i] != 0.0;
      CHECK(nz <= 1);
    }
}

TEST_CASE("with zero state the two streams agree on the first step") {
  // h_0 = 0 makes the state kernel contribution vanish, so the first
  // recurrent code equals the stateless code no matter what the state
  // kernel holds.
  SeededRng rng(32);
  auto net = TwoStreamNet<double>::create(tiny(), rng);
  auto video = random_video<double>(3, {1, 1, 7, 7}, rng);
  auto rc = recurrent_encode(net, video);
  CHECK(bit_equal(rc.codes[0], stateless_encode(net, video[0])));
  // Later steps generally disagree once state builds up.
  CHECK_FALSE(bit_equal(rc.codes[2], stateless_encode(net, video[2])));
}

TEST_CASE("zero state kernel makes the recurrent stream stateless") {
  SeededRng rng(33);
  auto net = TwoStreamNet<double>::create(tiny(), rng);
  for (auto& v : net.cell.hidden_kernel.data) v = 0.0;
  auto video = random_video<double>(4, {2, 1, 6, 6}, rng);
  auto rc = recurrent_encode(net, video);
  for (int t = 0; t < 4; ++t)
    CHECK(bit_equal(rc.codes[t], stateless_encode(net, video[t])));
}

TEST_CASE("state carries across a split sequence") {
  SeededRng rng(34);
  auto net = TwoStreamNet<double>::create(tiny(), rng);
  auto video = random_video<double>(5, {1, 1, 6, 6}, rng);
  auto whole = recurrent_encode(net, video);
  auto first = recurrent_encode(net, {video.begin(), video.begin() + 2});
  auto rest =
      recurrent_encode(net, {video.begin() + 2, video.end()}, first.final_state);
  CHECK(bit_equal(rest.final_state, whole.final_state));
  for (int t = 0; t < 3; ++t)
    CHECK(bit_equal(rest.codes[t], whole.codes[t + 2]));
}

TEST_CASE("recurrent_states are dense pre-sparsification states") {
  SeededRng rng(35);
  auto net = TwoStreamNet<double>::create(tiny(), rng);
  auto video = random_video<double>(3, {1, 1, 6, 6}, rng);
  auto states = recurrent_states(net, video);
  auto rc = recurrent_encode(net, video);
  REQUIRE(states.size() == 3);
  CHECK(bit_equal(states.back(), rc.final_state));
  for (int t = 0; t < 3; ++t)
    CHECK(bit_equal(wta(states[t]).sparse, rc.codes[t]));
}

TEST_CASE("decode stamps decoder filters at code positions") {
  SeededRng rng(36);
  auto net = TwoStreamNet<double>::create(tiny(), rng);
  Tensor4<double> code({1, 4, 9, 9});
  code.at(0, 2, 4, 4) = 1.5;
  auto frame = decode(net, code);
  REQUIRE(frame.shape == Shape4{1, 1, 9, 9});
  // Center pixel sees the decoder kernel center tap scaled by the code.
  CHECK(frame.at(0, 0, 4, 4) ==
        doctest::Approx(1.5 * net.dec.weight.at(0, 2, 2, 2)));
}

TEST_CASE("forward_loss matches a by-hand replay built from value ops") {
  SeededRng rng(37);
  auto net = TwoStreamNet<double>::create(tiny(), rng);
  auto video = random_video<double>(4, {2, 1, 6, 6}, rng);
  auto report = forward_loss(net, video);

  // Reconstruction side: frames 1..T-1 through the stateless stream.
  double recon = 0;
  for (int t = 0; t + 1 < 4; ++t) {
    auto err = sub(video[t], decode(net, stateless_encode(net, video[t])));
    recon += sum(mul(err, err));
  }
  recon /= 3.0 * 2 * 1 * 6 * 6;
  CHECK(report.recon == doctest::Approx(recon).epsilon(1e-12));

  // Prediction side: codes of frames 1..T-1, scored against frames 2..T.
  auto rc = recurrent_encode(net, {video.begin(), video.end() - 1});
  double pred = 0;
  for (int t = 0; t + 1 < 4; ++t) {
    auto err = sub(video[t + 1], decode(net, rc.codes[t]));
    pred += sum(mul(err, err));
  }
  pred /= 3.0 * 2 * 1 * 6 * 6;
  CHECK(report.pred == doctest::Approx(pred).epsilon(1e-12));
  CHECK(report.loss == doctest::Approx(recon + pred).epsilon(1e-12));

  REQUIRE(report.outputs.predictions.size() == 3);
  REQUIRE(report.outputs.static_codes.size() == 3);
  CHECK(bit_equal(report.outputs.recurrent_codes[1], rc.codes[1]));
  CHECK(bit_equal(report.outputs.final_state, rc.final_state));
}

TEST_CASE("forward_loss needs two frames and equal shapes") {
  SeededRng rng(38);
  auto net = TwoStreamNet<double>::create(tiny(), rng);
  auto one = random_video<double>(1, {1, 1, 6, 6}, rng);
  CHECK_THROWS_AS((void)forward_loss(net, one), ContractError);
  CHECK_THROWS_AS((void)forward_loss(net, {}), ContractError);
  auto bad = random_video<double>(2, {1, 1, 6, 6}, rng);
  bad[1] = oracle::random_tensor<double>({1, 1, 5, 6}, rng);
  CHECK_THROWS_AS((void)forward_loss(net, bad), ShapeError);
}

TEST_CASE("backpropagation through time grad-checks on a tiny net") {
  SeededRng rng(39);
  ModelConfig cfg = tiny();
  cfg.channels = 3;
  cfg.dec_kernel = 3;
  auto net = TwoStreamNet<double>::create(cfg, rng);
  auto video = random_video<double>(3, {1, 1, 5, 5}, rng);

  GraphBuilder<double> build = [&](Tape<double>& t, std::vector<NodeId>& ids) {
    auto g = forward_loss(t, net, video, WtaRule::Mask);
    ids = g.params.ordered();
    return g.loss;
  };
  SeededRng pick(4);
  auto report = grad_check<double>(build, net.parameters(), 1e-6, 12, pick);
  INFO("worst: param ", report.worst_param, " coord ", report.worst_coord,
       " analytic ", report.worst_analytic, " numeric ", report.worst_numeric);
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("recurrent stream input errors") {
  SeededRng rng(40);
  auto net = TwoStreamNet<double>::create(tiny(), rng);
  CHECK_THROWS_AS(recurrent_encode(net, std::vector<Tensor4<double>>{}),
                  ContractError);
  auto video = random_video<double>(2, {1, 1, 6, 6}, rng);
  auto bad_state = Tensor4<double>::zeros({1, 2, 6, 6});
  CHECK_THROWS_AS(recurrent_encode(net, video, bad_state), ShapeError);
}
