#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "srhm/nn.hpp"

using namespace srhm;

namespace {

ArchitectureSpec make_arch(ArchKind kind, int levels, int filter,
                           std::vector<int> widths, int d, int v, int n_c,
                           Scaling sc) {
  ArchitectureSpec s;
  s.kind = kind;
  s.levels = levels;
  s.filter = filter;
  s.widths = std::move(widths);
  s.input_positions = d;
  s.input_channels = v;
  s.n_classes = n_c;
  s.scaling = sc;
  return s;
}

InputMatrix one_hot_input(int rows, int cols, const std::vector<int>& feats) {
  InputMatrix x{rows, cols};
  for (int r = 0; r < rows; ++r)
    if (feats[r] >= 0) x.at(r, feats[r]) = 1;
  return x;
}

// single-layer net with hand-picked weights used by the fixture checks
Network<double> fixture_net(Scaling sc) {
  Network<double> net;
  net.spec = make_arch(ArchKind::LCN, 1, 2, {2}, 2, 2, 2, sc);
  net.spec.validate();
  net.w = {{1, 2, 3, 4, -1, 0.5, 0, 2}};
  net.readout = {1, -1, 2, 0};
  return net;
}

}  // namespace

TEST_CASE("forward matches hand computed values") {
  auto net = fixture_net(Scaling::Standard);
  auto x = one_hot_input(2, 2, {0, 1});
  auto t = forward(net, x);
  const double r2 = std::sqrt(2.0);
  REQUIRE(t.act.size() == 2);
  CHECK(t.act[1][0] == doctest::Approx(5 / r2).epsilon(1e-12));
  CHECK(t.act[1][1] == doctest::Approx(1 / r2).epsilon(1e-12));
  CHECK(t.output[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(t.output[1] == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("mean field readout divides by width instead of its square root") {
  auto net = fixture_net(Scaling::MeanField);
  auto x = one_hot_input(2, 2, {0, 1});
  auto t = forward(net, x);
  const double r2 = std::sqrt(2.0);
  CHECK(t.output[0] == doctest::Approx(r2).epsilon(1e-12));
  CHECK(t.output[1] == doctest::Approx(5 / r2).epsilon(1e-12));
}

TEST_CASE("relu clamps negative preactivations") {
  auto net = fixture_net(Scaling::Standard);
  auto x = one_hot_input(2, 2, {0, 0});
  auto t = forward(net, x);
  CHECK(t.act[1][1] == 0.0);
  CHECK(t.output[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(t.output[1] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("zero input produces zero output because there are no biases") {
  for (auto kind : {ArchKind::LCN, ArchKind::CNN, ArchKind::FCN}) {
    auto spec = make_arch(kind, 2, 2, {5, 4}, 4, 3, 3, Scaling::Standard);
    auto net = init_network<double>(spec, InitMode::Standard, Rng(9));
    InputMatrix x{4, 3};
    auto t = forward(net, x);
    for (double o : t.output) CHECK(o == 0.0);
    for (double a : t.act[2]) CHECK(a == 0.0);
  }
}

TEST_CASE("network output is positively homogeneous in the input") {
  for (auto kind : {ArchKind::LCN, ArchKind::CNN, ArchKind::FCN}) {
    auto spec = make_arch(kind, 2, 2, {6, 5}, 4, 3, 2, Scaling::Standard);
    auto net = init_network<double>(spec, InitMode::Standard, Rng(17));
    Rng rng(23);
    std::vector<double> x0(12);
    for (auto& v : x0) v = rng.normal();
    ActivationTrace<double> ta, tb;
    ta.act.resize(3);
    ta.act[0] = x0;
    forward_from_act0(net, ta);
    tb.act.resize(3);
    tb.act[0] = x0;
    for (auto& v : tb.act[0]) v *= 3.0;
    forward_from_act0(net, tb);
    for (int a = 0; a < 2; ++a)
      CHECK(tb.output[a] == doctest::Approx(3.0 * ta.output[a]).epsilon(1e-12));
  }
}

TEST_CASE("a cnn equals an lcn whose patches share the same filters") {
  auto cspec = make_arch(ArchKind::CNN, 2, 2, {3, 2}, 4, 2, 2, Scaling::Standard);
  auto cnn = init_network<double>(cspec, InitMode::Standard, Rng(5));
  Network<double> lcn;
  lcn.spec = cspec;
  lcn.spec.kind = ArchKind::LCN;
  lcn.readout = cnn.readout;
  lcn.w.resize(2);
  for (int k = 1; k <= 2; ++k) {
    const auto& shared = cnn.w[k - 1];
    auto& mine = lcn.w[k - 1];
    mine.resize(lcn.spec.weight_count(k));
    for (int j = 0; j < lcn.spec.positions(k); ++j)
      std::copy(shared.begin(), shared.end(),
                mine.begin() + size_t(j) * shared.size());
  }
  auto x = one_hot_input(4, 2, {1, 0, 0, 1});
  auto tc = forward(cnn, x);
  auto tl = forward(lcn, x);
  for (int a = 0; a < 2; ++a) CHECK(tc.output[a] == tl.output[a]);

  // shared-filter gradients are the per-patch gradients summed
  Workspace<double> wc, wl;
  forward(cnn, x, wc.trace);
  forward(lcn, x, wl.trace);
  auto gc = gradients_like(cnn);
  auto gl = gradients_like(lcn);
  gc.zero();
  gl.zero();
  double loss_c = backward_xent(cnn, wc, 1, gc);
  double loss_l = backward_xent(lcn, wl, 1, gl);
  CHECK(loss_c == loss_l);
  for (int k = 1; k <= 2; ++k) {
    size_t shared_n = gc.w[k - 1].size();
    for (size_t i = 0; i < shared_n; ++i) {
      double summed = 0;
      for (int j = 0; j < cspec.positions(k); ++j)
        summed += gl.w[k - 1][size_t(j) * shared_n + i];
      CHECK(gc.w[k - 1][i] == doctest::Approx(summed).epsilon(1e-13));
    }
  }
}

TEST_CASE("standard init matches fan-in variance and unit readout variance") {
  auto spec = make_arch(ArchKind::LCN, 1, 8, {256}, 8, 8, 8, Scaling::Standard);
  auto net = init_network<double>(spec, InitMode::Standard, Rng(77));
  const auto& w1 = net.w[0];
  double mean = 0, var = 0;
  for (double x : w1) mean += x;
  mean /= double(w1.size());
  for (double x : w1) var += (x - mean) * (x - mean);
  var /= double(w1.size());
  double fan_in = double(spec.row_len(1));
  CHECK(std::abs(mean) < 0.005);
  CHECK(var > 0.9 / fan_in);
  CHECK(var < 1.1 / fan_in);

  double rvar = 0, rmean = 0;
  for (double x : net.readout) rmean += x;
  rmean /= double(net.readout.size());
  for (double x : net.readout) rvar += (x - rmean) * (x - rmean);
  rvar /= double(net.readout.size());
  CHECK(rvar > 0.9);
  CHECK(rvar < 1.1);
  CHECK_FALSE(net.frozen_readout);
}

TEST_CASE("all-ones init sets every hidden weight to 1/sqrt(width)") {
  auto spec = make_arch(ArchKind::LCN, 2, 2, {256, 64}, 4, 3, 2,
                        Scaling::MeanField);
  auto net = init_network<double>(spec, InitMode::ConstantFilter, Rng(3));
  for (double x : net.w[0]) CHECK(x == 1.0 / 16.0);
  for (double x : net.w[1]) CHECK(x == 1.0 / 8.0);
  CHECK(net.frozen_readout);
  bool varied = false;
  for (double x : net.readout)
    if (x != net.readout[0]) varied = true;
  CHECK(varied);
}

TEST_CASE("all-ones init concentrates the output near zero") {
  GrammarParams g;
  g.n_c = 2;
  g.v = 4;
  g.m = 2;
  g.s = 2;
  g.L = 2;
  g.s0 = 1;
  g.sparsity = Sparsity::A;
  g.seed = 11;
  auto rules = build_ruleset(g);
  auto spec = spec_for_grammar(g, ArchKind::LCN, 64, Scaling::MeanField);
  auto net = init_network<double>(spec, InitMode::ConstantFilter, Rng(41));
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    auto tree = sample_datum(rules, std::nullopt, rng.split(trial));
    auto t = forward(net, tree.input);
    // identical filters make every channel of the top layer equal
    for (double a : t.act[2]) CHECK(a == t.act[2][0]);
    CHECK(t.act[2][0] > 0.0);
    // readout averaging then leaves only a 1/sqrt(H) fluctuation
    for (double o : t.output)
      CHECK(std::abs(o) <= 5.0 * t.act[2][0] / 8.0);
  }
}

TEST_CASE("checkpoints round trip and convert between precisions") {
  auto spec = make_arch(ArchKind::CNN, 2, 3, {4, 3}, 9, 2, 3, Scaling::MeanField);
  auto net = init_network<double>(spec, InitMode::Standard, Rng(12));
  std::string path = "nn_ckpt_test.bin";
  save_network(net, path);
  auto back = load_network<double>(path);
  CHECK(back == net);

  auto as_float = load_network<float>(path);
  CHECK(as_float.spec == net.spec);
  for (size_t k = 0; k < net.w.size(); ++k)
    for (size_t i = 0; i < net.w[k].size(); ++i)
      CHECK(as_float.w[k][i] == float(net.w[k][i]));

  auto fnet = init_network<float>(spec, InitMode::ConstantFilter, Rng(13));
  save_network(fnet, path);
  auto fback = load_network<double>(path);
  CHECK(fback.frozen_readout);
  for (size_t i = 0; i < fnet.readout.size(); ++i)
    CHECK(fback.readout[i] == double(fnet.readout[i]));
  std::remove(path.c_str());
}

TEST_CASE("corrupt checkpoints are rejected") {
  std::string path = "nn_ckpt_bad.bin";
  {
    std::ofstream os(path, std::ios::binary);
    os << "SRHMNET1garbage";
  }
  CHECK_THROWS_AS(load_network<double>(path), IoError);
  {
    std::ofstream os(path, std::ios::binary);
    os << "NOTANET!";
  }
  CHECK_THROWS_AS(load_network<double>(path), IoError);
  std::remove(path.c_str());
}

TEST_CASE("architecture validation rejects inconsistent shapes") {
  auto bad = make_arch(ArchKind::LCN, 2, 2, {4, 4}, 6, 2, 2, Scaling::Standard);
  CHECK_THROWS_AS(bad.validate(), NetError);
  auto wrong_widths =
      make_arch(ArchKind::CNN, 2, 2, {4}, 4, 2, 2, Scaling::Standard);
  CHECK_THROWS_AS(wrong_widths.validate(), NetError);
  // the fcn has no positional constraint
  auto fcn = make_arch(ArchKind::FCN, 2, 2, {4, 4}, 6, 2, 2, Scaling::Standard);
  CHECK_NOTHROW(fcn.validate());
  InputMatrix wrong_shape{3, 2};
  auto net = init_network<double>(fcn, InitMode::Standard, Rng(1));
  CHECK_THROWS_AS(forward(net, wrong_shape), NetError);
}

TEST_CASE("grammar-derived architecture has matching geometry") {
  GrammarParams g;
  g.n_c = 3;
  g.v = 3;
  g.m = 3;
  g.s = 2;
  g.L = 3;
  g.s0 = 1;
  g.sparsity = Sparsity::B;
  auto spec = spec_for_grammar(g, ArchKind::CNN, 32, Scaling::MeanField);
  CHECK(spec.levels == 3);
  CHECK(spec.filter == 4);
  CHECK(spec.input_positions == 64);
  CHECK(spec.input_channels == 3);
  CHECK(spec.n_classes == 3);
  CHECK(spec.positions(3) == 1);
  auto rules = build_ruleset(g);
  Rng rng(4);
  auto tree = sample_datum(rules, std::nullopt, rng);
  auto net = init_network<float>(spec, InitMode::Standard, Rng(2));
  auto t = forward(net, tree.input);
  CHECK(t.output.size() == 3);
  CHECK(t.act[3].size() == 32);
}

TEST_CASE("fcn flattens the whole input into its first layer") {
  auto spec = make_arch(ArchKind::FCN, 3, 2, {7, 5, 4}, 6, 3, 2,
                        Scaling::Standard);
  CHECK(spec.row_len(1) == 18);
  CHECK(spec.row_len(2) == 7);
  CHECK(spec.rows(2) == 5);
  auto net = init_network<double>(spec, InitMode::Standard, Rng(6));
  InputMatrix x{6, 3};
  x.at(0, 1) = 1;
  x.at(5, 2) = 1;
  auto t = forward(net, x);
  CHECK(t.act[1].size() == 7);
  CHECK(t.act[2].size() == 5);
  CHECK(t.act[3].size() == 4);
  CHECK(t.output.size() == 2);
}
