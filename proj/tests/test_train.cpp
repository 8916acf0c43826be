#include <doctest.h>

#include <cmath>

#include "srhm/train.hpp"

using namespace srhm;

namespace {

GrammarParams small_params() {
  GrammarParams g;
  g.n_c = 2;
  g.v = 4;
  g.m = 2;
  g.s = 2;
  g.L = 2;
  g.s0 = 0;
  g.sparsity = Sparsity::None;
  g.seed = 19;
  return g;
}

Dataset balanced_dataset(const RuleSet& rules, size_t per_class,
                         uint64_t seed) {
  Dataset d;
  d.params = rules.params;
  Rng rng(seed);
  for (int c = 0; c < rules.params.n_c; ++c)
    for (size_t i = 0; i < per_class; ++i) {
      auto tree =
          sample_datum(rules, c, rng.split(uint64_t(c)).split(uint64_t(i)));
      d.xs.push_back(tree.input);
      d.ys.push_back(tree.label);
    }
  return d;
}

}  // namespace

TEST_CASE("cross entropy fixtures") {
  // uniform logits give log(n_classes) for any label
  std::vector<std::vector<double>> uz = {{0.25, 0.25, 0.25}};
  CHECK(cross_entropy(uz, {1}) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  std::vector<std::vector<double>> two = {{1.0, -1.0}};
  CHECK(cross_entropy(two, {0}) ==
        doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-12));
  CHECK(cross_entropy(two, {1}) ==
        doctest::Approx(2.0 + std::log1p(std::exp(-2.0))).epsilon(1e-12));
  // batch mean
  std::vector<std::vector<double>> batch = {{1.0, -1.0}, {1.0, -1.0}};
  double a = cross_entropy(two, {0});
  double b = cross_entropy(two, {1});
  CHECK(cross_entropy(batch, {0, 1}) ==
        doctest::Approx(0.5 * (a + b)).epsilon(1e-12));
}

TEST_CASE("cross entropy survives extreme logits") {
  std::vector<std::vector<double>> z = {{1000.0, 0.0}};
  double l0 = cross_entropy(z, {0});
  double l1 = cross_entropy(z, {1});
  CHECK(std::isfinite(l0));
  CHECK(l0 == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(l1 == doctest::Approx(1000.0).epsilon(1e-9));
  CHECK_THROWS_AS(cross_entropy<double>({}, {}), TrainError);
}

TEST_CASE("train config validation") {
  TrainConfig ok;
  CHECK_NOTHROW(ok.validate());
  TrainConfig free_ride;
  free_ride.lr = 0;  // a zero rate is allowed for probing
  CHECK_NOTHROW(free_ride.validate());
  TrainConfig bad;
  bad.lr = -1;
  CHECK_THROWS_AS(bad.validate(), TrainError);
  bad = TrainConfig{};
  bad.batch = 0;
  CHECK_THROWS_AS(bad.validate(), TrainError);
  bad = TrainConfig{};
  bad.momentum = 1.0;
  CHECK_THROWS_AS(bad.validate(), TrainError);
  bad = TrainConfig{};
  bad.stop_loss = 0;
  CHECK_THROWS_AS(bad.validate(), TrainError);
  bad = TrainConfig{};
  bad.max_steps = 0;
  CHECK_THROWS_AS(bad.validate(), TrainError);
}

TEST_CASE("zero learning rate leaves the network untouched") {
  auto rules = build_ruleset(small_params());
  auto data = balanced_dataset(rules, 4, 31);
  auto spec = spec_for_grammar(rules.params, ArchKind::LCN, 8,
                               Scaling::Standard);
  auto net = init_network<double>(spec, InitMode::Standard, Rng(44));
  TrainConfig cfg;
  cfg.lr = 0;
  cfg.max_steps = 10;
  auto res = train(net, data, cfg);
  CHECK(res.steps == 10);
  CHECK_FALSE(res.converged);
  CHECK(res.net == net);
  CHECK(std::isfinite(res.final_loss));
}

TEST_CASE("training is reproducible from the seed") {
  auto rules = build_ruleset(small_params());
  auto data = balanced_dataset(rules, 4, 77);
  auto spec = spec_for_grammar(rules.params, ArchKind::LCN, 16,
                               Scaling::Standard);
  auto net = init_network<double>(spec, InitMode::Standard, Rng(3));
  TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.max_steps = 40;
  auto r1 = train(net, data, cfg);
  auto r2 = train(net, data, cfg);
  CHECK(r1.steps == r2.steps);
  CHECK(r1.net == r2.net);
  CHECK(r1.final_loss == r2.final_loss);
  cfg.seed = 1;
  auto r3 = train(net, data, cfg);
  CHECK(r3.net.w[0] != r1.net.w[0]);
}

TEST_CASE("a small network memorizes a small training set") {
  auto rules = build_ruleset(small_params());
  auto data = balanced_dataset(rules, 8, 5);
  auto spec = spec_for_grammar(rules.params, ArchKind::LCN, 64,
                               Scaling::Standard);
  auto net = init_network<double>(spec, InitMode::Standard, Rng(21));
  TrainConfig cfg;
  cfg.lr = 0.05;
  cfg.max_steps = 200000;
  auto res = train(net, data, cfg);
  CHECK(res.converged);
  CHECK(res.final_loss <= cfg.stop_loss);
  CHECK(test_error(res.net, data) == 0.0);
  REQUIRE(res.loss_history.size() >= 2);
  CHECK(res.loss_history.front().second > res.loss_history.back().second);
  // history steps strictly increase
  for (size_t i = 1; i < res.loss_history.size(); ++i)
    CHECK(res.loss_history[i].first > res.loss_history[i - 1].first);
}

TEST_CASE("an untrained network sits at chance error") {
  GrammarParams g = small_params();
  g.n_c = 4;
  g.m = 2;
  auto rules = build_ruleset(g);
  auto data = balanced_dataset(rules, 128, 13);
  auto spec = spec_for_grammar(g, ArchKind::LCN, 32, Scaling::Standard);
  auto net = init_network<double>(spec, InitMode::Standard, Rng(2));
  double err = test_error(net, data);
  CHECK(err > 0.55);
  CHECK(err < 0.95);
}

TEST_CASE("an absurd learning rate raises DivergedError") {
  auto rules = build_ruleset(small_params());
  auto data = balanced_dataset(rules, 8, 23);
  auto spec = spec_for_grammar(rules.params, ArchKind::LCN, 16,
                               Scaling::Standard);
  auto net = init_network<double>(spec, InitMode::Standard, Rng(10));
  TrainConfig cfg;
  cfg.lr = 1e100;
  cfg.max_steps = 200;
  CHECK_THROWS_AS(train(net, data, cfg), DivergedError);

  // a merely huge rate can instead kill every relu, which is a finite
  // (dead) network rather than a divergence
  cfg.lr = 1e4;
  auto res = train(net, data, cfg);
  CHECK_FALSE(res.converged);
  CHECK(res.final_loss == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("argmax ties resolve to the lowest class index") {
  auto spec = spec_for_grammar(small_params(), ArchKind::LCN, 4,
                               Scaling::Standard);
  Network<double> zero;
  zero.spec = spec;
  zero.w.resize(2);
  for (int k = 1; k <= 2; ++k) zero.w[k - 1].assign(spec.weight_count(k), 0.0);
  zero.readout.assign(size_t(spec.n_classes) * spec.widths[1], 0.0);
  auto rules = build_ruleset(small_params());
  auto data = balanced_dataset(rules, 6, 9);
  size_t nonzero = 0;
  for (auto y : data.ys)
    if (y != 0) ++nonzero;
  CHECK(test_error(zero, data) ==
        doctest::Approx(double(nonzero) / double(data.size())));
}

TEST_CASE("partial final batches and mid-epoch cuts are accounted") {
  auto rules = build_ruleset(small_params());
  auto data = balanced_dataset(rules, 3, 40);  // 6 samples
  // drop one so the epoch is 5 samples: batches of 4 and 1
  data.xs.pop_back();
  data.ys.pop_back();
  auto spec = spec_for_grammar(rules.params, ArchKind::LCN, 8,
                               Scaling::Standard);
  auto net = init_network<double>(spec, InitMode::Standard, Rng(14));
  TrainConfig cfg;
  cfg.lr = 0.001;
  cfg.max_steps = 2;
  auto res = train(net, data, cfg);
  CHECK(res.steps == 2);
  CHECK(res.epochs == 1);
  cfg.max_steps = 3;  // cuts mid second epoch, after one batch
  auto res2 = train(net, data, cfg);
  CHECK(res2.steps == 3);
  CHECK(res2.epochs == 2);
  CHECK(std::isfinite(res2.final_loss));
  CHECK(res2.loss_history.size() == 1);  // only the complete epoch recorded
}

TEST_CASE("bad labels and empty sets are rejected") {
  auto rules = build_ruleset(small_params());
  auto data = balanced_dataset(rules, 2, 8);
  auto spec = spec_for_grammar(rules.params, ArchKind::LCN, 4,
                               Scaling::Standard);
  auto net = init_network<double>(spec, InitMode::Standard, Rng(0));
  TrainConfig cfg;
  Dataset empty;
  empty.params = rules.params;
  CHECK_THROWS_AS(train(net, empty, cfg), TrainError);
  CHECK_THROWS_AS(test_error(net, empty), TrainError);
  data.ys[0] = 7;
  CHECK_THROWS_AS(train(net, data, cfg), TrainError);
}

TEST_CASE("the loss history is thinned but stays ordered") {
  auto rules = build_ruleset(small_params());
  auto data = balanced_dataset(rules, 2, 3);  // 4 samples, 1 step per epoch
  auto spec = spec_for_grammar(rules.params, ArchKind::LCN, 2,
                               Scaling::Standard);
  auto net = init_network<double>(spec, InitMode::Standard, Rng(6));
  TrainConfig cfg;
  cfg.lr = 0;
  cfg.stop_loss = 1e-30;
  cfg.max_steps = 10000;
  auto res = train(net, data, cfg);
  CHECK(res.steps == 10000);
  CHECK(res.loss_history.size() <= 4096);
  CHECK(res.loss_history.size() > 1000);
  CHECK(res.loss_history.front().first == 1);
  for (size_t i = 1; i < res.loss_history.size(); ++i)
    CHECK(res.loss_history[i].first > res.loss_history[i - 1].first);
}
