#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>
#include <vector>

#include "srhm/grammar.hpp"

using namespace srhm;

namespace {

GrammarParams make_params(int n_c, int v, int m, int s, int L, int s0,
                          Sparsity sp, uint64_t seed) {
  GrammarParams g;
  g.n_c = n_c;
  g.v = v;
  g.m = m;
  g.s = s;
  g.L = L;
  g.s0 = s0;
  g.sparsity = sp;
  g.seed = seed;
  return g;
}

// the tiny two-level illustration grammar: one class, one rule per parent
RuleSet toy_grammar() {
  GrammarParams g = make_params(1, 3, 1, 2, 2, 0, Sparsity::None, 0);
  RuleSet rs;
  rs.params = g;
  rs.tables.resize(2);
  rs.tables[1] = {0, 1};           // class 0 -> (0, 1)
  rs.tables[0] = {0, 1,            // parent 0 -> (0, 1)
                  1, 2,            // parent 1 -> (1, 2)
                  2, 0};           // parent 2 -> (2, 0)
  rs.rebuild_inverse();
  return rs;
}

std::vector<std::pair<int64_t, int32_t>> informative_rows(
    const InputMatrix& x) {
  std::vector<std::pair<int64_t, int32_t>> out;
  for (int32_t r = 0; r < x.rows; ++r)
    if (auto f = x.row_feature(r)) out.emplace_back(r, *f);
  return out;
}

}  // namespace

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(
      make_params(2, 3, 4, 2, 2, 0, Sparsity::None, 0).validate(),
      MaxSynonymsExceeded);  // m > v^(s-1)
  CHECK_THROWS_AS(
      make_params(9, 2, 1, 2, 1, 0, Sparsity::None, 0).validate(),
      InsufficientTuples);  // n_c*m > v^s
  CHECK_THROWS_AS(make_params(2, 2, 2, 2, 2, 1, Sparsity::None, 0).validate(),
                  GrammarError);  // s0 > 0 without sparsity
  CHECK_NOTHROW(make_params(2, 3, 3, 2, 2, 0, Sparsity::None, 0).validate());
  CHECK_NOTHROW(make_params(2, 3, 3, 2, 2, 2, Sparsity::B, 0).validate());
}

TEST_CASE("degenerate one-rule grammar") {
  auto rs = build_ruleset(make_params(1, 1, 1, 2, 1, 0, Sparsity::None, 3));
  auto tup = rs.rule(1, 0, 0);
  CHECK(tup[0] == 0);
  CHECK(tup[1] == 0);
}

TEST_CASE("build_ruleset deals distinct disjoint rules") {
  auto g = make_params(2, 3, 3, 2, 2, 0, Sparsity::None, 17);
  auto rs = build_ruleset(g);
  for (int l = 1; l <= g.L; ++l) {
    std::set<uint64_t> seen;
    for (int p = 0; p < rs.parents_at(l); ++p)
      for (int r = 0; r < g.m; ++r)
        CHECK(seen.insert(rs.pack_tuple(rs.rule(l, p, r))).second);
    CHECK(int(seen.size()) == rs.parents_at(l) * g.m);
  }
}

TEST_CASE("build_ruleset works at the m = v^(s-1) boundary") {
  auto g = make_params(2, 4, 16, 3, 1, 0, Sparsity::None, 5);
  auto rs = build_ruleset(g);  // uses 32 of the 64 tuples
  CHECK(rs.inverse[0].size() == 32);
}

TEST_CASE("build_ruleset is deterministic per seed") {
  auto g = make_params(3, 4, 4, 2, 3, 0, Sparsity::None, 123);
  auto a = build_ruleset(g), b = build_ruleset(g);
  CHECK(a.tables == b.tables);
  g.seed = 124;
  auto c = build_ruleset(g);
  CHECK(a.tables != c.tables);
}

TEST_CASE("forced rule choices reproduce the toy derivation") {
  auto rs = toy_grammar();
  SampleTree t;
  t.params = rs.params;
  t.label = 0;
  t.rule_idx = {{0, 0}, {0}};      // level 1 then level 2
  t.slots = {{0, 1, 0, 1}, {0, 1}};
  auto lv = leaves(rs, t);
  REQUIRE(lv.size() == 4);
  CHECK(lv[0] == std::pair<int64_t, int32_t>{0, 0});  // turquoise
  CHECK(lv[1] == std::pair<int64_t, int32_t>{1, 1});  // pink
  CHECK(lv[2] == std::pair<int64_t, int32_t>{2, 1});  // pink
  CHECK(lv[3] == std::pair<int64_t, int32_t>{3, 2});  // green
  auto x = encode_input(rs, t);
  CHECK(classify_oracle(rs, x) == 0);
}

TEST_CASE("sample_datum honours the forced label and stays in range") {
  auto rs = build_ruleset(make_params(4, 4, 4, 2, 2, 1, Sparsity::A, 7));
  Rng rng(100);
  for (int i = 0; i < 20; ++i) {
    auto t = sample_datum(rs, 2, rng.split(uint64_t(i)));
    CHECK(t.label == 2);
    CHECK(classify_oracle(rs, t.input) == 2);
  }
  // free labels stay in range and hit every class eventually
  std::set<int32_t> seen;
  for (int i = 0; i < 200; ++i)
    seen.insert(sample_datum(rs, std::nullopt, rng.split(1000 + i)).label);
  CHECK(seen == std::set<int32_t>{0, 1, 2, 3});
}

TEST_CASE("encode_input emits exactly s^L one-hot rows") {
  for (auto sp : {Sparsity::A, Sparsity::B}) {
    auto rs = build_ruleset(make_params(2, 3, 3, 2, 2, 2, sp, 9));
    Rng rng(4);
    for (int i = 0; i < 50; ++i) {
      auto t = sample_datum(rs, std::nullopt, rng.split(uint64_t(i)));
      CHECK(t.input.rows == rs.params.input_dim());
      CHECK(t.input.cols == rs.params.v);
      CHECK(int64_t(informative_rows(t.input).size()) ==
            rs.params.leaf_count());
    }
  }
}

TEST_CASE("variant A keeps child j inside sub-patch j") {
  auto rs = build_ruleset(make_params(2, 2, 2, 2, 2, 3, Sparsity::A, 21));
  int f = rs.params.patch_width();  // 8
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    auto t = sample_datum(rs, std::nullopt, rng.split(uint64_t(i)));
    for (int l = 1; l <= 2; ++l)
      for (size_t e = 0; e * 2 < t.slots[l - 1].size(); ++e)
        for (int j = 0; j < 2; ++j) {
          int32_t slot = t.slots[l - 1][e * 2 + j];
          CHECK(slot / (rs.params.s0 + 1) == j);
          CHECK(slot < f);
        }
  }
}

TEST_CASE("variant B placements are strictly increasing") {
  auto rs = build_ruleset(make_params(2, 3, 3, 3, 2, 1, Sparsity::B, 22));
  Rng rng(6);
  for (int i = 0; i < 50; ++i) {
    auto t = sample_datum(rs, std::nullopt, rng.split(uint64_t(i)));
    CHECK(classify_oracle(rs, t.input) == t.label);
    for (int l = 1; l <= 2; ++l)
      for (size_t e = 0; e * 3 < t.slots[l - 1].size(); ++e)
        for (int j = 1; j < 3; ++j)
          CHECK(t.slots[l - 1][e * 3 + j] > t.slots[l - 1][e * 3 + j - 1]);
  }
}

TEST_CASE("level-1 placements are uniform over the (s0+1)^s layouts") {
  // s = 2, s0 = 1: four layouts, chi-square at the 1e-3 level
  auto rs = build_ruleset(make_params(1, 2, 1, 2, 1, 1, Sparsity::A, 31));
  Rng rng(77);
  std::map<std::pair<int32_t, int32_t>, int> counts;
  const int n = 10000;
  for (int i = 0; i < n; ++i) {
    auto t = sample_datum(rs, std::nullopt, rng.split(uint64_t(i)));
    counts[{t.slots[0][0], t.slots[0][1]}]++;
  }
  REQUIRE(counts.size() == 4);
  double chi2 = 0, expect = n / 4.0;
  for (auto& [k, c] : counts) chi2 += (c - expect) * (c - expect) / expect;
  CHECK(chi2 < 16.27);  // chi-square_{3, 0.999}
}

TEST_CASE("oracle round-trips every sample across variants and depths") {
  for (auto sp : {Sparsity::None, Sparsity::A, Sparsity::B}) {
    int s0 = sp == Sparsity::None ? 0 : 1;
    auto rs = build_ruleset(make_params(3, 3, 3, 2, 3, s0, sp, 41));
    Rng rng(8);
    for (int i = 0; i < 100; ++i) {
      auto t = sample_datum(rs, std::nullopt, rng.split(uint64_t(i)));
      CHECK(classify_oracle(rs, t.input) == t.label);
    }
  }
}

TEST_CASE("oracle rejects corrupted inputs") {
  auto rs = build_ruleset(make_params(2, 3, 3, 2, 2, 1, Sparsity::A, 55));
  auto t = sample_datum(rs, 0, Rng(1));
  auto rows = informative_rows(t.input);

  InputMatrix zero(t.input.rows, t.input.cols);
  CHECK(!try_classify(rs, zero));

  // a doubled entry in an informative row
  InputMatrix two = t.input;
  two.at(int32_t(rows[0].first), (rows[0].second + 1) % rs.params.v) = 1;
  CHECK_THROWS_AS(classify_oracle(rs, two), Unparseable);

  // move an informative pixel out of its sub-patch
  InputMatrix moved = t.input;
  int32_t r0 = int32_t(rows[0].first);
  moved.at(r0, rows[0].second) = 0;
  int32_t wrong = r0 ^ 2;  // jumps to the other sub-patch, keeps the patch
  moved.at(wrong, rows[0].second) = 1;
  CHECK(!try_classify(rs, moved));

  // wrong pixel count
  InputMatrix extra = t.input;
  for (int32_t r = 0; r < extra.rows; ++r)
    if (!extra.row_feature(r)) {
      extra.at(r, 0) = 1;
      break;
    }
  CHECK(!try_classify(rs, extra));
}

TEST_CASE("the 27-per-class grammar enumerates exactly and disjointly") {
  auto rs = build_ruleset(make_params(2, 3, 3, 2, 2, 0, Sparsity::None, 67));
  std::set<std::vector<uint8_t>> all;
  for (int32_t label = 0; label < 2; ++label) {
    auto trees = enumerate_all(rs, label);
    CHECK(trees.size() == 27);
    std::set<std::vector<uint8_t>> inputs;
    for (const auto& t : trees) {
      CHECK(classify_oracle(rs, t.input) == label);
      inputs.insert(t.input.data);
    }
    CHECK(inputs.size() == 27);  // distinct within class
    for (const auto& b : inputs) CHECK(all.insert(b).second);  // disjoint
  }
  CHECK(all.size() == 54);
}

TEST_CASE("enumerate_all refuses sparse grammars") {
  auto rs = build_ruleset(make_params(2, 3, 3, 2, 2, 1, Sparsity::A, 67));
  CHECK_THROWS_AS(enumerate_all(rs, 0), GrammarError);
}

TEST_CASE("synonym exchange keeps the label and the geometry") {
  auto rs = build_ruleset(make_params(3, 4, 4, 2, 3, 1, Sparsity::A, 71));
  Rng rng(9);
  for (int i = 0; i < 30; ++i) {
    auto t = sample_datum(rs, std::nullopt, rng.split(uint64_t(i)));
    for (int l = 1; l <= rs.params.L; ++l) {
      auto u = apply_synonym(rs, t, l, rng.split(1000 + i).split(uint64_t(l)));
      CHECK(u.label == t.label);
      CHECK(classify_oracle(rs, u.input) == t.label);
      CHECK(u.slots == t.slots);  // placements untouched
      // every rule index at level l changed, all other levels intact
      for (int ll = 1; ll <= rs.params.L; ++ll) {
        if (ll == l) {
          for (size_t e = 0; e < u.rule_idx[ll - 1].size(); ++e)
            CHECK(u.rule_idx[ll - 1][e] != t.rule_idx[ll - 1][e]);
        } else {
          CHECK(u.rule_idx[ll - 1] == t.rule_idx[ll - 1]);
        }
      }
    }
  }
}

TEST_CASE("synonym exchange at level 1 moves no informative pixel") {
  auto rs = build_ruleset(make_params(2, 3, 3, 2, 2, 1, Sparsity::B, 72));
  Rng rng(10);
  for (int i = 0; i < 30; ++i) {
    auto t = sample_datum(rs, std::nullopt, rng.split(uint64_t(i)));
    auto u = apply_synonym(rs, t, 1, rng.split(500 + i));
    auto a = informative_rows(t.input), b = informative_rows(u.input);
    REQUIRE(a.size() == b.size());
    for (size_t k = 0; k < a.size(); ++k)
      CHECK(a[k].first == b[k].first);  // same rows, only channels differ
  }
}

TEST_CASE("synonym exchange needs a synonym") {
  auto rs = toy_grammar();  // m == 1
  auto t = sample_datum(rs, 0, Rng(2));
  CHECK_THROWS_AS(apply_synonym(rs, t, 1, Rng(3)), NoSynonymAvailable);
}

TEST_CASE("diffeomorphism keeps label and features, moves only slots") {
  auto rs = build_ruleset(make_params(3, 4, 4, 2, 2, 2, Sparsity::A, 73));
  Rng rng(11);
  for (int i = 0; i < 30; ++i) {
    auto t = sample_datum(rs, std::nullopt, rng.split(uint64_t(i)));
    for (int l = 1; l <= 2; ++l) {
      auto u = apply_diffeo(rs, t, l, rng.split(2000 + i).split(uint64_t(l)));
      CHECK(u.label == t.label);
      CHECK(u.rule_idx == t.rule_idx);
      CHECK(classify_oracle(rs, u.input) == t.label);
      for (int ll = 1; ll <= 2; ++ll)
        if (ll != l) CHECK(u.slots[ll - 1] == t.slots[ll - 1]);
      // multiset of informative channel values is preserved
      auto chans = [&](const InputMatrix& x) {
        std::vector<int32_t> cs;
        for (auto& [r, c] : informative_rows(x)) cs.push_back(c);
        return cs;
      };
      CHECK(chans(u.input) == chans(t.input));  // order preserved too
    }
  }
}

TEST_CASE("diffeomorphism is the identity when s0 = 0") {
  auto rs = build_ruleset(make_params(2, 3, 3, 2, 2, 0, Sparsity::None, 74));
  auto t = sample_datum(rs, std::nullopt, Rng(12));
  auto u = apply_diffeo(rs, t, 1, Rng(13));
  CHECK(u.input == t.input);
  CHECK(u == t);
}

TEST_CASE("label invariance holds across a thousand trees") {
  for (auto sp : {Sparsity::A, Sparsity::B}) {
    auto rs = build_ruleset(make_params(3, 3, 3, 2, 2, 1, sp, 75));
    Rng rng(14);
    for (int i = 0; i < 500; ++i) {
      auto t = sample_datum(rs, std::nullopt, rng.split(uint64_t(i)));
      for (int l = 1; l <= 2; ++l) {
        CHECK(classify_oracle(
                  rs, apply_synonym(rs, t, l, rng.split(3000 + i)).input) ==
              t.label);
        CHECK(classify_oracle(
                  rs, apply_diffeo(rs, t, l, rng.split(4000 + i)).input) ==
              t.label);
      }
    }
  }
}

TEST_CASE("generate_dataset basics") {
  auto rs = build_ruleset(make_params(4, 4, 4, 2, 2, 1, Sparsity::A, 81));
  CHECK(generate_dataset(rs, 0, Rng(1)).size() == 0);

  auto d = generate_dataset(rs, 4000, Rng(2));
  REQUIRE(d.size() == 4000);
  std::vector<int> hist(4, 0);
  for (auto y : d.ys) hist[y]++;
  double expect = 1000, sigma = std::sqrt(4000 * 0.25 * 0.75);
  for (int c = 0; c < 4; ++c) CHECK(std::abs(hist[c] - expect) < 3 * sigma);

  auto d2 = generate_dataset(rs, 4000, Rng(2));
  CHECK(d.ys == d2.ys);
  for (size_t i = 0; i < 100; ++i) CHECK(d.xs[i] == d2.xs[i]);

  auto with_trees = generate_dataset(rs, 10, Rng(3), true);
  REQUIRE(with_trees.trees.size() == 10);
  for (size_t i = 0; i < 10; ++i)
    CHECK(with_trees.trees[i].input == with_trees.xs[i]);
}

TEST_CASE("collision bound grows with P and shrinks with richer grammars") {
  auto small = make_params(2, 3, 3, 2, 2, 0, Sparsity::None, 0);
  CHECK(collision_bound_log(small, 100) > collision_bound_log(small, 10));
  auto rich = make_params(2, 8, 8, 2, 2, 0, Sparsity::None, 0);
  CHECK(collision_bound_log(rich, 100) < collision_bound_log(small, 100));
}
