#include "srhm/grammar.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace srhm {

namespace {

// checked v^e, throws when the value would not fit the cap
int64_t checked_pow(int64_t base, int e, int64_t cap, const char* what) {
  int64_t r = 1;
  for (int i = 0; i < e; ++i) {
    if (r > cap / base) throw GrammarError(std::string(what) + " overflows");
    r *= base;
  }
  return r;
}

constexpr int64_t kTupleSpaceCap = int64_t(1) << 27;

}  // namespace

const char* to_string(Sparsity sp) {
  switch (sp) {
    case Sparsity::None: return "none";
    case Sparsity::A: return "A";
    case Sparsity::B: return "B";
  }
  return "?";
}

Sparsity sparsity_from_string(const std::string& s) {
  if (s == "none") return Sparsity::None;
  if (s == "A" || s == "a") return Sparsity::A;
  if (s == "B" || s == "b") return Sparsity::B;
  throw GrammarError("unknown sparsity variant: " + s);
}

int64_t GrammarParams::input_dim() const {
  return checked_pow(patch_width(), L, int64_t(1) << 40, "input_dim");
}

int64_t GrammarParams::leaf_count() const {
  return checked_pow(s, L, int64_t(1) << 40, "leaf_count");
}

double GrammarParams::data_per_class_log() const {
  double leavesd = std::pow(double(s), L);
  return (leavesd - 1.0) / (s - 1) * std::log(double(m));
}

void GrammarParams::validate() const {
  if (n_c < 1) throw GrammarError("n_c must be >= 1");
  if (v < 1) throw GrammarError("v must be >= 1");
  if (m < 1) throw GrammarError("m must be >= 1");
  if (s < 2) throw GrammarError("s must be >= 2");
  if (L < 1) throw GrammarError("L must be >= 1");
  if (s0 < 0) throw GrammarError("s0 must be >= 0");
  if (sparsity == Sparsity::None && s0 != 0)
    throw GrammarError("s0 > 0 requires sparsity A or B");
  int64_t tuples = checked_pow(v, s, kTupleSpaceCap, "tuple space v^s");
  // disjointness needs m rules per parent for v (or n_c) parents
  int64_t per_parent = tuples / v;  // v^(s-1)
  if (m > per_parent)
    throw MaxSynonymsExceeded("m = " + std::to_string(m) +
                              " exceeds v^(s-1) = " + std::to_string(per_parent));
  if (int64_t(n_c) * m > tuples)
    throw InsufficientTuples("n_c*m = " + std::to_string(int64_t(n_c) * m) +
                             " exceeds v^s = " + std::to_string(tuples));
  input_dim();  // size guard
}

std::span<const int32_t> RuleSet::rule(int level, int parent, int r) const {
  const auto& t = tables[level - 1];
  size_t off = (size_t(parent) * params.m + r) * params.s;
  return {t.data() + off, size_t(params.s)};
}

uint64_t RuleSet::pack_tuple(std::span<const int32_t> children) const {
  uint64_t code = 0;
  for (int j = int(children.size()) - 1; j >= 0; --j)
    code = code * params.v + uint64_t(children[j]);
  return code;
}

void RuleSet::rebuild_inverse() {
  params.validate();
  if (int(tables.size()) != params.L) throw GrammarError("bad table count");
  inverse.assign(params.L, {});
  for (int l = 1; l <= params.L; ++l) {
    int parents = parents_at(l);
    if (tables[l - 1].size() != size_t(parents) * params.m * params.s)
      throw GrammarError("bad table size at level " + std::to_string(l));
    auto& inv = inverse[l - 1];
    for (int p = 0; p < parents; ++p) {
      for (int r = 0; r < params.m; ++r) {
        auto tup = rule(l, p, r);
        for (int32_t c : tup)
          if (c < 0 || c >= params.v)
            throw GrammarError("feature id out of range");
        auto [it, fresh] = inv.emplace(pack_tuple(tup), std::pair{p, r});
        if (!fresh)
          throw GrammarError("tuple reused at level " + std::to_string(l) +
                             (it->second.first == p ? " within parent"
                                                    : " across parents"));
      }
    }
  }
}

RuleSet build_ruleset(const GrammarParams& params) {
  params.validate();
  RuleSet rs;
  rs.params = params;
  rs.tables.resize(params.L);
  int64_t tuples = checked_pow(params.v, params.s, kTupleSpaceCap, "v^s");
  Rng root(params.seed);
  for (int l = 1; l <= params.L; ++l) {
    // shuffle the whole tuple space, deal blocks of m to the parents
    std::vector<uint64_t> codes(tuples);
    std::iota(codes.begin(), codes.end(), 0);
    Rng rng = root.split("rules").split(uint64_t(l));
    for (int64_t i = tuples - 1; i > 0; --i) {
      int64_t j = int64_t(rng.uniform_int(uint64_t(i) + 1));
      std::swap(codes[i], codes[j]);
    }
    int parents = rs.parents_at(l);
    auto& t = rs.tables[l - 1];
    t.resize(size_t(parents) * params.m * params.s);
    size_t w = 0;
    for (int p = 0; p < parents; ++p) {
      for (int r = 0; r < params.m; ++r) {
        uint64_t code = codes[size_t(p) * params.m + r];
        for (int j = 0; j < params.s; ++j) {
          t[w++] = int32_t(code % params.v);
          code /= params.v;
        }
      }
    }
  }
  rs.rebuild_inverse();
  return rs;
}

std::optional<int32_t> InputMatrix::row_feature(int32_t r) const {
  std::optional<int32_t> feat;
  for (int32_t c = 0; c < cols; ++c) {
    if (at(r, c) == 0) continue;
    if (at(r, c) != 1 || feat)
      throw Unparseable("row " + std::to_string(r) + " is not 0/1 one-hot");
    feat = c;
  }
  return feat;
}

namespace {

// slot placement for one expansion, strictly increasing by construction
void draw_slots(const GrammarParams& g, Rng& rng, int32_t* out) {
  switch (g.sparsity) {
    case Sparsity::None:
      for (int j = 0; j < g.s; ++j) out[j] = j;
      break;
    case Sparsity::A:
      for (int j = 0; j < g.s; ++j)
        out[j] = j * (g.s0 + 1) + int32_t(rng.uniform_int(g.s0 + 1));
      break;
    case Sparsity::B: {
      // selection sampling: uniform ordered s-subset of the patch
      int need = g.s, f = g.patch_width();
      for (int q = 0; q < f && need > 0; ++q) {
        if (rng.uniform_int(uint64_t(f - q)) < uint64_t(need))
          out[g.s - need--] = q;
      }
      break;
    }
  }
}

void check_tree_shape(const GrammarParams& g, const SampleTree& t) {
  if (int(t.rule_idx.size()) != g.L || int(t.slots.size()) != g.L)
    throw GrammarError("tree has wrong level count");
  int64_t n = 1;
  for (int l = g.L; l >= 1; --l) {
    if (int64_t(t.rule_idx[l - 1].size()) != n ||
        int64_t(t.slots[l - 1].size()) != n * g.s)
      throw GrammarError("tree has wrong expansion count at level " +
                         std::to_string(l));
    n *= g.s;
  }
}

}  // namespace

SampleTree sample_datum(const RuleSet& rules, std::optional<int32_t> label,
                        Rng rng) {
  const auto& g = rules.params;
  SampleTree t;
  t.params = g;
  t.label = label ? *label : int32_t(rng.split("label").uniform_int(g.n_c));
  if (t.label < 0 || t.label >= g.n_c) throw GrammarError("label out of range");
  t.rule_idx.resize(g.L);
  t.slots.resize(g.L);
  int64_t n = 1;
  for (int l = g.L; l >= 1; --l) {
    t.rule_idx[l - 1].resize(n);
    t.slots[l - 1].resize(n * g.s);
    Rng level = rng.split("expand").split(uint64_t(l));
    for (int64_t e = 0; e < n; ++e) {
      Rng node = level.split(uint64_t(e));
      t.rule_idx[l - 1][e] = int32_t(node.uniform_int(g.m));
      draw_slots(g, node, t.slots[l - 1].data() + e * g.s);
    }
    n *= g.s;
  }
  t.input = encode_input(rules, t);
  return t;
}

std::vector<std::pair<int64_t, int32_t>> leaves(const RuleSet& rules,
                                                const SampleTree& tree) {
  const auto& g = rules.params;
  check_tree_shape(g, tree);
  int f = g.patch_width();
  // walk level by level; nodes are (lattice position, feature) in order
  std::vector<std::pair<int64_t, int32_t>> nodes{{0, tree.label}};
  std::vector<std::pair<int64_t, int32_t>> next;
  for (int l = g.L; l >= 1; --l) {
    next.clear();
    next.reserve(nodes.size() * g.s);
    for (size_t e = 0; e < nodes.size(); ++e) {
      auto [pos, parent] = nodes[e];
      int32_t r = tree.rule_idx[l - 1][e];
      if (r < 0 || r >= g.m) throw GrammarError("rule index out of range");
      auto children = rules.rule(l, parent, r);
      for (int j = 0; j < g.s; ++j) {
        int32_t slot = tree.slots[l - 1][e * g.s + j];
        if (slot < 0 || slot >= f) throw GrammarError("slot out of range");
        next.emplace_back(pos * f + slot, children[j]);
      }
    }
    nodes.swap(next);
  }
  return nodes;
}

InputMatrix encode_input(const RuleSet& rules, const SampleTree& tree) {
  const auto& g = rules.params;
  InputMatrix x(int32_t(g.input_dim()), g.v);
  for (auto [pos, feat] : leaves(rules, tree)) x.at(int32_t(pos), feat) = 1;
  return x;
}

namespace {

// parse one patch of a feature lattice, -1 marks uninformative slots;
// returns the parent feature (class at the top level)
int32_t parse_patch(const RuleSet& rules, int level,
                    std::span<const int32_t> patch) {
  const auto& g = rules.params;
  std::vector<int32_t> feats, pos;
  for (int q = 0; q < int(patch.size()); ++q) {
    if (patch[q] < 0) continue;
    pos.push_back(q);
    feats.push_back(patch[q]);
  }
  if (feats.empty()) return -1;
  if (int(feats.size()) != g.s)
    throw Unparseable("patch holds " + std::to_string(feats.size()) +
                      " informative slots, want 0 or " + std::to_string(g.s));
  if (g.sparsity != Sparsity::B) {
    // variant A (and None): child j confined to sub-patch j
    for (int j = 0; j < g.s; ++j)
      if (pos[j] / (g.s0 + 1) != j)
        throw Unparseable("placement violates variant A");
  }
  auto& inv = rules.inverse[level - 1];
  auto it = inv.find(rules.pack_tuple(feats));
  if (it == inv.end())
    throw Unparseable("tuple is not a rule at level " + std::to_string(level));
  return it->second.first;
}

}  // namespace

int32_t classify_oracle(const RuleSet& rules, const InputMatrix& x) {
  const auto& g = rules.params;
  if (x.rows != g.input_dim() || x.cols != g.v)
    throw Unparseable("input has wrong shape");
  std::vector<int32_t> lattice(x.rows);
  int64_t informative = 0;
  for (int32_t r = 0; r < x.rows; ++r) {
    auto feat = x.row_feature(r);
    lattice[r] = feat ? *feat : -1;
    informative += feat.has_value();
  }
  if (informative != g.leaf_count())
    throw Unparseable("input has " + std::to_string(informative) +
                      " informative pixels, want " +
                      std::to_string(g.leaf_count()));
  int f = g.patch_width();
  for (int l = 1; l <= g.L; ++l) {
    std::vector<int32_t> parents(lattice.size() / f);
    for (size_t p = 0; p < parents.size(); ++p)
      parents[p] = parse_patch(rules, l,
                               {lattice.data() + p * f, size_t(f)});
    lattice.swap(parents);
  }
  // lattice is now the single top patch's parse, i.e. the class
  if (lattice.size() != 1 || lattice[0] < 0)
    throw Unparseable("top level did not reduce to a class");
  return lattice[0];
}

std::optional<int32_t> try_classify(const RuleSet& rules,
                                    const InputMatrix& x) {
  try {
    return classify_oracle(rules, x);
  } catch (const Unparseable&) {
    return std::nullopt;
  }
}

SampleTree apply_synonym(const RuleSet& rules, const SampleTree& tree, int l,
                         Rng rng) {
  const auto& g = rules.params;
  if (l < 1 || l > g.L) throw GrammarError("level out of range");
  if (g.m == 1) throw NoSynonymAvailable("m == 1 leaves no synonym to swap");
  check_tree_shape(g, tree);
  SampleTree t = tree;
  Rng level = rng.split("synonym").split(uint64_t(l));
  auto& idx = t.rule_idx[l - 1];
  for (size_t e = 0; e < idx.size(); ++e) {
    Rng node = level.split(uint64_t(e));
    idx[e] = int32_t((idx[e] + 1 + node.uniform_int(g.m - 1)) % g.m);
  }
  t.input = encode_input(rules, t);
  return t;
}

SampleTree apply_diffeo(const RuleSet& rules, const SampleTree& tree, int l,
                        Rng rng) {
  const auto& g = rules.params;
  if (l < 1 || l > g.L) throw GrammarError("level out of range");
  check_tree_shape(g, tree);
  SampleTree t = tree;
  Rng level = rng.split("diffeo").split(uint64_t(l));
  auto& sl = t.slots[l - 1];
  for (size_t e = 0; e * g.s < sl.size(); ++e) {
    Rng node = level.split(uint64_t(e));
    draw_slots(g, node, sl.data() + e * g.s);
  }
  t.input = encode_input(rules, t);
  return t;
}

Dataset generate_dataset(const RuleSet& rules, int64_t P, Rng rng,
                         bool keep_trees) {
  Dataset d;
  d.params = rules.params;
  d.xs.reserve(P);
  d.ys.reserve(P);
  if (keep_trees) d.trees.reserve(P);
  Rng base = rng.split("dataset");
  for (int64_t i = 0; i < P; ++i) {
    SampleTree t = sample_datum(rules, std::nullopt, base.split(uint64_t(i)));
    d.ys.push_back(t.label);
    if (keep_trees) {
      d.xs.push_back(t.input);
      d.trees.push_back(std::move(t));
    } else {
      d.xs.push_back(std::move(t.input));
    }
  }
  return d;
}

double collision_bound_log(const GrammarParams& params, int64_t P) {
  // data are uniform over n_c * m^((s^L-1)/(s-1)) distinct trees; with
  // sparsity each tree further spreads over placement choices, so this
  // underestimates the support and the bound stays valid
  double log_support = std::log(double(params.n_c)) + params.data_per_class_log();
  return 2.0 * std::log(double(P)) - std::log(2.0) - log_support;
}

std::vector<SampleTree> enumerate_all(const RuleSet& rules, int32_t label,
                                      int64_t cap) {
  const auto& g = rules.params;
  if (g.s0 != 0) throw GrammarError("enumerate_all requires s0 == 0");
  if (label < 0 || label >= g.n_c) throw GrammarError("label out of range");
  // total expansions = (s^L - 1) / (s - 1), one rule choice each
  int64_t expansions = 0, n = 1;
  for (int l = g.L; l >= 1; --l) {
    expansions += n;
    n *= g.s;
  }
  double log_total = expansions * std::log(double(g.m));
  if (log_total > std::log(double(cap)))
    throw GrammarError("enumeration larger than cap");

  SampleTree proto;
  proto.params = g;
  proto.label = label;
  proto.rule_idx.resize(g.L);
  proto.slots.resize(g.L);
  n = 1;
  for (int l = g.L; l >= 1; --l) {
    proto.rule_idx[l - 1].assign(n, 0);
    proto.slots[l - 1].resize(n * g.s);
    for (int64_t e = 0; e < n; ++e)
      for (int j = 0; j < g.s; ++j) proto.slots[l - 1][e * g.s + j] = j;
    n *= g.s;
  }

  std::vector<SampleTree> out;
  out.reserve(size_t(std::llround(std::exp(log_total))));
  // odometer over all rule choices, top level slowest
  for (;;) {
    SampleTree t = proto;
    t.input = encode_input(rules, t);
    out.push_back(std::move(t));
    int l = g.L;
    int64_t e = 0;
    for (;;) {
      auto& r = proto.rule_idx[l - 1][e];
      if (++r < g.m) break;
      r = 0;
      // advance to the next counter: within level first, then down
      if (++e < int64_t(proto.rule_idx[l - 1].size())) continue;
      e = 0;
      if (--l == 0) return out;
    }
  }
}

}  // namespace srhm
