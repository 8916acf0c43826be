#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "srhm/rng.hpp"

namespace srhm {

// ---- errors ----------------------------------------------------------------

struct GrammarError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MaxSynonymsExceeded : GrammarError {
  using GrammarError::GrammarError;
};
struct InsufficientTuples : GrammarError {
  using GrammarError::GrammarError;
};
struct Unparseable : GrammarError {
  using GrammarError::GrammarError;
};
struct NoSynonymAvailable : GrammarError {
  using GrammarError::GrammarError;
};

// ---- parameters ------------------------------------------------------------

// Sparsity controls where the s informative children of a patch sit inside
// the widened patch of s*(s0+1) slots:
//   None : s0 must be 0, children at slots 0..s-1
//   A    : child j sits in its own sub-patch [j*(s0+1), j*(s0+1)+s0]
//   B    : children occupy any strictly increasing s slots of the patch
enum class Sparsity : uint8_t { None = 0, A = 1, B = 2 };

const char* to_string(Sparsity sp);
Sparsity sparsity_from_string(const std::string& s);

struct GrammarParams {
  int n_c = 2;  // classes
  int v = 2;    // vocabulary size per level
  int m = 2;    // synonymic rules per parent
  int s = 2;    // informative children per rule
  int L = 2;    // levels
  int s0 = 0;   // slack per informative child
  Sparsity sparsity = Sparsity::None;
  uint64_t seed = 0;

  int patch_width() const { return s * (s0 + 1); }
  int64_t input_dim() const;   // patch_width^L
  int64_t leaf_count() const;  // s^L
  // data count per class, m^((d'-1)/(s-1)) with d' = s^L
  double data_per_class_log() const;  // natural log, overflow safe

  void validate() const;  // throws GrammarError family
  bool operator==(const GrammarParams&) const = default;
};

// ---- rule set ---------------------------------------------------------------

// Production tables for levels 1..L. At level l the parents are the classes
// when l == L and the v features of level l+1 otherwise; each parent owns m
// rules, each rule an s-tuple of level-l features. Rules are disjoint across
// parents of the same level, so every tuple parses to at most one parent.
struct RuleSet {
  GrammarParams params;
  // tables[l-1] is flat [parent][rule][child], child ids in [0, v)
  std::vector<std::vector<int32_t>> tables;
  // inverse[l-1]: packed tuple -> (parent, rule index)
  std::vector<std::unordered_map<uint64_t, std::pair<int32_t, int32_t>>>
      inverse;

  int parents_at(int level) const {
    return level == params.L ? params.n_c : params.v;
  }
  std::span<const int32_t> rule(int level, int parent, int r) const;
  uint64_t pack_tuple(std::span<const int32_t> children) const;

  // validates shapes, ranges, within-parent distinctness and across-parent
  // disjointness; fills `inverse`
  void rebuild_inverse();
};

// Shuffle all v^s child tuples per level and deal them to parents in blocks
// of m. Deterministic per params.seed.
RuleSet build_ruleset(const GrammarParams& params);

// ---- samples ---------------------------------------------------------------

// 0/1 matrix, one row per pixel, one column per vocabulary entry.
// Informative pixels are one-hot rows, uninformative pixels all-zero rows.
struct InputMatrix {
  int32_t rows = 0;
  int32_t cols = 0;
  std::vector<uint8_t> data;  // row-major

  InputMatrix() = default;
  InputMatrix(int32_t r, int32_t c) : rows(r), cols(c), data(size_t(r) * c) {}
  uint8_t& at(int32_t r, int32_t c) { return data[size_t(r) * cols + c]; }
  uint8_t at(int32_t r, int32_t c) const { return data[size_t(r) * cols + c]; }
  // feature id of a one-hot row, nullopt for an all-zero row,
  // throws Unparseable if the row has more than one nonzero
  std::optional<int32_t> row_feature(int32_t r) const;
  bool operator==(const InputMatrix&) const = default;
};

// A full derivation: the label plus, per level l = L..1, the rule index and
// the child slot placement of every informative expansion in spatial order.
// Expansion e at level l is the e-th informative level-(l+1) node from the
// left; its parent is the class itself when l == L.
struct SampleTree {
  GrammarParams params;
  int32_t label = 0;
  std::vector<std::vector<int32_t>> rule_idx;  // rule_idx[l-1], size s^(L-l)
  std::vector<std::vector<int32_t>> slots;     // slots[l-1], size s^(L-l)*s
  InputMatrix input;                           // cached encoding

  bool operator==(const SampleTree&) const = default;
};

// informative leaves as (pixel, feature) pairs in pixel order
std::vector<std::pair<int64_t, int32_t>> leaves(const RuleSet& rules,
                                                const SampleTree& tree);

SampleTree sample_datum(const RuleSet& rules, std::optional<int32_t> label,
                        Rng rng);

InputMatrix encode_input(const RuleSet& rules, const SampleTree& tree);

// Bottom-up parse; throws Unparseable when x is not generated by the grammar.
int32_t classify_oracle(const RuleSet& rules, const InputMatrix& x);
std::optional<int32_t> try_classify(const RuleSet& rules,
                                    const InputMatrix& x);

// Synonym exchange at level l: every level-l expansion gets a different rule
// index, uniform over the other m-1; placements and everything below keep
// their stored choices. Label preserving. Throws NoSynonymAvailable if m == 1.
SampleTree apply_synonym(const RuleSet& rules, const SampleTree& tree, int l,
                         Rng rng);

// Discrete diffeomorphism at level l: slot placements of every level-l
// expansion are re-drawn per the sparsity variant; all rule choices stay.
// Label preserving. Identity when s0 == 0.
SampleTree apply_diffeo(const RuleSet& rules, const SampleTree& tree, int l,
                        Rng rng);

// ---- datasets ---------------------------------------------------------------

struct Dataset {
  GrammarParams params;
  std::vector<InputMatrix> xs;
  std::vector<int32_t> ys;
  std::vector<SampleTree> trees;  // only if requested

  size_t size() const { return xs.size(); }
};

// P i.i.d. draws with uniform labels. Deterministic per rng stream; sample i
// only consumes its own child stream, so generation is order independent.
Dataset generate_dataset(const RuleSet& rules, int64_t P, Rng rng,
                         bool keep_trees = false);

// Natural log of the birthday bound P^2 / (2 n_c m^((s^L-1)/(s-1))) on the
// probability that a dataset of P draws contains a repeated input.
double collision_bound_log(const GrammarParams& params, int64_t P);

// All derivations with this label, in deterministic order. Requires s0 == 0
// (placements trivial); guarded by `cap` on the enumeration size.
std::vector<SampleTree> enumerate_all(const RuleSet& rules, int32_t label,
                                      int64_t cap = 1 << 22);

}  // namespace srhm
