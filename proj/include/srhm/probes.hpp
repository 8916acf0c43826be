#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "srhm/grammar.hpp"
#include "srhm/nn.hpp"
#include "srhm/rng.hpp"
#include "srhm/train.hpp"

namespace srhm {

struct ProbeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
// the pair baseline in a sensitivity ratio summed to zero
struct DegenerateDenominator : ProbeError {
  using ProbeError::ProbeError;
};

enum class OpKind : uint8_t { Synonym = 0, Diffeo = 1 };

// ---- sensitivities ---------------------------------------------------------------
//
// For a trained network f and a label preserving operator op_l acting at
// grammar level l, the sensitivity of the layer-k representation is
//
//   ratio(k, l) = <|f_k(x) - f_k(op_l x)|^2> / <|f_k(x1) - f_k(x2)|^2>
//
// with the numerator averaged over inputs and operator draws and the
// denominator over independent input pairs. k runs over the hidden layers
// 1..L and the pre-softmax output.

struct SensitivityOptions {
  int trees = 512;   // inputs used for the numerator
  int draws = 8;     // operator draws per input (sampled mode)
  int pairs = 2048;  // independent pairs for the denominator (sampled mode)
  // enumerate every joint operator combination and every tree pair instead
  // of sampling
  bool exhaustive = false;
  uint64_t seed = 0;
  int64_t max_combos = int64_t(1) << 20;  // exhaustive enumeration guard
};

struct SensitivityReport {
  int levels = 0;
  // [k-1][l-1]: network layer k, grammar level l; NaN when l was not probed
  std::vector<std::vector<double>> s_hidden, d_hidden;
  std::vector<double> s_output, d_output;  // [l-1]
  int64_t op_forwards = 0;
  int64_t pair_forwards = 0;
};

// every legal within-patch placement of the s informative slots, ascending,
// in a deterministic order that starts with variant-independent enumeration
std::vector<std::vector<int32_t>> all_placements(const GrammarParams& g);

// number of joint operator combinations for one tree (exhaustive mode);
// throws ProbeError when it exceeds max_combos
int64_t joint_combos(int64_t radix, int64_t expansions, int64_t max_combos);

namespace detail {

template <typename Real>
void add_layer_sq_dists(const ActivationTrace<Real>& a,
                        const ActivationTrace<Real>& b,
                        std::vector<double>& acc) {
  const size_t L = a.act.size() - 1;
  for (size_t k = 1; k <= L; ++k) {
    double s = 0;
    for (size_t i = 0; i < a.act[k].size(); ++i) {
      double d = double(a.act[k][i]) - double(b.act[k][i]);
      s += d * d;
    }
    acc[k - 1] += s;
  }
  double s = 0;
  for (size_t i = 0; i < a.output.size(); ++i) {
    double d = double(a.output[i]) - double(b.output[i]);
    s += d * d;
  }
  acc[L] += s;
}

// numerator accumulation for one tree and one (op, l) cell
template <typename Real>
int64_t op_numerator(const Network<Real>& net, const RuleSet& rules,
                     const SampleTree& tree,
                     const ActivationTrace<Real>& base, OpKind op, int l,
                     const SensitivityOptions& opt, Rng stream,
                     std::vector<double>& acc, int64_t& weight) {
  const auto& g = rules.params;
  ActivationTrace<Real> t;
  if (!opt.exhaustive) {
    for (int dr = 0; dr < opt.draws; ++dr) {
      SampleTree other =
          op == OpKind::Synonym
              ? apply_synonym(rules, tree, l, stream.split(uint64_t(dr)))
              : apply_diffeo(rules, tree, l, stream.split(uint64_t(dr)));
      forward(net, other.input, t);
      add_layer_sq_dists(base, t, acc);
    }
    weight += opt.draws;
    return opt.draws;
  }

  const int64_t expansions = int64_t(tree.rule_idx[l - 1].size());
  std::vector<std::vector<int32_t>> placements;
  int64_t radix;
  if (op == OpKind::Synonym) {
    if (g.m < 2) throw NoSynonymAvailable("m == 1 leaves no synonym");
    radix = g.m - 1;
  } else {
    placements = all_placements(g);
    radix = int64_t(placements.size());
  }
  const int64_t total = joint_combos(radix, expansions, opt.max_combos);
  std::vector<int64_t> digit(size_t(expansions), 0);
  SampleTree work = tree;
  for (int64_t c = 0; c < total; ++c) {
    for (int64_t e = 0; e < expansions; ++e) {
      if (op == OpKind::Synonym) {
        int32_t cur = tree.rule_idx[l - 1][size_t(e)];
        work.rule_idx[l - 1][size_t(e)] =
            int32_t((cur + 1 + digit[size_t(e)]) % g.m);
      } else {
        const auto& slots = placements[size_t(digit[size_t(e)])];
        for (int j = 0; j < g.s; ++j)
          work.slots[l - 1][size_t(e) * g.s + j] = slots[size_t(j)];
      }
    }
    work.input = encode_input(rules, work);
    forward(net, work.input, t);
    add_layer_sq_dists(base, t, acc);
    for (int64_t e = 0; e < expansions; ++e) {
      if (++digit[size_t(e)] < radix) break;
      digit[size_t(e)] = 0;
    }
  }
  weight += total;
  return total;
}

}  // namespace detail

// Core sensitivity computation; probes the grammar levels listed in `levels`
// for both operators. When `trees_in` is given those exact derivations are
// used, otherwise opt.trees are sampled with random labels.
template <typename Real>
SensitivityReport sensitivity_core(const Network<Real>& net,
                                   const RuleSet& rules,
                                   const SensitivityOptions& opt,
                                   const std::vector<int>& levels,
                                   bool want_synonym, bool want_diffeo,
                                   const std::vector<SampleTree>* trees_in) {
  const auto& g = rules.params;
  const int L = g.L;
  net.spec.validate();
  if (net.spec.levels != L)
    throw ProbeError("network depth does not match grammar depth");
  for (int l : levels)
    if (l < 1 || l > L) throw ProbeError("grammar level out of range");

  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  SensitivityReport rep;
  rep.levels = L;
  rep.s_hidden.assign(size_t(L), std::vector<double>(size_t(L), nan));
  rep.d_hidden.assign(size_t(L), std::vector<double>(size_t(L), nan));
  rep.s_output.assign(size_t(L), nan);
  rep.d_output.assign(size_t(L), nan);

  Rng root(opt.seed);
  std::vector<SampleTree> sampled;
  const std::vector<SampleTree>* trees = trees_in;
  if (!trees) {
    if (opt.trees < 2) throw ProbeError("need at least two trees");
    sampled.reserve(size_t(opt.trees));
    for (int t = 0; t < opt.trees; ++t)
      sampled.push_back(
          sample_datum(rules, std::nullopt, root.split("tree").split(t)));
    trees = &sampled;
  }
  if (trees->size() < 2) throw ProbeError("need at least two trees");
  const size_t T = trees->size();

  // base traces are shared by every probed cell
  std::vector<ActivationTrace<Real>> base(T);
  for (size_t t = 0; t < T; ++t) forward(net, (*trees)[t].input, base[t]);

  // denominator: mean squared distance between representations of distinct
  // draws; identical inputs contribute zero
  std::vector<double> den(size_t(L) + 1, 0.0);
  int64_t den_count = 0;
  if (opt.exhaustive) {
    for (size_t i = 0; i < T; ++i)
      for (size_t j = i + 1; j < T; ++j) {
        detail::add_layer_sq_dists(base[i], base[j], den);
        ++den_count;
      }
  } else {
    if (opt.pairs < 1) throw ProbeError("need at least one pair");
    ActivationTrace<Real> ta, tb;
    for (int p = 0; p < opt.pairs; ++p) {
      Rng pr = root.split("pair").split(p);
      auto x1 = sample_datum(rules, std::nullopt, pr.split("a"));
      auto x2 = sample_datum(rules, std::nullopt, pr.split("b"));
      forward(net, x1.input, ta);
      forward(net, x2.input, tb);
      detail::add_layer_sq_dists(ta, tb, den);
      ++den_count;
    }
    rep.pair_forwards += 2 * int64_t(opt.pairs);
  }
  for (auto& v : den) v /= double(den_count);
  for (int k = 1; k <= L + 1; ++k)
    if (den[size_t(k - 1)] == 0.0)
      throw DegenerateDenominator("representation pairs coincide at layer " +
                                  std::to_string(k));

  auto fill = [&](OpKind op, int l, const std::vector<double>& num) {
    for (int k = 1; k <= L + 1; ++k) {
      double val = num[size_t(k - 1)] / den[size_t(k - 1)];
      if (op == OpKind::Synonym) {
        if (k <= L)
          rep.s_hidden[size_t(k - 1)][size_t(l - 1)] = val;
        else
          rep.s_output[size_t(l - 1)] = val;
      } else {
        if (k <= L)
          rep.d_hidden[size_t(k - 1)][size_t(l - 1)] = val;
        else
          rep.d_output[size_t(l - 1)] = val;
      }
    }
  };

  for (int l : levels) {
    for (OpKind op : {OpKind::Synonym, OpKind::Diffeo}) {
      if (op == OpKind::Synonym && !want_synonym) continue;
      if (op == OpKind::Diffeo && !want_diffeo) continue;
      std::vector<double> num(size_t(L) + 1, 0.0);
      int64_t weight = 0;
      for (size_t t = 0; t < T; ++t) {
        Rng stream = root.split("num")
                         .split(uint64_t(op))
                         .split(uint64_t(l))
                         .split(uint64_t(t));
        rep.op_forwards +=
            detail::op_numerator(net, rules, (*trees)[t], base[t], op, l, opt,
                                 stream, num, weight);
      }
      for (auto& v : num) v /= double(weight);
      fill(op, l, num);
    }
  }
  return rep;
}

template <typename Real>
SensitivityReport sensitivity_report(
    const Network<Real>& net, const RuleSet& rules,
    const SensitivityOptions& opt,
    const std::vector<SampleTree>* trees = nullptr) {
  std::vector<int> levels(size_t(rules.params.L));
  for (int l = 1; l <= rules.params.L; ++l) levels[size_t(l - 1)] = l;
  return sensitivity_core(net, rules, opt, levels, true, true, trees);
}

// single cell accessors; k in 1..L selects a hidden layer, k = L+1 the
// pre-softmax output
template <typename Real>
double sensitivity_S(const Network<Real>& net, const RuleSet& rules, int k,
                     int l, const SensitivityOptions& opt,
                     const std::vector<SampleTree>* trees = nullptr) {
  const int L = rules.params.L;
  if (k < 1 || k > L + 1) throw ProbeError("layer index out of range");
  auto rep = sensitivity_core(net, rules, opt, {l}, true, false, trees);
  return k <= L ? rep.s_hidden[size_t(k - 1)][size_t(l - 1)]
                : rep.s_output[size_t(l - 1)];
}

template <typename Real>
double sensitivity_D(const Network<Real>& net, const RuleSet& rules, int k,
                     int l, const SensitivityOptions& opt,
                     const std::vector<SampleTree>* trees = nullptr) {
  const int L = rules.params.L;
  if (k < 1 || k > L + 1) throw ProbeError("layer index out of range");
  auto rep = sensitivity_core(net, rules, opt, {l}, false, true, trees);
  return k <= L ? rep.d_hidden[size_t(k - 1)][size_t(l - 1)]
                : rep.d_output[size_t(l - 1)];
}

// ---- sample complexity extraction ---------------------------------------------

struct PStarResult {
  double pstar = std::numeric_limits<double>::quiet_NaN();
  bool reached = false;
  // the very first point was already at or below the threshold, so the
  // crossing is only bounded from above by it
  bool censored = false;
  double threshold = 0;
};

// First crossing from above of `threshold` on a (P, value) curve, linearly
// interpolated in (log P, value). Requires strictly increasing positive P
// and finite values.
PStarResult extract_pstar(const std::vector<std::pair<double, double>>& curve,
                          double threshold);

// ---- sample complexity predictors ----------------------------------------------

// locally connected: C0 * (s0+1)^L * n_c * m^L, default C0 = s^(L/2)
double predict_pstar_lcn(const GrammarParams& g);
double predict_pstar_lcn(const GrammarParams& g, double c0);
// weight sharing: C1 * (s0+1)^2 * n_c * m^L
double predict_pstar_cnn(const GrammarParams& g, double c1 = 1.0);
// exponent log m / log s governing the (d, F) form below
double synonym_exponent(const GrammarParams& g);
// the locally connected law re-expressed through the input dimension d and
// the informative fraction F = (s0+1)^-L at fixed (m, s), up to the n_c
// prefactor: F^(a - 1/2) * d^(a + 1/2) with a = log m / log s
double predict_pstar_df(double d, double frac, double alpha);
double predict_pstar_df(const GrammarParams& g);

// ---- shared experiment core ------------------------------------------------------

struct RunPointConfig {
  ArchKind kind = ArchKind::LCN;
  int width = 256;
  Scaling scaling = Scaling::Standard;
  InitMode init = InitMode::Standard;
  TrainConfig train;  // train.seed is ignored; it derives from the point seed
  size_t test_size = 2048;
};

struct RunPointResult {
  double test_err = std::numeric_limits<double>::quiet_NaN();
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  int64_t steps = 0;
  int64_t epochs = 0;
  bool converged = false;
  bool diverged = false;
  double wall_seconds = 0;
};

// One learning-curve point, returning the trained network too: sample P
// training inputs, train from a fresh init, measure test error. The seed
// fixes data, init and shuffling; the training sets are nested across P at a
// fixed seed. On divergence the returned network is empty.
template <typename Real = float>
std::pair<RunPointResult, Network<Real>> run_point_net(
    const RuleSet& rules, const RunPointConfig& cfg, size_t P, uint64_t seed) {
  Rng root(seed);
  Dataset trainset = generate_dataset(rules, int64_t(P), root.split("data"));
  Dataset testset =
      generate_dataset(rules, int64_t(cfg.test_size), root.split("test"));
  auto spec = spec_for_grammar(rules.params, cfg.kind, cfg.width, cfg.scaling);
  auto net = init_network<Real>(spec, cfg.init, root.split("init"));
  TrainConfig tc = cfg.train;
  tc.seed = root.split("sgd").next_u64();
  RunPointResult out;
  try {
    auto res = train(std::move(net), trainset, tc);
    out.test_err = test_error(res.net, testset);
    out.final_loss = res.final_loss;
    out.steps = res.steps;
    out.epochs = res.epochs;
    out.converged = res.converged;
    out.wall_seconds = res.wall_seconds;
    return {out, std::move(res.net)};
  } catch (const DivergedError&) {
    out.diverged = true;
    return {out, Network<Real>{}};
  }
}

template <typename Real = float>
RunPointResult run_point(const RuleSet& rules, const RunPointConfig& cfg,
                         size_t P, uint64_t seed) {
  return run_point_net<Real>(rules, cfg, P, seed).first;
}

struct CurvePoint {
  size_t P = 0;
  RunPointResult result;
};

template <typename Real = float>
std::vector<CurvePoint> learning_curve(const RuleSet& rules,
                                       const RunPointConfig& cfg,
                                       const std::vector<size_t>& sizes,
                                       uint64_t seed) {
  std::vector<CurvePoint> out;
  out.reserve(sizes.size());
  for (size_t P : sizes) out.push_back({P, run_point<Real>(rules, cfg, P, seed)});
  return out;
}

// P* of a measured curve, skipping diverged points
PStarResult pstar_from_curve(const std::vector<CurvePoint>& curve,
                             double threshold);

}  // namespace srhm
