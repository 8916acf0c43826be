#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <srhm/grammar.hpp>
#include <srhm/nn.hpp>

namespace srhm {

struct TheoryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// sampled estimator too noisy to resolve the structure it is asked about
struct BudgetTooSmall : TheoryError {
  using TheoryError::TheoryError;
};

// fraction of input pixels that are informative, (s0+1)^-L
double informative_fraction(const GrammarParams& g);

// ---- one-step gradient -------------------------------------------------------

// Closed form for the dataset-mean cross-entropy gradient of the bottom
// locally connected layer at the constant-filter init with a frozen random
// readout and mean-field output scaling. With every filter entry equal to
// 1/sqrt(H_k), all hidden units are active and the backward chain through the
// upper layers collapses, so the gradient of row (patch j, channel c) at
// entry (i0, c') is
//
//   g[z, c'] = coeff / P * sum_k Q_k * x_k[z, c'],   z = j*filter + i0,
//
// independent of c, with coeff = 1/(sqrt(v) * sqrt(H_1 * H_L)) and
// Q_k = sum_a (softmax(f(x_k))_a - y_a) * readout_mean[a]. Only pixels that
// carry a feature receive an update, which is what couples the learning speed
// to the informative fraction. `grad_ideal` replaces the softmax by the
// uniform 1/n_classes it converges to as the width grows.
struct OneStepReport {
  int64_t positions = 0;  // input pixels d
  int vocab = 0;          // channels v
  // [d][v] row-major; the same block repeats for every output channel
  std::vector<double> grad;
  std::vector<double> grad_ideal;
  std::vector<double> readout_mean;      // per class, (1/H_L) sum_h a[y][h]
  std::vector<double> informative_freq;  // [d] fraction of samples with a
                                         // feature at that pixel
  // grad summed over the s0+1 slots owned by each child of a level-1 patch,
  // [patches][s][v]; empty when sparsity spreads children jointly (variant B)
  std::vector<double> subpatch_grad;
  double ideal_gap = 0;  // ||grad - grad_ideal||_2 / ||grad||_2
  double coeff = 0;      // 1/(sqrt(v) * sqrt(H_1 * H_L))
};

// `net` must be a locally connected mean-field net at the constant-filter
// init (frozen readout, every hidden entry exactly 1/sqrt(H_k)) with at
// least two layers, matched to data.params.
OneStepReport onestep_update(const Network<double>& net, const Dataset& data);

// builds the matching net: init_network<double>(spec, constant-filter
// constant filters, Rng(seed)) with all hidden widths equal to `width`
OneStepReport onestep_update(const RuleSet& rules, const Dataset& data,
                             int width, uint64_t seed);

// Numeric counterpart: dataset-mean gradient accumulated by backprop.
template <typename Real>
Gradients<Real> dataset_mean_gradient(const Network<Real>& net,
                                      const Dataset& data) {
  if (data.xs.empty()) throw TheoryError("empty dataset");
  auto g = gradients_like(net);
  Workspace<Real> ws;
  for (size_t i = 0; i < data.xs.size(); ++i) {
    forward(net, data.xs[i], ws.trace);
    backward_xent(net, ws, data.ys[i], g);
  }
  const Real inv = Real(1) / Real(data.xs.size());
  for (auto& layer : g.w)
    for (auto& x : layer) x *= inv;
  for (auto& x : g.readout) x *= inv;
  return g;
}

// ---- tuple-label correlations --------------------------------------------------

// Statistical identifiability of the bottom-level synonym groups. For every
// level-1 patch j and production tuple t, correlate the indicator "patch j
// shows t" with the one-hot label over the data. Tuples produced by the same
// parent feature are exchangeable, so their correlation vectors agree exactly
// on the full input space and the grouping is readable from the data alone.
struct GroupingReport {
  int parents = 0;  // level-1 parents (v features, or n_c when L == 1)
  int tuples = 0;   // parents * m
  int64_t samples = 0;
  bool exhaustive = false;
  // max |cov difference| over same-parent tuple pairs, patches and classes;
  // exactly 0 in exhaustive mode
  double within_dispersion = 0;
  // min L2 distance between per-parent correlation vectors (concatenated
  // over patches and classes)
  double across_separation = 0;
};

// exhaustive: every derivation of every class, requires s0 == 0
GroupingReport synonym_grouping_check(const RuleSet& rules);

// sampled: `samples` i.i.d. draws; throws BudgetTooSmall when the sampling
// noise across synonyms is not clearly below the parent separation
GroupingReport synonym_grouping_check(const RuleSet& rules, int64_t samples,
                                      Rng rng);

}  // namespace srhm
