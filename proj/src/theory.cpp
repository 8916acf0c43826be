#include <srhm/theory.hpp>

#include <cmath>
#include <cstddef>

namespace srhm {

double informative_fraction(const GrammarParams& g) {
  return std::pow(double(g.s0) + 1.0, -double(g.L));
}

// ---- one-step gradient -------------------------------------------------------

static void check_onestep_net(const Network<double>& net,
                              const GrammarParams& g) {
  const auto& spec = net.spec;
  if (spec.kind != ArchKind::LCN)
    throw TheoryError("onestep update requires a locally connected net");
  if (spec.scaling != Scaling::MeanField)
    throw TheoryError("onestep update requires mean-field output scaling");
  if (!net.frozen_readout)
    throw TheoryError("onestep update requires a frozen readout");
  if (spec.levels < 2)
    throw TheoryError("onestep update needs at least two layers");
  if (spec.levels != g.L || spec.filter != g.patch_width() ||
      spec.input_positions != g.input_dim() || spec.input_channels != g.v ||
      spec.n_classes != g.n_c)
    throw TheoryError("net geometry does not match the grammar");
  for (int k = 1; k <= spec.levels; ++k) {
    const double want = 1.0 / std::sqrt(double(spec.widths[k - 1]));
    for (double x : net.w[k - 1])
      if (x != want)
        throw TheoryError("onestep update requires constant filters");
  }
}

OneStepReport onestep_update(const Network<double>& net, const Dataset& data) {
  const auto& g = data.params;
  check_onestep_net(net, g);
  if (data.xs.empty()) throw TheoryError("empty dataset");
  if (data.ys.size() != data.xs.size())
    throw TheoryError("dataset labels out of sync");

  const auto& spec = net.spec;
  const int L = spec.levels;
  const int64_t d = spec.input_positions;
  const int v = spec.input_channels;
  const int nc = spec.n_classes;
  const int HL = spec.widths[L - 1];

  OneStepReport rep;
  rep.positions = d;
  rep.vocab = v;
  rep.coeff = 1.0 / (std::sqrt(double(v)) *
                     std::sqrt(double(spec.widths[0]) * double(HL)));
  rep.readout_mean.assign(nc, 0.0);
  for (int a = 0; a < nc; ++a) {
    double sum = 0;
    for (int h = 0; h < HL; ++h) sum += net.readout[size_t(a) * HL + h];
    rep.readout_mean[a] = sum / HL;
  }

  rep.grad.assign(size_t(d) * v, 0.0);
  rep.grad_ideal.assign(size_t(d) * v, 0.0);
  rep.informative_freq.assign(size_t(d), 0.0);

  ActivationTrace<double> t;
  std::vector<double> q;
  for (size_t i = 0; i < data.xs.size(); ++i) {
    const auto& x = data.xs[i];
    const int y = data.ys[i];
    if (y < 0 || y >= nc) throw TheoryError("label out of range");
    forward(net, x, t);
    // Constant filters make every channel of a position identical: positive
    // when the window holds a feature, zero when it is all padding. The
    // collapse of the backward chain rests on exactly that, so verify it.
    for (int k = 1; k <= L; ++k) {
      const int H = spec.widths[k - 1];
      const int np = spec.positions(k);
      for (int p = 0; p < np; ++p) {
        const double val = t.act[k][size_t(p) * H];
        if (!(val >= 0)) throw TheoryError("negative activation");
        for (int c = 1; c < H; ++c)
          if (t.act[k][size_t(p) * H + c] != val)
            throw TheoryError("channel asymmetry; not grammar data");
      }
    }
    xent_dout(t.output, y, q);
    double Q = 0, Qi = 0;
    for (int a = 0; a < nc; ++a) {
      Q += q[a] * rep.readout_mean[a];
      Qi += ((a == y ? 1.0 / nc - 1.0 : 1.0 / nc)) * rep.readout_mean[a];
    }
    for (int64_t r = 0; r < d; ++r)
      for (int c = 0; c < v; ++c)
        if (x.at(int32_t(r), c)) {
          rep.grad[size_t(r) * v + c] += Q;
          rep.grad_ideal[size_t(r) * v + c] += Qi;
          rep.informative_freq[size_t(r)] += 1.0;
          break;  // rows are one-hot
        }
  }

  const double per = 1.0 / double(data.xs.size());
  for (auto& x : rep.grad) x *= rep.coeff * per;
  for (auto& x : rep.grad_ideal) x *= rep.coeff * per;
  for (auto& x : rep.informative_freq) x *= per;

  double dn = 0, nn = 0;
  for (size_t i = 0; i < rep.grad.size(); ++i) {
    const double diff = rep.grad[i] - rep.grad_ideal[i];
    dn += diff * diff;
    nn += rep.grad[i] * rep.grad[i];
  }
  rep.ideal_gap = nn > 0 ? std::sqrt(dn / nn) : 0.0;

  if (g.sparsity != Sparsity::B) {
    const int f = g.patch_width();
    const int64_t patches = d / f;
    rep.subpatch_grad.assign(size_t(patches) * g.s * v, 0.0);
    for (int64_t j = 0; j < patches; ++j)
      for (int u = 0; u < g.s; ++u)
        for (int off = 0; off <= g.s0; ++off) {
          const int64_t z = j * f + int64_t(u) * (g.s0 + 1) + off;
          for (int c = 0; c < v; ++c)
            rep.subpatch_grad[(size_t(j) * g.s + u) * v + c] +=
                rep.grad[size_t(z) * v + c];
        }
  }
  return rep;
}

OneStepReport onestep_update(const RuleSet& rules, const Dataset& data,
                             int width, uint64_t seed) {
  auto spec = spec_for_grammar(rules.params, ArchKind::LCN, width,
                               Scaling::MeanField);
  auto net = init_network<double>(spec, InitMode::ConstantFilter, Rng(seed));
  return onestep_update(net, data);
}

// ---- tuple-label correlations --------------------------------------------------

namespace {

// per (patch, tuple, class) occurrence counts of bottom-level tuples
struct TupleCounts {
  int patches = 0, parents = 0, m = 0, nc = 0;
  std::vector<int64_t> cnt;      // [patches][parents*m][nc]
  std::vector<int64_t> n_class;  // [nc]
  int64_t total = 0;
  std::vector<int32_t> children;  // scratch

  TupleCounts(const RuleSet& rules) {
    const auto& g = rules.params;
    patches = int(g.leaf_count() / g.s);
    parents = rules.parents_at(1);
    m = g.m;
    nc = g.n_c;
    cnt.assign(size_t(patches) * parents * m * nc, 0);
    n_class.assign(size_t(nc), 0);
    children.resize(size_t(g.s));
  }

  void add(const RuleSet& rules, const SampleTree& tree) {
    const auto lv = leaves(rules, tree);
    const int s = rules.params.s;
    for (int j = 0; j < patches; ++j) {
      for (int u = 0; u < s; ++u) children[size_t(u)] = lv[size_t(j) * s + u].second;
      const auto it = rules.inverse[0].find(rules.pack_tuple(children));
      if (it == rules.inverse[0].end())
        throw TheoryError("level-1 tuple does not parse");
      const size_t pr = size_t(it->second.first) * m + it->second.second;
      ++cnt[(size_t(j) * parents * m + pr) * nc + tree.label];
    }
    ++n_class[size_t(tree.label)];
    ++total;
  }
};

GroupingReport finish_grouping(const TupleCounts& a, bool exhaustive) {
  GroupingReport rep;
  rep.parents = a.parents;
  rep.tuples = a.parents * a.m;
  rep.samples = a.total;
  rep.exhaustive = exhaustive;

  // V[j][pr][alpha] = cov(patch j shows tuple pr, label == alpha)
  const double N = double(a.total);
  std::vector<double> V(a.cnt.size());
  for (int j = 0; j < a.patches; ++j)
    for (int pr = 0; pr < a.parents * a.m; ++pr) {
      const size_t base = (size_t(j) * a.parents * a.m + pr) * a.nc;
      int64_t tot = 0;
      for (int al = 0; al < a.nc; ++al) tot += a.cnt[base + al];
      for (int al = 0; al < a.nc; ++al)
        V[base + al] = double(a.cnt[base + al]) / N -
                       (double(tot) / N) * (double(a.n_class[size_t(al)]) / N);
    }

  // synonyms of one parent must agree; counts are synonym-exchangeable, so
  // in exhaustive mode the difference is exactly zero
  for (int j = 0; j < a.patches; ++j)
    for (int p = 0; p < a.parents; ++p)
      for (int r1 = 0; r1 < a.m; ++r1)
        for (int r2 = r1 + 1; r2 < a.m; ++r2) {
          const size_t b1 = (size_t(j) * a.parents * a.m + size_t(p) * a.m + r1) * a.nc;
          const size_t b2 = (size_t(j) * a.parents * a.m + size_t(p) * a.m + r2) * a.nc;
          for (int al = 0; al < a.nc; ++al)
            rep.within_dispersion = std::max(
                rep.within_dispersion, std::abs(V[b1 + al] - V[b2 + al]));
        }

  // parent vectors: synonym-averaged correlations over (patch, class)
  std::vector<double> U(size_t(a.parents) * a.patches * a.nc, 0.0);
  for (int p = 0; p < a.parents; ++p)
    for (int j = 0; j < a.patches; ++j)
      for (int al = 0; al < a.nc; ++al) {
        double sum = 0;
        for (int r = 0; r < a.m; ++r)
          sum += V[(size_t(j) * a.parents * a.m + size_t(p) * a.m + r) * a.nc + al];
        U[(size_t(p) * a.patches + j) * a.nc + al] = sum / a.m;
      }
  double min_sep = -1;
  const size_t ulen = size_t(a.patches) * a.nc;
  for (int p1 = 0; p1 < a.parents; ++p1)
    for (int p2 = p1 + 1; p2 < a.parents; ++p2) {
      double sq = 0;
      for (size_t i = 0; i < ulen; ++i) {
        const double diff = U[size_t(p1) * ulen + i] - U[size_t(p2) * ulen + i];
        sq += diff * diff;
      }
      const double dist = std::sqrt(sq);
      if (min_sep < 0 || dist < min_sep) min_sep = dist;
    }
  rep.across_separation = min_sep;
  return rep;
}

}  // namespace

GroupingReport synonym_grouping_check(const RuleSet& rules) {
  const auto& g = rules.params;
  if (g.s0 != 0)
    throw TheoryError("exhaustive grouping requires s0 == 0");
  if (rules.parents_at(1) < 2)
    throw TheoryError("grouping needs at least two level-1 parents");
  TupleCounts acc(rules);
  for (int32_t label = 0; label < g.n_c; ++label)
    for (const auto& tree : enumerate_all(rules, label)) acc.add(rules, tree);
  return finish_grouping(acc, true);
}

GroupingReport synonym_grouping_check(const RuleSet& rules, int64_t samples,
                                      Rng rng) {
  if (samples < 1) throw TheoryError("need at least one sample");
  if (rules.parents_at(1) < 2)
    throw TheoryError("grouping needs at least two level-1 parents");
  TupleCounts acc(rules);
  for (int64_t i = 0; i < samples; ++i)
    acc.add(rules, sample_datum(rules, std::nullopt, rng.split(uint64_t(i))));
  auto rep = finish_grouping(acc, false);
  if (rep.across_separation <= 2.0 * rep.within_dispersion)
    throw BudgetTooSmall(
        "sampling noise across synonyms reaches the parent separation; "
        "increase the sample budget");
  return rep;
}

}  // namespace srhm
