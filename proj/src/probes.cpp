#include "srhm/probes.hpp"

#include <algorithm>
#include <cmath>

namespace srhm {

std::vector<std::vector<int32_t>> all_placements(const GrammarParams& g) {
  const int f = g.patch_width();
  std::vector<std::vector<int32_t>> out;
  switch (g.sparsity) {
    case Sparsity::None: {
      std::vector<int32_t> ident(size_t(g.s));
      for (int j = 0; j < g.s; ++j) ident[size_t(j)] = j;
      out.push_back(std::move(ident));
      break;
    }
    case Sparsity::A: {
      // child j sits anywhere inside its own sub-patch of width s0+1
      const int w = g.s0 + 1;
      std::vector<int32_t> offs(size_t(g.s), 0);
      for (;;) {
        std::vector<int32_t> slots(size_t(g.s));
        for (int j = 0; j < g.s; ++j) slots[size_t(j)] = j * w + offs[size_t(j)];
        out.push_back(std::move(slots));
        int j = 0;
        for (; j < g.s; ++j) {
          if (++offs[size_t(j)] < w) break;
          offs[size_t(j)] = 0;
        }
        if (j == g.s) break;
      }
      break;
    }
    case Sparsity::B: {
      // any strictly increasing choice of s positions out of f
      std::vector<int32_t> idx(size_t(g.s));
      for (int j = 0; j < g.s; ++j) idx[size_t(j)] = j;
      for (;;) {
        out.push_back(idx);
        int j = g.s - 1;
        while (j >= 0 && idx[size_t(j)] == f - g.s + j) --j;
        if (j < 0) break;
        ++idx[size_t(j)];
        for (int q = j + 1; q < g.s; ++q) idx[size_t(q)] = idx[size_t(q - 1)] + 1;
      }
      break;
    }
  }
  return out;
}

int64_t joint_combos(int64_t radix, int64_t expansions, int64_t max_combos) {
  if (radix < 1) throw ProbeError("operator has no alternatives");
  int64_t total = 1;
  for (int64_t e = 0; e < expansions; ++e) {
    if (total > max_combos / radix)
      throw ProbeError("exhaustive combination count exceeds the budget");
    total *= radix;
  }
  return total;
}

PStarResult extract_pstar(const std::vector<std::pair<double, double>>& curve,
                          double threshold) {
  if (curve.empty()) throw ProbeError("empty curve");
  if (!(threshold > 0) || !std::isfinite(threshold))
    throw ProbeError("threshold must be positive and finite");
  for (size_t i = 0; i < curve.size(); ++i) {
    if (!(curve[i].first > 0) || !std::isfinite(curve[i].second))
      throw ProbeError("curve needs positive sizes and finite values");
    if (i > 0 && curve[i].first <= curve[i - 1].first)
      throw ProbeError("curve sizes must increase strictly");
  }

  PStarResult res;
  res.threshold = threshold;
  for (size_t i = 0; i < curve.size(); ++i) {
    if (curve[i].second > threshold) continue;
    res.reached = true;
    if (i == 0) {
      res.censored = true;
      res.pstar = curve[0].first;
    } else if (curve[i].second == threshold) {
      res.pstar = curve[i].first;
    } else {
      // e_{i-1} > threshold >= e_i, interpolate in (log P, value)
      double e0 = curve[i - 1].second, e1 = curve[i].second;
      double t = (e0 - threshold) / (e0 - e1);
      double lp = std::log(curve[i - 1].first) +
                  t * (std::log(curve[i].first) - std::log(curve[i - 1].first));
      res.pstar = std::exp(lp);
    }
    return res;
  }
  return res;
}

double predict_pstar_lcn(const GrammarParams& g) {
  return predict_pstar_lcn(g, std::pow(double(g.s), double(g.L) / 2.0));
}

double predict_pstar_lcn(const GrammarParams& g, double c0) {
  return c0 * std::pow(double(g.s0 + 1), double(g.L)) * double(g.n_c) *
         std::pow(double(g.m), double(g.L));
}

double predict_pstar_cnn(const GrammarParams& g, double c1) {
  return c1 * double((g.s0 + 1) * (g.s0 + 1)) * double(g.n_c) *
         std::pow(double(g.m), double(g.L));
}

double synonym_exponent(const GrammarParams& g) {
  if (g.m < 1 || g.s < 2) throw ProbeError("exponent needs m >= 1 and s >= 2");
  return std::log(double(g.m)) / std::log(double(g.s));
}

double predict_pstar_df(double d, double frac, double alpha) {
  if (!(d > 0) || !(frac > 0)) throw ProbeError("d and F must be positive");
  return std::pow(frac, alpha - 0.5) * std::pow(d, alpha + 0.5);
}

double predict_pstar_df(const GrammarParams& g) {
  double frac = std::pow(double(g.s0 + 1), -double(g.L));
  return predict_pstar_df(double(g.input_dim()), frac, synonym_exponent(g));
}

PStarResult pstar_from_curve(const std::vector<CurvePoint>& curve,
                             double threshold) {
  std::vector<std::pair<double, double>> pts;
  pts.reserve(curve.size());
  for (const auto& c : curve)
    if (!c.result.diverged && std::isfinite(c.result.test_err))
      pts.emplace_back(double(c.P), c.result.test_err);
  if (pts.empty()) throw ProbeError("no usable curve points");
  return extract_pstar(pts, threshold);
}

}  // namespace srhm
