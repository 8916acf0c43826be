#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "srhm/grammar.hpp"
#include "srhm/io.hpp"
#include "srhm/rng.hpp"

namespace srhm {

struct NetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ArchKind : uint8_t { LCN = 0, CNN = 1, FCN = 2 };
enum class Scaling : uint8_t { Standard = 0, MeanField = 1 };
enum class InitMode : uint8_t { Standard = 0, ConstantFilter = 1 };

const char* to_string(ArchKind k);
ArchKind arch_from_string(const std::string& s);

// Geometry of a depth-L network matched to the generative hierarchy.
// LCN/CNN layers use filter size = stride = `filter`, so the spatial extent
// shrinks by `filter` per layer and must reach exactly 1 after `levels`.
// The FCN flattens everything into its first layer.
struct ArchitectureSpec {
  ArchKind kind = ArchKind::LCN;
  int levels = 2;
  int filter = 2;
  std::vector<int> widths;  // hidden channels H_1..H_L
  int input_positions = 4;  // d
  int input_channels = 2;   // v
  int n_classes = 2;
  Scaling scaling = Scaling::Standard;

  bool operator==(const ArchitectureSpec&) const = default;

  bool conv_like() const { return kind != ArchKind::FCN; }

  // spatial positions after layer k (k = 0 is the input)
  int positions(int k) const {
    if (k == 0) return input_positions;
    if (!conv_like()) return 1;
    int n = input_positions;
    for (int i = 0; i < k; ++i) n /= filter;
    return n;
  }
  // channels feeding layer k
  int in_channels(int k) const {
    return k == 1 ? input_channels : widths[k - 2];
  }
  // length of one contiguous weight row of layer k
  size_t row_len(int k) const {
    if (conv_like()) return size_t(filter) * in_channels(k);
    return k == 1 ? size_t(input_positions) * input_channels
                  : size_t(widths[k - 2]);
  }
  // rows in the layer-k weight blob; the LCN owns one filter bank per patch
  size_t rows(int k) const {
    size_t r = size_t(widths[k - 1]);
    if (kind == ArchKind::LCN) r *= size_t(positions(k));
    return r;
  }
  size_t weight_count(int k) const { return rows(k) * row_len(k); }

  void validate() const;
};

// convenience: the network matched to a grammar
ArchitectureSpec spec_for_grammar(const GrammarParams& g, ArchKind kind,
                                  int width, Scaling scaling);

// ---- network ------------------------------------------------------------------

template <typename Real>
struct Network {
  ArchitectureSpec spec;
  std::vector<std::vector<Real>> w;  // per hidden layer, see row layout below
  std::vector<Real> readout;         // [n_classes][H_L]
  bool frozen_readout = false;

  bool operator==(const Network&) const = default;
};

// Weight rows are contiguous dot-product operands:
//   LCN  layer k: row (patch j, out channel c) at index j*H_k + c,
//                 length filter * in_channels, laid out [i0][c_in]
//   CNN  layer k: row (out channel c), shared across patches
//   FCN  layer k: row (out channel c), length = flattened input of the layer
// Activations are position-major, [pos][channel], so a filter window of the
// previous layer is one contiguous chunk matching the row layout.

template <typename Real>
struct ActivationTrace {
  // act[0] is the input cast to Real, act[k] is layer k after the ReLU
  std::vector<std::vector<Real>> act;
  std::vector<Real> output;  // pre-softmax, length n_classes
};

template <typename Real>
struct Gradients {
  std::vector<std::vector<Real>> w;
  std::vector<Real> readout;  // empty when the readout is frozen
  bool has_readout = true;

  void zero() {
    for (auto& layer : w) std::fill(layer.begin(), layer.end(), Real(0));
    std::fill(readout.begin(), readout.end(), Real(0));
  }
};

template <typename Real>
Gradients<Real> gradients_like(const Network<Real>& net) {
  Gradients<Real> g;
  g.w.resize(net.w.size());
  for (size_t k = 0; k < net.w.size(); ++k) g.w[k].resize(net.w[k].size());
  g.has_readout = !net.frozen_readout;
  if (g.has_readout) g.readout.resize(net.readout.size());
  return g;
}

// scratch shared by backward passes to avoid per-sample allocation
template <typename Real>
struct Workspace {
  ActivationTrace<Real> trace;
  std::vector<Real> da, db, dout;
};

// ---- kernels -------------------------------------------------------------------

template <typename Real>
inline Real dot(const Real* a, const Real* b, size_t n) {
  Real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  Real s = (s0 + s1) + (s2 + s3);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

template <typename Real>
inline void axpy(Real alpha, const Real* x, Real* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// ---- init ----------------------------------------------------------------------

// Standard: hidden weights i.i.d. N(0, 1/row_len) (fan-in variance), readout
// i.i.d. N(0, 1). ConstantFilter: every hidden row is the all-ones vector scaled
// by 1/sqrt(H_k), readout i.i.d. N(0, 1) and frozen.
template <typename Real>
Network<Real> init_network(const ArchitectureSpec& spec, InitMode mode,
                           Rng rng) {
  spec.validate();
  Network<Real> net;
  net.spec = spec;
  net.w.resize(spec.levels);
  for (int k = 1; k <= spec.levels; ++k) {
    auto& layer = net.w[k - 1];
    layer.resize(spec.weight_count(k));
    if (mode == InitMode::ConstantFilter) {
      Real val = Real(1) / std::sqrt(Real(spec.widths[k - 1]));
      std::fill(layer.begin(), layer.end(), val);
    } else {
      Rng lr = rng.split("w").split(uint64_t(k));
      Real sd = Real(1) / std::sqrt(Real(spec.row_len(k)));
      for (auto& x : layer) x = Real(lr.normal()) * sd;
    }
  }
  Rng rr = rng.split("readout");
  net.readout.resize(size_t(spec.n_classes) * spec.widths[spec.levels - 1]);
  for (auto& x : net.readout) x = Real(rr.normal());
  net.frozen_readout = mode == InitMode::ConstantFilter;
  return net;
}

// ---- forward -------------------------------------------------------------------

template <typename Real>
void forward_from_act0(const Network<Real>& net, ActivationTrace<Real>& t) {
  const auto& spec = net.spec;
  const int L = spec.levels;
  t.act.resize(L + 1);
  for (int k = 1; k <= L; ++k) {
    const int H = spec.widths[k - 1];
    const int nout = spec.positions(k);
    const size_t chunk = spec.row_len(k);
    const Real inv = Real(1) / std::sqrt(Real(spec.in_channels(k)));
    const bool lcn = spec.kind == ArchKind::LCN;
    const auto& prev = t.act[k - 1];
    auto& cur = t.act[k];
    cur.resize(size_t(nout) * H);
    const Real* wl = net.w[k - 1].data();
    for (int j = 0; j < nout; ++j) {
      const Real* patch = prev.data() + size_t(j) * chunk;
      const Real* wbase = wl + (lcn ? size_t(j) * H * chunk : 0);
      Real* out = cur.data() + size_t(j) * H;
      for (int c = 0; c < H; ++c) {
        Real pre = dot(wbase + size_t(c) * chunk, patch, chunk) * inv;
        out[c] = pre > Real(0) ? pre : Real(0);
      }
    }
  }
  const int HL = spec.widths[L - 1];
  const Real scale = spec.scaling == Scaling::MeanField
                         ? Real(1) / Real(HL)
                         : Real(1) / std::sqrt(Real(HL));
  t.output.resize(spec.n_classes);
  for (int a = 0; a < spec.n_classes; ++a)
    t.output[a] =
        dot(net.readout.data() + size_t(a) * HL, t.act[L].data(), HL) * scale;
}

template <typename Real>
void load_input(const ArchitectureSpec& spec, const InputMatrix& x,
                std::vector<Real>& act0) {
  if (x.rows != spec.input_positions || x.cols != spec.input_channels)
    throw NetError("input shape mismatch");
  act0.resize(x.data.size());
  for (size_t i = 0; i < x.data.size(); ++i) act0[i] = Real(x.data[i]);
}

template <typename Real>
void forward(const Network<Real>& net, const InputMatrix& x,
             ActivationTrace<Real>& t) {
  t.act.resize(net.spec.levels + 1);
  load_input(net.spec, x, t.act[0]);
  forward_from_act0(net, t);
}

template <typename Real>
ActivationTrace<Real> forward(const Network<Real>& net, const InputMatrix& x) {
  ActivationTrace<Real> t;
  forward(net, x, t);
  return t;
}

// ---- loss and backward -----------------------------------------------------------

// numerically stable log-sum-exp cross entropy; mean over the batch is taken
// by the caller
template <typename Real>
double cross_entropy_one(const std::vector<Real>& logits, int label) {
  double mx = logits[0];
  for (Real z : logits) mx = std::max(mx, double(z));
  double lse = 0;
  for (Real z : logits) lse += std::exp(double(z) - mx);
  return std::log(lse) + mx - double(logits[label]);
}

// softmax(out) - onehot(label), written into ws.dout
template <typename Real>
void xent_dout(const std::vector<Real>& logits, int label,
               std::vector<Real>& dout) {
  dout.resize(logits.size());
  double mx = logits[0];
  for (Real z : logits) mx = std::max(mx, double(z));
  double lse = 0;
  for (size_t a = 0; a < logits.size(); ++a) {
    dout[a] = Real(std::exp(double(logits[a]) - mx));
    lse += double(dout[a]);
  }
  for (auto& p : dout) p = Real(double(p) / lse);
  dout[label] -= Real(1);
}

// Accumulates d(cross entropy of this sample)/dw into `g` and returns the
// sample loss. Requires ws.trace filled by forward on the same input.
template <typename Real>
double backward_xent(const Network<Real>& net, Workspace<Real>& ws, int label,
                     Gradients<Real>& g) {
  const auto& spec = net.spec;
  const int L = spec.levels;
  auto& t = ws.trace;
  double loss = cross_entropy_one(t.output, label);
  xent_dout(t.output, label, ws.dout);

  const int HL = spec.widths[L - 1];
  const Real scale = spec.scaling == Scaling::MeanField
                         ? Real(1) / Real(HL)
                         : Real(1) / std::sqrt(Real(HL));
  auto& dcur = ws.da;
  dcur.assign(size_t(HL), Real(0));
  for (int a = 0; a < spec.n_classes; ++a) {
    Real da = ws.dout[a] * scale;
    axpy(da, net.readout.data() + size_t(a) * HL, dcur.data(), HL);
    if (g.has_readout)
      axpy(da, t.act[L].data(), g.readout.data() + size_t(a) * HL, HL);
  }

  for (int k = L; k >= 1; --k) {
    const int H = spec.widths[k - 1];
    const int nout = spec.positions(k);
    const size_t chunk = spec.row_len(k);
    const Real inv = Real(1) / std::sqrt(Real(spec.in_channels(k)));
    const bool lcn = spec.kind == ArchKind::LCN;
    const auto& act = t.act[k];
    const auto& prev = t.act[k - 1];
    const Real* wl = net.w[k - 1].data();
    Real* gl = g.w[k - 1].data();
    auto& dprev = ws.db;
    if (k > 1) dprev.assign(prev.size(), Real(0));
    for (int j = 0; j < nout; ++j) {
      const Real* patch = prev.data() + size_t(j) * chunk;
      const size_t base = (lcn ? size_t(j) * H : 0) * chunk;
      for (int c = 0; c < H; ++c) {
        if (act[size_t(j) * H + c] <= Real(0)) continue;  // ReLU gate
        Real gpre = dcur[size_t(j) * H + c] * inv;
        if (gpre == Real(0)) continue;
        axpy(gpre, patch, gl + base + size_t(c) * chunk, chunk);
        if (k > 1)
          axpy(gpre, wl + base + size_t(c) * chunk,
               dprev.data() + size_t(j) * chunk, chunk);
      }
    }
    if (k > 1) std::swap(ws.da, ws.db);
  }
  return loss;
}

// ---- checkpoints -----------------------------------------------------------------
//
// Binary layout (little endian): magic "SRHMNET1", u32 version, u8 kind,
// u8 scaling, u8 frozen, u8 dtype (4 = f32, 8 = f64), i32 levels, i32 filter,
// i32 input_positions, i32 input_channels, i32 n_classes, i32 widths[levels],
// then the hidden layer blobs in order followed by the readout, each as raw
// little-endian floats in the row layout documented above.

inline constexpr char kNetMagic[9] = "SRHMNET1";

template <typename Real>
void save_network(const Network<Real>& net, const std::string& path) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open " + tmp);
    const auto& s = net.spec;
    write_magic(os, kNetMagic);
    write_u32(os, 1);
    write_u8(os, uint8_t(s.kind));
    write_u8(os, uint8_t(s.scaling));
    write_u8(os, net.frozen_readout ? 1 : 0);
    write_u8(os, uint8_t(sizeof(Real)));
    write_i32(os, s.levels);
    write_i32(os, s.filter);
    write_i32(os, s.input_positions);
    write_i32(os, s.input_channels);
    write_i32(os, s.n_classes);
    for (int w : s.widths) write_i32(os, w);
    auto blob = [&](const std::vector<Real>& v) {
      for (Real x : v) {
        if constexpr (sizeof(Real) == 4)
          write_f32(os, float(x));
        else
          write_f64(os, double(x));
      }
    };
    for (const auto& layer : net.w) blob(layer);
    blob(net.readout);
    if (!os) throw IoError("write failed for " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

template <typename Real>
Network<Real> load_network(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  expect_magic(is, kNetMagic);
  if (read_u32(is) != 1) throw IoError("unsupported checkpoint version");
  Network<Real> net;
  auto& s = net.spec;
  s.kind = ArchKind(read_u8(is));
  s.scaling = Scaling(read_u8(is));
  net.frozen_readout = read_u8(is) != 0;
  uint8_t dtype = read_u8(is);
  if (dtype != 4 && dtype != 8) throw IoError("bad checkpoint dtype");
  s.levels = read_i32(is);
  s.filter = read_i32(is);
  s.input_positions = read_i32(is);
  s.input_channels = read_i32(is);
  s.n_classes = read_i32(is);
  if (s.levels < 1 || s.levels > 64) throw IoError("bad checkpoint header");
  s.widths.resize(s.levels);
  for (auto& w : s.widths) w = read_i32(is);
  s.validate();
  auto blob = [&](std::vector<Real>& v, size_t n) {
    v.resize(n);
    for (auto& x : v)
      x = dtype == 4 ? Real(read_f32(is)) : Real(read_f64(is));
  };
  net.w.resize(s.levels);
  for (int k = 1; k <= s.levels; ++k) blob(net.w[k - 1], s.weight_count(k));
  blob(net.readout, size_t(s.n_classes) * s.widths[s.levels - 1]);
  return net;
}

}  // namespace srhm
