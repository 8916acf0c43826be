#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "srhm/grammar.hpp"
#include "srhm/nn.hpp"
#include "srhm/rng.hpp"

namespace srhm {

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DivergedError : TrainError {
  using TrainError::TrainError;
};

struct TrainConfig {
  double lr = 0.01;
  int batch = 4;
  double momentum = 0.9;
  double stop_loss = 1e-3;
  int64_t max_steps = 1000000;
  uint64_t seed = 0;

  void validate() const {
    if (lr < 0) throw TrainError("lr must be >= 0");
    if (batch < 1) throw TrainError("batch must be >= 1");
    if (momentum < 0 || momentum >= 1)
      throw TrainError("momentum must be in [0, 1)");
    if (stop_loss <= 0) throw TrainError("stop_loss must be positive");
    if (max_steps < 1) throw TrainError("max_steps must be >= 1");
  }
};

template <typename Real>
struct TrainResult {
  Network<Real> net;
  int64_t steps = 0;
  int64_t epochs = 0;
  bool converged = false;
  double final_loss = std::numeric_limits<double>::quiet_NaN();
  // (global step, epoch mean loss); thinned to at most 4096 entries
  std::vector<std::pair<int64_t, double>> loss_history;
  double wall_seconds = 0;
};

// mean cross entropy of a logit batch, stable under large logits
template <typename Real>
double cross_entropy(const std::vector<std::vector<Real>>& logits,
                     const std::vector<int32_t>& labels) {
  if (logits.size() != labels.size() || logits.empty())
    throw TrainError("bad cross entropy batch");
  double total = 0;
  for (size_t i = 0; i < logits.size(); ++i)
    total += cross_entropy_one(logits[i], int(labels[i]));
  return total / double(logits.size());
}

namespace detail {

template <typename Real>
std::vector<std::vector<Real>> to_real_inputs(const ArchitectureSpec& spec,
                                              const Dataset& data) {
  std::vector<std::vector<Real>> xs(data.size());
  for (size_t i = 0; i < data.size(); ++i)
    load_input(spec, data.xs[i], xs[i]);
  return xs;
}

// applies the momentum update and returns a checksum of the new weights so
// the caller can detect non-finite parameters (a NaN activation is masked by
// the ReLU, so the loss alone can stay finite after a blow-up)
template <typename Real>
Real sgd_step(std::vector<Real>& w, std::vector<Real>& v,
              const std::vector<Real>& g, Real lr_over_b, Real mu) {
  Real chk = 0;
  for (size_t i = 0; i < w.size(); ++i) {
    v[i] = mu * v[i] - lr_over_b * g[i];
    w[i] += v[i];
    chk += w[i];
  }
  return chk;
}

}  // namespace detail

// Minibatch SGD with classical momentum on the mean cross entropy. Runs whole
// epochs (fresh shuffle each) until the epoch mean train loss reaches
// cfg.stop_loss or cfg.max_steps optimizer steps have been taken. Throws
// DivergedError when the loss stops being finite.
template <typename Real>
TrainResult<Real> train(Network<Real> net, const Dataset& data,
                        const TrainConfig& cfg) {
  cfg.validate();
  net.spec.validate();
  const size_t P = data.size();
  if (P == 0) throw TrainError("empty training set");
  for (int32_t y : data.ys)
    if (y < 0 || y >= net.spec.n_classes) throw TrainError("label out of range");

  auto t0 = std::chrono::steady_clock::now();
  auto xs = detail::to_real_inputs<Real>(net.spec, data);

  TrainResult<Real> out;
  auto grads = gradients_like(net);
  auto vel = gradients_like(net);
  vel.zero();
  Workspace<Real> ws;
  ws.trace.act.resize(net.spec.levels + 1);

  Rng root(cfg.seed);
  std::vector<size_t> order(P);
  for (size_t i = 0; i < P; ++i) order[i] = i;

  int64_t record_stride = 1;
  bool done = false;
  for (int64_t epoch = 0; !done; ++epoch) {
    Rng erng = root.split("epoch").split(uint64_t(epoch));
    for (size_t i = P; i > 1; --i)
      std::swap(order[i - 1], order[erng.uniform_int(i)]);

    double epoch_sum = 0;
    size_t processed = 0;
    for (size_t at = 0; at < P && !done; at += size_t(cfg.batch)) {
      size_t bsz = std::min(size_t(cfg.batch), P - at);
      grads.zero();
      double batch_sum = 0;
      for (size_t b = 0; b < bsz; ++b) {
        size_t idx = order[at + b];
        ws.trace.act[0] = xs[idx];
        forward_from_act0(net, ws.trace);
        batch_sum += backward_xent(net, ws, int(data.ys[idx]), grads);
      }
      if (!std::isfinite(batch_sum)) throw DivergedError("loss diverged");
      epoch_sum += batch_sum;
      processed += bsz;

      const Real lr_over_b = Real(cfg.lr / double(bsz));
      const Real mu = Real(cfg.momentum);
      Real chk = 0;
      for (size_t k = 0; k < net.w.size(); ++k)
        chk += detail::sgd_step(net.w[k], vel.w[k], grads.w[k], lr_over_b, mu);
      if (grads.has_readout)
        chk += detail::sgd_step(net.readout, vel.readout, grads.readout,
                                lr_over_b, mu);
      if (!std::isfinite(double(chk)))
        throw DivergedError("parameters diverged");
      if (++out.steps >= cfg.max_steps) done = true;
    }

    out.epochs = epoch + 1;
    out.final_loss = epoch_sum / double(processed);
    // a max_steps cut can truncate the epoch; only complete epochs count for
    // the history and the stopping rule
    if (processed == P) {
      if (epoch % record_stride == 0) {
        out.loss_history.emplace_back(out.steps, out.final_loss);
        if (out.loss_history.size() >= 4096) {
          std::vector<std::pair<int64_t, double>> kept;
          kept.reserve(out.loss_history.size() / 2 + 1);
          for (size_t i = 0; i < out.loss_history.size(); i += 2)
            kept.push_back(out.loss_history[i]);
          out.loss_history = std::move(kept);
          record_stride *= 2;
        }
      }
      if (out.final_loss <= cfg.stop_loss) {
        out.converged = true;
        done = true;
      }
    }
  }

  out.net = std::move(net);
  out.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return out;
}

// fraction of samples whose argmax logit (ties to the lowest index) misses
// the label
template <typename Real>
double test_error(const Network<Real>& net, const Dataset& data) {
  if (data.size() == 0) throw TrainError("empty test set");
  ActivationTrace<Real> t;
  t.act.resize(net.spec.levels + 1);
  size_t wrong = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    load_input(net.spec, data.xs[i], t.act[0]);
    forward_from_act0(net, t);
    int best = 0;
    for (int a = 1; a < net.spec.n_classes; ++a)
      if (t.output[a] > t.output[best]) best = a;
    if (best != int(data.ys[i])) ++wrong;
  }
  return double(wrong) / double(data.size());
}

}  // namespace srhm
