#pragma once

// Fully connected Q-network: rectifier hidden layers, identity output,
// squared TD-error backpropagation through the taken action only.
//
// Each layer keeps its weights input-major (one contiguous row of `out`
// weights per input unit) so that sparse binary inputs cost one axpy per
// active feature. The flat parameter order used by the gradient check
// follows that storage, layer by layer, weights then biases. The save format
// writes the conventional (out x in) matrix in row-major order.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "godial/random.hpp"

namespace godial {

struct DenseLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weights;  // in x out: weights[i * out + o] connects input i to unit o
  std::vector<double> bias;     // out

  double& w(std::size_t o, std::size_t i) { return weights[i * out + o]; }
  double w(std::size_t o, std::size_t i) const { return weights[i * out + o]; }
  bool operator==(const DenseLayer&) const = default;
};

struct Network {
  std::vector<std::size_t> layer_sizes;
  std::vector<DenseLayer> layers;

  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t output_dim() const { return layer_sizes.back(); }
  bool operator==(const Network&) const = default;
};

inline std::size_t parameter_count(const std::vector<std::size_t>& sizes) {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) n += sizes[l] * sizes[l + 1] + sizes[l + 1];
  return n;
}

inline std::size_t parameter_count(const Network& net) { return parameter_count(net.layer_sizes); }

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
inline Network new_network(const std::vector<std::size_t>& layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("new_network: need at least 2 layer sizes");
  for (auto s : layer_sizes)
    if (s < 1) throw std::invalid_argument("new_network: layer sizes must be >= 1");
  Rng rng(seed);
  Network net{layer_sizes, {}};
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    DenseLayer layer{layer_sizes[l], layer_sizes[l + 1], {}, {}};
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.in + layer.out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    layer.weights.resize(layer.in * layer.out);
    for (auto& w : layer.weights) w = dist(rng);
    layer.bias.assign(layer.out, 0.0);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

inline Network clone_network(const Network& net) { return net; }

// ---------------------------------------------------------------------------
// forward / backward

namespace detail {

inline void affine(const DenseLayer& layer, std::span<const double> x, std::vector<double>& out,
                   std::vector<std::size_t>& nz) {
  nz.clear();
  for (std::size_t i = 0; i < x.size(); ++i)
    if (x[i] != 0.0) nz.push_back(i);
  out.assign(layer.bias.begin(), layer.bias.end());
  double* y = out.data();
  const std::size_t n_out = layer.out;
  for (auto i : nz) {
    const double xi = x[i];
    const double* row = layer.weights.data() + i * n_out;
    for (std::size_t o = 0; o < n_out; ++o) y[o] += xi * row[o];
  }
}

struct ForwardCache {
  // activations[0] is the input; activations[l+1] is the output of layer l
  std::vector<std::vector<double>> activations;
  std::vector<std::vector<double>> pre;
  std::vector<std::size_t> nz;
};

inline void forward_cached(const Network& net, std::span<const double> x, ForwardCache& cache) {
  const std::size_t L = net.layers.size();
  cache.activations.resize(L + 1);
  cache.pre.resize(L);
  cache.activations[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < L; ++l) {
    affine(net.layers[l], cache.activations[l], cache.pre[l], cache.nz);
    auto& a = cache.activations[l + 1];
    a = cache.pre[l];
    if (l + 1 < L)
      for (auto& v : a) v = std::max(v, 0.0);
  }
}

struct Gradient {
  std::vector<DenseLayer> layers;  // same shapes as the network, holding dL/dtheta

  Gradient() = default;
  explicit Gradient(const Network& net) {
    for (const auto& l : net.layers)
      layers.push_back({l.in, l.out, std::vector<double>(l.weights.size(), 0.0), std::vector<double>(l.out, 0.0)});
  }
  bool matches(const Network& net) const {
    if (layers.size() != net.layers.size()) return false;
    for (std::size_t l = 0; l < layers.size(); ++l)
      if (layers[l].in != net.layers[l].in || layers[l].out != net.layers[l].out) return false;
    return true;
  }
  double norm() const {
    double s = 0.0;
    for (const auto& l : layers) {
      for (double g : l.weights) s += g * g;
      for (double g : l.bias) s += g * g;
    }
    return std::sqrt(s);
  }
};

/// Accumulates d(out_scale * Q(x, action))/dtheta into grad.
inline void backprop_action(const Network& net, const ForwardCache& cache, std::size_t action, double out_scale,
                            Gradient& grad) {
  const std::size_t L = net.layers.size();
  thread_local std::vector<double> delta, delta_in;
  thread_local std::vector<std::size_t> nz;
  delta.assign(net.output_dim(), 0.0);
  delta[action] = out_scale;
  for (std::size_t l = L; l-- > 0;) {
    const DenseLayer& layer = net.layers[l];
    DenseLayer& g = grad.layers[l];
    const auto& input = cache.activations[l];
    const bool need_delta_in = l > 0;
    if (need_delta_in) delta_in.assign(layer.in, 0.0);
    nz.clear();
    for (std::size_t i = 0; i < layer.in; ++i)
      if (input[i] != 0.0) nz.push_back(i);
    const std::size_t n_out = layer.out;
    for (std::size_t o = 0; o < n_out; ++o) g.bias[o] += delta[o];
    for (auto i : nz) {
      const double xi = input[i];
      double* grow = g.weights.data() + i * n_out;
      for (std::size_t o = 0; o < n_out; ++o) grow[o] += xi * delta[o];
    }
    if (need_delta_in) {
      for (std::size_t i = 0; i < layer.in; ++i) {
        const double* wrow = layer.weights.data() + i * n_out;
        double acc = 0.0;
        for (std::size_t o = 0; o < n_out; ++o) acc += wrow[o] * delta[o];
        delta_in[i] = acc;
      }
    }
    if (!need_delta_in) break;
    // rectifier derivative at the previous layer's pre-activation
    const auto& pre = cache.pre[l - 1];
    for (std::size_t i = 0; i < layer.in; ++i)
      if (pre[i] <= 0.0) delta_in[i] = 0.0;
    delta.swap(delta_in);
  }
}

}  // namespace detail

inline std::vector<double> forward(const Network& net, std::span<const double> x) {
  if (x.size() != net.input_dim())
    throw std::invalid_argument("forward: input has " + std::to_string(x.size()) + " entries, network expects " +
                                std::to_string(net.input_dim()));
  std::vector<double> cur(x.begin(), x.end()), next;
  thread_local std::vector<std::size_t> nz;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    detail::affine(net.layers[l], cur, next, nz);
    if (l + 1 < net.layers.size())
      for (auto& v : next) v = std::max(v, 0.0);
    cur.swap(next);
  }
  return cur;
}

struct SgdOptions {
  double learning_rate = 1e-3;
  double grad_clip = 1.0;  // global L2 norm; <= 0 disables clipping
};

/// Mean squared TD error over the batch, one clipped SGD step. Returns the
/// loss measured before the step.
inline double train_batch(Network& net, std::span<const std::span<const double>> inputs,
                          std::span<const std::size_t> actions, std::span<const double> targets,
                          const SgdOptions& opt) {
  const std::size_t B = inputs.size();
  if (B == 0) throw std::invalid_argument("train_batch: empty batch");
  if (actions.size() != B || targets.size() != B) throw std::invalid_argument("train_batch: inconsistent batch");
  for (std::size_t j = 0; j < B; ++j) {
    if (!std::isfinite(targets[j])) throw std::invalid_argument("train_batch: non-finite target");
    if (inputs[j].size() != net.input_dim()) throw std::invalid_argument("train_batch: input dimension mismatch");
    if (actions[j] >= net.output_dim()) throw std::invalid_argument("train_batch: action index out of range");
  }

  // Scratch reused across calls. Only first-layer rows of active inputs can
  // carry gradient, so norm, update and reset touch those rows alone.
  thread_local detail::Gradient grad;
  thread_local detail::ForwardCache cache;
  thread_local std::vector<std::uint8_t> active;
  thread_local std::vector<std::size_t> rows;
  if (!grad.matches(net)) grad = detail::Gradient(net);
  active.assign(net.input_dim(), 0);
  rows.clear();

  double loss = 0.0;
  for (std::size_t j = 0; j < B; ++j) {
    for (std::size_t i = 0; i < inputs[j].size(); ++i)
      if (inputs[j][i] != 0.0 && !active[i]) {
        active[i] = 1;
        rows.push_back(i);
      }
    detail::forward_cached(net, inputs[j], cache);
    const double err = targets[j] - cache.activations.back()[actions[j]];
    loss += err * err;
    detail::backprop_action(net, cache, actions[j], -2.0 * err / static_cast<double>(B), grad);
  }
  loss /= static_cast<double>(B);

  const std::size_t L = net.layers.size();
  const std::size_t h0 = net.layers[0].out;
  double sq = 0.0;
  for (auto i : rows)
    for (std::size_t o = 0; o < h0; ++o) sq += grad.layers[0].weights[i * h0 + o] * grad.layers[0].weights[i * h0 + o];
  for (std::size_t l = 0; l < L; ++l) {
    if (l > 0)
      for (double g : grad.layers[l].weights) sq += g * g;
    for (double g : grad.layers[l].bias) sq += g * g;
  }

  double scale = opt.learning_rate;
  if (opt.grad_clip > 0.0) {
    const double norm = std::sqrt(sq);
    if (norm > opt.grad_clip) scale *= opt.grad_clip / norm;
  }
  for (std::size_t l = 0; l < L; ++l) {
    auto& p = net.layers[l];
    auto& g = grad.layers[l];
    if (l == 0) {
      for (auto i : rows)
        for (std::size_t o = 0; o < h0; ++o) {
          p.weights[i * h0 + o] -= scale * g.weights[i * h0 + o];
          g.weights[i * h0 + o] = 0.0;
        }
    } else {
      for (std::size_t k = 0; k < p.weights.size(); ++k) p.weights[k] -= scale * g.weights[k];
      std::fill(g.weights.begin(), g.weights.end(), 0.0);
    }
    for (std::size_t k = 0; k < p.bias.size(); ++k) p.bias[k] -= scale * g.bias[k];
    std::fill(g.bias.begin(), g.bias.end(), 0.0);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// flat parameter access and gradient verification

inline double& parameter_at(Network& net, std::size_t flat) {
  for (auto& l : net.layers) {
    if (flat < l.weights.size()) return l.weights[flat];
    flat -= l.weights.size();
    if (flat < l.bias.size()) return l.bias[flat];
    flat -= l.bias.size();
  }
  throw std::out_of_range("parameter_at: index out of range");
}

inline std::vector<double> flatten_parameters(const Network& net) {
  std::vector<double> out;
  out.reserve(parameter_count(net));
  for (const auto& l : net.layers) {
    out.insert(out.end(), l.weights.begin(), l.weights.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

/// Backprop gradient of (target - Q(x, action))^2, flattened.
inline std::vector<double> loss_gradient(const Network& net, std::span<const double> x, std::size_t action,
                                         double target) {
  detail::ForwardCache cache;
  detail::forward_cached(net, x, cache);
  const double err = target - cache.activations.back()[action];
  detail::Gradient grad(net);
  detail::backprop_action(net, cache, action, -2.0 * err, grad);
  std::vector<double> out;
  for (const auto& l : grad.layers) {
    out.insert(out.end(), l.weights.begin(), l.weights.end());
    out.insert(out.end(), l.bias.begin(), l.bias.end());
  }
  return out;
}

inline std::vector<double> finite_difference_gradient(const Network& net, std::span<const double> x,
                                                      std::size_t action, double target, double eps) {
  Network probe = net;
  const std::size_t n = parameter_count(net);
  std::vector<double> out(n);
  auto loss = [&] {
    const double e = target - forward(probe, x)[action];
    return e * e;
  };
  for (std::size_t k = 0; k < n; ++k) {
    double& p = parameter_at(probe, k);
    const double saved = p;
    p = saved + eps;
    const double up = loss();
    p = saved - eps;
    const double down = loss();
    p = saved;
    out[k] = (up - down) / (2.0 * eps);
  }
  return out;
}

/// max_k |a_k - b_k| / max(|a_k| + |b_k|, 1e-12)
inline double max_relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("max_relative_error: size mismatch");
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double denom = std::max(std::abs(a[k]) + std::abs(b[k]), 1e-12);
    worst = std::max(worst, std::abs(a[k] - b[k]) / denom);
  }
  return worst;
}

inline double gradient_check(const Network& net, std::span<const double> x, std::size_t action, double target,
                             double eps = 1e-5) {
  if (!(eps > 0.0)) throw std::invalid_argument("gradient_check: eps must be positive");
  const auto analytic = loss_gradient(net, x, action, target);
  const auto numeric = finite_difference_gradient(net, x, action, target, eps);
  return max_relative_error(analytic, numeric);
}

// ---------------------------------------------------------------------------
// text format:
//   network <L> <size_0> ... <size_{L-1}>
//   then for each layer, one line of out*in weights (row-major) followed by out biases

inline void write_network(std::ostream& os, const Network& net) {
  os << "network " << net.layer_sizes.size();
  for (auto s : net.layer_sizes) os << ' ' << s;
  os << '\n' << std::setprecision(17);
  for (const auto& l : net.layers) {
    for (std::size_t o = 0; o < l.out; ++o)
      for (std::size_t i = 0; i < l.in; ++i) os << l.w(o, i) << ' ';
    for (std::size_t k = 0; k < l.bias.size(); ++k) os << l.bias[k] << (k + 1 < l.bias.size() ? " " : "");
    os << '\n';
  }
}

inline Network read_network(std::istream& is) {
  std::string tag;
  std::size_t n = 0;
  if (!(is >> tag >> n) || tag != "network") throw std::runtime_error("read_network: missing 'network' header");
  std::vector<std::size_t> sizes(n);
  for (auto& s : sizes)
    if (!(is >> s)) throw std::runtime_error("read_network: truncated layer sizes");
  Network net = new_network(sizes, 0);
  for (auto& l : net.layers) {
    for (std::size_t o = 0; o < l.out; ++o)
      for (std::size_t i = 0; i < l.in; ++i)
        if (!(is >> l.w(o, i))) throw std::runtime_error("read_network: truncated weights");
    for (auto& b : l.bias)
      if (!(is >> b)) throw std::runtime_error("read_network: truncated biases");
  }
  for (const auto& l : net.layers) {
    for (double w : l.weights)
      if (!std::isfinite(w)) throw std::runtime_error("read_network: non-finite parameter");
    for (double b : l.bias)
      if (!std::isfinite(b)) throw std::runtime_error("read_network: non-finite parameter");
  }
  return net;
}

}  // namespace godial
