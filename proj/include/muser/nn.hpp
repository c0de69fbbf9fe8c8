#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "muser/autograd.hpp"
#include "muser/rng.hpp"

namespace muser {

// Named parameter store. Names are stable across runs and versions; they key
// checkpoint payloads, optimizer state, and the selective-update filter.
class ParameterRegistry {
 public:
  NodePtr add(const std::string& name, Tensor init) {
    if (index_.count(name)) throw ConfigError("duplicate parameter '" + name + "'");
    auto node = make_param(std::move(init));
    index_[name] = entries_.size();
    entries_.push_back({name, node});
    return node;
  }

  const NodePtr& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
    return entries_[it->second].node;
  }

  bool has(const std::string& name) const { return index_.count(name) != 0; }

  struct Entry {
    std::string name;
    NodePtr node;
  };

  const std::vector<Entry>& entries() const { return entries_; }

  void zero_grad() {
    for (auto& e : entries_) e.node->grad.fill(0.0);
  }

  size_t total_size() const {
    size_t n = 0;
    for (const auto& e : entries_) n += e.node->value.size();
    return n;
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, size_t> index_;
};

// Init draws its own stream from (seed, parameter name), so parameter values
// never depend on registration order.
inline Tensor normal_init(size_t rows, size_t cols, double stddev, uint64_t seed,
                          const std::string& name) {
  Rng rng(mix_seed(seed, fnv1a64(name)));
  Tensor t(rows, cols);
  for (double& v : t.data) v = rng.normal(0.0, stddev);
  return t;
}

inline Tensor linear_weight_init(size_t in, size_t out, uint64_t seed, const std::string& name) {
  return normal_init(in, out, 1.0 / std::sqrt(static_cast<double>(in)), seed, name);
}

struct Linear {
  NodePtr W;  // in x out
  NodePtr b;  // 1 x out

  static Linear create(ParameterRegistry& reg, const std::string& name, size_t in, size_t out,
                       uint64_t seed) {
    Linear l;
    l.W = reg.add(name + ".weight", linear_weight_init(in, out, seed, name + ".weight"));
    l.b = reg.add(name + ".bias", Tensor::zeros(1, out));
    return l;
  }

  NodePtr operator()(const NodePtr& x) const { return add(matmul(x, W), b); }
};

struct LayerNorm {
  NodePtr gamma;
  NodePtr beta;

  static LayerNorm create(ParameterRegistry& reg, const std::string& name, size_t dim) {
    LayerNorm ln;
    ln.gamma = reg.add(name + ".gain", Tensor::full(1, dim, 1.0));
    ln.beta = reg.add(name + ".bias", Tensor::zeros(1, dim));
    return ln;
  }

  NodePtr operator()(const NodePtr& x) const { return layer_norm_rows(x, gamma, beta); }
};

// P[t, 2i] = sin(t / 10000^(2i/d)), P[t, 2i+1] = cos(same). Position 0 reads
// (0, 1, 0, 1, ...).
inline Tensor sinusoidal_positions(size_t t_len, size_t d) {
  Tensor p(t_len, d);
  for (size_t t = 0; t < t_len; ++t)
    for (size_t i = 0; i * 2 < d; ++i) {
      double rate = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
      double angle = static_cast<double>(t) * rate;
      p.at(t, 2 * i) = std::sin(angle);
      if (2 * i + 1 < d) p.at(t, 2 * i + 1) = std::cos(angle);
    }
  return p;
}

// Additive key-side mask: 0 for attendable positions, -1e30 for padding.
// After max subtraction the masked logits underflow to exactly zero weight,
// so pad content cannot leak into any unmasked row.
inline constexpr double kMaskBias = -1e30;

inline Tensor attention_mask_bias(const std::vector<uint8_t>& mask) {
  Tensor bias(1, mask.size());
  for (size_t i = 0; i < mask.size(); ++i) bias.at(0, i) = mask[i] ? 0.0 : kMaskBias;
  return bias;
}

struct MultiHeadSelfAttention {
  Linear wq, wk, wv, wo;
  size_t heads = 1;
  size_t dim = 0;

  static MultiHeadSelfAttention create(ParameterRegistry& reg, const std::string& name, size_t dim,
                                       size_t heads, uint64_t seed) {
    if (heads == 0 || dim % heads != 0)
      throw ConfigError("attention dim " + std::to_string(dim) + " not divisible by " +
                        std::to_string(heads) + " heads");
    MultiHeadSelfAttention a;
    a.heads = heads;
    a.dim = dim;
    a.wq = Linear::create(reg, name + ".q", dim, dim, seed);
    a.wk = Linear::create(reg, name + ".k", dim, dim, seed);
    a.wv = Linear::create(reg, name + ".v", dim, dim, seed);
    a.wo = Linear::create(reg, name + ".out", dim, dim, seed);
    return a;
  }

  // x: T x dim. mask_bias: constant 1 x T key mask, broadcast over query rows.
  NodePtr operator()(const NodePtr& x, const NodePtr& mask_bias) const {
    size_t dh = dim / heads;
    NodePtr q = wq(x), k = wk(x), v = wv(x);
    std::vector<NodePtr> outs;
    for (size_t h = 0; h < heads; ++h) {
      NodePtr qh = slice_cols(q, h * dh, (h + 1) * dh);
      NodePtr kh = slice_cols(k, h * dh, (h + 1) * dh);
      NodePtr vh = slice_cols(v, h * dh, (h + 1) * dh);
      NodePtr scores = scale(matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
      NodePtr att = softmax_rows(add(scores, mask_bias));
      outs.push_back(matmul(att, vh));
    }
    return wo(concat_cols(outs));
  }
};

// Post-norm encoder layer: residual then norm, around attention and a
// 4x-wide two-layer feedforward.
struct TransformerLayer {
  MultiHeadSelfAttention attn;
  LayerNorm ln1, ln2;
  Linear ff1, ff2;

  static TransformerLayer create(ParameterRegistry& reg, const std::string& name, size_t dim,
                                 size_t heads, size_t ff_dim, uint64_t seed) {
    TransformerLayer l;
    l.attn = MultiHeadSelfAttention::create(reg, name + ".attn", dim, heads, seed);
    l.ln1 = LayerNorm::create(reg, name + ".ln1", dim);
    l.ln2 = LayerNorm::create(reg, name + ".ln2", dim);
    l.ff1 = Linear::create(reg, name + ".ff1", dim, ff_dim, seed);
    l.ff2 = Linear::create(reg, name + ".ff2", ff_dim, dim, seed);
    return l;
  }

  NodePtr operator()(const NodePtr& x, const NodePtr& mask_bias, double dropout_p,
                     Rng* rng) const {
    NodePtr a = attn(x, mask_bias);
    if (rng && dropout_p > 0.0) a = dropout(a, dropout_p, *rng);
    NodePtr h = ln1(add(x, a));
    NodePtr f = ff2(relu(ff1(h)));
    if (rng && dropout_p > 0.0) f = dropout(f, dropout_p, *rng);
    return ln2(add(h, f));
  }
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with one (m, v, t) triple per parameter. A filtered step leaves the
// excluded parameters untouched end to end: no value change, no moment decay,
// no step-count advance. That is what makes branch freezing exact.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  struct State {
    Tensor m, v;
    int64_t t = 0;
  };

  void step(ParameterRegistry& reg,
            const std::function<bool(const std::string&)>& update_filter = nullptr) {
    for (auto& e : reg.entries()) {
      if (update_filter && !update_filter(e.name)) continue;
      State& s = state_[e.name];
      if (s.m.size() == 0) {
        s.m = Tensor::zeros(e.node->value.rows, e.node->value.cols);
        s.v = Tensor::zeros(e.node->value.rows, e.node->value.cols);
      }
      s.t += 1;
      double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.t));
      double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.t));
      for (size_t i = 0; i < e.node->value.size(); ++i) {
        double g = e.node->grad.data[i];
        s.m.data[i] = cfg_.beta1 * s.m.data[i] + (1.0 - cfg_.beta1) * g;
        s.v.data[i] = cfg_.beta2 * s.v.data[i] + (1.0 - cfg_.beta2) * g * g;
        double mhat = s.m.data[i] / bc1;
        double vhat = s.v.data[i] / bc2;
        e.node->value.data[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  const AdamConfig& config() const { return cfg_; }
  std::unordered_map<std::string, State>& state() { return state_; }
  const std::unordered_map<std::string, State>& state() const { return state_; }

 private:
  AdamConfig cfg_;
  std::unordered_map<std::string, State> state_;
};

}  // namespace muser
