#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "muser/autograd.hpp"
#include "muser/errors.hpp"

namespace muser {

inline constexpr double kLossEps = 1e-7;

struct ClassWeights {
  std::vector<double> w;      // positive-class weights, 2/(1+p)
  std::vector<double> w_bar;  // negative-class weights, 2p/(1+p)
  std::vector<double> p;      // training-split positive frequencies
};

inline ClassWeights class_weights(const std::vector<double>& p) {
  ClassWeights cw;
  cw.p = p;
  cw.w.reserve(p.size());
  cw.w_bar.reserve(p.size());
  for (double pi : p) {
    if (pi < 0.0 || pi > 1.0)
      throw InputError("class frequency " + std::to_string(pi) + " outside [0, 1]");
    cw.w.push_back(2.0 / (1.0 + pi));
    cw.w_bar.push_back(2.0 * pi / (1.0 + pi));
  }
  return cw;
}

// Mean over categories of the frequency-weighted log terms. Probabilities are
// clamped to [eps, 1 - eps] before the logs.
inline double weighted_bce(const std::vector<double>& x, const std::vector<double>& y,
                           const ClassWeights& cw) {
  if (x.size() != y.size() || x.size() != cw.w.size())
    throw InputError("weighted_bce: length mismatch");
  if (x.empty()) throw InputError("weighted_bce: empty vectors");
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    if (y[i] != 0.0 && y[i] != 1.0) throw InputError("weighted_bce: labels must be binary");
    double xi = std::min(std::max(x[i], kLossEps), 1.0 - kLossEps);
    acc += cw.w[i] * y[i] * std::log(xi) + cw.w_bar[i] * (1.0 - y[i]) * std::log(1.0 - xi);
  }
  return -acc / static_cast<double>(x.size());
}

// Squared valence error plus squared arousal error; the two are summed, not
// averaged.
inline double va_mse(const std::array<double, 2>& x, const std::array<double, 2>& y) {
  double dv = y[0] - x[0];
  double da = y[1] - x[1];
  return dv * dv + da * da;
}

// KL of the teacher distribution t against the student s: sum of
// t_i log(t_i / s_i). Zero teacher entries contribute zero; s is clamped
// below at eps.
inline double kd_kl(const std::vector<double>& s, const std::vector<double>& t) {
  if (s.size() != t.size()) throw InputError("kd_kl: length mismatch");
  double acc = 0.0;
  for (size_t i = 0; i < s.size(); ++i) {
    if (t[i] <= 0.0) continue;
    acc += t[i] * std::log(t[i] / std::max(s[i], kLossEps));
  }
  return acc;
}

inline double total_loss(double task, double kd, double weight) {
  if (weight < 0.0 || weight > 1.0)
    throw ConfigError("loss weight " + std::to_string(weight) + " outside [0, 1]");
  return weight * task + (1.0 - weight) * kd;
}

inline std::array<double, 2> softmax2(const std::array<double, 2>& v) {
  double mx = std::max(v[0], v[1]);
  double e0 = std::exp(v[0] - mx), e1 = std::exp(v[1] - mx);
  return {e0 / (e0 + e1), e1 / (e0 + e1)};
}

// --- graph forms, batch-mean reduced ----------------------------------------

// probs: B x c graph node in (0,1). targets: B x c binary. Returns a scalar
// node: batch mean of the per-example category means.
inline NodePtr weighted_bce_loss(const NodePtr& probs, const Tensor& targets,
                                 const ClassWeights& cw) {
  size_t b = probs->value.rows, c = probs->value.cols;
  if (targets.rows != b || targets.cols != c)
    throw InputError("weighted_bce_loss: target shape mismatch");
  if (cw.w.size() != c) throw InputError("weighted_bce_loss: weight length mismatch");
  Tensor wy(b, c), wbar_ny(b, c);
  for (size_t r = 0; r < b; ++r)
    for (size_t i = 0; i < c; ++i) {
      double y = targets.at(r, i);
      if (y != 0.0 && y != 1.0) throw InputError("weighted_bce_loss: labels must be binary");
      wy.at(r, i) = cw.w[i] * y;
      wbar_ny.at(r, i) = cw.w_bar[i] * (1.0 - y);
    }
  NodePtr pos = mul(log_op(clamp_min(probs, kLossEps)), make_constant(std::move(wy)));
  NodePtr one_minus = clamp_min(add_scalar(scale(probs, -1.0), 1.0), kLossEps);
  NodePtr neg = mul(log_op(one_minus), make_constant(std::move(wbar_ny)));
  NodePtr acc = sum_all(add(pos, neg));
  return scale(acc, -1.0 / static_cast<double>(b * c));
}

// pred: B x 2 node. targets: B x 2. Batch mean of the summed squared errors.
inline NodePtr va_mse_loss(const NodePtr& pred, const Tensor& targets) {
  if (targets.rows != pred->value.rows || targets.cols != 2 || pred->value.cols != 2)
    throw InputError("va_mse_loss: expected B x 2 shapes");
  NodePtr d = sub(make_constant(targets), pred);
  return scale(sum_all(mul(d, d)), 1.0 / static_cast<double>(targets.rows));
}

enum class ClassificationKd {
  literal,    // the printed sum over per-label probabilities
  bernoulli,  // adds the complementary (1 - t) terms per label
};

enum class RegressionKd {
  softmax_kl,     // softmax both VA pairs at temperature 1, then the KL
  squared_error,  // squared error against the teacher's raw outputs
};

// probs: B x c student probabilities node. teacher: B x c probabilities.
// Batch mean of the per-example KL sum.
inline NodePtr classification_kd_loss(const NodePtr& probs, const Tensor& teacher,
                                      ClassificationKd mode = ClassificationKd::literal) {
  size_t b = probs->value.rows, c = probs->value.cols;
  if (teacher.rows != b || teacher.cols != c)
    throw InputError("classification_kd_loss: teacher shape mismatch");
  double const_part = 0.0;  // sum of t log t terms (and complements), no grad
  Tensor t_pos = teacher;
  for (double& v : t_pos.data)
    if (v > 0.0) const_part += v * std::log(v);
  NodePtr acc = scale(sum_all(mul(log_op(clamp_min(probs, kLossEps)), make_constant(t_pos))), -1.0);
  if (mode == ClassificationKd::bernoulli) {
    Tensor t_neg(b, c);
    for (size_t i = 0; i < t_neg.size(); ++i) {
      double tn = 1.0 - teacher.data[i];
      t_neg.data[i] = tn;
      if (tn > 0.0) const_part += tn * std::log(tn);
    }
    NodePtr one_minus = clamp_min(add_scalar(scale(probs, -1.0), 1.0), kLossEps);
    acc = add(acc, scale(sum_all(mul(log_op(one_minus), make_constant(std::move(t_neg)))), -1.0));
  }
  return scale(add_scalar(acc, const_part), 1.0 / static_cast<double>(b));
}

// pred: B x 2 student VA node. teacher: B x 2 raw teacher VA outputs.
inline NodePtr regression_kd_loss(const NodePtr& pred, const Tensor& teacher,
                                  RegressionKd mode = RegressionKd::softmax_kl) {
  size_t b = pred->value.rows;
  if (teacher.rows != b || teacher.cols != 2 || pred->value.cols != 2)
    throw InputError("regression_kd_loss: expected B x 2 shapes");
  if (mode == RegressionKd::squared_error) return va_mse_loss(pred, teacher);
  Tensor t_dist(b, 2);
  double const_part = 0.0;
  for (size_t r = 0; r < b; ++r) {
    auto d = softmax2({teacher.at(r, 0), teacher.at(r, 1)});
    t_dist.at(r, 0) = d[0];
    t_dist.at(r, 1) = d[1];
    for (double v : d)
      if (v > 0.0) const_part += v * std::log(v);
  }
  NodePtr s_dist = clamp_min(softmax_rows(pred), kLossEps);
  NodePtr acc = scale(sum_all(mul(log_op(s_dist), make_constant(std::move(t_dist)))), -1.0);
  return scale(add_scalar(acc, const_part), 1.0 / static_cast<double>(b));
}

inline NodePtr total_loss_graph(const NodePtr& task, const NodePtr& kd, double weight) {
  if (weight < 0.0 || weight > 1.0)
    throw ConfigError("loss weight " + std::to_string(weight) + " outside [0, 1]");
  return add(scale(task, weight), scale(kd, 1.0 - weight));
}

}  // namespace muser
