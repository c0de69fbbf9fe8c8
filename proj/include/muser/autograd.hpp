#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <unordered_set>
#include <vector>

#include "muser/rng.hpp"
#include "muser/tensor.hpp"

namespace muser {

// Reverse-mode autograd over Tensor. Each op builds a Node whose closure
// accumulates into the parents' grads; backward() runs the closures in
// reverse topological order from a scalar root. Parameters are long-lived
// nodes, everything else is rebuilt per step and freed with the root.
struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Node(Tensor v, bool rg) : value(std::move(v)), requires_grad(rg) {
    if (requires_grad) grad = Tensor::zeros(value.rows, value.cols);
  }
};

using NodePtr = std::shared_ptr<Node>;

inline NodePtr make_param(Tensor v) { return std::make_shared<Node>(std::move(v), true); }

inline NodePtr make_constant(Tensor v) { return std::make_shared<Node>(std::move(v), false); }

namespace detail {

inline NodePtr make_op(Tensor value, std::vector<NodePtr> parents,
                       std::function<void(Node&)> backward_fn) {
  bool rg = false;
  for (const auto& p : parents) rg = rg || p->requires_grad;
  auto node = std::make_shared<Node>(std::move(value), rg);
  if (rg) {
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward_fn);
    node->grad = Tensor::zeros(node->value.rows, node->value.cols);
  }
  return node;
}

}  // namespace detail

// C = A B
inline NodePtr matmul(const NodePtr& a, const NodePtr& b) {
  if (a->value.cols != b->value.rows)
    throw ValidationError("matmul: " + a->value.shape_str() + " x " + b->value.shape_str());
  size_t m = a->value.rows, k = a->value.cols, n = b->value.cols;
  Tensor out(m, n);
  for (size_t i = 0; i < m; ++i)
    for (size_t p = 0; p < k; ++p) {
      double av = a->value.at(i, p);
      if (av == 0.0) continue;
      for (size_t j = 0; j < n; ++j) out.at(i, j) += av * b->value.at(p, j);
    }
  return detail::make_op(std::move(out), {a, b}, [a, b, m, k, n](Node& self) {
    if (a->requires_grad) {
      for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) {
          double g = self.grad.at(i, j);
          if (g == 0.0) continue;
          for (size_t p = 0; p < k; ++p) a->grad.at(i, p) += g * b->value.at(p, j);
        }
    }
    if (b->requires_grad) {
      for (size_t i = 0; i < m; ++i)
        for (size_t p = 0; p < k; ++p) {
          double av = a->value.at(i, p);
          if (av == 0.0) continue;
          for (size_t j = 0; j < n; ++j) b->grad.at(p, j) += av * self.grad.at(i, j);
        }
    }
  });
}

// C = A Bt (B stored untransposed, n x k)
inline NodePtr matmul_nt(const NodePtr& a, const NodePtr& b) {
  if (a->value.cols != b->value.cols)
    throw ValidationError("matmul_nt: " + a->value.shape_str() + " x " + b->value.shape_str() +
                          "^T");
  size_t m = a->value.rows, k = a->value.cols, n = b->value.rows;
  Tensor out(m, n);
  for (size_t i = 0; i < m; ++i)
    for (size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (size_t p = 0; p < k; ++p) acc += a->value.at(i, p) * b->value.at(j, p);
      out.at(i, j) = acc;
    }
  return detail::make_op(std::move(out), {a, b}, [a, b, m, k, n](Node& self) {
    for (size_t i = 0; i < m; ++i)
      for (size_t j = 0; j < n; ++j) {
        double g = self.grad.at(i, j);
        if (g == 0.0) continue;
        if (a->requires_grad)
          for (size_t p = 0; p < k; ++p) a->grad.at(i, p) += g * b->value.at(j, p);
        if (b->requires_grad)
          for (size_t p = 0; p < k; ++p) b->grad.at(j, p) += g * a->value.at(i, p);
      }
  });
}

// a + b, where b may be a 1 x n row broadcast over a's rows.
inline NodePtr add(const NodePtr& a, const NodePtr& b) {
  bool broadcast = b->value.rows == 1 && a->value.rows != 1 && a->value.cols == b->value.cols;
  if (!broadcast) require_same_shape(a->value, b->value, "add");
  Tensor out = a->value;
  for (size_t r = 0; r < out.rows; ++r)
    for (size_t c = 0; c < out.cols; ++c) out.at(r, c) += b->value.at(broadcast ? 0 : r, c);
  return detail::make_op(std::move(out), {a, b}, [a, b, broadcast](Node& self) {
    if (a->requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) a->grad.data[i] += self.grad.data[i];
    if (b->requires_grad) {
      for (size_t r = 0; r < self.grad.rows; ++r)
        for (size_t c = 0; c < self.grad.cols; ++c)
          b->grad.at(broadcast ? 0 : r, c) += self.grad.at(r, c);
    }
  });
}

inline NodePtr sub(const NodePtr& a, const NodePtr& b) {
  require_same_shape(a->value, b->value, "sub");
  Tensor out = a->value;
  for (size_t i = 0; i < out.size(); ++i) out.data[i] -= b->value.data[i];
  return detail::make_op(std::move(out), {a, b}, [a, b](Node& self) {
    if (a->requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) a->grad.data[i] += self.grad.data[i];
    if (b->requires_grad)
      for (size_t i = 0; i < self.grad.size(); ++i) b->grad.data[i] -= self.grad.data[i];
  });
}

// Elementwise product; b may be a 1 x n row broadcast over a's rows.
inline NodePtr mul(const NodePtr& a, const NodePtr& b) {
  bool broadcast = b->value.rows == 1 && a->value.rows != 1 && a->value.cols == b->value.cols;
  if (!broadcast) require_same_shape(a->value, b->value, "mul");
  Tensor out = a->value;
  for (size_t r = 0; r < out.rows; ++r)
    for (size_t c = 0; c < out.cols; ++c) out.at(r, c) *= b->value.at(broadcast ? 0 : r, c);
  return detail::make_op(std::move(out), {a, b}, [a, b, broadcast](Node& self) {
    for (size_t r = 0; r < self.grad.rows; ++r)
      for (size_t c = 0; c < self.grad.cols; ++c) {
        double g = self.grad.at(r, c);
        size_t br = broadcast ? 0 : r;
        if (a->requires_grad) a->grad.at(r, c) += g * b->value.at(br, c);
        if (b->requires_grad) b->grad.at(br, c) += g * a->value.at(r, c);
      }
  });
}

inline NodePtr scale(const NodePtr& a, double s) {
  Tensor out = a->value;
  for (double& v : out.data) v *= s;
  return detail::make_op(std::move(out), {a}, [a, s](Node& self) {
    for (size_t i = 0; i < self.grad.size(); ++i) a->grad.data[i] += s * self.grad.data[i];
  });
}

inline NodePtr add_scalar(const NodePtr& a, double s) {
  Tensor out = a->value;
  for (double& v : out.data) v += s;
  return detail::make_op(std::move(out), {a}, [a](Node& self) {
    for (size_t i = 0; i < self.grad.size(); ++i) a->grad.data[i] += self.grad.data[i];
  });
}

inline NodePtr relu(const NodePtr& a) {
  Tensor out = a->value;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return detail::make_op(std::move(out), {a}, [a](Node& self) {
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (a->value.data[i] > 0.0) a->grad.data[i] += self.grad.data[i];
  });
}

inline NodePtr sigmoid(const NodePtr& a) {
  Tensor out = a->value;
  for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
  return detail::make_op(std::move(out), {a}, [a](Node& self) {
    for (size_t i = 0; i < self.grad.size(); ++i) {
      double y = self.value.data[i];
      a->grad.data[i] += self.grad.data[i] * y * (1.0 - y);
    }
  });
}

inline NodePtr log_op(const NodePtr& a) {
  Tensor out = a->value;
  for (double& v : out.data) v = std::log(v);
  return detail::make_op(std::move(out), {a}, [a](Node& self) {
    for (size_t i = 0; i < self.grad.size(); ++i)
      a->grad.data[i] += self.grad.data[i] / a->value.data[i];
  });
}

inline NodePtr exp_op(const NodePtr& a) {
  Tensor out = a->value;
  for (double& v : out.data) v = std::exp(v);
  return detail::make_op(std::move(out), {a}, [a](Node& self) {
    for (size_t i = 0; i < self.grad.size(); ++i)
      a->grad.data[i] += self.grad.data[i] * self.value.data[i];
  });
}

// max(a, lo) elementwise; gradient flows only where a > lo.
inline NodePtr clamp_min(const NodePtr& a, double lo) {
  Tensor out = a->value;
  for (double& v : out.data) v = v > lo ? v : lo;
  return detail::make_op(std::move(out), {a}, [a, lo](Node& self) {
    for (size_t i = 0; i < self.grad.size(); ++i)
      if (a->value.data[i] > lo) a->grad.data[i] += self.grad.data[i];
  });
}

// Row-wise softmax with max subtraction. Fully masked columns (additive
// -1e30 applied upstream) underflow to exact zeros.
inline NodePtr softmax_rows(const NodePtr& a) {
  Tensor out = a->value;
  for (size_t r = 0; r < out.rows; ++r) {
    double mx = out.at(r, 0);
    for (size_t c = 1; c < out.cols; ++c) mx = std::max(mx, out.at(r, c));
    double sum = 0.0;
    for (size_t c = 0; c < out.cols; ++c) {
      double e = std::exp(out.at(r, c) - mx);
      out.at(r, c) = e;
      sum += e;
    }
    for (size_t c = 0; c < out.cols; ++c) out.at(r, c) /= sum;
  }
  return detail::make_op(std::move(out), {a}, [a](Node& self) {
    for (size_t r = 0; r < self.value.rows; ++r) {
      double dot = 0.0;
      for (size_t c = 0; c < self.value.cols; ++c)
        dot += self.grad.at(r, c) * self.value.at(r, c);
      for (size_t c = 0; c < self.value.cols; ++c)
        a->grad.at(r, c) += self.value.at(r, c) * (self.grad.at(r, c) - dot);
    }
  });
}

// Row-wise layer norm with learned gain/bias (both 1 x n).
inline NodePtr layer_norm_rows(const NodePtr& x, const NodePtr& gamma, const NodePtr& beta,
                               double eps = 1e-5) {
  size_t n = x->value.cols;
  if (gamma->value.rows != 1 || gamma->value.cols != n || beta->value.rows != 1 ||
      beta->value.cols != n)
    throw ValidationError("layer_norm_rows: gain/bias must be 1 x " + std::to_string(n));
  Tensor out(x->value.rows, n);
  Tensor xhat(x->value.rows, n);
  std::vector<double> inv_std(x->value.rows);
  for (size_t r = 0; r < x->value.rows; ++r) {
    double mean = 0.0;
    for (size_t c = 0; c < n; ++c) mean += x->value.at(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (size_t c = 0; c < n; ++c) {
      double d = x->value.at(r, c) - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    double istd = 1.0 / std::sqrt(var + eps);
    inv_std[r] = istd;
    for (size_t c = 0; c < n; ++c) {
      double h = (x->value.at(r, c) - mean) * istd;
      xhat.at(r, c) = h;
      out.at(r, c) = h * gamma->value.at(0, c) + beta->value.at(0, c);
    }
  }
  return detail::make_op(
      std::move(out), {x, gamma, beta},
      [x, gamma, beta, xhat = std::move(xhat), inv_std = std::move(inv_std), n](Node& self) {
        for (size_t r = 0; r < self.value.rows; ++r) {
          double sum_gdy = 0.0, sum_gdy_xhat = 0.0;
          for (size_t c = 0; c < n; ++c) {
            double gdy = self.grad.at(r, c) * gamma->value.at(0, c);
            sum_gdy += gdy;
            sum_gdy_xhat += gdy * xhat.at(r, c);
          }
          double inv_n = 1.0 / static_cast<double>(n);
          for (size_t c = 0; c < n; ++c) {
            double gdy = self.grad.at(r, c) * gamma->value.at(0, c);
            if (x->requires_grad)
              x->grad.at(r, c) +=
                  (gdy - inv_n * sum_gdy - xhat.at(r, c) * inv_n * sum_gdy_xhat) * inv_std[r];
            if (gamma->requires_grad)
              gamma->grad.at(0, c) += self.grad.at(r, c) * xhat.at(r, c);
            if (beta->requires_grad) beta->grad.at(0, c) += self.grad.at(r, c);
          }
        }
      });
}

inline NodePtr concat_cols(const std::vector<NodePtr>& parts) {
  if (parts.empty()) throw ValidationError("concat_cols of nothing");
  size_t rows = parts.front()->value.rows, cols = 0;
  for (const auto& p : parts) {
    if (p->value.rows != rows) throw ValidationError("concat_cols: row mismatch");
    cols += p->value.cols;
  }
  Tensor out(rows, cols);
  size_t off = 0;
  for (const auto& p : parts) {
    for (size_t r = 0; r < rows; ++r)
      for (size_t c = 0; c < p->value.cols; ++c) out.at(r, off + c) = p->value.at(r, c);
    off += p->value.cols;
  }
  return detail::make_op(std::move(out), parts, [parts](Node& self) {
    size_t off = 0;
    for (const auto& p : parts) {
      if (p->requires_grad)
        for (size_t r = 0; r < p->value.rows; ++r)
          for (size_t c = 0; c < p->value.cols; ++c)
            p->grad.at(r, c) += self.grad.at(r, off + c);
      off += p->value.cols;
    }
  });
}

inline NodePtr concat_rows(const std::vector<NodePtr>& parts) {
  if (parts.empty()) throw ValidationError("concat_rows of nothing");
  size_t cols = parts.front()->value.cols, rows = 0;
  for (const auto& p : parts) {
    if (p->value.cols != cols) throw ValidationError("concat_rows: column mismatch");
    rows += p->value.rows;
  }
  Tensor out(rows, cols);
  size_t off = 0;
  for (const auto& p : parts) {
    for (size_t r = 0; r < p->value.rows; ++r)
      for (size_t c = 0; c < cols; ++c) out.at(off + r, c) = p->value.at(r, c);
    off += p->value.rows;
  }
  return detail::make_op(std::move(out), parts, [parts](Node& self) {
    size_t off = 0;
    for (const auto& p : parts) {
      if (p->requires_grad)
        for (size_t r = 0; r < p->value.rows; ++r)
          for (size_t c = 0; c < p->value.cols; ++c)
            p->grad.at(r, c) += self.grad.at(off + r, c);
      off += p->value.rows;
    }
  });
}

inline NodePtr slice_cols(const NodePtr& a, size_t c0, size_t c1) {
  if (c0 >= c1 || c1 > a->value.cols) throw ValidationError("slice_cols: bad range");
  Tensor out(a->value.rows, c1 - c0);
  for (size_t r = 0; r < out.rows; ++r)
    for (size_t c = 0; c < out.cols; ++c) out.at(r, c) = a->value.at(r, c0 + c);
  return detail::make_op(std::move(out), {a}, [a, c0](Node& self) {
    for (size_t r = 0; r < self.grad.rows; ++r)
      for (size_t c = 0; c < self.grad.cols; ++c) a->grad.at(r, c0 + c) += self.grad.at(r, c);
  });
}

inline NodePtr slice_rows(const NodePtr& a, size_t r0, size_t r1) {
  if (r0 >= r1 || r1 > a->value.rows) throw ValidationError("slice_rows: bad range");
  Tensor out(r1 - r0, a->value.cols);
  for (size_t r = 0; r < out.rows; ++r)
    for (size_t c = 0; c < out.cols; ++c) out.at(r, c) = a->value.at(r0 + r, c);
  return detail::make_op(std::move(out), {a}, [a, r0](Node& self) {
    for (size_t r = 0; r < self.grad.rows; ++r)
      for (size_t c = 0; c < self.grad.cols; ++c) a->grad.at(r0 + r, c) += self.grad.at(r, c);
  });
}

// Rows of an id-indexed table; backward scatter-adds into the table grad.
inline NodePtr embedding_lookup(const NodePtr& table, std::vector<int> ids) {
  Tensor out(ids.size(), table->value.cols);
  for (size_t r = 0; r < ids.size(); ++r) {
    int id = ids[r];
    if (id < 0 || static_cast<size_t>(id) >= table->value.rows)
      throw ValidationError("embedding_lookup: id " + std::to_string(id) + " out of range");
    for (size_t c = 0; c < out.cols; ++c) out.at(r, c) = table->value.at(id, c);
  }
  return detail::make_op(std::move(out), {table}, [table, ids = std::move(ids)](Node& self) {
    for (size_t r = 0; r < ids.size(); ++r)
      for (size_t c = 0; c < self.grad.cols; ++c)
        table->grad.at(ids[r], c) += self.grad.at(r, c);
  });
}

inline NodePtr sum_all(const NodePtr& a) {
  double acc = 0.0;
  for (double v : a->value.data) acc += v;
  Tensor out(1, 1);
  out.at(0, 0) = acc;
  return detail::make_op(std::move(out), {a}, [a](Node& self) {
    double g = self.grad.at(0, 0);
    for (size_t i = 0; i < a->grad.size(); ++i) a->grad.data[i] += g;
  });
}

inline NodePtr mean_all(const NodePtr& a) {
  return scale(sum_all(a), 1.0 / static_cast<double>(a->value.size()));
}

// Per-row sums as an m x 1 column.
inline NodePtr sum_cols(const NodePtr& a) {
  Tensor out(a->value.rows, 1);
  for (size_t r = 0; r < a->value.rows; ++r) {
    double acc = 0.0;
    for (size_t c = 0; c < a->value.cols; ++c) acc += a->value.at(r, c);
    out.at(r, 0) = acc;
  }
  return detail::make_op(std::move(out), {a}, [a](Node& self) {
    for (size_t r = 0; r < a->grad.rows; ++r) {
      double g = self.grad.at(r, 0);
      for (size_t c = 0; c < a->grad.cols; ++c) a->grad.at(r, c) += g;
    }
  });
}

// Inverted dropout. Scales kept lanes by 1/(1-p) so eval needs no rescale;
// the mask is drawn once at op build time.
inline NodePtr dropout(const NodePtr& a, double p, Rng& rng) {
  if (p <= 0.0) return a;
  if (p >= 1.0) throw ConfigError("dropout rate must be below 1");
  Tensor mask(a->value.rows, a->value.cols);
  double keep = 1.0 / (1.0 - p);
  for (double& v : mask.data) v = rng.uniform() < p ? 0.0 : keep;
  return mul(a, make_constant(std::move(mask)));
}

// Reverse topological sweep from a scalar root, accumulating grads.
inline void backward(const NodePtr& root) {
  if (root->value.size() != 1) throw ValidationError("backward root must be a scalar");
  if (!root->requires_grad) return;

  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.push_back({parent, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad.at(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

}  // namespace muser
