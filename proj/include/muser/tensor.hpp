#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "muser/errors.hpp"

namespace muser {

// Dense row-major 2-D double tensor. Everything the trainer touches is
// two-dimensional; vectors are 1 x n or n x 1 as context demands.
struct Tensor {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Tensor zeros(size_t r, size_t c) { return Tensor(r, c, 0.0); }

  static Tensor full(size_t r, size_t c, double v) { return Tensor(r, c, v); }

  static Tensor row(const std::vector<double>& v) {
    Tensor t(1, v.size());
    t.data = v;
    return t;
  }

  static Tensor column(const std::vector<double>& v) {
    Tensor t(v.size(), 1);
    t.data = v;
    return t;
  }

  static Tensor from_rows(const std::vector<std::vector<double>>& rows_in) {
    if (rows_in.empty()) throw ValidationError("from_rows needs at least one row");
    Tensor t(rows_in.size(), rows_in.front().size());
    for (size_t r = 0; r < t.rows; ++r) {
      if (rows_in[r].size() != t.cols) throw ValidationError("ragged rows in from_rows");
      for (size_t c = 0; c < t.cols; ++c) t.at(r, c) = rows_in[r][c];
    }
    return t;
  }

  double& at(size_t r, size_t c) { return data[r * cols + c]; }
  double at(size_t r, size_t c) const { return data[r * cols + c]; }

  size_t size() const { return rows * cols; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  std::string shape_str() const {
    return "[" + std::to_string(rows) + " x " + std::to_string(cols) + "]";
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ValidationError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                          b.shape_str());
}

}  // namespace muser
