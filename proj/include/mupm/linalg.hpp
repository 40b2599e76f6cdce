#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "mupm/error.hpp"

namespace mupm {

// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Matrix from_rows(const std::vector<std::vector<double>>& rows_in) {
    Matrix m;
    m.rows = rows_in.size();
    m.cols = rows_in.empty() ? 0 : rows_in.front().size();
    m.data.reserve(m.rows * m.cols);
    for (const auto& r : rows_in) {
      require(r.size() == m.cols, ErrorCode::kDimensionMismatch,
              "ragged matrix rows");
      m.data.insert(m.data.end(), r.begin(), r.end());
    }
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }

  std::vector<std::vector<double>> to_rows() const {
    std::vector<std::vector<double>> out(rows);
    for (std::size_t r = 0; r < rows; ++r) out[r].assign(row(r).begin(), row(r).end());
    return out;
  }

  bool operator==(const Matrix&) const = default;
};

inline std::vector<double> matvec(const Matrix& m, std::span<const double> x) {
  require(x.size() == m.cols, ErrorCode::kDimensionMismatch,
          "matvec: vector length does not match matrix columns");
  std::vector<double> y(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) acc += m(r, c) * x[c];
    y[r] = acc;
  }
  return y;
}

inline double l2_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Mean and sample standard deviation (denominator n-1) by Welford's update,
// which returns exactly zero spread for identical inputs.
struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

inline MeanStd mean_std(std::span<const double> v) {
  double m = 0.0;
  double m2 = 0.0;
  std::size_t k = 0;
  for (double x : v) {
    ++k;
    const double delta = x - m;
    m += delta / static_cast<double>(k);
    m2 += delta * (x - m);
  }
  MeanStd out;
  out.mean = m;
  out.std = k > 1 ? std::sqrt(std::max(0.0, m2) / static_cast<double>(k - 1)) : 0.0;
  return out;
}

}  // namespace mupm
