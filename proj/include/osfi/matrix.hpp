#pragma once

#include <cstddef>
#include <vector>

namespace osfi {

// Dense row-major matrix of doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const {
    return a.data() + static_cast<size_t>(r) * cols;
  }
  double& operator()(int r, int c) {
    return a[static_cast<size_t>(r) * cols + c];
  }
  double operator()(int r, int c) const {
    return a[static_cast<size_t>(r) * cols + c];
  }
  size_t size() const { return a.size(); }
  bool same_shape(const Matrix& o) const {
    return rows == o.rows && cols == o.cols;
  }
};

}  // namespace osfi
