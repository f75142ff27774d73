#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace qcofr {

// All tensors in this codebase are rank-2 (scalars are 1x1, vectors 1xN or
// Nx1). That is all the networks here need.
struct Shape {
  int rows = 0;
  int cols = 0;

  int count() const { return rows * cols; }
  bool operator==(const Shape&) const = default;
  std::string str() const { return std::to_string(rows) + "x" + std::to_string(cols); }
};

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dense row-major tensor. `grad` is allocated (zero-filled) only when
// requires_grad is set.
struct Tensor {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  std::vector<double> grad;

  Tensor() = default;
  Tensor(Shape s, double fill = 0.0, bool rg = false)
      : shape(s), values(static_cast<std::size_t>(s.count()), fill), requires_grad(rg) {
    if (rg) grad.assign(values.size(), 0.0);
  }
  Tensor(Shape s, std::vector<double> v, bool rg = false)
      : shape(s), values(std::move(v)), requires_grad(rg) {
    if (static_cast<int>(values.size()) != s.count())
      throw ShapeError("tensor: value count " + std::to_string(values.size()) +
                       " does not match shape " + s.str());
    if (rg) grad.assign(values.size(), 0.0);
  }

  double& at(int r, int c) { return values[static_cast<std::size_t>(r) * shape.cols + c]; }
  double at(int r, int c) const { return values[static_cast<std::size_t>(r) * shape.cols + c]; }
  void zero_grad() {
    if (requires_grad) grad.assign(values.size(), 0.0);
  }
};

namespace kernels {

// C (m x n) = A (m x k) * B (k x n), accumulating into C when acc is true.
void matmul_nn(const double* a, const double* b, double* c, int m, int k, int n, bool acc);
// C (m x n) = A (m x k) * B^T with B stored (n x k).
void matmul_nt(const double* a, const double* b, double* c, int m, int k, int n, bool acc);
// C (m x n) = A^T * B with A stored (k x m), B (k x n).
void matmul_tn(const double* a, const double* b, double* c, int m, int k, int n, bool acc);

}  // namespace kernels

}  // namespace qcofr
