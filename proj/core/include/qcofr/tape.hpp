#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "qcofr/tensor.hpp"

namespace qcofr {

struct TapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Handle to a node on a Tape.
struct Var {
  std::int32_t id = -1;
  bool valid() const { return id >= 0; }
};

enum class Op : std::uint8_t {
  kLeaf,
  kMatMul,
  kAdd,      // same shape, or rhs (1 x n) broadcast over rows
  kSub,
  kMul,      // elementwise
  kAffine,   // a * x + b
  kAbs,
  kMaxConst, // max(x, c)
  kRecip,
  kRelu,
  kSigmoid,
  kTanh,
  kExp,
  kLog,
  kSquare,
  kSoftmax,  // along last axis
  kRowSum,   // (m x n) -> (m x 1)
  kSumAll,
  kMeanAll,
  kConcatCols,
  kColSlice, // columns [i0, i0+i1)
  kReshape,
};

// Reverse-mode tape over rank-2 dense tensors. Nodes are created eagerly
// (define-by-run); values and gradients live in reusable arenas so a tape can
// be cleared and refilled every optimization step without reallocating.
//
// A tape is single-owner while being built; backward() is single-threaded.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Drops all nodes but keeps arena capacity.
  void clear();

  // Leaf bound to an external tensor: values are copied in now, and
  // backward() accumulates d(loss)/d(leaf) into t.grad when t.requires_grad.
  Var leaf(Tensor& t);
  // Unbound constant leaf (no gradient).
  Var constant(Shape shape, std::span<const double> values);
  Var constant_scalar(double v);
  Var zeros(Shape shape);

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var affine(Var a, double scale, double shift);
  Var neg(Var a) { return affine(a, -1.0, 0.0); }
  Var abs(Var a);
  Var max_const(Var a, double c);
  Var reciprocal(Var a);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var square(Var a);
  Var softmax(Var a);
  Var row_sum(Var a);
  Var sum(Var a);
  Var mean(Var a);
  Var concat_cols(std::span<const Var> parts);
  Var col_slice(Var a, int first, int width);
  Var reshape(Var a, Shape shape);

  // Accumulates gradients of `loss` (must be 1x1) into every bound leaf with
  // requires_grad. May be called repeatedly; leaf grads accumulate.
  void backward(Var loss);

  Shape shape(Var v) const { return nodes_[v.id].shape; }
  std::span<const double> value(Var v) const;
  double scalar(Var v) const;
  std::span<const double> grad(Var v) const;

  std::size_t size() const { return nodes_.size(); }

  // Smallest distance to a nondifferentiable point (|x| at 0, max(x,c) at c,
  // relu at 0) observed while building the current tape.
  double min_kink_margin() const { return min_kink_margin_; }

 private:
  struct Node {
    Op op;
    Shape shape;
    std::size_t off;  // offset into value/grad arenas
    std::int32_t in0 = -1, in1 = -1;
    double p0 = 0.0, p1 = 0.0;
    int i0 = 0, i1 = 0;
    std::int32_t extra_begin = 0, extra_count = 0;  // concat inputs
    bool needs_grad = false;
    Tensor* bound = nullptr;
  };

  std::int32_t push(Op op, Shape shape, std::int32_t in0, std::int32_t in1, bool needs_grad);
  double* vals(std::int32_t id) { return vbuf_.data() + nodes_[id].off; }
  const double* vals(std::int32_t id) const { return vbuf_.data() + nodes_[id].off; }
  double* grads(std::int32_t id) { return gbuf_.data() + nodes_[id].off; }
  void check(Var v) const;
  void track_kink(double margin);
  void backward_node(std::int32_t id);

  std::vector<Node> nodes_;
  std::vector<double> vbuf_;
  std::vector<double> gbuf_;
  std::vector<std::int32_t> extra_inputs_;
  double min_kink_margin_ = std::numeric_limits<double>::infinity();
};

// Independent-oracle gradient verification. `build` must construct the scalar
// loss on the given tape, creating leaves for every tensor in `leaves` via
// Tape::leaf. Central finite differences are compared against the tape
// gradient coordinate by coordinate.
struct GradCheckReport {
  double max_rel_dev = 0.0;
  int worst_leaf = -1;
  int worst_coord = -1;
  double min_kink_margin = std::numeric_limits<double>::infinity();
  bool ok = true;
};

GradCheckReport grad_check(const std::function<Var(Tape&)>& build,
                           std::span<Tensor* const> leaves, double step, double tol);

}  // namespace qcofr
