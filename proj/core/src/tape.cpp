#include "qcofr/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace qcofr {

namespace {

[[noreturn]] void shape_fail(const char* op, Shape a, Shape b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.str() + " and " + b.str());
}

}  // namespace

void Tape::clear() {
  nodes_.clear();
  vbuf_.clear();
  gbuf_.clear();
  extra_inputs_.clear();
  min_kink_margin_ = std::numeric_limits<double>::infinity();
}

void Tape::check(Var v) const {
  if (!v.valid() || v.id >= static_cast<std::int32_t>(nodes_.size()))
    throw TapeError("invalid tape handle");
}

void Tape::track_kink(double margin) { min_kink_margin_ = std::min(min_kink_margin_, margin); }

std::int32_t Tape::push(Op op, Shape shape, std::int32_t in0, std::int32_t in1, bool needs_grad) {
  Node n;
  n.op = op;
  n.shape = shape;
  n.off = vbuf_.size();
  n.in0 = in0;
  n.in1 = in1;
  n.needs_grad = needs_grad;
  vbuf_.resize(vbuf_.size() + static_cast<std::size_t>(shape.count()));
  nodes_.push_back(n);
  return static_cast<std::int32_t>(nodes_.size()) - 1;
}

Var Tape::leaf(Tensor& t) {
  const std::int32_t id = push(Op::kLeaf, t.shape, -1, -1, t.requires_grad);
  nodes_[id].bound = &t;
  std::memcpy(vals(id), t.values.data(), sizeof(double) * t.values.size());
  return {id};
}

Var Tape::constant(Shape shape, std::span<const double> values) {
  if (static_cast<int>(values.size()) != shape.count())
    throw ShapeError("constant: value count does not match shape " + shape.str());
  const std::int32_t id = push(Op::kLeaf, shape, -1, -1, false);
  std::memcpy(vals(id), values.data(), sizeof(double) * values.size());
  return {id};
}

Var Tape::constant_scalar(double v) { return constant({1, 1}, std::span<const double>(&v, 1)); }

Var Tape::zeros(Shape shape) {
  const std::int32_t id = push(Op::kLeaf, shape, -1, -1, false);
  std::memset(vals(id), 0, sizeof(double) * static_cast<std::size_t>(shape.count()));
  return {id};
}

Var Tape::matmul(Var a, Var b) {
  check(a);
  check(b);
  const Shape sa = nodes_[a.id].shape, sb = nodes_[b.id].shape;
  if (sa.cols != sb.rows) shape_fail("matmul", sa, sb);
  const std::int32_t id = push(Op::kMatMul, {sa.rows, sb.cols}, a.id, b.id,
                               nodes_[a.id].needs_grad || nodes_[b.id].needs_grad);
  kernels::matmul_nn(vals(a.id), vals(b.id), vals(id), sa.rows, sa.cols, sb.cols, false);
  return {id};
}

Var Tape::add(Var a, Var b) {
  check(a);
  check(b);
  const Shape sa = nodes_[a.id].shape, sb = nodes_[b.id].shape;
  const bool broadcast = (sb.rows == 1 && sa.cols == sb.cols && sa.rows != 1);
  if (!(sa == sb) && !broadcast) shape_fail("add", sa, sb);
  const std::int32_t id =
      push(Op::kAdd, sa, a.id, b.id, nodes_[a.id].needs_grad || nodes_[b.id].needs_grad);
  const double* pa = vals(a.id);
  const double* pb = vals(b.id);
  double* po = vals(id);
  if (broadcast) {
    for (int r = 0; r < sa.rows; ++r)
      for (int c = 0; c < sa.cols; ++c) po[r * sa.cols + c] = pa[r * sa.cols + c] + pb[c];
  } else {
    for (int i = 0; i < sa.count(); ++i) po[i] = pa[i] + pb[i];
  }
  return {id};
}

Var Tape::sub(Var a, Var b) {
  check(a);
  check(b);
  const Shape sa = nodes_[a.id].shape, sb = nodes_[b.id].shape;
  if (!(sa == sb)) shape_fail("sub", sa, sb);
  const std::int32_t id =
      push(Op::kSub, sa, a.id, b.id, nodes_[a.id].needs_grad || nodes_[b.id].needs_grad);
  const double* pa = vals(a.id);
  const double* pb = vals(b.id);
  double* po = vals(id);
  for (int i = 0; i < sa.count(); ++i) po[i] = pa[i] - pb[i];
  return {id};
}

Var Tape::mul(Var a, Var b) {
  check(a);
  check(b);
  const Shape sa = nodes_[a.id].shape, sb = nodes_[b.id].shape;
  if (!(sa == sb)) shape_fail("mul", sa, sb);
  const std::int32_t id =
      push(Op::kMul, sa, a.id, b.id, nodes_[a.id].needs_grad || nodes_[b.id].needs_grad);
  const double* pa = vals(a.id);
  const double* pb = vals(b.id);
  double* po = vals(id);
  for (int i = 0; i < sa.count(); ++i) po[i] = pa[i] * pb[i];
  return {id};
}

Var Tape::affine(Var a, double scale, double shift) {
  check(a);
  const Shape s = nodes_[a.id].shape;
  const std::int32_t id = push(Op::kAffine, s, a.id, -1, nodes_[a.id].needs_grad);
  nodes_[id].p0 = scale;
  nodes_[id].p1 = shift;
  const double* pa = vals(a.id);
  double* po = vals(id);
  for (int i = 0; i < s.count(); ++i) po[i] = scale * pa[i] + shift;
  return {id};
}

#define QCOFR_UNARY_PROLOGUE(opname)                                              \
  check(a);                                                                       \
  const Shape s = nodes_[a.id].shape;                                             \
  const std::int32_t id = push(opname, s, a.id, -1, nodes_[a.id].needs_grad);     \
  const double* pa = vals(a.id);                                                  \
  double* po = vals(id);

Var Tape::abs(Var a) {
  QCOFR_UNARY_PROLOGUE(Op::kAbs)
  for (int i = 0; i < s.count(); ++i) {
    po[i] = std::fabs(pa[i]);
    track_kink(po[i]);
  }
  return {id};
}

Var Tape::max_const(Var a, double c) {
  QCOFR_UNARY_PROLOGUE(Op::kMaxConst)
  nodes_[id].p0 = c;
  for (int i = 0; i < s.count(); ++i) {
    po[i] = pa[i] > c ? pa[i] : c;
    track_kink(std::fabs(pa[i] - c));
  }
  return {id};
}

Var Tape::reciprocal(Var a) {
  QCOFR_UNARY_PROLOGUE(Op::kRecip)
  for (int i = 0; i < s.count(); ++i) po[i] = 1.0 / pa[i];
  return {id};
}

Var Tape::relu(Var a) {
  QCOFR_UNARY_PROLOGUE(Op::kRelu)
  for (int i = 0; i < s.count(); ++i) {
    po[i] = pa[i] > 0.0 ? pa[i] : 0.0;
    track_kink(std::fabs(pa[i]));
  }
  return {id};
}

Var Tape::sigmoid(Var a) {
  QCOFR_UNARY_PROLOGUE(Op::kSigmoid)
  for (int i = 0; i < s.count(); ++i) po[i] = 1.0 / (1.0 + std::exp(-pa[i]));
  return {id};
}

Var Tape::tanh(Var a) {
  QCOFR_UNARY_PROLOGUE(Op::kTanh)
  for (int i = 0; i < s.count(); ++i) po[i] = std::tanh(pa[i]);
  return {id};
}

Var Tape::exp(Var a) {
  QCOFR_UNARY_PROLOGUE(Op::kExp)
  for (int i = 0; i < s.count(); ++i) po[i] = std::exp(pa[i]);
  return {id};
}

Var Tape::log(Var a) {
  QCOFR_UNARY_PROLOGUE(Op::kLog)
  for (int i = 0; i < s.count(); ++i) po[i] = std::log(pa[i]);
  return {id};
}

Var Tape::square(Var a) {
  QCOFR_UNARY_PROLOGUE(Op::kSquare)
  for (int i = 0; i < s.count(); ++i) po[i] = pa[i] * pa[i];
  return {id};
}

Var Tape::softmax(Var a) {
  QCOFR_UNARY_PROLOGUE(Op::kSoftmax)
  for (int r = 0; r < s.rows; ++r) {
    const double* row = pa + static_cast<std::size_t>(r) * s.cols;
    double* out = po + static_cast<std::size_t>(r) * s.cols;
    double mx = row[0];
    for (int c = 1; c < s.cols; ++c) mx = std::max(mx, row[c]);
    double z = 0.0;
    for (int c = 0; c < s.cols; ++c) {
      out[c] = std::exp(row[c] - mx);
      z += out[c];
    }
    for (int c = 0; c < s.cols; ++c) out[c] /= z;
  }
  return {id};
}

#undef QCOFR_UNARY_PROLOGUE

Var Tape::row_sum(Var a) {
  check(a);
  const Shape s = nodes_[a.id].shape;
  const std::int32_t id = push(Op::kRowSum, {s.rows, 1}, a.id, -1, nodes_[a.id].needs_grad);
  const double* pa = vals(a.id);
  double* po = vals(id);
  for (int r = 0; r < s.rows; ++r) {
    double acc = 0.0;
    for (int c = 0; c < s.cols; ++c) acc += pa[static_cast<std::size_t>(r) * s.cols + c];
    po[r] = acc;
  }
  return {id};
}

Var Tape::sum(Var a) {
  check(a);
  const Shape s = nodes_[a.id].shape;
  const std::int32_t id = push(Op::kSumAll, {1, 1}, a.id, -1, nodes_[a.id].needs_grad);
  const double* pa = vals(a.id);
  double acc = 0.0;
  for (int i = 0; i < s.count(); ++i) acc += pa[i];
  vals(id)[0] = acc;
  return {id};
}

Var Tape::mean(Var a) {
  check(a);
  const Shape s = nodes_[a.id].shape;
  if (s.count() == 0) throw TapeError("mean of empty tensor");
  const std::int32_t id = push(Op::kMeanAll, {1, 1}, a.id, -1, nodes_[a.id].needs_grad);
  const double* pa = vals(a.id);
  double acc = 0.0;
  for (int i = 0; i < s.count(); ++i) acc += pa[i];
  vals(id)[0] = acc / s.count();
  return {id};
}

Var Tape::concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw TapeError("concat_cols: no inputs");
  int rows = -1, cols = 0;
  bool needs = false;
  for (Var p : parts) {
    check(p);
    const Shape s = nodes_[p.id].shape;
    if (rows < 0) rows = s.rows;
    if (s.rows != rows) shape_fail("concat_cols", {rows, cols}, s);
    cols += s.cols;
    needs = needs || nodes_[p.id].needs_grad;
  }
  const std::int32_t id = push(Op::kConcatCols, {rows, cols}, -1, -1, needs);
  nodes_[id].extra_begin = static_cast<std::int32_t>(extra_inputs_.size());
  nodes_[id].extra_count = static_cast<std::int32_t>(parts.size());
  for (Var p : parts) extra_inputs_.push_back(p.id);
  double* po = vals(id);
  int at = 0;
  for (Var p : parts) {
    const Shape s = nodes_[p.id].shape;
    const double* pp = vals(p.id);
    for (int r = 0; r < rows; ++r)
      std::memcpy(po + static_cast<std::size_t>(r) * cols + at,
                  pp + static_cast<std::size_t>(r) * s.cols, sizeof(double) * s.cols);
    at += s.cols;
  }
  return {id};
}

Var Tape::col_slice(Var a, int first, int width) {
  check(a);
  const Shape s = nodes_[a.id].shape;
  if (first < 0 || width <= 0 || first + width > s.cols)
    throw ShapeError("col_slice: range [" + std::to_string(first) + ", " +
                     std::to_string(first + width) + ") out of " + s.str());
  const std::int32_t id = push(Op::kColSlice, {s.rows, width}, a.id, -1, nodes_[a.id].needs_grad);
  nodes_[id].i0 = first;
  nodes_[id].i1 = width;
  const double* pa = vals(a.id);
  double* po = vals(id);
  for (int r = 0; r < s.rows; ++r)
    std::memcpy(po + static_cast<std::size_t>(r) * width,
                pa + static_cast<std::size_t>(r) * s.cols + first, sizeof(double) * width);
  return {id};
}

Var Tape::reshape(Var a, Shape shape) {
  check(a);
  const Shape s = nodes_[a.id].shape;
  if (s.count() != shape.count()) shape_fail("reshape", s, shape);
  const std::int32_t id = push(Op::kReshape, shape, a.id, -1, nodes_[a.id].needs_grad);
  std::memcpy(vals(id), vals(a.id), sizeof(double) * static_cast<std::size_t>(s.count()));
  return {id};
}

std::span<const double> Tape::value(Var v) const {
  check(v);
  return {vals(v.id), static_cast<std::size_t>(nodes_[v.id].shape.count())};
}

double Tape::scalar(Var v) const {
  check(v);
  if (nodes_[v.id].shape.count() != 1) throw TapeError("scalar() on non-scalar node");
  return vals(v.id)[0];
}

std::span<const double> Tape::grad(Var v) const {
  check(v);
  if (gbuf_.size() < vbuf_.size()) throw TapeError("grad read before backward()");
  return {gbuf_.data() + nodes_[v.id].off, static_cast<std::size_t>(nodes_[v.id].shape.count())};
}

void Tape::backward(Var loss) {
  check(loss);
  if (nodes_[loss.id].shape.count() != 1) throw TapeError("backward: loss is not scalar");
  gbuf_.assign(vbuf_.size(), 0.0);
  gbuf_[nodes_[loss.id].off] = 1.0;
  for (std::int32_t id = loss.id; id >= 0; --id) {
    if (!nodes_[id].needs_grad) continue;
    backward_node(id);
  }
  // Scatter accumulated leaf gradients into their bound tensors.
  for (std::int32_t id = 0; id <= loss.id; ++id) {
    const Node& n = nodes_[id];
    if (n.op == Op::kLeaf && n.bound != nullptr && n.bound->requires_grad) {
      const double* g = gbuf_.data() + n.off;
      double* dst = n.bound->grad.data();
      for (int i = 0; i < n.shape.count(); ++i) dst[i] += g[i];
    }
  }
}

void Tape::backward_node(std::int32_t id) {
  const Node& n = nodes_[id];
  const double* gy = gbuf_.data() + n.off;
  const double* y = vals(id);
  const int cnt = n.shape.count();
  switch (n.op) {
    case Op::kLeaf:
      break;
    case Op::kMatMul: {
      const Node& na = nodes_[n.in0];
      const Node& nb = nodes_[n.in1];
      const int m = na.shape.rows, k = na.shape.cols, c = nb.shape.cols;
      if (na.needs_grad)
        kernels::matmul_nt(gy, vals(n.in1), gbuf_.data() + na.off, m, c, k, true);
      if (nb.needs_grad)
        kernels::matmul_tn(vals(n.in0), gy, gbuf_.data() + nb.off, k, m, c, true);
      break;
    }
    case Op::kAdd: {
      const Node& na = nodes_[n.in0];
      const Node& nb = nodes_[n.in1];
      if (na.needs_grad) {
        double* ga = gbuf_.data() + na.off;
        for (int i = 0; i < cnt; ++i) ga[i] += gy[i];
      }
      if (nb.needs_grad) {
        double* gb = gbuf_.data() + nb.off;
        if (nb.shape.rows == 1 && n.shape.rows != 1) {
          for (int r = 0; r < n.shape.rows; ++r)
            for (int c = 0; c < n.shape.cols; ++c) gb[c] += gy[r * n.shape.cols + c];
        } else {
          for (int i = 0; i < cnt; ++i) gb[i] += gy[i];
        }
      }
      break;
    }
    case Op::kSub: {
      if (nodes_[n.in0].needs_grad) {
        double* ga = gbuf_.data() + nodes_[n.in0].off;
        for (int i = 0; i < cnt; ++i) ga[i] += gy[i];
      }
      if (nodes_[n.in1].needs_grad) {
        double* gb = gbuf_.data() + nodes_[n.in1].off;
        for (int i = 0; i < cnt; ++i) gb[i] -= gy[i];
      }
      break;
    }
    case Op::kMul: {
      if (nodes_[n.in0].needs_grad) {
        double* ga = gbuf_.data() + nodes_[n.in0].off;
        const double* b = vals(n.in1);
        for (int i = 0; i < cnt; ++i) ga[i] += gy[i] * b[i];
      }
      if (nodes_[n.in1].needs_grad) {
        double* gb = gbuf_.data() + nodes_[n.in1].off;
        const double* a = vals(n.in0);
        for (int i = 0; i < cnt; ++i) gb[i] += gy[i] * a[i];
      }
      break;
    }
    case Op::kAffine: {
      double* ga = gbuf_.data() + nodes_[n.in0].off;
      for (int i = 0; i < cnt; ++i) ga[i] += n.p0 * gy[i];
      break;
    }
    case Op::kAbs: {
      double* ga = gbuf_.data() + nodes_[n.in0].off;
      const double* x = vals(n.in0);
      for (int i = 0; i < cnt; ++i) ga[i] += (x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0)) * gy[i];
      break;
    }
    case Op::kMaxConst: {
      // Subgradient 0 at the boundary: the floor is treated as active.
      double* ga = gbuf_.data() + nodes_[n.in0].off;
      const double* x = vals(n.in0);
      for (int i = 0; i < cnt; ++i) ga[i] += (x[i] > n.p0 ? 1.0 : 0.0) * gy[i];
      break;
    }
    case Op::kRecip: {
      double* ga = gbuf_.data() + nodes_[n.in0].off;
      for (int i = 0; i < cnt; ++i) ga[i] -= y[i] * y[i] * gy[i];
      break;
    }
    case Op::kRelu: {
      double* ga = gbuf_.data() + nodes_[n.in0].off;
      const double* x = vals(n.in0);
      for (int i = 0; i < cnt; ++i) ga[i] += (x[i] > 0.0 ? 1.0 : 0.0) * gy[i];
      break;
    }
    case Op::kSigmoid: {
      double* ga = gbuf_.data() + nodes_[n.in0].off;
      for (int i = 0; i < cnt; ++i) ga[i] += y[i] * (1.0 - y[i]) * gy[i];
      break;
    }
    case Op::kTanh: {
      double* ga = gbuf_.data() + nodes_[n.in0].off;
      for (int i = 0; i < cnt; ++i) ga[i] += (1.0 - y[i] * y[i]) * gy[i];
      break;
    }
    case Op::kExp: {
      double* ga = gbuf_.data() + nodes_[n.in0].off;
      for (int i = 0; i < cnt; ++i) ga[i] += y[i] * gy[i];
      break;
    }
    case Op::kLog: {
      double* ga = gbuf_.data() + nodes_[n.in0].off;
      const double* x = vals(n.in0);
      for (int i = 0; i < cnt; ++i) ga[i] += gy[i] / x[i];
      break;
    }
    case Op::kSquare: {
      double* ga = gbuf_.data() + nodes_[n.in0].off;
      const double* x = vals(n.in0);
      for (int i = 0; i < cnt; ++i) ga[i] += 2.0 * x[i] * gy[i];
      break;
    }
    case Op::kSoftmax: {
      double* ga = gbuf_.data() + nodes_[n.in0].off;
      const int cols = n.shape.cols;
      for (int r = 0; r < n.shape.rows; ++r) {
        const double* yr = y + static_cast<std::size_t>(r) * cols;
        const double* gr = gy + static_cast<std::size_t>(r) * cols;
        double dot = 0.0;
        for (int c = 0; c < cols; ++c) dot += yr[c] * gr[c];
        double* gar = ga + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) gar[c] += yr[c] * (gr[c] - dot);
      }
      break;
    }
    case Op::kRowSum: {
      double* ga = gbuf_.data() + nodes_[n.in0].off;
      const int cols = nodes_[n.in0].shape.cols;
      for (int r = 0; r < n.shape.rows; ++r)
        for (int c = 0; c < cols; ++c) ga[static_cast<std::size_t>(r) * cols + c] += gy[r];
      break;
    }
    case Op::kSumAll: {
      double* ga = gbuf_.data() + nodes_[n.in0].off;
      const int icnt = nodes_[n.in0].shape.count();
      for (int i = 0; i < icnt; ++i) ga[i] += gy[0];
      break;
    }
    case Op::kMeanAll: {
      double* ga = gbuf_.data() + nodes_[n.in0].off;
      const int icnt = nodes_[n.in0].shape.count();
      const double g = gy[0] / icnt;
      for (int i = 0; i < icnt; ++i) ga[i] += g;
      break;
    }
    case Op::kConcatCols: {
      int at = 0;
      for (std::int32_t e = 0; e < n.extra_count; ++e) {
        const std::int32_t pid = extra_inputs_[n.extra_begin + e];
        const Node& np = nodes_[pid];
        if (np.needs_grad) {
          double* gp = gbuf_.data() + np.off;
          for (int r = 0; r < n.shape.rows; ++r)
            for (int c = 0; c < np.shape.cols; ++c)
              gp[static_cast<std::size_t>(r) * np.shape.cols + c] +=
                  gy[static_cast<std::size_t>(r) * n.shape.cols + at + c];
        }
        at += np.shape.cols;
      }
      break;
    }
    case Op::kColSlice: {
      double* ga = gbuf_.data() + nodes_[n.in0].off;
      const int icols = nodes_[n.in0].shape.cols;
      for (int r = 0; r < n.shape.rows; ++r)
        for (int c = 0; c < n.shape.cols; ++c)
          ga[static_cast<std::size_t>(r) * icols + n.i0 + c] +=
              gy[static_cast<std::size_t>(r) * n.shape.cols + c];
      break;
    }
    case Op::kReshape: {
      double* ga = gbuf_.data() + nodes_[n.in0].off;
      for (int i = 0; i < cnt; ++i) ga[i] += gy[i];
      break;
    }
  }
}

GradCheckReport grad_check(const std::function<Var(Tape&)>& build,
                           std::span<Tensor* const> leaves, double step, double tol) {
  GradCheckReport report;

  Tape tape;
  const Var loss = build(tape);
  if (tape.shape(loss).count() != 1) throw TapeError("grad_check: loss is not scalar");
  report.min_kink_margin = tape.min_kink_margin();
  for (Tensor* t : leaves) t->zero_grad();
  tape.backward(loss);

  const auto eval = [&](int li, int ci) {
    Tensor* t = leaves[li];
    const double saved = t->values[ci];
    t->values[ci] = saved + step;
    Tape tp;
    const double up = tp.scalar(build(tp));
    t->values[ci] = saved - step;
    Tape tm;
    const double down = tm.scalar(build(tm));
    t->values[ci] = saved;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw TapeError("grad_check: non-finite value at leaf " + std::to_string(li) +
                      " coordinate " + std::to_string(ci));
    return (up - down) / (2.0 * step);
  };

  for (int li = 0; li < static_cast<int>(leaves.size()); ++li) {
    Tensor* t = leaves[li];
    if (!t->requires_grad) continue;
    for (int ci = 0; ci < t->shape.count(); ++ci) {
      const double fd = eval(li, ci);
      const double g = t->grad[ci];
      if (!std::isfinite(g))
        throw TapeError("grad_check: non-finite gradient at leaf " + std::to_string(li) +
                        " coordinate " + std::to_string(ci));
      const double denom = std::max({std::fabs(g), std::fabs(fd), 1e-3});
      const double rel = std::fabs(g - fd) / denom;
      if (rel > report.max_rel_dev) {
        report.max_rel_dev = rel;
        report.worst_leaf = li;
        report.worst_coord = ci;
      }
    }
  }
  report.ok = report.max_rel_dev <= tol;
  return report;
}

}  // namespace qcofr
