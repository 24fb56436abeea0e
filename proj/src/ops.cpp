#include "metadg/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "metadg/kernels.hpp"

namespace metadg {

using detail::make_result;
using kernels::kParallelGrain;

namespace {

std::vector<double>& grad_of(TensorImpl& node, std::size_t input) {
  return node.inputs[input]->ensure_grad();
}

bool wants_grad(const TensorImpl& node, std::size_t input) {
  return input < node.inputs.size() && node.inputs[input]->requires_grad;
}

// ---- broadcasting -------------------------------------------------------

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::int64_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw ShapeError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[i] = std::max(da, db);
  }
  return out;
}

// Offset into an operand of shape `in` for every element of `out`.
std::vector<std::int64_t> broadcast_offsets(const Shape& in, const Shape& out) {
  const std::size_t r = out.size();
  std::vector<std::int64_t> stride(r, 0);
  std::int64_t s = 1;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const std::size_t axis = in.size() - 1 - i;
    const std::size_t oaxis = r - 1 - i;
    stride[oaxis] = in[axis] == 1 ? 0 : s;
    s *= in[axis];
  }
  const std::int64_t n = shape_numel(out);
  std::vector<std::int64_t> offsets(static_cast<std::size_t>(n));
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t off = 0;
  for (std::int64_t e = 0; e < n; ++e) {
    offsets[static_cast<std::size_t>(e)] = off;
    for (std::size_t ax = r; ax-- > 0;) {
      ++idx[ax];
      off += stride[ax];
      if (idx[ax] < out[ax]) break;
      off -= stride[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return offsets;
}

enum class BinOp { add, sub, mul };

Tensor binary(const Tensor& a, const Tensor& b, BinOp op) {
  const Shape out_shape = broadcast_shape(a.shape(), b.shape());
  const std::int64_t n = shape_numel(out_shape);
  std::vector<double> out(static_cast<std::size_t>(n));
  const bool same_a = a.shape() == out_shape;
  const bool same_b = b.shape() == out_shape;
  std::vector<std::int64_t> oa, ob;
  if (!same_a) oa = broadcast_offsets(a.shape(), out_shape);
  if (!same_b) ob = broadcast_offsets(b.shape(), out_shape);
  const double* pa = a.data().data();
  const double* pb = b.data().data();

#pragma omp parallel for schedule(static) if (n >= kParallelGrain)
  for (std::int64_t e = 0; e < n; ++e) {
    const double x = pa[same_a ? e : oa[static_cast<std::size_t>(e)]];
    const double y = pb[same_b ? e : ob[static_cast<std::size_t>(e)]];
    double r = 0.0;
    switch (op) {
      case BinOp::add: r = x + y; break;
      case BinOp::sub: r = x - y; break;
      case BinOp::mul: r = x * y; break;
    }
    out[static_cast<std::size_t>(e)] = r;
  }

  return make_result(
      out_shape, std::move(out), {a, b},
      [op, n, same_a, same_b, oa = std::move(oa), ob = std::move(ob)](TensorImpl& node) {
        const auto& g = node.grad;
        for (std::size_t side = 0; side < 2; ++side) {
          if (!wants_grad(node, side)) continue;
          auto& dst = grad_of(node, side);
          const bool same = side == 0 ? same_a : same_b;
          const auto& offs = side == 0 ? oa : ob;
          const auto& other = node.inputs[1 - side]->data;
          const auto& other_offs = side == 0 ? ob : oa;
          const bool other_same = side == 0 ? same_b : same_a;
          auto local = [&](std::int64_t e) {
            const double ge = g[static_cast<std::size_t>(e)];
            switch (op) {
              case BinOp::add: return ge;
              case BinOp::sub: return side == 0 ? ge : -ge;
              case BinOp::mul:
                return ge * other[static_cast<std::size_t>(
                                other_same ? e : other_offs[static_cast<std::size_t>(e)])];
            }
            return 0.0;
          };
          if (same) {
#pragma omp parallel for schedule(static) if (n >= kParallelGrain)
            for (std::int64_t e = 0; e < n; ++e) dst[static_cast<std::size_t>(e)] += local(e);
          } else {
            for (std::int64_t e = 0; e < n; ++e) {
              dst[static_cast<std::size_t>(offs[static_cast<std::size_t>(e)])] += local(e);
            }
          }
        }
      });
}

// ---- unary --------------------------------------------------------------

// `deriv(x, y)` is dy/dx at input x with output y.
template <typename F, typename D>
Tensor unary(const Tensor& a, F f, D deriv) {
  const std::int64_t n = a.numel();
  std::vector<double> out(static_cast<std::size_t>(n));
  const double* pa = a.data().data();
#pragma omp parallel for schedule(static) if (n >= kParallelGrain)
  for (std::int64_t e = 0; e < n; ++e) out[static_cast<std::size_t>(e)] = f(pa[e]);
  return make_result(a.shape(), std::move(out), {a}, [n, deriv](TensorImpl& node) {
    auto& dst = grad_of(node, 0);
    const auto& x = node.inputs[0]->data;
#pragma omp parallel for schedule(static) if (n >= kParallelGrain)
    for (std::int64_t e = 0; e < n; ++e) {
      const auto i = static_cast<std::size_t>(e);
      dst[i] += node.grad[i] * deriv(x[i], node.data[i]);
    }
  });
}

// ---- matrix products ----------------------------------------------------

struct Operand {
  const Tensor* t;
  bool batched;
  std::int64_t rows, cols;
};

Operand as_operand(const Tensor& t, const char* what) {
  if (t.rank() == 3) return {&t, true, t.dim(1), t.dim(2)};
  if (t.rank() == 2) return {&t, false, t.dim(0), t.dim(1)};
  throw ShapeError(std::string("bmm: ") + what + " must be rank 2 or 3, got " +
                   shape_str(t.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::add); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::sub); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary(a, b, BinOp::mul); }

Tensor add_scalar(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor scale(const Tensor& a, double s) {
  return unary(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor one_minus(const Tensor& a) {
  return unary(a, [](double x) { return 1.0 - x; }, [](double, double) { return -1.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  const Operand oa = as_operand(a, "lhs");
  const Operand ob = as_operand(b, "rhs");
  const std::int64_t m = trans_a ? oa.cols : oa.rows;
  const std::int64_t k = trans_a ? oa.rows : oa.cols;
  const std::int64_t kb = trans_b ? ob.cols : ob.rows;
  const std::int64_t n = trans_b ? ob.rows : ob.cols;
  if (k != kb) {
    throw ShapeError("bmm: inner extents differ: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  std::int64_t batch = 1;
  if (oa.batched && ob.batched && a.dim(0) != b.dim(0)) {
    throw ShapeError("bmm: batch extents differ: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  if (oa.batched) batch = a.dim(0);
  if (ob.batched) batch = b.dim(0);
  const bool out_batched = oa.batched || ob.batched;

  std::vector<double> out(static_cast<std::size_t>(batch * m * n));
  kernels::GemmArgs g;
  g.trans_a = trans_a;
  g.trans_b = trans_b;
  g.batch = batch;
  g.m = m;
  g.n = n;
  g.k = k;
  g.a = a.data().data();
  g.stride_a = oa.batched ? oa.rows * oa.cols : 0;
  g.b = b.data().data();
  g.stride_b = ob.batched ? ob.rows * ob.cols : 0;
  g.c = out.data();
  g.stride_c = m * n;
  kernels::omp::gemm(g);

  Shape shape = out_batched ? Shape{batch, m, n} : Shape{m, n};
  return make_result(
      std::move(shape), std::move(out), {a, b},
      [=](TensorImpl& node) {
        const double* dc = node.grad.data();
        const double* pa = node.inputs[0]->data.data();
        const double* pb = node.inputs[1]->data.data();
        const std::int64_t sa = oa.batched ? oa.rows * oa.cols : 0;
        const std::int64_t sb = ob.batched ? ob.rows * ob.cols : 0;
        if (wants_grad(node, 0)) {
          kernels::GemmArgs d;
          d.batch = batch;
          d.accumulate = true;
          d.c = grad_of(node, 0).data();
          d.stride_c = sa;
          if (!trans_a) {  // dA = dC op(B)^T
            d.m = m, d.n = k, d.k = n;
            d.a = dc, d.stride_a = m * n, d.trans_a = false;
            d.b = pb, d.stride_b = sb, d.trans_b = !trans_b;
          } else {  // dA = op(B) dC^T
            d.m = k, d.n = m, d.k = n;
            d.a = pb, d.stride_a = sb, d.trans_a = trans_b;
            d.b = dc, d.stride_b = m * n, d.trans_b = true;
          }
          kernels::omp::gemm(d);
        }
        if (wants_grad(node, 1)) {
          kernels::GemmArgs d;
          d.batch = batch;
          d.accumulate = true;
          d.c = grad_of(node, 1).data();
          d.stride_c = sb;
          if (!trans_b) {  // dB = op(A)^T dC
            d.m = k, d.n = n, d.k = m;
            d.a = pa, d.stride_a = sa, d.trans_a = !trans_a;
            d.b = dc, d.stride_b = m * n, d.trans_b = false;
          } else {  // dB = dC^T op(A)
            d.m = n, d.n = k, d.k = m;
            d.a = dc, d.stride_a = m * n, d.trans_a = true;
            d.b = pa, d.stride_b = sa, d.trans_b = trans_a;
          }
          kernels::omp::gemm(d);
        }
      });
}

Tensor matmul(const Tensor& x, const Tensor& w) {
  if (w.rank() != 2 || x.rank() < 1 || x.dim(-1) != w.dim(0)) {
    throw ShapeError("matmul: " + shape_str(x.shape()) + " * " + shape_str(w.shape()));
  }
  const std::int64_t k = w.dim(0);
  Shape out_shape = x.shape();
  out_shape.back() = w.dim(1);
  Tensor flat = reshape(x, {x.numel() / k, k});
  return reshape(bmm(flat, w), std::move(out_shape));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add(matmul(x, w), b);
}

Tensor softmax_last(const Tensor& a) {
  const std::int64_t cols = a.dim(-1);
  const std::int64_t rows = a.numel() / cols;
  std::vector<double> out(static_cast<std::size_t>(a.numel()));
  kernels::omp::softmax_rows({rows, cols, a.data().data(), out.data()});
  return make_result(a.shape(), std::move(out), {a}, [rows, cols](TensorImpl& node) {
    auto& dst = grad_of(node, 0);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelGrain)
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* y = node.data.data() + r * cols;
      const double* g = node.grad.data() + r * cols;
      double dot = 0.0;
      for (std::int64_t j = 0; j < cols; ++j) dot += g[j] * y[j];
      for (std::int64_t j = 0; j < cols; ++j) {
        dst[static_cast<std::size_t>(r * cols + j)] += y[j] * (g[j] - dot);
      }
    }
  });
}

Tensor row_normalize(const Tensor& a, ZeroRow policy) {
  if (a.rank() < 2) throw ShapeError("row_normalize needs rank >= 2");
  const std::int64_t cols = a.dim(-1);
  const std::int64_t n = a.dim(-2);
  const std::int64_t batch = a.numel() / (n * cols);
  if (policy == ZeroRow::self_loop && n != cols) {
    throw ShapeError("row_normalize: self-loop fallback needs square rows, got " +
                     shape_str(a.shape()));
  }
  std::vector<double> out(static_cast<std::size_t>(a.numel()));
  std::vector<double> sums(static_cast<std::size_t>(batch * n));
  kernels::omp::row_normalize(
      {batch, n, cols, a.data().data(), out.data(), sums.data(), policy == ZeroRow::self_loop});
  const std::int64_t rows = batch * n;
  return make_result(a.shape(), std::move(out), {a},
                     [rows, cols, sums = std::move(sums)](TensorImpl& node) {
                       auto& dst = grad_of(node, 0);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelGrain)
                       for (std::int64_t r = 0; r < rows; ++r) {
                         const double s = sums[static_cast<std::size_t>(r)];
                         if (!(s > 0.0)) continue;
                         const double* y = node.data.data() + r * cols;
                         const double* g = node.grad.data() + r * cols;
                         double dot = 0.0;
                         for (std::int64_t j = 0; j < cols; ++j) dot += g[j] * y[j];
                         for (std::int64_t j = 0; j < cols; ++j) {
                           dst[static_cast<std::size_t>(r * cols + j)] += (g[j] - dot) / s;
                         }
                       }
                     });
}

Tensor instance_norm(const Tensor& a, double eps) {
  if (a.rank() < 2) throw ShapeError("instance_norm needs rank >= 2");
  const std::int64_t batch = a.dim(0);
  const std::int64_t len = a.numel() / batch;
  std::vector<double> out(static_cast<std::size_t>(a.numel()));
  std::vector<double> inv(static_cast<std::size_t>(batch));
  kernels::omp::instance_norm({batch, len, eps, a.data().data(), out.data(), inv.data()});
  return make_result(a.shape(), std::move(out), {a},
                     [batch, len, inv = std::move(inv)](TensorImpl& node) {
                       auto& dst = grad_of(node, 0);
                       const double L = static_cast<double>(len);
                       for (std::int64_t b = 0; b < batch; ++b) {
                         const double* y = node.data.data() + b * len;
                         const double* g = node.grad.data() + b * len;
                         double gs = 0.0, gy = 0.0;
                         for (std::int64_t i = 0; i < len; ++i) {
                           gs += g[i];
                           gy += g[i] * y[i];
                         }
                         const double c = inv[static_cast<std::size_t>(b)] / L;
                         for (std::int64_t i = 0; i < len; ++i) {
                           dst[static_cast<std::size_t>(b * len + i)] +=
                               c * (L * g[i] - gs - y[i] * gy);
                         }
                       }
                     });
}

Tensor concat_last(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() < 1) {
    throw ShapeError("concat_last: " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  for (int i = 0; i + 1 < a.rank(); ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw ShapeError("concat_last: " + shape_str(a.shape()) + " and " +
                       shape_str(b.shape()));
    }
  }
  const std::int64_t ca = a.dim(-1), cb = b.dim(-1), c = ca + cb;
  const std::int64_t rows = a.numel() / std::max<std::int64_t>(ca, 1);
  const std::int64_t rows_b = b.numel() / std::max<std::int64_t>(cb, 1);
  const std::int64_t nrows = ca > 0 ? rows : rows_b;
  Shape shape = a.shape();
  shape.back() = c;
  std::vector<double> out(static_cast<std::size_t>(nrows * c));
  for (std::int64_t r = 0; r < nrows; ++r) {
    std::copy_n(a.data().data() + r * ca, ca, out.data() + r * c);
    std::copy_n(b.data().data() + r * cb, cb, out.data() + r * c + ca);
  }
  return make_result(std::move(shape), std::move(out), {a, b},
                     [nrows, ca, cb, c](TensorImpl& node) {
                       const double* g = node.grad.data();
                       if (wants_grad(node, 0)) {
                         auto& da = grad_of(node, 0);
                         for (std::int64_t r = 0; r < nrows; ++r)
                           for (std::int64_t j = 0; j < ca; ++j)
                             da[static_cast<std::size_t>(r * ca + j)] += g[r * c + j];
                       }
                       if (wants_grad(node, 1)) {
                         auto& db = grad_of(node, 1);
                         for (std::int64_t r = 0; r < nrows; ++r)
                           for (std::int64_t j = 0; j < cb; ++j)
                             db[static_cast<std::size_t>(r * cb + j)] += g[r * c + ca + j];
                       }
                     });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape " + shape_str(a.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return make_result(std::move(shape), std::move(out), {a}, [](TensorImpl& node) {
    auto& dst = grad_of(node, 0);
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += node.grad[i];
  });
}

Tensor permute(const Tensor& a, const std::vector<int>& axes) {
  const int r = a.rank();
  if (static_cast<int>(axes.size()) != r) throw ShapeError("permute: axis count mismatch");
  std::vector<std::int64_t> in_stride(static_cast<std::size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * a.dim(i + 1);
  Shape shape(static_cast<std::size_t>(r));
  std::vector<std::int64_t> src_stride(static_cast<std::size_t>(r));
  std::vector<bool> used(static_cast<std::size_t>(r), false);
  for (int i = 0; i < r; ++i) {
    const int ax = axes[static_cast<std::size_t>(i)];
    if (ax < 0 || ax >= r || used[ax]) throw ShapeError("permute: invalid axes");
    used[ax] = true;
    shape[i] = a.dim(ax);
    src_stride[i] = in_stride[ax];
  }
  const std::int64_t n = a.numel();
  std::vector<std::int64_t> src(static_cast<std::size_t>(n));
  {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(r), 0);
    std::int64_t off = 0;
    for (std::int64_t e = 0; e < n; ++e) {
      src[static_cast<std::size_t>(e)] = off;
      for (int ax = r - 1; ax >= 0; --ax) {
        ++idx[ax];
        off += src_stride[ax];
        if (idx[ax] < shape[ax]) break;
        off -= src_stride[ax] * idx[ax];
        idx[ax] = 0;
      }
    }
  }
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t e = 0; e < n; ++e) out[e] = a.data()[src[e]];
  return make_result(std::move(shape), std::move(out), {a},
                     [src = std::move(src)](TensorImpl& node) {
                       auto& dst = grad_of(node, 0);
                       for (std::size_t e = 0; e < src.size(); ++e) dst[src[e]] += node.grad[e];
                     });
}

Tensor gather_rows(const Tensor& table, std::span<const std::int64_t> indices) {
  if (table.rank() != 2) throw ShapeError("gather_rows needs a [R, D] table");
  const std::int64_t rows = table.dim(0), d = table.dim(1);
  std::vector<std::int64_t> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= rows) {
      throw std::out_of_range("gather_rows: index " + std::to_string(idx[i]) +
                              " outside [0, " + std::to_string(rows) + ")");
    }
    std::copy_n(table.data().data() + idx[i] * d, d, out.data() + i * d);
  }
  const auto count = static_cast<std::int64_t>(idx.size());
  return make_result({count, d}, std::move(out), {table},
                     [d, idx = std::move(idx)](TensorImpl& node) {
                       auto& dst = grad_of(node, 0);
                       for (std::size_t i = 0; i < idx.size(); ++i)
                         for (std::int64_t j = 0; j < d; ++j)
                           dst[static_cast<std::size_t>(idx[i] * d + j)] +=
                               node.grad[i * static_cast<std::size_t>(d) + j];
                     });
}

Tensor stack(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("stack of zero tensors");
  const Shape& base = parts.front().shape();
  for (const auto& p : parts) {
    if (p.shape() != base) throw ShapeError("stack: mismatched shapes");
  }
  const int r = static_cast<int>(base.size());
  if (axis < 0) axis += r + 1;
  if (axis < 0 || axis > r) throw ShapeError("stack: axis out of range");
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= base[i];
  for (int i = axis; i < r; ++i) inner *= base[i];
  const auto count = static_cast<std::int64_t>(parts.size());
  Shape shape = base;
  shape.insert(shape.begin() + axis, count);
  std::vector<double> out(static_cast<std::size_t>(outer * count * inner));
  for (std::int64_t t = 0; t < count; ++t) {
    const double* src = parts[t].data().data();
    for (std::int64_t o = 0; o < outer; ++o)
      std::copy_n(src + o * inner, inner, out.data() + (o * count + t) * inner);
  }
  return make_result(std::move(shape), std::move(out), parts,
                     [outer, inner, count](TensorImpl& node) {
                       for (std::int64_t t = 0; t < count; ++t) {
                         if (!wants_grad(node, t)) continue;
                         auto& dst = grad_of(node, t);
                         for (std::int64_t o = 0; o < outer; ++o)
                           for (std::int64_t i = 0; i < inner; ++i)
                             dst[o * inner + i] += node.grad[(o * count + t) * inner + i];
                       }
                     });
}

Tensor select(const Tensor& a, int axis, std::int64_t index) {
  const int r = a.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ShapeError("select: axis out of range");
  const std::int64_t count = a.dim(axis);
  if (index < 0 || index >= count) throw std::out_of_range("select: index out of range");
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= a.dim(i);
  for (int i = axis + 1; i < r; ++i) inner *= a.dim(i);
  Shape shape = a.shape();
  shape.erase(shape.begin() + axis);
  std::vector<double> out(static_cast<std::size_t>(outer * inner));
  for (std::int64_t o = 0; o < outer; ++o)
    std::copy_n(a.data().data() + (o * count + index) * inner, inner, out.data() + o * inner);
  return make_result(std::move(shape), std::move(out), {a},
                     [outer, inner, count, index](TensorImpl& node) {
                       auto& dst = grad_of(node, 0);
                       for (std::int64_t o = 0; o < outer; ++o)
                         for (std::int64_t i = 0; i < inner; ++i)
                           dst[(o * count + index) * inner + i] += node.grad[o * inner + i];
                     });
}

Tensor diagonal(const Tensor& a) {
  if (a.rank() < 2 || a.dim(-1) != a.dim(-2)) {
    throw ShapeError("diagonal needs a trailing square block, got " + shape_str(a.shape()));
  }
  const std::int64_t n = a.dim(-1);
  const std::int64_t batch = a.numel() / (n * n);
  Shape shape(a.shape().begin(), a.shape().end() - 1);
  std::vector<double> out(static_cast<std::size_t>(batch * n));
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t i = 0; i < n; ++i) out[b * n + i] = a.data()[(b * n + i) * n + i];
  return make_result(std::move(shape), std::move(out), {a}, [batch, n](TensorImpl& node) {
    auto& dst = grad_of(node, 0);
    for (std::int64_t b = 0; b < batch; ++b)
      for (std::int64_t i = 0; i < n; ++i) dst[(b * n + i) * n + i] += node.grad[b * n + i];
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result({}, {s}, {a}, [](TensorImpl& node) {
    auto& dst = grad_of(node, 0);
    const double g = node.grad[0];
    for (auto& v : dst) v += g;
  });
}

Tensor mean(const Tensor& a) {
  return scale(sum(a), 1.0 / static_cast<double>(std::max<std::int64_t>(a.numel(), 1)));
}

Tensor huber_loss(const Tensor& pred, const Tensor& target, double kappa) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("huber_loss: " + shape_str(pred.shape()) + " vs " +
                     shape_str(target.shape()));
  }
  const std::int64_t n = pred.numel();
  double total = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    const double e = pred.data()[i] - target.data()[i];
    const double ae = std::abs(e);
    total += ae <= kappa ? 0.5 * e * e : kappa * (ae - 0.5 * kappa);
  }
  const double inv_n = 1.0 / static_cast<double>(std::max<std::int64_t>(n, 1));
  return make_result({}, {total * inv_n}, {pred, target}, [n, kappa, inv_n](TensorImpl& node) {
    const auto& p = node.inputs[0]->data;
    const auto& t = node.inputs[1]->data;
    const double g = node.grad[0] * inv_n;
    for (std::size_t side = 0; side < 2; ++side) {
      if (!wants_grad(node, side)) continue;
      auto& dst = grad_of(node, side);
      const double sign = side == 0 ? 1.0 : -1.0;
      for (std::int64_t i = 0; i < n; ++i) {
        const double e = p[i] - t[i];
        const double de = std::abs(e) <= kappa ? e : (e > 0 ? kappa : -kappa);
        dst[i] += sign * g * de;
      }
    }
  });
}

Tensor continuous_time_encode(const Tensor& omega, double tau) {
  if (omega.rank() != 1) throw ShapeError("continuous_time_encode: omega must be [d_c]");
  const std::int64_t dc = omega.dim(0);
  const double s = std::sqrt(1.0 / static_cast<double>(2 * dc));
  std::vector<double> out(static_cast<std::size_t>(2 * dc));
  for (std::int64_t i = 0; i < dc; ++i) {
    const double w = omega.data()[i] * tau;
    out[2 * i] = s * std::cos(w);
    out[2 * i + 1] = s * std::sin(w);
  }
  return make_result({2 * dc}, std::move(out), {omega}, [dc, tau](TensorImpl& node) {
    auto& dst = grad_of(node, 0);
    // d/dw [s cos(w tau)] = -tau * (s sin), d/dw [s sin(w tau)] = tau * (s cos)
    for (std::int64_t i = 0; i < dc; ++i) {
      dst[i] += node.grad[2 * i] * (-tau * node.data[2 * i + 1]) +
                node.grad[2 * i + 1] * (tau * node.data[2 * i]);
    }
  });
}

}  // namespace metadg
