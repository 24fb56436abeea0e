#pragma once

#include <span>
#include <vector>

#include "metadg/tensor.hpp"

// Differentiable tensor operations. Binary elementwise ops broadcast with
// NumPy rules; all others document their accepted shapes.

namespace metadg {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

Tensor add_scalar(const Tensor& a, double s);
Tensor scale(const Tensor& a, double s);
/// 1 - a
Tensor one_minus(const Tensor& a);

Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);

/// x[..., K] * w[K, N] -> [..., N]
Tensor matmul(const Tensor& x, const Tensor& w);
/// x[..., K] * w[K, N] + b[N]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Batched product op(a) * op(b). Each operand is [B, r, c] or an unbatched
/// [r, c] broadcast over the batch. Result is [B, M, N].
Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

/// Softmax over the last axis.
Tensor softmax_last(const Tensor& a);

enum class ZeroRow { keep_zero, self_loop };
/// asym(.): divides each row of a non-negative [..., n, cols] tensor by its sum.
/// Zero rows stay zero or become the self-loop row (square matrices only).
Tensor row_normalize(const Tensor& a, ZeroRow policy);

/// Zero-mean unit-variance over all axes after the first, per leading index,
/// no affine, (x - mean) / sqrt(var + eps).
Tensor instance_norm(const Tensor& a, double eps = 1e-5);

Tensor concat_last(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& axes);
/// Rows of a [R, D] table -> [indices.size(), D].
Tensor gather_rows(const Tensor& table, std::span<const std::int64_t> indices);
/// Stacks equally-shaped tensors along a new axis.
Tensor stack(const std::vector<Tensor>& parts, int axis);
/// Removes `axis` by taking slice `index`.
Tensor select(const Tensor& a, int axis, std::int64_t index);

/// Diagonal of the trailing square block: [..., n, n] -> [..., n].
Tensor diagonal(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Mean Huber loss with transition `kappa`.
Tensor huber_loss(const Tensor& pred, const Tensor& target, double kappa);

/// sqrt(1/(2 d_c)) [cos(w_1 tau), sin(w_1 tau), ..., cos(w_dc tau), sin(w_dc tau)]
/// for omega of shape [d_c]; result [2 d_c].
Tensor continuous_time_encode(const Tensor& omega, double tau);

}  // namespace metadg
