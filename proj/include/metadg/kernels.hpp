#pragma once

#include <cstdint>

// Dense inner loops of the autodiff engine. Every kernel exists twice: an
// OpenMP version used by the ops, and a serial reference kept for tests and
// the benchmark. Both accumulate in the same order, so results agree bitwise
// and do not depend on the thread count.

namespace metadg::kernels {

/// Batched GEMM: C[b] = op(A[b]) * op(B[b]) (+ C[b] when `accumulate`).
/// op(A) is MxK, op(B) is KxN, C is MxN, all row-major. A zero batch stride
/// broadcasts that operand; a zero stride on C sums all batches into one
/// output (batches are then visited in order).
struct GemmArgs {
  bool trans_a = false;
  bool trans_b = false;
  std::int64_t batch = 1;
  std::int64_t m = 0, n = 0, k = 0;
  const double* a = nullptr;
  std::int64_t stride_a = 0;
  const double* b = nullptr;
  std::int64_t stride_b = 0;
  double* c = nullptr;
  std::int64_t stride_c = 0;
  bool accumulate = false;
};

/// Row-wise softmax over the last axis of a [rows x cols] block.
struct SoftmaxArgs {
  std::int64_t rows = 0, cols = 0;
  const double* in = nullptr;
  double* out = nullptr;
};

/// Row normalization of a non-negative [batch x n x cols] block. Rows summing
/// to zero stay zero, or become the unit row e_i when `self_loop` is set
/// (requires n == cols). `row_sums` (batch*n) receives the pre-normalization sums.
struct RowNormArgs {
  std::int64_t batch = 1, n = 0, cols = 0;
  const double* in = nullptr;
  double* out = nullptr;
  double* row_sums = nullptr;
  bool self_loop = false;
};

/// Per-instance standardization of [batch x len]: out = (x - mean) / sqrt(var + eps),
/// biased variance. `inv_std` (batch) receives 1/sqrt(var + eps).
struct InstanceNormArgs {
  std::int64_t batch = 0, len = 0;
  double eps = 1e-5;
  const double* in = nullptr;
  double* out = nullptr;
  double* inv_std = nullptr;
};

namespace omp {
void gemm(const GemmArgs& args);
void softmax_rows(const SoftmaxArgs& args);
void row_normalize(const RowNormArgs& args);
void instance_norm(const InstanceNormArgs& args);
}  // namespace omp

namespace serial {
void gemm(const GemmArgs& args);
void softmax_rows(const SoftmaxArgs& args);
void row_normalize(const RowNormArgs& args);
void instance_norm(const InstanceNormArgs& args);
}  // namespace serial

/// Loops shorter than this run on the calling thread.
inline constexpr std::int64_t kParallelGrain = 4096;

}  // namespace metadg::kernels
