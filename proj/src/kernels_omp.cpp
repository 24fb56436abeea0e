#include <cmath>
#include <vector>

#include "metadg/kernels.hpp"

namespace metadg::kernels::omp {

namespace {

// One output row of one batch. Accumulation over k runs in increasing order
// for every element, matching the serial reference.
void gemm_row(const GemmArgs& g, std::int64_t bi, std::int64_t mi, double* tmp) {
  const double* a = g.a + bi * g.stride_a;
  const double* b = g.b + bi * g.stride_b;
  const std::int64_t n = g.n, k = g.k, m = g.m;

  if (!g.trans_b) {
    for (std::int64_t j = 0; j < n; ++j) tmp[j] = 0.0;
    for (std::int64_t p = 0; p < k; ++p) {
      const double av = g.trans_a ? a[p * m + mi] : a[mi * k + p];
      const double* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) tmp[j] += av * brow[j];
    }
  } else {
    for (std::int64_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double s = 0.0;
      if (g.trans_a) {
        for (std::int64_t p = 0; p < k; ++p) s += a[p * m + mi] * brow[p];
      } else {
        const double* arow = a + mi * k;
        for (std::int64_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      }
      tmp[j] = s;
    }
  }
}

}  // namespace

void gemm(const GemmArgs& g) {
  const std::int64_t work = g.batch * g.m * g.n * g.k;
  if (g.stride_c == 0) {
    // All batches reduce into one C: batches in order, rows in parallel.
    for (std::int64_t bi = 0; bi < g.batch; ++bi) {
      const bool acc = g.accumulate || bi > 0;
#pragma omp parallel if (work >= kParallelGrain)
      {
        std::vector<double> tmp(static_cast<std::size_t>(g.n));
#pragma omp for schedule(static)
        for (std::int64_t mi = 0; mi < g.m; ++mi) {
          gemm_row(g, bi, mi, tmp.data());
          double* c = g.c + mi * g.n;
          for (std::int64_t j = 0; j < g.n; ++j) c[j] = acc ? c[j] + tmp[j] : tmp[j];
        }
      }
    }
    return;
  }
#pragma omp parallel if (work >= kParallelGrain)
  {
    std::vector<double> tmp(static_cast<std::size_t>(g.n));
#pragma omp for collapse(2) schedule(static)
    for (std::int64_t bi = 0; bi < g.batch; ++bi) {
      for (std::int64_t mi = 0; mi < g.m; ++mi) {
        gemm_row(g, bi, mi, tmp.data());
        double* c = g.c + bi * g.stride_c + mi * g.n;
        for (std::int64_t j = 0; j < g.n; ++j) c[j] = g.accumulate ? c[j] + tmp[j] : tmp[j];
      }
    }
  }
}

void softmax_rows(const SoftmaxArgs& s) {
#pragma omp parallel for schedule(static) if (s.rows * s.cols >= kParallelGrain)
  for (std::int64_t r = 0; r < s.rows; ++r) {
    const double* in = s.in + r * s.cols;
    double* out = s.out + r * s.cols;
    double mx = in[0];
    for (std::int64_t j = 1; j < s.cols; ++j) mx = std::max(mx, in[j]);
    double total = 0.0;
    for (std::int64_t j = 0; j < s.cols; ++j) {
      out[j] = std::exp(in[j] - mx);
      total += out[j];
    }
    const double inv = 1.0 / total;
    for (std::int64_t j = 0; j < s.cols; ++j) out[j] *= inv;
  }
}

void row_normalize(const RowNormArgs& r) {
  const std::int64_t rows = r.batch * r.n;
#pragma omp parallel for schedule(static) if (rows * r.cols >= kParallelGrain)
  for (std::int64_t row = 0; row < rows; ++row) {
    const double* in = r.in + row * r.cols;
    double* out = r.out + row * r.cols;
    double total = 0.0;
    for (std::int64_t j = 0; j < r.cols; ++j) total += in[j];
    r.row_sums[row] = total;
    if (total > 0.0) {
      for (std::int64_t j = 0; j < r.cols; ++j) out[j] = in[j] / total;
    } else {
      for (std::int64_t j = 0; j < r.cols; ++j) out[j] = 0.0;
      if (r.self_loop) out[row % r.n] = 1.0;
    }
  }
}

void instance_norm(const InstanceNormArgs& a) {
#pragma omp parallel for schedule(static) if (a.batch * a.len >= kParallelGrain)
  for (std::int64_t b = 0; b < a.batch; ++b) {
    const double* in = a.in + b * a.len;
    double* out = a.out + b * a.len;
    double mean = 0.0;
    for (std::int64_t i = 0; i < a.len; ++i) mean += in[i];
    mean /= static_cast<double>(a.len);
    double var = 0.0;
    for (std::int64_t i = 0; i < a.len; ++i) {
      const double d = in[i] - mean;
      var += d * d;
    }
    var /= static_cast<double>(a.len);
    const double inv = 1.0 / std::sqrt(var + a.eps);
    a.inv_std[b] = inv;
    for (std::int64_t i = 0; i < a.len; ++i) out[i] = (in[i] - mean) * inv;
  }
}

}  // namespace metadg::kernels::omp
