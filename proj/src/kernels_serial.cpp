#include <algorithm>
#include <cmath>

#include "metadg/kernels.hpp"

namespace metadg::kernels::serial {

void gemm(const GemmArgs& g) {
  for (std::int64_t bi = 0; bi < g.batch; ++bi) {
    const double* a = g.a + bi * g.stride_a;
    const double* b = g.b + bi * g.stride_b;
    double* c = g.c + bi * g.stride_c;
    const bool acc = g.accumulate || (g.stride_c == 0 && bi > 0);
    for (std::int64_t i = 0; i < g.m; ++i) {
      for (std::int64_t j = 0; j < g.n; ++j) {
        double s = 0.0;
        for (std::int64_t p = 0; p < g.k; ++p) {
          const double av = g.trans_a ? a[p * g.m + i] : a[i * g.k + p];
          const double bv = g.trans_b ? b[j * g.k + p] : b[p * g.n + j];
          s += av * bv;
        }
        double& out = c[i * g.n + j];
        out = acc ? out + s : s;
      }
    }
  }
}

void softmax_rows(const SoftmaxArgs& s) {
  for (std::int64_t r = 0; r < s.rows; ++r) {
    const double* in = s.in + r * s.cols;
    double* out = s.out + r * s.cols;
    const double mx = *std::max_element(in, in + s.cols);
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
  for (std::int64_t b = 0; b < r.batch; ++b) {
    for (std::int64_t i = 0; i < r.n; ++i) {
      const std::int64_t row = b * r.n + i;
      const double* in = r.in + row * r.cols;
      double* out = r.out + row * r.cols;
      double total = 0.0;
      for (std::int64_t j = 0; j < r.cols; ++j) total += in[j];
      r.row_sums[row] = total;
      for (std::int64_t j = 0; j < r.cols; ++j) {
        if (total > 0.0) {
          out[j] = in[j] / total;
        } else {
          out[j] = (r.self_loop && j == i) ? 1.0 : 0.0;
        }
      }
    }
  }
}

void instance_norm(const InstanceNormArgs& a) {
  const double len = static_cast<double>(a.len);
  for (std::int64_t b = 0; b < a.batch; ++b) {
    const double* in = a.in + b * a.len;
    double mean = 0.0;
    for (std::int64_t i = 0; i < a.len; ++i) mean += in[i];
    mean /= len;
    double var = 0.0;
    for (std::int64_t i = 0; i < a.len; ++i) var += (in[i] - mean) * (in[i] - mean);
    var /= len;
    const double inv = 1.0 / std::sqrt(var + a.eps);
    a.inv_std[b] = inv;
    for (std::int64_t i = 0; i < a.len; ++i) a.out[b * a.len + i] = (in[i] - mean) * inv;
  }
}

}  // namespace metadg::kernels::serial
