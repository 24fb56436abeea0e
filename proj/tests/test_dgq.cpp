#include <doctest.h>

#include <cmath>

#include "metadg/dgq.hpp"
#include "metadg/ops.hpp"
#include "support.hpp"

using namespace metadg;
using support::random_tensor;
using support::values;

namespace {

Tensor eye(std::int64_t n) {
  Tensor t = Tensor::zeros({n, n});
  for (std::int64_t i = 0; i < n; ++i) t.at({i, i}) = 1.0;
  return t;
}

}  // namespace

TEST_CASE("static mask") {
  CHECK(values(static_mask(eye(3))) == values(eye(3)));
  const Tensor same = Tensor::from({3, 2}, {0.5, -0.2, 0.5, -0.2, 0.5, -0.2});
  for (double v : values(static_mask(same))) CHECK(v == 1.0);
  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor n = random_tensor({4, 2}, rng);
    Tensor h = n;
    h.set_requires_grad(true);
    const Tensor m = static_mask(h);
    CHECK_FALSE(m.requires_grad());
    CHECK(values(m) == oracle::static_mask(values(n), 4, 2));
  }
}

TEST_CASE("edge qualification") {
  const Tensor i3 = reshape(eye(3), {1, 3, 3});
  CHECK(values(edge_qualification(i3, i3, eye(3))) == values(i3));
  Rng rng(2);
  const Tensor a = random_tensor({2, 5, 3}, rng), b = random_tensor({2, 5, 3}, rng);
  for (double v : values(edge_qualification(a, b, Tensor::zeros({5, 5})))) CHECK(v == 0.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor cur = random_tensor({2, 5, 3}, rng), prev = random_tensor({2, 5, 3}, rng);
    const Tensor mask = static_mask(random_tensor({5, 3}, rng));
    const Tensor p = edge_qualification(cur, prev, mask);
    const auto o = oracle::edge_qualification(values(cur), values(prev), values(mask), 2, 5, 3);
    CHECK(support::max_abs_diff(values(p), o) < 1e-6);
    for (std::int64_t r = 0; r < 10; ++r) {
      double s = 0.0;
      for (std::int64_t j = 0; j < 5; ++j) s += p.data()[static_cast<std::size_t>(r * 5 + j)];
      CHECK((s == 0.0 || std::abs(s - 1.0) < 1e-6));
    }
  }
}

TEST_CASE("adjustment against the oracle, both weakening modes") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor nm = random_tensor({1, 4, 3}, rng), prev = random_tensor({1, 4, 3}, rng);
    const Tensor pool = random_tensor({3, 1}, rng);
    const Tensor mask = static_mask(random_tensor({4, 3}, rng));
    const Tensor p = edge_qualification(nm, prev, mask);
    for (WeakenMode mode : {WeakenMode::adaptive, WeakenMode::fixed}) {
      AdjustOptions opt;
      opt.weaken_mode = mode;
      opt.weaken_factor = 0.3;
      const WeightAdjustment w = adjust_weights(p, nm, pool, opt);
      const auto o = oracle::adjust_weights(values(p), values(nm), values(pool), 1, 4, 3, 2.0,
                                            mode == WeakenMode::fixed, 0.3);
      CHECK(support::max_abs_diff(values(w.eps), o.eps) < 1e-6);
      CHECK(support::max_abs_diff(values(w.m_pos), o.m_pos) < 1e-6);
      CHECK(values(w.m_neg) == o.m_neg);
      CHECK(support::max_abs_diff(values(w.beta), o.beta) < 1e-6);
      CHECK(support::max_abs_diff(values(w.phi), o.phi) < 1e-6);
    }
  }
}

TEST_CASE("uniform strengthening gives beta = 1 and phi = M_pos") {
  const Tensor nm = Tensor::full({1, 4, 3}, 0.5);
  const Tensor p = edge_qualification(nm, nm, Tensor::full({4, 4}, 1.0));
  const Tensor pool = Tensor::full({3, 1}, -1e4);
  const WeightAdjustment w = adjust_weights(p, nm, pool);
  for (double v : values(w.eps)) CHECK(v == 0.0);
  for (double v : values(w.m_neg)) CHECK(v == 0.0);
  for (std::size_t i = 0; i < 16; ++i) {
    CHECK(w.m_pos.data()[i] == doctest::Approx(1.0 / (1.0 + std::exp(-0.25))));
    CHECK(w.beta.data()[i] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(w.phi.data()[i] == doctest::Approx(w.m_pos.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("classification invariants over random trials") {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const std::int64_t B = 2, N = 5, ds = 3;
    const Tensor nm = random_tensor({B, N, ds}, rng, -2, 2), prev = random_tensor({B, N, ds}, rng, -2, 2);
    const Tensor mask = static_mask(random_tensor({N, ds}, rng));
    const Tensor p = edge_qualification(nm, prev, mask);
    const WeightAdjustment w = adjust_weights(p, nm, random_tensor({ds, 1}, rng, -3, 3));
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t i = 0; i < N; ++i) {
        for (std::int64_t j = 0; j < N; ++j) {
          const double pos = w.m_pos.at({b, i, j}), neg = w.m_neg.at({b, i, j});
          CHECK(((pos > 0.0) != (neg > 0.0)));  // disjoint and exhaustive
          CHECK(w.beta.at({b, i, j}) > 0.0);
          CHECK(w.phi.at({b, i, j}) > 0.0);
          if (i == j && p.at({b, i, i}) > 0.0) CHECK(pos > 0.0);
        }
      }
    }
  }
}

TEST_CASE("threshold pool") {
  ModelConfig cfg = support::tiny_config();
  ParameterStore store;
  Rng rng(5);
  const Tensor pool = make_threshold_pool(store, "dgq.enc", cfg, rng);
  CHECK(store.get("dgq.enc.eps_pool").shape() == Shape{3, 1});
  CHECK(pool.impl() == store.get("dgq.enc.eps_pool").impl());
}
