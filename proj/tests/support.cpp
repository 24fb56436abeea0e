#include "support.hpp"

#include <algorithm>
#include <cmath>

#include "metadg/ops.hpp"

namespace support {

using namespace metadg;

Tensor random_tensor(const Shape& shape, Rng& rng, double lo, double hi) {
  Tensor t = Tensor::zeros(shape);
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

oracle::Params snapshot(const ParameterStore& store) {
  oracle::Params p;
  for (const auto& [name, t] : store.items()) p[name] = values(t);
  return p;
}

void randomize(ParameterStore& store, Rng& rng, double scale) {
  for (const auto& [name, t] : store.items()) {
    Tensor h = t;
    for (auto& v : h.data()) {
      v = name == "ctime_omega" ? rng.uniform(0.05, 1.0) : rng.uniform(-scale, scale);
    }
  }
}

ModelConfig tiny_config(std::int64_t nodes, std::int64_t horizon) {
  ModelConfig c;
  c.dataset = "synthetic";
  c.num_nodes = nodes;
  c.horizon_in = horizon;
  c.horizon_out = horizon;
  c.d_s = 3;
  c.d_tod = 2;
  c.d_dow = 1;
  c.d_c = 2;
  c.d_hidden = 5;
  c.d_attn = 4;
  c.dropout = 0.0;
  c.batch_size = 2;
  c.max_epochs = 5;
  c.patience = 5;
  return c;
}

oracle::CellDims cell_dims(const ModelConfig& cfg, std::int64_t batch) {
  oracle::CellDims d{batch, cfg.num_nodes, cfg.d_s, cfg.d_t(), cfg.d_c, cfg.d_hidden, cfg.d_attn,
                     cfg.input_dim};
  d.use_sce = cfg.ablation.use_sce;
  d.use_tce = cfg.ablation.use_tce;
  d.use_dgq = cfg.ablation.use_dgq;
  d.tsce_order = cfg.ablation.tsce_order;
  d.joined = cfg.ablation.joined_embedding;
  d.single_support = cfg.single_support;
  d.tanh_candidate = cfg.candidate_activation == CandidateActivation::tanh;
  d.fixed_weaken = cfg.weaken_mode == WeakenMode::fixed;
  d.weaken_factor = cfg.weaken_factor;
  d.delta = cfg.delta;
  return d;
}

TrafficWindowBatch tiny_batch(const ModelConfig& cfg, std::int64_t batch, std::uint64_t seed,
                              Normalizer* norm, RawSeries* series_out) {
  const std::int64_t len = cfg.horizon_in + cfg.horizon_out;
  SyntheticOptions o;
  o.start_offset = 3 * kStepsPerDay + 17;
  const RawSeries s = make_synthetic(cfg.num_nodes, kStepsPerWeek + len + 10, seed, o);
  const Normalizer n = Normalizer::fit(s.values);
  Rng rng(derive_seed(seed, 99));
  std::vector<std::int64_t> starts;
  for (std::int64_t b = 0; b < batch; ++b) {
    starts.push_back(static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(s.steps - len + 1))));
  }
  if (norm) *norm = n;
  if (series_out) *series_out = s;
  return make_batch(s, n, starts, cfg.horizon_in, cfg.horizon_out);
}

oracle::WindowTimes window_times(const TrafficWindowBatch& batch) {
  oracle::WindowTimes w;
  for (const auto& f : batch.x_time) {
    w.in_tod.push_back(f.tod);
    w.in_dow.push_back(f.dow);
  }
  for (const auto& f : batch.y_time) {
    w.out_tod.push_back(f.tod);
    w.out_dow.push_back(f.dow);
  }
  return w;
}

std::vector<double> numeric_grad(Tensor t, const std::function<double()>& f, double h) {
  NoGradGuard no_grad;
  std::vector<double> g(static_cast<std::size_t>(t.numel()));
  auto d = t.data();
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double orig = d[i];
    d[i] = orig + h;
    const double up = f();
    d[i] = orig - h;
    const double down = f();
    d[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double max_rel_error(std::span<const double> a, std::span<const double> n, double floor) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(n[i]), floor});
    worst = std::max(worst, std::abs(a[i] - n[i]) / denom);
  }
  return worst;
}

double op_grad_error(std::vector<Tensor> inputs,
                     const std::function<Tensor(const std::vector<Tensor>&)>& build,
                     std::uint64_t seed) {
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  Rng rng(seed);
  const Tensor probe = build(inputs);
  const Tensor weights = random_tensor(probe.shape(), rng);
  Tensor loss = sum(probe * weights);
  loss.backward();
  const auto eval = [&] { return sum(build(inputs) * weights).item(); };
  double worst = 0.0;
  for (auto& t : inputs) {
    std::vector<double> analytic(static_cast<std::size_t>(t.numel()), 0.0);
    if (t.has_grad()) analytic.assign(t.grad().begin(), t.grad().end());
    const std::vector<double> numeric = numeric_grad(t, eval);
    worst = std::max(worst, max_rel_error(analytic, numeric, 1e-4));
  }
  return worst;
}

namespace {

double row_error(const Tensor& a) {
  const std::int64_t n = a.dim(-1);
  const auto d = a.data();
  double worst = 0.0;
  for (std::int64_t r = 0; r < a.numel() / n; ++r) {
    double s = 0.0;
    for (std::int64_t j = 0; j < n; ++j) s += d[static_cast<std::size_t>(r * n + j)];
    worst = std::max(worst, std::abs(s - 1.0));
  }
  return worst;
}

bool inside_unit(const Tensor& t) {
  for (double v : t.data()) {
    if (!(v > 0.0 && v < 1.0)) return false;
  }
  return true;
}

}  // namespace

InvariantReport structural_invariants(const ForwardResult& result) {
  InvariantReport r;
  r.min_adjacency = INFINITY;
  for (const auto* steps : {&result.encoder, &result.decoder}) {
    for (const StepTrace& st : *steps) {
      ++r.steps;
      for (const Tensor& a : st.attention) {
        r.attention_row_error = std::max(r.attention_row_error, row_error(a));
      }
      r.adjacency_row_error = std::max(r.adjacency_row_error, row_error(st.graph.a_tilde));
      for (double v : st.graph.a_tilde.data()) r.min_adjacency = std::min(r.min_adjacency, v);
      r.gates_open = r.gates_open && inside_unit(st.gamma) && inside_unit(st.z) && inside_unit(st.r);
      if (!st.p.defined()) continue;
      const std::int64_t n = st.p.dim(-1);
      const std::int64_t b = st.p.dim(0);
      const auto p = st.p.data(), pos = st.m_pos.data(), neg = st.m_neg.data(), beta = st.beta.data();
      for (std::size_t x = 0; x < p.size(); ++x) {
        if ((pos[x] > 0.0) == (neg[x] > 0.0)) r.classes_partition = false;
        if (!(beta[x] > 0.0)) r.beta_positive = false;
      }
      for (std::int64_t k = 0; k < b; ++k) {
        for (std::int64_t i = 0; i < n; ++i) {
          const auto x = static_cast<std::size_t>((k * n + i) * n + i);
          if (p[x] > 0.0 && !(pos[x] > 0.0)) r.diagonal_positive = false;
        }
      }
    }
  }
  return r;
}

ForwardResult random_traced_forward(std::uint64_t seed, double param_scale) {
  Rng rng(seed);
  ModelConfig cfg = tiny_config(static_cast<std::int64_t>(2 + rng.below(4)), 3);
  cfg.seed = static_cast<std::int64_t>(seed);
  MetaDG model(cfg);
  randomize(model.parameters(), rng, param_scale);
  Normalizer norm;
  const TrafficWindowBatch batch = tiny_batch(cfg, 2, seed, &norm);
  model.set_normalizer(norm);
  ForwardOptions o;
  o.trace = true;
  NoGradGuard no_grad;
  return model.forward(batch, o);
}

}  // namespace support
