#include "metadg/params.hpp"

#include <cmath>
#include <stdexcept>

#include "metadg/ops.hpp"

namespace metadg {

Tensor ParameterStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw std::logic_error("duplicate parameter " + name);
  init.set_requires_grad(true);
  index_[name] = items_.size();
  items_.emplace_back(name, init);
  return init;
}

Tensor ParameterStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("unknown parameter " + name);
  return items_[it->second].second;
}

std::int64_t ParameterStore::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [name, t] : items_) t.zero_grad();
}

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(-bound, bound);
  return t;
}

Tensor Linear::operator()(const Tensor& x) const { return linear(x, weight, bias); }

Linear make_linear(ParameterStore& store, const std::string& prefix, std::int64_t in,
                   std::int64_t out, Rng& rng, bool zero_init) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight = store.add(prefix + ".weight",
                       zero_init ? Tensor::zeros({in, out}) : uniform_tensor({in, out}, bound, rng));
  l.bias = store.add(prefix + ".bias",
                     zero_init ? Tensor::zeros({out}) : uniform_tensor({out}, bound, rng));
  return l;
}

}  // namespace metadg
