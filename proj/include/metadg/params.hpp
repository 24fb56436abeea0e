#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "metadg/rng.hpp"
#include "metadg/tensor.hpp"

namespace metadg {

/// Named, ordered collection of trainable tensors. Handles alias the stored
/// tensors, so modules keep their own copies and loading writes in place.
class ParameterStore {
 public:
  Tensor add(const std::string& name, Tensor init);
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::int64_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::map<std::string, std::size_t> index_;
};

Tensor uniform_tensor(Shape shape, double bound, Rng& rng);

/// Affine map x[..., in] -> [..., out]; weight is stored [in, out].
struct Linear {
  Tensor weight;
  Tensor bias;

  Tensor operator()(const Tensor& x) const;
};

/// Registers `<prefix>.weight` and `<prefix>.bias`, uniform(+-1/sqrt(in)) or zero.
Linear make_linear(ParameterStore& store, const std::string& prefix, std::int64_t in,
                   std::int64_t out, Rng& rng, bool zero_init = false);

}  // namespace metadg
