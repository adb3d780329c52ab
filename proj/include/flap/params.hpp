#pragma once

#include <string>
#include <vector>

#include "flap/tensor.hpp"

namespace flap {

// Ordered registry of named trainable tensors. Insertion order is the
// serialization order, which keeps checkpoints byte-reproducible.
class ParamStore {
 public:
  Tensor create(const std::string& name, std::vector<size_t> shape);
  Tensor create_randn(const std::string& name, std::vector<size_t> shape,
                      Rng& rng, double stddev);
  Tensor create_full(const std::string& name, std::vector<size_t> shape,
                     double value);

  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const;

  const std::vector<std::pair<std::string, Tensor>>& items() const {
    return items_;
  }
  size_t count() const { return items_.size(); }

  void zero_grads();
  // L2 norm of one parameter's gradient (0 when unallocated).
  double grad_norm(const std::string& name) const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

}  // namespace flap
