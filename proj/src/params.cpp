#include "flap/params.hpp"

#include <cmath>
#include <stdexcept>

namespace flap {

Tensor ParamStore::create(const std::string& name, std::vector<size_t> shape) {
  if (contains(name)) {
    throw std::logic_error("parameter already registered: " + name);
  }
  Tensor t = Tensor::zeros(std::move(shape), true);
  items_.emplace_back(name, t);
  return t;
}

Tensor ParamStore::create_randn(const std::string& name,
                                std::vector<size_t> shape, Rng& rng,
                                double stddev) {
  Tensor t = create(name, std::move(shape));
  for (double& v : t.vec()) {
    v = rng.normal(0.0, stddev);
  }
  return t;
}

Tensor ParamStore::create_full(const std::string& name,
                               std::vector<size_t> shape, double value) {
  Tensor t = create(name, std::move(shape));
  for (double& v : t.vec()) {
    v = value;
  }
  return t;
}

Tensor& ParamStore::get(const std::string& name) {
  for (auto& [n, t] : items_) {
    if (n == name) return t;
  }
  throw std::out_of_range("no such parameter: " + name);
}

const Tensor& ParamStore::get(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return t;
  }
  throw std::out_of_range("no such parameter: " + name);
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& [n, t] : items_) {
    if (n == name) return true;
  }
  return false;
}

void ParamStore::zero_grads() {
  for (auto& [n, t] : items_) {
    t.zero_grad();
  }
}

double ParamStore::grad_norm(const std::string& name) const {
  const Tensor& t = get(name);
  if (!t.has_grad()) return 0.0;
  double sq = 0.0;
  for (double g : t.grad_vec()) {
    sq += g * g;
  }
  return std::sqrt(sq);
}

}  // namespace flap
