#include "flap/tensor.hpp"

#include <sstream>
#include <stdexcept>

namespace flap {

size_t shape_numel(const std::vector<size_t>& shape) {
  size_t n = 1;
  for (size_t e : shape) {
    if (e == 0) {
      throw std::invalid_argument("tensor extents must be positive");
    }
    n *= e;
  }
  return n;
}

Tensor Tensor::zeros(std::vector<size_t> shape, bool requires_grad) {
  Tensor t;
  t.s_ = std::make_shared<Storage>();
  t.s_->data.assign(shape_numel(shape), 0.0);
  t.s_->shape = std::move(shape);
  t.s_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::full(std::vector<size_t> shape, double value,
                    bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.s_->data) {
    v = value;
  }
  return t;
}

Tensor Tensor::from_data(std::vector<size_t> shape, std::vector<double> data,
                         bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw std::invalid_argument("tensor data length does not match shape");
  }
  Tensor t;
  t.s_ = std::make_shared<Storage>();
  t.s_->shape = std::move(shape);
  t.s_->data = std::move(data);
  t.s_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from_data({1}, {value}, requires_grad);
}

Tensor Tensor::randn(std::vector<size_t> shape, Rng& rng, double stddev,
                     bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  for (double& v : t.s_->data) {
    v = rng.normal(0.0, stddev);
  }
  return t;
}

double* Tensor::grad() {
  if (s_->grad.empty()) {
    s_->grad.assign(s_->data.size(), 0.0);
  }
  return s_->grad.data();
}

void Tensor::zero_grad() {
  for (double& g : s_->grad) {
    g = 0.0;
  }
}

double Tensor::value() const {
  if (size() != 1) {
    throw std::logic_error("value() called on non-scalar tensor " +
                           shape_str());
  }
  return s_->data[0];
}

double Tensor::grad_value() const {
  if (size() != 1 || s_->grad.empty()) {
    throw std::logic_error("grad_value() needs a scalar with gradient");
  }
  return s_->grad[0];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s_->shape.size(); ++i) {
    os << (i ? "," : "") << s_->shape[i];
  }
  os << "]";
  return os.str();
}

}  // namespace flap
