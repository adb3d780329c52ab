#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "flap/rng.hpp"

namespace flap {

// Dense row-major fp64 tensor with an optional gradient buffer. Copies are
// shallow handles onto shared storage, which is what lets tape closures and
// the optimizer see one another's updates.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<size_t> shape, double value,
                     bool requires_grad = false);
  static Tensor from_data(std::vector<size_t> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor randn(std::vector<size_t> shape, Rng& rng, double stddev = 1.0,
                      bool requires_grad = false);

  bool defined() const { return s_ != nullptr; }
  const std::vector<size_t>& shape() const { return s_->shape; }
  size_t size() const { return s_->data.size(); }
  size_t rank() const { return s_->shape.size(); }
  size_t extent(size_t axis) const { return s_->shape[axis]; }

  double* data() { return s_->data.data(); }
  const double* data() const { return s_->data.data(); }
  std::vector<double>& vec() { return s_->data; }
  const std::vector<double>& vec() const { return s_->data; }

  bool requires_grad() const { return s_->requires_grad; }
  void set_requires_grad(bool v) { s_->requires_grad = v; }

  bool has_grad() const { return !s_->grad.empty(); }
  // Allocates (zeroed) on first use; grad always matches the data shape.
  double* grad();
  const std::vector<double>& grad_vec() const { return s_->grad; }
  void zero_grad();

  double value() const;       // scalar convenience
  double grad_value() const;  // scalar convenience

  double& at(size_t i) { return s_->data[i]; }
  double at(size_t i) const { return s_->data[i]; }
  double& at(size_t i, size_t j) { return s_->data[i * s_->shape[1] + j]; }
  double at(size_t i, size_t j) const { return s_->data[i * s_->shape[1] + j]; }
  double& at(size_t i, size_t j, size_t k) {
    return s_->data[(i * s_->shape[1] + j) * s_->shape[2] + k];
  }
  double at(size_t i, size_t j, size_t k) const {
    return s_->data[(i * s_->shape[1] + j) * s_->shape[2] + k];
  }

  // True when both handles point at the same storage.
  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

  std::string shape_str() const;

 private:
  struct Storage {
    std::vector<size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };

  std::shared_ptr<Storage> s_;
};

size_t shape_numel(const std::vector<size_t>& shape);

}  // namespace flap
