#pragma once

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace higraph::nd {

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DegenerateBatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NoTape : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense row-major tensor of 64-bit floats with an optional gradient
/// buffer. Copies alias the same storage; use `clone()` for a deep copy.
class Tensor {
 public:
  Tensor() : impl_(std::make_shared<Impl>()) {}

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double value, bool requires_grad = false);
  static Tensor from(std::vector<std::size_t> shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const std::vector<std::size_t>& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t size() const { return impl_->data.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }

  double* data() { return impl_->data.data(); }
  const double* data() const { return impl_->data.data(); }
  std::vector<double>& values() { return impl_->data; }
  const std::vector<double>& values() const { return impl_->data; }

  double& operator()(std::size_t i) { return impl_->data[i]; }
  double operator()(std::size_t i) const { return impl_->data[i]; }
  double& operator()(std::size_t i, std::size_t j) {
    return impl_->data[i * impl_->shape[1] + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return impl_->data[i * impl_->shape[1] + j];
  }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool v) { impl_->requires_grad = v; }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient buffer, allocated (zero-filled) on first access.
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  /// Deep copy of the values; gradient state is not copied.
  Tensor clone() const;
  /// Overwrite this tensor's values from another of identical shape.
  void copy_values_from(const Tensor& other);

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  struct Impl {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

std::size_t shape_numel(const std::vector<std::size_t>& shape);
std::string shape_str(const std::vector<std::size_t>& shape);

/// Named trainable tensor. Names are unique within a model registry.
struct Parameter {
  std::string name;
  Tensor tensor;
};

}  // namespace higraph::nd
