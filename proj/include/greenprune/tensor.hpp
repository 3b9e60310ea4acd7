#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace greenprune {

/// Dense row-major array of doubles.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return values_.size(); }
  bool empty() const { return values_.empty(); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Element (row, col) of a rank-2 tensor.
  double& at(std::size_t row, std::size_t col) { return values_[row * shape_[1] + col]; }
  double at(std::size_t row, std::size_t col) const { return values_[row * shape_[1] + col]; }

  /// Same values under a new shape with equal element count.
  Tensor reshaped(std::vector<std::size_t> shape) const;

  void fill(double v);
  bool all_finite() const;

  bool operator==(const Tensor&) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

std::size_t shape_product(const std::vector<std::size_t>& shape);
std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace greenprune
