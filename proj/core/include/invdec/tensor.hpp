#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace invdec {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major float64 array. A default-constructed tensor is a rank-0
/// scalar holding 0.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor full(Shape shape, double value) { return Tensor(std::move(shape), value); }
  static Tensor scalar(double value) { return Tensor(Shape{1}, value); }
  /// Rank-2 tensor from nested rows; all rows must have the same length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t numel() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double& at(std::size_t i, std::size_t j) { return data_[offset2(i, j)]; }
  double at(std::size_t i, std::size_t j) const { return data_[offset2(i, j)]; }
  double& at(std::size_t i, std::size_t j, std::size_t k) { return data_[offset3(i, j, k)]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const { return data_[offset3(i, j, k)]; }

  /// Copy with a new shape of equal element count.
  Tensor reshaped(Shape shape) const;
  /// In-place reshape; element count must match.
  void reshape(Shape shape);

  bool all_finite() const noexcept;
  double item() const;

  Tensor& operator+=(const Tensor& other);

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::size_t offset2(std::size_t i, std::size_t j) const;
  std::size_t offset3(std::size_t i, std::size_t j, std::size_t k) const;

  Shape shape_;
  std::vector<double> data_;
};

/// Largest element-wise absolute difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace invdec
