#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "ovpseg/errors.hpp"

namespace ovpseg {

/// Dense row-major tensor of 64-bit reals. Construction from data rejects
/// NaN/Inf; an instance is immutable by convention once handed to the
/// autodiff layer.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor from(std::vector<int> shape, std::vector<double> data);
  static Tensor scalar(double value) { return from({1}, {value}); }
  static Tensor row_matrix(std::initializer_list<std::initializer_list<double>> rows);

  const std::vector<int>& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // 2-D accessors; row-major.
  double at(int r, int c) const { return data_[idx2(r, c)]; }
  double& at(int r, int c) { return data_[idx2(r, c)]; }
  int rows() const { return shape_.empty() ? 0 : shape_[0]; }
  int cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  // Scalar convenience: a 1-element tensor's value.
  double item() const;

 private:
  std::size_t idx2(int r, int c) const {
    return static_cast<std::size_t>(r) * static_cast<std::size_t>(shape_[1]) +
           static_cast<std::size_t>(c);
  }

  std::vector<int> shape_;
  std::vector<double> data_;
};

std::size_t shape_product(const std::vector<int>& shape);

}  // namespace ovpseg
