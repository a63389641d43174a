#include "ovpseg/tensor.hpp"

#include <cmath>
#include <string>

namespace ovpseg {

std::size_t shape_product(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw DimensionError("negative dimension in tensor shape");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

Tensor Tensor::zeros(std::vector<int> shape) {
  Tensor t;
  const std::size_t n = shape_product(shape);
  t.shape_ = std::move(shape);
  t.data_.assign(n, 0.0);
  return t;
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  if (!std::isfinite(value)) throw DimensionError("non-finite fill value");
  Tensor t = zeros(std::move(shape));
  for (double& x : t.data_) x = value;
  return t;
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data) {
  const std::size_t n = shape_product(shape);
  if (n != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape product " + std::to_string(n));
  }
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!std::isfinite(data[i])) {
      throw DimensionError("non-finite value at flat index " + std::to_string(i));
    }
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::move(data);
  return t;
}

Tensor Tensor::row_matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const int r = static_cast<int>(rows.size());
  const int c = r == 0 ? 0 : static_cast<int>(rows.begin()->size());
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(r) * static_cast<std::size_t>(c));
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != c) {
      throw DimensionError("ragged row_matrix initializer");
    }
    data.insert(data.end(), row.begin(), row.end());
  }
  return from({r, c}, std::move(data));
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ContractError("item() on tensor with " + std::to_string(data_.size()) +
                        " elements");
  }
  return data_[0];
}

}  // namespace ovpseg
