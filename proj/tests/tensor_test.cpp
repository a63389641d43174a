#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <limits>

#include "ovpseg/errors.hpp"
#include "ovpseg/tensor.hpp"

using namespace ovpseg;

TEST_CASE("construction checks shape against data length") {
  CHECK_NOTHROW(Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}));
  CHECK_THROWS_AS(Tensor::from({2, 3}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor::from({0}, {1}), DimensionError);
}

TEST_CASE("construction rejects non-finite values") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const double inf = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(Tensor::from({2}, {1.0, nan}), DimensionError);
  CHECK_THROWS_AS(Tensor::from({2}, {inf, 0.0}), DimensionError);
  CHECK_THROWS_AS(Tensor::from({2}, {-inf, 0.0}), DimensionError);
}

TEST_CASE("zeros and full fill every element") {
  Tensor z = Tensor::zeros({3, 2});
  CHECK(z.size() == 6);
  for (std::size_t i = 0; i < z.size(); ++i) CHECK(z[i] == 0.0);
  Tensor f = Tensor::full({4}, 2.5);
  for (std::size_t i = 0; i < f.size(); ++i) CHECK(f[i] == 2.5);
}

TEST_CASE("row-major 2-D indexing") {
  Tensor t = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.at(0, 0) == 1);
  CHECK(t.at(0, 2) == 3);
  CHECK(t.at(1, 0) == 4);
  CHECK(t.at(1, 2) == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
}

TEST_CASE("row_matrix rejects ragged rows") {
  CHECK_NOTHROW(Tensor::row_matrix({{1, 2}, {3, 4}}));
  CHECK_THROWS_AS(Tensor::row_matrix({{1, 2}, {3}}), DimensionError);
}

TEST_CASE("item only works on single-element tensors") {
  CHECK(Tensor::scalar(3.5).item() == 3.5);
  CHECK_THROWS_AS(Tensor::from({2}, {1, 2}).item(), ContractError);
}
