#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "ovpseg/autodiff.hpp"
#include "ovpseg/params.hpp"
#include "ovpseg/tensor.hpp"

namespace ovpseg {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  double tol = 0.0;
  bool pass = false;
};

// Central-difference check of f's gradient at x. f must map a leaf variable
// to a scalar. Relative error per coordinate is
// |a - n| / max(1, |a|, |n|), so tiny absolute gradients are compared on an
// absolute scale instead of blowing up.
GradCheckReport grad_check(const std::function<Var(const Var&)>& f,
                           const Tensor& x, double h = 1e-5,
                           double tol = 1e-4);

struct ParamGradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  double tol = 0.0;
  bool pass = false;
};

// Central-difference check over every coordinate of every parameter in the
// store. `loss` must rebuild its graph from the parameters' current values
// on each call (values are nudged in place between calls). A parameter the
// loss never touches checks out trivially: both sides are zero.
ParamGradCheckReport grad_check_params(const std::function<Var()>& loss,
                                       const ParamStore& params,
                                       double h = 1e-5, double tol = 1e-4);

}  // namespace ovpseg
