#include "ovpseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ovpseg/errors.hpp"

namespace ovpseg {

GradCheckReport grad_check(const std::function<Var(const Var&)>& f,
                           const Tensor& x, double h, double tol) {
  if (h <= 0.0) throw ContractError("grad_check: step must be positive");

  Var leaf = Var::leaf(x, true);
  Var out = f(leaf);
  if (out.value().size() != 1) {
    throw ContractError("grad_check: function must return a scalar");
  }
  backward(out);
  const Tensor analytic = leaf.grad();

  GradCheckReport report;
  report.tol = tol;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = probe.data()[i];
    probe.values()[i] = orig + h;
    const double fp = f(Var::constant(probe)).value().data()[0];
    probe.values()[i] = orig - h;
    const double fm = f(Var::constant(probe)).value().data()[0];
    probe.values()[i] = orig;

    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic.data()[i];
    const double rel = std::fabs(a - numeric) /
                       std::max({1.0, std::fabs(a), std::fabs(numeric)});
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = i;
      report.analytic_at_worst = a;
      report.numeric_at_worst = numeric;
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

ParamGradCheckReport grad_check_params(const std::function<Var()>& loss,
                                       const ParamStore& params, double h,
                                       double tol) {
  if (h <= 0.0) throw ContractError("grad_check_params: step must be positive");

  Var out = loss();
  if (out.value().size() != 1) {
    throw ContractError("grad_check_params: loss must return a scalar");
  }
  backward(out);

  // Snapshot the analytic gradients before the probing loop overwrites them.
  std::vector<Tensor> analytic;
  analytic.reserve(static_cast<std::size_t>(params.count()));
  for (const Var& p : params.vars()) analytic.push_back(p.grad());

  ParamGradCheckReport report;
  report.tol = tol;
  for (int pi = 0; pi < params.count(); ++pi) {
    Var param = params.vars()[pi];  // shares the node; nudge in place
    Tensor& value = param.mutable_value();
    const Tensor& grad = analytic[static_cast<std::size_t>(pi)];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double orig = value.values()[i];
      value.values()[i] = orig + h;
      const double fp = loss().value().data()[0];
      value.values()[i] = orig - h;
      const double fm = loss().value().data()[0];
      value.values()[i] = orig;

      const double numeric = (fp - fm) / (2.0 * h);
      // An untouched parameter never gets a gradient tensor allocated.
      const double a = grad.empty() ? 0.0 : grad.data()[i];
      const double rel = std::fabs(a - numeric) /
                         std::max({1.0, std::fabs(a), std::fabs(numeric)});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = params.names()[static_cast<std::size_t>(pi)];
        report.worst_index = i;
        report.analytic_at_worst = a;
        report.numeric_at_worst = numeric;
      }
    }
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace ovpseg
