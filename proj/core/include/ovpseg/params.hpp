#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "ovpseg/autodiff.hpp"
#include "ovpseg/tensor.hpp"

namespace ovpseg {

/// Named trainable leaves in registration order. The optimizer walks the
/// order; checkpoints and the gradient checker address tensors by name.
class ParamStore {
 public:
  Var add(const std::string& name, Tensor init);
  const Var& at(const std::string& name) const;  // LookupError when absent
  bool has(const std::string& name) const { return index_.count(name) != 0; }

  int count() const { return static_cast<int>(vars_.size()); }
  const std::vector<std::string>& names() const { return names_; }
  const std::vector<Var>& vars() const { return vars_; }

  // Total trainable coordinates across all tensors.
  std::size_t scalar_count() const;

 private:
  std::vector<std::string> names_;
  std::vector<Var> vars_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace ovpseg
