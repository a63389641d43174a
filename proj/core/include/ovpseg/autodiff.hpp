#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <vector>

#include "ovpseg/tensor.hpp"

namespace ovpseg {

// One node of a define-by-run reverse-mode graph. The graph is rebuilt on
// every forward pass and torn down when the output handle is dropped.
struct Node {
  Tensor value;
  Tensor grad;  // allocated by backward()
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad, accumulates into parents' grad. Empty for leaves and
  // constants.
  std::function<void(Node&)> backprop;
};

/// Shared handle to a graph node. Copying shares the node.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Var leaf(Tensor value, bool requires_grad = true);
  static Var constant(Tensor value) { return leaf(std::move(value), false); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Tensor& grad() const { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  const std::shared_ptr<Node>& node() const { return node_; }

  // Constant view of the current value; gradients never flow through it.
  Var detach() const { return constant(node_->value); }

 private:
  std::shared_ptr<Node> node_;
};

// Scalar root only (shape {1}). Visits every reachable grad-requiring node
// exactly once in reverse topological order.
void backward(const Var& root);

// ---- elementwise / structural ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double k);
Var add_scalar(const Var& a, double k);
// a (R x C) + row broadcast of b (C).
Var add_rowvec(const Var& a, const Var& b);
// a * s where s is a scalar variable.
Var mul_scalar_var(const Var& a, const Var& s);
Var concat_cols(const Var& a, const Var& b);
Var concat_rows(const Var& a, const Var& b);
// Elementwise e^x.
Var exp_elem(const Var& a);
Var transpose(const Var& a);
Var gather_row(const Var& a, int row);
Var clip(const Var& a, double lo, double hi);
Var abs(const Var& a);

// ---- nonlinearities ----
Var sigmoid(const Var& a);
Var tanh_act(const Var& a);
// 1-D input, max-subtracted.
Var softmax(const Var& a);
// Each row of a 2-D input sums to 1.
Var softmax_rows(const Var& a);
// Each column of a 2-D input sums to 1 (mask-probability normalization
// across queries).
Var softmax_cols(const Var& a);

// ---- contractions ----
Var matmul(const Var& a, const Var& b);
Var sum(const Var& a);
Var mean(const Var& a);
// Vector cosine similarity; throws DegenerateVectorError on zero norm.
Var cosine(const Var& a, const Var& b);
// Row-by-row cosine table: out[q, l] = cos(a_row_q, b_row_l).
Var cosine_rows(const Var& a, const Var& b);

// ---- losses / reductions ----
// Mean absolute difference over all elements.
Var l1_mean(const Var& a, const Var& b);
// One-vs-all binary focal loss over C class probabilities, summed over
// classes. target = nullopt is the no-object (all-zero) target.
Var focal_loss(const Var& probs, std::optional<int> target, double gamma,
               double alpha);
// Mean of the per-element stable binary cross-entropy of logits vs targets.
Var bce_logits_mean(const Var& logits, const Tensor& targets);
// 1 - (2*sum(p*g)+1)/(sum(p)+sum(g)+1).
Var dice_loss(const Var& probs, const Tensor& targets);
// Per-row max over label groups: out[r, c] = max over labels l with
// label_class[l] == c of scores[r, l]. 1-D input treated as one row.
Var class_max(const Var& scores, const std::vector<int>& label_class,
              int n_classes);

// ---- plain-tensor counterparts used on non-differentiable paths ----
Tensor matmul_plain(const Tensor& a, const Tensor& b);
Tensor softmax_plain(const Tensor& v);
double sigmoid_scalar(double x);
double dot_plain(const Tensor& a, const Tensor& b);
double norm_plain(const Tensor& a);
double cosine_plain(const Tensor& a, const Tensor& b);

}  // namespace ovpseg
