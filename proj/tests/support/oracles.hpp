#pragma once

#include <vector>

#include "ovpseg/inference.hpp"
#include "ovpseg/metrics.hpp"
#include "ovpseg/rng.hpp"
#include "ovpseg/tensor.hpp"
#include "ovpseg/vocab.hpp"

// Small reference implementations kept deliberately independent of the
// library code they check: different algorithms or loop structure, no shared
// helpers beyond the Tensor container.
namespace ovpseg::testing {

// Triple loop in i,j,k order (the library accumulates in i,k,j order).
Tensor naive_matmul(const Tensor& a, const Tensor& b);

Tensor random_tensor(Rng& rng, std::vector<int> shape, double lo, double hi);

struct BruteAssignment {
  std::vector<int> row_col;  // column per row, -1 for unmatched rows
  double cost = 0.0;
};

// Exhaustive search over every one-to-one assignment of min(n, m) pairs.
// Among cost ties keeps the first in recursion order, which enumerates row
// 0's columns ascending before "unmatched" — the lexicographically smallest
// assignment. Costs accumulate in row order.
BruteAssignment brute_force_assignment(const Tensor& cost);

// Literal panoptic-quality computation: materializes every segment as an
// explicit point set, compares all same-class pairs by direct set
// intersection, applies the IoU > 1/2 rule, and sums matched IoUs in
// ascending value order. Quadratic in segments, for small scenes only.
PQReport brute_force_pq(const PanopticPrediction& pred,
                        const PanopticPrediction& gt,
                        const Vocabulary& vocab);

// Confusion-matrix semantic IoU: per-class intersection and union counted
// by explicit per-point comparison loops.
MiouReport confusion_miou(const std::vector<int>& pred_semantic,
                          const std::vector<int>& gt_semantic,
                          const Vocabulary& vocab);

}  // namespace ovpseg::testing
