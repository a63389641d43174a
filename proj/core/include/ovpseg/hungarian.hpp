#pragma once

#include <vector>

#include "ovpseg/tensor.hpp"

namespace ovpseg {

/// Minimum-cost one-to-one assignment over an n x m cost matrix.
struct Assignment {
  // Column matched to each row, -1 for rows left out when n > m. Exactly
  // min(n, m) entries are >= 0 and they are pairwise distinct.
  std::vector<int> row_col;
  double cost = 0.0;  // sum of the selected entries, accumulated in row order

  std::vector<std::pair<int, int>> pairs() const {
    std::vector<std::pair<int, int>> out;
    for (int r = 0; r < static_cast<int>(row_col.size()); ++r) {
      if (row_col[static_cast<std::size_t>(r)] >= 0) {
        out.emplace_back(r, row_col[static_cast<std::size_t>(r)]);
      }
    }
    return out;
  }
};

/// Exact minimum-cost assignment (shortest augmenting paths on potentials).
/// Among cost-ties it returns the lexicographically smallest assignment:
/// row 0 takes the lowest usable column, then row 1, and so on, with
/// "unmatched" ordered after every real column. Costs must be finite
/// (ContractError otherwise).
Assignment hungarian(const Tensor& cost);

}  // namespace ovpseg
