#include "ovpseg/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "ovpseg/errors.hpp"

namespace ovpseg {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Shortest-augmenting-path assignment with row/column potentials for a
// dense matrix with n <= m. Returns the column of each row.
std::vector<int> assign_rect(const std::vector<double>& a, int n, int m) {
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(m) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(m) + 1, 0);  // row on column j
  std::vector<int> way(static_cast<std::size_t>(m) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(m) + 1, kInf);
    std::vector<char> used(static_cast<std::size_t>(m) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      int j1 = -1;
      double delta = kInf;
      for (int j = 1; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur =
            a[static_cast<std::size_t>(i0 - 1) * m + (j - 1)] -
            u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_col(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= m; ++j) {
    if (p[static_cast<std::size_t>(j)] != 0) {
      row_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)]) - 1] =
          j - 1;
    }
  }
  return row_col;
}

// Optimal assignment of the full matrix with some rows pre-committed
// (forced[r] >= 0 pins row r to that column; forced rows and their columns
// leave the subproblem). Returns row_col for ALL rows.
std::vector<int> solve_with_forced(const std::vector<double>& a, int n, int m,
                                   const std::vector<int>& forced) {
  std::vector<int> free_rows, free_cols;
  std::vector<char> col_taken(static_cast<std::size_t>(m), 0);
  for (int r = 0; r < n; ++r) {
    if (forced[static_cast<std::size_t>(r)] >= 0) {
      col_taken[static_cast<std::size_t>(forced[static_cast<std::size_t>(r)])] =
          1;
    } else {
      free_rows.push_back(r);
    }
  }
  for (int c = 0; c < m; ++c) {
    if (!col_taken[static_cast<std::size_t>(c)]) free_cols.push_back(c);
  }

  std::vector<int> row_col = forced;
  const int fn = static_cast<int>(free_rows.size());
  const int fm = static_cast<int>(free_cols.size());
  if (fn == 0 || fm == 0) return row_col;

  // The subproblem may be tall (more rows than columns); solve transposed
  // and map back — only the pairing matters here, not tie order, because
  // the caller drives tie-breaking through the forcing loop.
  const bool tall = fn > fm;
  const int sn = tall ? fm : fn;
  const int sm = tall ? fn : fm;
  std::vector<double> sub(static_cast<std::size_t>(sn) * sm);
  for (int i = 0; i < sn; ++i) {
    for (int j = 0; j < sm; ++j) {
      const int r = tall ? free_rows[static_cast<std::size_t>(j)]
                         : free_rows[static_cast<std::size_t>(i)];
      const int c = tall ? free_cols[static_cast<std::size_t>(i)]
                         : free_cols[static_cast<std::size_t>(j)];
      sub[static_cast<std::size_t>(i) * sm + j] =
          a[static_cast<std::size_t>(r) * m + c];
    }
  }
  const std::vector<int> sol = assign_rect(sub, sn, sm);
  for (int i = 0; i < sn; ++i) {
    const int j = sol[static_cast<std::size_t>(i)];
    if (j < 0) continue;
    const int r = tall ? free_rows[static_cast<std::size_t>(j)]
                       : free_rows[static_cast<std::size_t>(i)];
    const int c = tall ? free_cols[static_cast<std::size_t>(i)]
                       : free_cols[static_cast<std::size_t>(j)];
    row_col[static_cast<std::size_t>(r)] = c;
  }
  return row_col;
}

// Selected-entry sum in row order — one canonical accumulation order, so
// equal entry sets always produce the identical double.
double assignment_cost(const std::vector<double>& a, int m,
                       const std::vector<int>& row_col) {
  double total = 0.0;
  for (std::size_t r = 0; r < row_col.size(); ++r) {
    if (row_col[r] >= 0) total += a[r * static_cast<std::size_t>(m) + row_col[r]];
  }
  return total;
}

}  // namespace

Assignment hungarian(const Tensor& cost) {
  if (cost.ndim() != 2 || cost.rows() < 1 || cost.cols() < 1) {
    throw DimensionError("hungarian: cost must be a non-empty matrix");
  }
  for (const double v : cost.values()) {
    if (!std::isfinite(v)) {
      throw ContractError("hungarian: costs must be finite");
    }
  }
  const int n = cost.rows();
  const int m = cost.cols();
  const std::vector<double>& a = cost.values();

  std::vector<int> cur(static_cast<std::size_t>(n), -1);
  {
    std::vector<int> none(static_cast<std::size_t>(n), -1);
    cur = solve_with_forced(a, n, m, none);
  }
  const double best = assignment_cost(a, m, cur);

  // Lexicographic tie-breaking: commit rows top-down, each to the lowest
  // column that still reaches the optimal cost ("unmatched" ranks last).
  // Ties between distinct entry sets only survive when their sums match
  // exactly, so the equality below is deliberate.
  std::vector<int> forced(static_cast<std::size_t>(n), -1);
  std::vector<char> col_used(static_cast<std::size_t>(m), 0);
  for (int r = 0; r < n; ++r) {
    const int limit = cur[static_cast<std::size_t>(r)] >= 0
                          ? cur[static_cast<std::size_t>(r)]
                          : m;
    for (int c = 0; c < limit; ++c) {
      if (col_used[static_cast<std::size_t>(c)]) continue;
      forced[static_cast<std::size_t>(r)] = c;
      const std::vector<int> candidate = solve_with_forced(a, n, m, forced);
      if (assignment_cost(a, m, candidate) == best) {
        cur = candidate;
        break;
      }
      forced[static_cast<std::size_t>(r)] = -1;
    }
    forced[static_cast<std::size_t>(r)] = cur[static_cast<std::size_t>(r)];
    if (forced[static_cast<std::size_t>(r)] >= 0) {
      col_used[static_cast<std::size_t>(forced[static_cast<std::size_t>(r)])] =
          1;
    }
  }

  Assignment out;
  out.row_col = std::move(cur);
  out.cost = assignment_cost(a, m, out.row_col);
  return out;
}

}  // namespace ovpseg
