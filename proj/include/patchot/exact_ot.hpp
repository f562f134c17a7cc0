#pragma once

// Exact optimal transport between two small uniform empirical measures, used
// as a reference for the semi-dual solver.

#include <algorithm>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "patchot/patches.hpp"

namespace patchot {

class capacity_error : public std::length_error {
 public:
  using std::length_error::length_error;
};

inline constexpr std::size_t kExactOtMaxPairs = 1'000'000;

/// Dense row-major cost matrix c(x_i, y_j) = 1/2 |x_i - y_j|^2.
template <class Real>
std::vector<double> quadratic_cost_matrix(const PatchMatrix<Real>& source,
                                          const PatchMatrix<Real>& target) {
  if (source.dim() != target.dim()) throw std::invalid_argument("cost matrix: dimension mismatch");
  const std::size_t n = source.count();
  const std::size_t m = target.count();
  std::vector<double> cost(n * m);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = source.row(i);
    for (std::size_t j = 0; j < m; ++j) {
      const auto y = target.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) {
        const double d = static_cast<double>(x[k]) - static_cast<double>(y[k]);
        acc += d * d;
      }
      cost[i * m + j] = 0.5 * acc;
    }
  }
  return cost;
}

struct MatchingSolution {
  std::vector<std::size_t> col_of_row;
  /// Dual potentials with row[i] + col[j] <= cost(i, j), tight on the matching.
  std::vector<double> row_potential;
  std::vector<double> col_potential;
  double total_cost = 0.0;
};

/// Minimum-cost perfect matching on an n x n cost matrix (Hungarian method
/// with row/column potentials, O(n^3)).
inline MatchingSolution hungarian_assignment(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw std::invalid_argument("hungarian: cost matrix is not n x n");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; index 0 is the virtual row/column.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> row_of_col(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    row_of_col[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = row_of_col[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[row_of_col[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of_col[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      row_of_col[j0] = row_of_col[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  MatchingSolution sol;
  sol.col_of_row.resize(n);
  for (std::size_t j = 1; j <= n; ++j) sol.col_of_row[row_of_col[j] - 1] = j - 1;
  sol.row_potential.assign(u.begin() + 1, u.end());
  sol.col_potential.assign(v.begin() + 1, v.end());
  for (std::size_t i = 0; i < n; ++i) sol.total_cost += cost[i * n + sol.col_of_row[i]];
  return sol;
}

/// Optimal cost of transporting uniform weights 1/n on the rows onto uniform
/// weights 1/m on the columns. Solved as an integer transportation problem
/// (supply m per row, demand n per column) by successive shortest paths with
/// Dijkstra on reduced costs.
inline double uniform_transport_cost(std::span<const double> cost, std::size_t n, std::size_t m) {
  if (n == 0 || m == 0 || cost.size() != n * m) {
    throw std::invalid_argument("transport: cost matrix does not match n x m");
  }
  const double inf = std::numeric_limits<double>::infinity();
  // Node layout: 0 = super source, 1..n rows, n+1..n+m columns, n+m+1 = sink.
  const std::size_t S = 0, T = n + m + 1, V = n + m + 2;
  auto row_node = [](std::size_t i) { return 1 + i; };
  auto col_node = [n](std::size_t j) { return 1 + n + j; };

  std::vector<long long> supply(n, static_cast<long long>(m));
  std::vector<long long> demand(m, static_cast<long long>(n));
  std::vector<long long> flow(n * m, 0);
  std::vector<double> pot(V, 0.0), dist(V);
  std::vector<std::size_t> parent(V);
  std::vector<bool> done(V);
  long long remaining = static_cast<long long>(n) * static_cast<long long>(m);

  while (remaining > 0) {
    std::fill(dist.begin(), dist.end(), inf);
    std::fill(done.begin(), done.end(), false);
    dist[S] = 0.0;
    auto relax = [&](std::size_t from, std::size_t to, double c) {
      if (done[to]) return;
      const double nd = dist[from] + c + pot[from] - pot[to];
      if (nd < dist[to]) {
        dist[to] = nd;
        parent[to] = from;
      }
    };
    for (;;) {
      std::size_t u = V;
      for (std::size_t k = 0; k < V; ++k) {
        if (!done[k] && dist[k] < inf && (u == V || dist[k] < dist[u])) u = k;
      }
      if (u == V) break;
      done[u] = true;
      if (u == S) {
        for (std::size_t i = 0; i < n; ++i) {
          if (supply[i] > 0) relax(S, row_node(i), 0.0);
        }
      } else if (u == T) {
        for (std::size_t j = 0; j < m; ++j) {
          if (demand[j] < static_cast<long long>(n)) relax(T, col_node(j), 0.0);
        }
      } else if (u <= n) {
        const std::size_t i = u - 1;
        for (std::size_t j = 0; j < m; ++j) relax(u, col_node(j), cost[i * m + j]);
        if (supply[i] < static_cast<long long>(m)) relax(u, S, 0.0);
      } else {
        const std::size_t j = u - 1 - n;
        for (std::size_t i = 0; i < n; ++i) {
          if (flow[i * m + j] > 0) relax(u, row_node(i), -cost[i * m + j]);
        }
        if (demand[j] > 0) relax(u, T, 0.0);
      }
    }
    if (dist[T] == inf) throw std::logic_error("transport: sink unreachable");
    for (std::size_t k = 0; k < V; ++k) pot[k] += std::min(dist[k], dist[T]);

    // Path is S -> row -> col -> row -> ... -> col -> T.
    std::vector<std::size_t> path{T};
    while (path.back() != S) path.push_back(parent[path.back()]);
    std::reverse(path.begin(), path.end());
    long long push = std::min(supply[path[1] - 1], demand[path[path.size() - 2] - 1 - n]);
    for (std::size_t k = 3; k + 1 < path.size(); k += 2) {
      // path[k-1] is a column, path[k] a row: reverse edge col -> row.
      const std::size_t j = path[k - 1] - 1 - n;
      const std::size_t i = path[k] - 1;
      push = std::min(push, flow[i * m + j]);
    }
    supply[path[1] - 1] -= push;
    demand[path[path.size() - 2] - 1 - n] -= push;
    for (std::size_t k = 1; k + 1 < path.size(); ++k) {
      const std::size_t a = path[k], b = path[k + 1];
      if (a >= 1 && a <= n && b > n && b < T) {
        flow[(a - 1) * m + (b - 1 - n)] += push;
      } else if (a > n && a < T && b >= 1 && b <= n) {
        flow[(b - 1) * m + (a - 1 - n)] -= push;
      }
    }
    remaining -= push;
  }

  double total = 0.0;
  for (std::size_t k = 0; k < n * m; ++k) total += static_cast<double>(flow[k]) * cost[k];
  return total / (static_cast<double>(n) * static_cast<double>(m));
}

/// Exact OT cost between the uniform empirical measures of two patch sets
/// under c(x, y) = 1/2 |x - y|^2. Throws capacity_error beyond 10^6 pairs.
template <class Real>
double exact_ot_small(const PatchMatrix<Real>& source, const PatchMatrix<Real>& target) {
  const std::size_t n = source.count();
  const std::size_t m = target.count();
  if (n == 0 || m == 0) throw std::invalid_argument("exact_ot_small: empty point set");
  if (n * m > kExactOtMaxPairs) {
    throw capacity_error("exact_ot_small: " + std::to_string(n) + " x " + std::to_string(m) +
                         " pairs exceeds the dense limit of " + std::to_string(kExactOtMaxPairs));
  }
  const auto cost = quadratic_cost_matrix(source, target);
  if (n == m) {
    return hungarian_assignment(cost, n).total_cost / static_cast<double>(n);
  }
  return uniform_transport_cost(cost, n, m);
}

}  // namespace patchot
