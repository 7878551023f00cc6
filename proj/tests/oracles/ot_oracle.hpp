#pragma once

// Exact discrete optimal transport for tiny instances by enumerating the
// vertices of the transport polytope. Every vertex is a basic feasible
// solution supported on a spanning tree of the complete bipartite graph
// K_{n,n} (2n-1 edges), so trying every (2n-1)-edge subset that forms a
// spanning tree and solving its flows by leaf elimination visits them all.
// Intended for n <= 4 (C(16, 7) = 11440 subsets).

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace sarl::oracle {

inline double exact_ot(const std::vector<double>& a, const std::vector<double>& b,
                       const std::vector<double>& cost /* n*n row-major */) {
  const int n = static_cast<int>(a.size());
  const int n_edges = n * n;
  const int k = 2 * n - 1;
  double best = std::numeric_limits<double>::infinity();

  std::vector<int> pick(k);
  std::iota(pick.begin(), pick.end(), 0);
  while (true) {
    // Nodes 0..n-1 are sources, n..2n-1 sinks; edge e joins e/n and n + e%n.
    std::vector<int> parent(2 * n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    bool tree = true;
    for (int e : pick) {
      const int u = find(e / n), v = find(n + e % n);
      if (u == v) {
        tree = false;
        break;
      }
      parent[u] = v;
    }
    if (tree) {
      std::vector<double> supply(2 * n);
      for (int i = 0; i < n; ++i) {
        supply[i] = a[i];
        supply[n + i] = b[i];
      }
      std::vector<char> used(k, 0);
      std::vector<double> flow(k, 0.0);
      bool feasible = true;
      for (int step = 0; step < k; ++step) {
        // Find a node touching exactly one unused edge.
        int leaf_edge = -1, leaf_node = -1;
        for (int node = 0; node < 2 * n && leaf_edge < 0; ++node) {
          int cnt = 0, last = -1;
          for (int t = 0; t < k; ++t) {
            if (used[t]) continue;
            const int e = pick[t];
            if (e / n == node || n + e % n == node) {
              ++cnt;
              last = t;
            }
          }
          if (cnt == 1) {
            leaf_edge = last;
            leaf_node = node;
          }
        }
        const int e = pick[leaf_edge];
        const int other = (e / n == leaf_node) ? n + e % n : e / n;
        flow[leaf_edge] = supply[leaf_node];
        supply[other] -= supply[leaf_node];
        supply[leaf_node] = 0.0;
        used[leaf_edge] = 1;
        if (flow[leaf_edge] < -1e-12) feasible = false;
      }
      if (feasible) {
        double c = 0.0;
        for (int t = 0; t < k; ++t) c += std::max(flow[t], 0.0) * cost[pick[t]];
        best = std::min(best, c);
      }
    }
    // Next combination.
    int i = k - 1;
    while (i >= 0 && pick[i] == n_edges - k + i) --i;
    if (i < 0) break;
    ++pick[i];
    for (int j = i + 1; j < k; ++j) pick[j] = pick[j - 1] + 1;
  }
  return best;
}

}  // namespace sarl::oracle
