// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#ifndef GRAPHNLP_ORDERING_HPP
#define GRAPHNLP_ORDERING_HPP

#include <algorithm>
#include <queue>
#include <vector>

#include "graphnlp/sparse.hpp"

namespace graphnlp {

/// Fill-reducing minimum-degree ordering on the symmetric pattern of m,
/// computed on a quotient graph (eliminated vertices become elements that
/// are absorbed on contact). Deterministic: ties break on the smallest
/// vertex index. Returns perm with perm[k] = original index ordered k-th.
inline std::vector<int> min_degree_ordering(const SparseSym& m) {
  const int n = m.n();
  std::vector<std::vector<int>> vadj(n);   // variable-variable adjacency
  std::vector<std::vector<int>> velems(n); // elements adjacent to a variable
  for (int j = 0; j < n; ++j) {
    for (int k = m.col_ptr()[j]; k < m.col_ptr()[j + 1]; ++k) {
      const int i = m.row_ind()[k];
      if (i == j) continue;
      vadj[i].push_back(j);
      vadj[j].push_back(i);
    }
  }
  for (auto& a : vadj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }

  std::vector<std::vector<int>> elem_vars;  // element -> member variables
  std::vector<char> eliminated(n, 0);
  std::vector<int> mark(n, -1);
  int mark_token = 0;

  // reach(v) = (vadj(v) U vars of adjacent elements) \ {v, eliminated}
  auto reach = [&](int v, std::vector<int>& out) {
    out.clear();
    ++mark_token;
    mark[v] = mark_token;
    for (int u : vadj[v]) {
      if (!eliminated[u] && mark[u] != mark_token) {
        mark[u] = mark_token;
        out.push_back(u);
      }
    }
    for (int e : velems[v]) {
      for (int u : elem_vars[e]) {
        if (!eliminated[u] && u != v && mark[u] != mark_token) {
          mark[u] = mark_token;
          out.push_back(u);
        }
      }
    }
  };

  using Entry = std::pair<int, int>;  // (degree, vertex)
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap;
  std::vector<int> scratch;
  for (int v = 0; v < n; ++v) {
    reach(v, scratch);
    heap.emplace(static_cast<int>(scratch.size()), v);
  }

  std::vector<int> perm;
  perm.reserve(n);
  std::vector<int> lv;
  while (!heap.empty()) {
    auto [deg, v] = heap.top();
    heap.pop();
    if (eliminated[v]) continue;
    reach(v, lv);
    if (static_cast<int>(lv.size()) != deg) {
      heap.emplace(static_cast<int>(lv.size()), v);  // stale entry
      continue;
    }
    // eliminate v: new element covering lv, absorbing v's old elements
    eliminated[v] = 1;
    perm.push_back(v);
    std::sort(lv.begin(), lv.end());
    const int e_new = static_cast<int>(elem_vars.size());
    std::vector<int> absorbed = velems[v];
    elem_vars.push_back(lv);
    for (int u : lv) {
      auto& es = velems[u];
      es.erase(std::remove_if(es.begin(), es.end(),
                              [&](int e) {
                                return std::find(absorbed.begin(),
                                                 absorbed.end(),
                                                 e) != absorbed.end();
                              }),
               es.end());
      es.push_back(e_new);
      // drop explicit edges now covered by the element
      auto& av = vadj[u];
      av.erase(std::remove_if(av.begin(), av.end(),
                              [&](int w) {
                                return w == v ||
                                       std::binary_search(lv.begin(), lv.end(),
                                                          w);
                              }),
               av.end());
      reach(u, scratch);
      heap.emplace(static_cast<int>(scratch.size()), u);
    }
    for (int e : absorbed) elem_vars[e].clear();
    velems[v].clear();
    vadj[v].clear();
  }
  return perm;
}

}  // namespace graphnlp

#endif  // GRAPHNLP_ORDERING_HPP
