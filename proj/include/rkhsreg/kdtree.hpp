// rkhsreg: static kd-tree over 3-d points.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "rkhsreg/core.hpp"

namespace rkhsreg {

/**
 * Immutable kd-tree built once over a point set.
 *
 * Nearest-neighbour queries order candidates by (squared distance, index),
 * so ties resolve to the lower index and results match a brute-force scan
 * exactly. Radius queries return indices in ascending order.
 */
class KdTree {
 public:
  struct Hit {
    double d2;
    int index;
    bool operator<(const Hit& o) const {
      return d2 != o.d2 ? d2 < o.d2 : index < o.index;
    }
  };

  explicit KdTree(const std::vector<Vec3>& points) : pts_(points) {
    const int n = static_cast<int>(pts_.size());
    perm_.resize(n);
    for (int i = 0; i < n; ++i) perm_[i] = i;
    nodes_.reserve(n / kLeafSize * 2 + 4);
    if (n > 0) root_ = build(0, n);
  }

  std::size_t size() const { return pts_.size(); }

  /**
   * k nearest neighbours of query, best first. exclude (if >= 0) removes one
   * index from consideration, for self-excluded neighbourhoods.
   */
  void knn(const Vec3& query, int k, int exclude, std::vector<Hit>& out) const {
    out.clear();
    if (k <= 0 || pts_.empty()) return;
    KnnState st{query, k, exclude, out};
    if (root_ >= 0) search_knn(root_, st);
    std::sort(out.begin(), out.end());
  }

  /// Indices within radius of query, ascending.
  void radius(const Vec3& query, double r, std::vector<int>& out) const {
    out.clear();
    if (pts_.empty() || r < 0.0) return;
    search_radius(root_, query, r * r, out);
    std::sort(out.begin(), out.end());
  }

 private:
  static constexpr int kLeafSize = 16;

  struct Node {
    double split = 0.0;
    int axis = -1;           // -1 marks a leaf
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into perm_
  };

  struct KnnState {
    const Vec3& q;
    int k;
    int exclude;
    std::vector<Hit>& heap;  // max-heap on (d2, index)
  };

  int build(int begin, int end) {
    Node node;
    const int idx = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= kLeafSize) {
      nodes_[idx].begin = begin;
      nodes_[idx].end = end;
      return idx;
    }
    Vec3 lo = pts_[perm_[begin]], hi = lo;
    for (int i = begin + 1; i < end; ++i) {
      lo = lo.cwiseMin(pts_[perm_[i]]);
      hi = hi.cwiseMax(pts_[perm_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(perm_.begin() + begin, perm_.begin() + mid, perm_.begin() + end,
                     [&](int a, int b) {
                       const double ca = pts_[a][axis], cb = pts_[b][axis];
                       return ca != cb ? ca < cb : a < b;
                     });
    // capture before recursion re-permutes the subranges
    const double split = pts_[perm_[mid]][axis];
    const int l = build(begin, mid);
    const int r = build(mid, end);
    nodes_[idx].axis = axis;
    nodes_[idx].split = split;
    nodes_[idx].left = l;
    nodes_[idx].right = r;
    return idx;
  }

  static bool heap_worse(const Hit& a, const Hit& b) { return a < b; }

  void offer(KnnState& st, int pi) const {
    if (pi == st.exclude) return;
    const Hit h{(pts_[pi] - st.q).squaredNorm(), pi};
    if (static_cast<int>(st.heap.size()) < st.k) {
      st.heap.push_back(h);
      std::push_heap(st.heap.begin(), st.heap.end(), heap_worse);
    } else if (h < st.heap.front()) {
      std::pop_heap(st.heap.begin(), st.heap.end(), heap_worse);
      st.heap.back() = h;
      std::push_heap(st.heap.begin(), st.heap.end(), heap_worse);
    }
  }

  void search_knn(int ni, KnnState& st) const {
    const Node& node = nodes_[ni];
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) offer(st, perm_[i]);
      return;
    }
    const double delta = st.q[node.axis] - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    search_knn(near, st);
    // <= keeps equal-distance candidates reachable so index ties stay exact.
    if (static_cast<int>(st.heap.size()) < st.k || delta * delta <= st.heap.front().d2)
      search_knn(far, st);
  }

  void search_radius(int ni, const Vec3& q, double r2, std::vector<int>& out) const {
    const Node& node = nodes_[ni];
    if (node.axis < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        const int pi = perm_[i];
        if ((pts_[pi] - q).squaredNorm() <= r2) out.push_back(pi);
      }
      return;
    }
    const double delta = q[node.axis] - node.split;
    const int near = delta < 0.0 ? node.left : node.right;
    const int far = delta < 0.0 ? node.right : node.left;
    search_radius(near, q, r2, out);
    if (delta * delta <= r2) search_radius(far, q, r2, out);
  }

  std::vector<Vec3> pts_;
  std::vector<int> perm_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace rkhsreg
