#pragma once

// Exact k-nearest-neighbour queries over a static 3D point set.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <utility>
#include <vector>

#include "mvtex/error.hpp"
#include "mvtex/vec.hpp"

namespace mvtex {

struct Neighbor {
  double dist = 0.0;
  int index = -1;  // position in the point array the tree was built from

  friend bool operator<(const Neighbor& a, const Neighbor& b)
  {
    return a.dist < b.dist || (a.dist == b.dist && a.index < b.index);
  }
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Balanced kd-tree. Results are ordered by (distance, index), so equal distances
/// resolve to the lower index.
class KdTree {
public:
  KdTree() = default;

  explicit KdTree(std::vector<Vec3> points) : points_(std::move(points))
  {
    order_.resize(points_.size());
    axes_.assign(points_.size(), 0);
    std::iota(order_.begin(), order_.end(), 0);
    if (!points_.empty()) {
      build(0, static_cast<int>(order_.size()));
    }
  }

  std::size_t size() const noexcept { return points_.size(); }
  const std::vector<Vec3>& points() const noexcept { return points_; }

  /// Up to `k` nearest points, nearest first.
  std::vector<Neighbor> query(Vec3 q, int k) const
  {
    std::vector<Neighbor> out;
    if (k <= 0 || points_.empty()) {
      return out;
    }
    std::priority_queue<Neighbor> best;  // max-heap on (dist, index)
    search(0, static_cast<int>(order_.size()), q, static_cast<std::size_t>(k), best);
    out.resize(best.size());
    for (auto i = out.size(); i-- > 0;) {
      out[i] = best.top();
      best.pop();
    }
    return out;
  }

private:
  // Implicit tree: the subtree over order_[lo, hi) splits at mid = (lo + hi) / 2 along
  // axes_[mid].
  void build(int lo, int hi)
  {
    if (hi - lo <= 0) {
      return;
    }
    Vec3 mn{1e300, 1e300, 1e300};
    Vec3 mx{-1e300, -1e300, -1e300};
    for (int i = lo; i < hi; ++i) {
      const Vec3 p = points_[order_[i]];
      for (int a = 0; a < 3; ++a) {
        mn[a] = std::min(mn[a], p[a]);
        mx[a] = std::max(mx[a], p[a]);
      }
    }
    int axis = 0;
    for (int a = 1; a < 3; ++a) {
      if (mx[a] - mn[a] > mx[axis] - mn[axis]) {
        axis = a;
      }
    }
    const int mid = (lo + hi) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi, [&](int a, int b) {
      return points_[a][axis] < points_[b][axis] || (points_[a][axis] == points_[b][axis] && a < b);
    });
    axes_[mid] = axis;
    build(lo, mid);
    build(mid + 1, hi);
  }

  void search(int lo, int hi, Vec3 q, std::size_t k, std::priority_queue<Neighbor>& best) const
  {
    if (hi - lo <= 0) {
      return;
    }
    const int mid = (lo + hi) / 2;
    const int idx = order_[mid];
    const Vec3 p = points_[idx];
    const Neighbor cand{distance(q, p), idx};
    if (best.size() < k) {
      best.push(cand);
    } else if (cand < best.top()) {
      best.pop();
      best.push(cand);
    }
    const int axis = axes_[mid];
    const double diff = q[axis] - p[axis];
    const bool left_first = diff <= 0.0;
    if (left_first) {
      search(lo, mid, q, k, best);
    } else {
      search(mid + 1, hi, q, k, best);
    }
    // Visit the far side unless it cannot hold anything at or below the current worst.
    if (best.size() < k || std::abs(diff) <= best.top().dist) {
      if (left_first) {
        search(mid + 1, hi, q, k, best);
      } else {
        search(lo, mid, q, k, best);
      }
    }
  }

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<int> axes_;
};

/// n nearest of `positions` to `query`; error when there is nothing to search.
inline std::vector<Neighbor> knn_valid(const KdTree& tree, Vec3 query, int n)
{
  require(tree.size() > 0, ErrorCode::empty_input, "knn: no valid points to search");
  return tree.query(query, n);
}

inline std::vector<Neighbor> knn_valid(const std::vector<Vec3>& positions, Vec3 query, int n)
{
  return knn_valid(KdTree(positions), query, n);
}

}  // namespace mvtex
