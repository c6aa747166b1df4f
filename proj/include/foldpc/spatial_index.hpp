// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <vector>

#include "foldpc/error.hpp"
#include "foldpc/geometry.hpp"

namespace foldpc {

struct Neighbor {
  std::size_t index = 0;
  double squared_distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Total order used by every k-NN query: distance first, then point index.
inline bool closer(const Neighbor& a, const Neighbor& b) {
  if (a.squared_distance != b.squared_distance) return a.squared_distance < b.squared_distance;
  return a.index < b.index;
}

/// Exact k-d tree. Results equal an exhaustive scan under the `closer` order,
/// ties included.
class SpatialIndex {
 public:
  explicit SpatialIndex(std::span<const Vec3> points) {
    require(!points.empty(), "cannot index an empty point set");
    order_.resize(points.size());
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    nodes_.reserve(2 * points.size() / kLeafSize + 2);
    build(points, 0, points.size());
    sorted_.reserve(points.size());
    for (std::size_t i : order_) sorted_.push_back(points[i]);
  }

  std::size_t size() const { return order_.size(); }

  /// k closest points, ascending by (squared distance, index).
  std::vector<Neighbor> nearest(const Vec3& query, std::size_t k) const {
    require(k >= 1 && k <= size(), "k must be in [1, " + std::to_string(size()) + "], got " + std::to_string(k));
    std::priority_queue<Neighbor, std::vector<Neighbor>, decltype(&closer)> heap(&closer);
    search(0, query, k, heap);
    std::vector<Neighbor> out(heap.size());
    for (std::size_t i = out.size(); i-- > 0;) {
      out[i] = heap.top();
      heap.pop();
    }
    return out;
  }

  Neighbor nearest_one(const Vec3& query) const {
    Neighbor best{std::numeric_limits<std::size_t>::max(), std::numeric_limits<double>::infinity()};
    search_one(0, query, best);
    return best;
  }

 private:
  static constexpr std::size_t kLeafSize = 8;

  struct Node {
    std::size_t begin = 0;
    std::size_t end = 0;
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    std::size_t left = 0;
    std::size_t right = 0;
  };

  std::size_t build(std::span<const Vec3> points, std::size_t begin, std::size_t end) {
    const std::size_t id = nodes_.size();
    nodes_.push_back({begin, end});
    if (end - begin <= kLeafSize) return id;

    Vec3 lo = points[order_[begin]];
    Vec3 hi = lo;
    for (std::size_t i = begin; i < end; ++i) {
      for (int a = 0; a < 3; ++a) {
        lo[a] = std::min(lo[a], points[order_[i]][a]);
        hi[a] = std::max(hi[a], points[order_[i]][a]);
      }
    }
    int axis = 0;
    for (int a = 1; a < 3; ++a) {
      if (hi[a] - lo[a] > hi[axis] - lo[axis]) axis = a;
    }
    if (hi[axis] == lo[axis]) return id;  // all coincident: keep as one leaf

    const std::size_t mid = begin + (end - begin) / 2;
    auto first = order_.begin() + static_cast<std::ptrdiff_t>(begin);
    std::nth_element(first, order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::size_t l, std::size_t r) {
                       const double cl = points[l][axis];
                       const double cr = points[r][axis];
                       return cl != cr ? cl < cr : l < r;
                     });
    const double split = points[order_[mid]][axis];
    const std::size_t left = build(points, begin, mid);
    const std::size_t right = build(points, mid, end);
    nodes_[id].axis = axis;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
  }

  template <typename Heap>
  void search(std::size_t id, const Vec3& q, std::size_t k, Heap& heap) const {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const Neighbor candidate{order_[i], squared_distance(q, sorted_[i])};
        if (heap.size() < k) {
          heap.push(candidate);
        } else if (closer(candidate, heap.top())) {
          heap.pop();
          heap.push(candidate);
        }
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::size_t near = diff < 0.0 ? node.left : node.right;
    const std::size_t far = diff < 0.0 ? node.right : node.left;
    search(near, q, k, heap);
    // Equal bound must still be explored: a tie with a lower index may hide there.
    if (heap.size() < k || diff * diff <= heap.top().squared_distance) search(far, q, k, heap);
  }

  void search_one(std::size_t id, const Vec3& q, Neighbor& best) const {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const Neighbor candidate{order_[i], squared_distance(q, sorted_[i])};
        if (closer(candidate, best)) best = candidate;
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::size_t near = diff < 0.0 ? node.left : node.right;
    const std::size_t far = diff < 0.0 ? node.right : node.left;
    search_one(near, q, best);
    if (diff * diff <= best.squared_distance) search_one(far, q, best);
  }

  std::vector<std::size_t> order_;
  std::vector<Vec3> sorted_;
  std::vector<Node> nodes_;
};

inline SpatialIndex build_index(std::span<const Vec3> points) { return SpatialIndex(points); }

inline std::vector<Neighbor> nearest(const SpatialIndex& index, const Vec3& query, std::size_t k) {
  return index.nearest(query, k);
}

}  // namespace foldpc
