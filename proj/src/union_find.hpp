#pragma once

#include <numeric>
#include <vector>

namespace skydehaze::detail {

class UnionFind {
 public:
  explicit UnionFind(size_t n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), size_t{0});
  }

  size_t find(size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }

  // Smaller root index wins so the result does not depend on merge order.
  size_t unite(size_t a, size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return a;
    if (b < a) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return a;
  }

  size_t size_of(size_t i) { return size_[find(i)]; }

 private:
  std::vector<size_t> parent_;
  std::vector<size_t> size_;
};

}  // namespace skydehaze::detail
