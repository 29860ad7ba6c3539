#pragma once

#include <cstddef>
#include <numeric>
#include <vector>

namespace aisp {

// Union-find with path halving. unite(a, b) always makes b's root the
// surviving root so callers control which id is kept.
class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t i) {
    while (parent_[i] != i) {
      parent_[i] = parent_[parent_[i]];
      i = parent_[i];
    }
    return i;
  }

  std::size_t unite(std::size_t a, std::size_t into) {
    const std::size_t ra = find(a), rb = find(into);
    if (ra != rb) parent_[ra] = rb;
    return rb;
  }

  std::size_t size() const noexcept { return parent_.size(); }

 private:
  std::vector<std::size_t> parent_;
};

}  // namespace aisp
