#pragma once

#include "offroad/common.hpp"

#include <cstddef>
#include <vector>

namespace offroad {

/// Dense 2D array, x index fastest (row-major over y rows).
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int nx, int ny, T fill = T{}) : nx_(nx), ny_(ny), data_(static_cast<std::size_t>(nx) * ny, fill) {
    if (nx < 0 || ny < 0) throw DomainError("grid dimensions must be non-negative");
  }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool in_bounds(int i, int j) const { return i >= 0 && j >= 0 && i < nx_ && j < ny_; }
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(j) * nx_ + i; }

  T& operator()(int i, int j) { return data_[index(i, j)]; }
  const T& operator()(int i, int j) const { return data_[index(i, j)]; }

  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  int nx_ = 0;
  int ny_ = 0;
  std::vector<T> data_;
};

/// Placement of a node-centred grid in the world: node (i, j) sits at
/// origin + (i, j) * cell.
struct GridGeometry {
  Vec2 origin = Vec2::Zero();
  double cell = 1.0;
  int nx = 0;
  int ny = 0;

  Vec2 node(int i, int j) const { return origin + Vec2(i * cell, j * cell); }
  Vec2 max_corner() const { return node(nx - 1, ny - 1); }

  // Nearest node index; may be out of bounds.
  int nearest_i(double x) const { return static_cast<int>(std::lround((x - origin.x()) / cell)); }
  int nearest_j(double y) const { return static_cast<int>(std::lround((y - origin.y()) / cell)); }

  friend bool operator==(const GridGeometry&, const GridGeometry&) = default;
};

}  // namespace offroad
