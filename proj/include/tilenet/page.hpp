#pragma once

#include <cstddef>
#include <vector>

#include "tilenet/tensor.hpp"

namespace tilenet {

struct GridShape {
  std::size_t rows = 1;
  std::size_t cols = 1;

  std::size_t tiles() const { return rows * cols; }
  std::size_t row_of(std::size_t tile) const { return tile / cols; }
  std::size_t col_of(std::size_t tile) const { return tile % cols; }
  bool operator==(const GridShape&) const = default;
};

// k x 2 matrix of (row, col) coordinates scaled into [0,1]; a single-row or
// single-column axis maps to 0.5. Tiles are indexed row-major.
Tensor tile_coordinates(GridShape grid);

// One decision problem: a user, n candidate items and a tile grid.
struct PageInstance {
  Tensor user;      // 1 x U
  Tensor items;     // n x I raw item features
  Tensor features;  // n x (U + I), row i = [user ; item_i]
  Tensor tiles;     // k x 2 tile coordinates
  GridShape grid;

  static PageInstance make(Tensor user, Tensor items, GridShape grid);

  std::size_t num_items() const { return features.rows(); }
  std::size_t num_tiles() const { return grid.tiles(); }
  std::size_t feature_dim() const { return features.cols(); }

  // Throws std::invalid_argument if n < k or shapes disagree.
  void validate() const;
};

// Injective assignment of items to tiles, in decode order: at step t the
// item item_order[t] was placed on tile tile_order[t]. Indices are 0-based.
struct Configuration {
  std::vector<std::size_t> item_order;
  std::vector<std::size_t> tile_order;

  std::size_t steps() const { return item_order.size(); }
  // tile -> item; requires a complete configuration.
  std::vector<std::size_t> item_on_tile(std::size_t num_tiles) const;
  // Throws std::invalid_argument unless both orders are duplicate-free,
  // in range, and fill all k tiles.
  void validate(std::size_t num_items, std::size_t num_tiles) const;

  bool operator==(const Configuration&) const = default;
};

}  // namespace tilenet
