#include "tilenet/page.hpp"

#include <stdexcept>
#include <string>

namespace tilenet {

Tensor tile_coordinates(GridShape grid) {
  if (grid.rows == 0 || grid.cols == 0) throw std::invalid_argument("grid extents must be positive");
  Tensor z = Tensor::matrix(grid.tiles(), 2);
  for (std::size_t t = 0; t < grid.tiles(); ++t) {
    const std::size_t r = grid.row_of(t), c = grid.col_of(t);
    z.at(t, 0) = grid.rows > 1 ? static_cast<double>(r) / static_cast<double>(grid.rows - 1) : 0.5;
    z.at(t, 1) = grid.cols > 1 ? static_cast<double>(c) / static_cast<double>(grid.cols - 1) : 0.5;
  }
  return z;
}

PageInstance PageInstance::make(Tensor user, Tensor items, GridShape grid) {
  PageInstance page;
  const std::size_t n = items.rows();
  const std::size_t u = user.size();
  const std::size_t w = items.cols();
  page.features = Tensor::matrix(n, u + w);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < u; ++j) page.features.at(i, j) = user[j];
    for (std::size_t j = 0; j < w; ++j) page.features.at(i, u + j) = items.at(i, j);
  }
  page.user = user.reshaped({1, u});
  page.items = items.reshaped({n, w});
  page.grid = grid;
  page.tiles = tile_coordinates(grid);
  page.validate();
  return page;
}

void PageInstance::validate() const {
  if (features.empty()) throw std::invalid_argument("page has no items");
  if (grid.tiles() == 0) throw std::invalid_argument("page grid is empty");
  if (num_items() < num_tiles()) {
    throw std::invalid_argument("page has " + std::to_string(num_items()) + " items for " +
                                std::to_string(num_tiles()) + " tiles");
  }
  if (tiles.rows() != num_tiles() || tiles.cols() != 2) {
    throw std::invalid_argument("tile coordinates must be k x 2");
  }
  if (items.rows() != num_items() || user.cols() + items.cols() != feature_dim()) {
    throw std::invalid_argument("page features disagree with user/item blocks");
  }
}

std::vector<std::size_t> Configuration::item_on_tile(std::size_t num_tiles) const {
  std::vector<std::size_t> out(num_tiles, num_tiles == 0 ? 0 : SIZE_MAX);
  for (std::size_t t = 0; t < tile_order.size(); ++t) out.at(tile_order[t]) = item_order[t];
  for (auto v : out)
    if (v == SIZE_MAX) throw std::invalid_argument("configuration leaves a tile empty");
  return out;
}

void Configuration::validate(std::size_t num_items, std::size_t num_tiles) const {
  if (item_order.size() != tile_order.size()) {
    throw std::invalid_argument("configuration item/tile step counts differ");
  }
  if (tile_order.size() != num_tiles) {
    throw std::invalid_argument("configuration fills " + std::to_string(tile_order.size()) +
                                " of " + std::to_string(num_tiles) + " tiles");
  }
  std::vector<bool> item_seen(num_items, false), tile_seen(num_tiles, false);
  for (std::size_t t = 0; t < item_order.size(); ++t) {
    const std::size_t i = item_order[t], j = tile_order[t];
    if (i >= num_items || j >= num_tiles) {
      throw std::invalid_argument("configuration index out of range at step " + std::to_string(t));
    }
    if (item_seen[i]) throw std::invalid_argument("item " + std::to_string(i) + " placed twice");
    if (tile_seen[j]) throw std::invalid_argument("tile " + std::to_string(j) + " filled twice");
    item_seen[i] = tile_seen[j] = true;
  }
}

}  // namespace tilenet
