#include "mepoly/quadrature.hpp"

#include <cmath>
#include <stdexcept>

namespace mepoly {

Grid1D trapezoid_grid(int grid_size) {
  if (grid_size < 2) throw std::invalid_argument("trapezoid_grid: grid_size must be >= 2");
  Grid1D g;
  g.nodes.resize(static_cast<std::size_t>(grid_size));
  g.log_weights.resize(static_cast<std::size_t>(grid_size));
  const double denom = static_cast<double>(grid_size - 1);
  for (int i = 0; i < grid_size; ++i) {
    // Symmetric form: node[n-1-i] is exactly -node[i], endpoints exactly +-1.
    g.nodes[static_cast<std::size_t>(i)] = (2.0 * i - denom) / denom;
  }
  const double interior = std::log(2.0 / denom);
  const double endpoint = std::log(1.0 / denom);
  for (int i = 0; i < grid_size; ++i)
    g.log_weights[static_cast<std::size_t>(i)] =
        (i == 0 || i == grid_size - 1) ? endpoint : interior;
  return g;
}

ProductGrid product_grid(const Grid1D& g, int dim, int full_grid_max_dim) {
  if (dim < 1) throw std::invalid_argument("product_grid: dim must be >= 1");
  if (dim > full_grid_max_dim)
    throw std::invalid_argument(
        "product_grid: dim exceeds the full-grid cap; use stochastic_grid");
  const std::size_t n = g.nodes.size();
  std::size_t total = 1;
  for (int i = 0; i < dim; ++i) total *= n;

  ProductGrid grid;
  grid.dim = dim;
  grid.kind = ProductGrid::Kind::full;
  grid.nodes_per_dim = g.size();
  grid.points.resize(total * static_cast<std::size_t>(dim));
  grid.log_weights.resize(total);

  // Row-major lattice walk: the last dimension varies fastest.
  std::vector<std::size_t> idx(static_cast<std::size_t>(dim), 0);
  for (std::size_t p = 0; p < total; ++p) {
    double logw = 0.0;
    for (int d = 0; d < dim; ++d) {
      const std::size_t i = idx[static_cast<std::size_t>(d)];
      grid.points[p * static_cast<std::size_t>(dim) + static_cast<std::size_t>(d)] = g.nodes[i];
      logw += g.log_weights[i];
    }
    grid.log_weights[p] = logw;
    for (int d = dim - 1; d >= 0; --d) {
      if (++idx[static_cast<std::size_t>(d)] < n) break;
      idx[static_cast<std::size_t>(d)] = 0;
    }
  }
  return grid;
}

ProductGrid stochastic_grid(const Grid1D& g, int dim, int sample_size, Rng& rng) {
  if (dim < 1) throw std::invalid_argument("stochastic_grid: dim must be >= 1");
  if (sample_size < 1) throw std::invalid_argument("stochastic_grid: sample_size must be >= 1");
  const std::size_t n = g.nodes.size();

  ProductGrid grid;
  grid.dim = dim;
  grid.kind = ProductGrid::Kind::stochastic;
  grid.nodes_per_dim = g.size();
  grid.points.resize(static_cast<std::size_t>(sample_size) * static_cast<std::size_t>(dim));
  grid.log_weights.resize(static_cast<std::size_t>(sample_size));

  const double log_correction =
      dim * std::log(static_cast<double>(n)) - std::log(static_cast<double>(sample_size));
  for (int s = 0; s < sample_size; ++s) {
    double logw = 0.0;
    for (int d = 0; d < dim; ++d) {
      const auto i = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
      grid.points[static_cast<std::size_t>(s) * dim + static_cast<std::size_t>(d)] = g.nodes[i];
      logw += g.log_weights[i];
    }
    grid.log_weights[static_cast<std::size_t>(s)] = logw + log_correction;
  }
  return grid;
}

GridFeatureTable precompute_features(const ProductGrid& grid, const ExponentSet& basis,
                                     BasisKind kind) {
  if (grid.dim != basis.dim)
    throw std::invalid_argument("precompute_features: basis dim does not match grid dim");
  GridFeatureTable table;
  table.rows = grid.size();
  table.cols = basis.size();
  table.values.resize(table.rows * table.cols);
  parallel_for(table.rows, [&](std::size_t begin, std::size_t end) {
    for (std::size_t p = begin; p < end; ++p) {
      std::span<double> row(table.values.data() + p * table.cols, table.cols);
      features_into(grid.point(p), basis, kind, row);
    }
  });
  return table;
}

}  // namespace mepoly
