#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mepoly/numerics.hpp"
#include "mepoly/poly_basis.hpp"

namespace mepoly {

inline constexpr int kDefaultGridSize = 64;
inline constexpr int kFullGridMaxDim = 3;
inline constexpr int kDefaultStochasticGridSize = 4096;

// Uniform trapezoid nodes on [-1,1]. Endpoint weights are half the interior
// weight; exp(log_weights) sums to exactly 2.
struct Grid1D {
  std::vector<double> nodes;
  std::vector<double> log_weights;

  int size() const { return static_cast<int>(nodes.size()); }
};

// Quadrature points in [-1,1]^dim with per-point log-weights.
// full: the n^dim tensor product, weight sum 2^dim.
// stochastic: sample_size lattice points drawn with replacement; the
// correction dim*ln(n) - ln(sample_size) makes the weight sum an unbiased
// estimator of 2^dim.
struct ProductGrid {
  enum class Kind { full, stochastic };

  int dim = 0;
  Kind kind = Kind::full;
  int nodes_per_dim = 0;
  std::vector<double> points;       // flattened, point-major: size() * dim
  std::vector<double> log_weights;  // one per point

  std::size_t size() const { return log_weights.size(); }
  std::span<const double> point(std::size_t i) const {
    return {points.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
};

// Precomputed Legendre (or monomial) feature rows for every grid point.
struct GridFeatureTable {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;  // row-major rows x cols

  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
};

Grid1D trapezoid_grid(int grid_size);

ProductGrid product_grid(const Grid1D& g, int dim, int full_grid_max_dim = kFullGridMaxDim);

ProductGrid stochastic_grid(const Grid1D& g, int dim, int sample_size, Rng& rng);

GridFeatureTable precompute_features(const ProductGrid& grid, const ExponentSet& basis,
                                     BasisKind kind = BasisKind::legendre);

}  // namespace mepoly
