#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "mepoly/numerics.hpp"
#include "mepoly/poly_basis.hpp"
#include "mepoly/quadrature.hpp"

namespace mepoly {

inline constexpr double kDefaultLambdaClip = 5.0;

// Natural parameters of one distribution instance, elementwise clamped to
// [-clip, clip]. Construct through clip_params.
struct NaturalParams {
  std::vector<double> lambda;
  double clip = kDefaultLambdaClip;
};

/// Clamp raw parameters elementwise. Non-finite entries are rejected, not
/// clamped; they surface training divergence early.
NaturalParams clip_params(std::span<const double> raw, double clip = kDefaultLambdaClip);

// Per-parameter grid summary: logits <lambda, T(x)>, the log-partition, and
// the softmax masses over grid points. Everything downstream (entropy,
// moments, sampling, divergences) reads from this.
struct GridPosterior {
  double log_z = 0.0;
  std::vector<double> logits;
  std::vector<double> masses;
};

// The polynomial exponential-family distribution pi(a) = exp(<lambda,T(a)> - A(lambda))
// on [-1,1]^dim, with every integral evaluated on a fixed quadrature grid.
// Immutable once built; all operations are pure given (params, rng).
class PolyDistribution {
 public:
  PolyDistribution(ExponentSet basis, ProductGrid grid, BasisKind kind = BasisKind::legendre);

  const ExponentSet& basis() const { return basis_; }
  const ProductGrid& grid() const { return grid_; }
  const GridFeatureTable& feature_table() const { return table_; }
  BasisKind kind() const { return kind_; }
  int dim() const { return basis_.dim; }
  std::size_t num_features() const { return basis_.size(); }

  GridPosterior posterior(const NaturalParams& p) const;

  double log_partition(const NaturalParams& p) const;
  double log_prob(const NaturalParams& p, std::span<const double> action) const;
  double entropy(const NaturalParams& p) const;
  std::vector<double> expected_action(const NaturalParams& p) const;
  std::vector<double> expected_features(const NaturalParams& p) const;
  std::vector<double> grid_masses(const NaturalParams& p) const;

  double entropy_from(const GridPosterior& post) const;
  std::vector<double> expected_action_from(const GridPosterior& post) const;
  std::vector<double> expected_features_from(const GridPosterior& post) const;

  // Fisher-vector product F v = Cov[T] v computed in two passes over the
  // grid; the exact entropy gradient d H / d lambda equals -F lambda.
  std::vector<double> fisher_vector_product(const GridPosterior& post,
                                            std::span<const double> mu,
                                            std::span<const double> v) const;
  std::vector<double> entropy_gradient(const NaturalParams& p) const;
  /// Dense Fisher matrix Cov[T] (row-major M x M); the Hessian of the log-partition.
  std::vector<double> fisher_matrix(const GridPosterior& post, std::span<const double> mu) const;

  // Inverse-CDF draw over the grid masses: binary search for the first
  // cumulative mass >= u, index clamped to the last cell. Samples are grid
  // points; the optional jitter perturbs uniformly within the grid cell but
  // the reported log_prob stays the grid-point log-density.
  std::pair<std::vector<double>, double> sample(const NaturalParams& p, Rng& rng,
                                                bool jitter = false) const;
  // Batched draws sharing one CDF; returns flattened actions and log-probs.
  std::pair<std::vector<double>, std::vector<double>> sample_many(const NaturalParams& p,
                                                                  std::size_t n, Rng& rng,
                                                                  bool jitter = false) const;
  std::vector<std::size_t> sample_indices(const GridPosterior& post, std::size_t n,
                                          Rng& rng) const;

  double kl_divergence(const NaturalParams& p, const NaturalParams& q) const;

 private:
  void check_params(const NaturalParams& p) const;
  std::vector<double> jitter_point(std::span<const double> node, Rng& rng) const;

  ExponentSet basis_;
  BasisKind kind_;
  ProductGrid grid_;
  GridFeatureTable table_;
};

/// Grid-mass L1 distance sum |a - b|, in [0, 2] for two mass vectors.
double l1_distance(std::span<const double> a, std::span<const double> b);

/// KL between two mass vectors on the same grid; zero mass in `a` contributes zero.
double kl_masses(std::span<const double> a, std::span<const double> b);

}  // namespace mepoly
