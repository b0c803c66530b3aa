#pragma once

#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mepoly/distribution.hpp"

namespace mepoly {

// Empirical or target expected feature vector E[T(a)].
struct MomentVector {
  std::vector<double> moments;
};

struct FitConfig {
  double step_size = 1.0;
  int max_iters = 5000;
  double grad_tol = 1e-5;
  double entropy_coef = 0.0;  // alpha in the entropy-regularized MLE objective
  double lambda_clip = kDefaultLambdaClip;
};

struct FitReport {
  int iterations = 0;
  bool converged = false;
  double final_nll = 0.0;
  double final_entropy = 0.0;
  double grad_norm = 0.0;  // infinity norm of the projected gradient
  std::vector<double> objective_trace;
  std::vector<double> final_moments;
  std::string message;
};

// Normalized masses over the points of a ProductGrid.
struct GridDensity {
  std::vector<double> masses;
};

/// Mean feature vector of the samples (flattened, sample-major).
MomentVector empirical_moments(std::span<const double> samples, const ExponentSet& basis,
                               BasisKind kind = BasisKind::legendre);

// Projected gradient ascent on the mean log-likelihood plus entropy_coef
// times the exact grid entropy. The gradient is the exponential-family
// identity: empirical moments minus expected features (minus alpha * Cov T lambda).
// Step halving keeps the objective non-decreasing.
std::pair<NaturalParams, FitReport> fit_mle(std::span<const double> samples,
                                            const PolyDistribution& dist,
                                            const FitConfig& config);

// Dual ascent for the maximum-entropy distribution matching the target
// moments: maximize <lambda, target> - A(lambda). Non-convergence within
// max_iters is reported, not patched over.
std::pair<NaturalParams, FitReport> fit_moments(const MomentVector& target,
                                                const PolyDistribution& dist,
                                                const FitConfig& config);

/// exp(-min_i ||a - x_i||^2 / (2 sigma^2)) over a 2D target point set (flattened).
double manifold_reward(std::span<const double> action, std::span<const double> target_points,
                       double sigma);

/// Grid masses proportional to exp(r(x)/alpha + log w(x)), normalized.
GridDensity boltzmann_target(const std::function<double(std::span<const double>)>& reward,
                             const ProductGrid& grid, double alpha);

struct SweepRow {
  int order = 0;
  double l1 = 0.0;
  double kl = 0.0;  // KL(target || fit) on grid masses
  bool converged = false;
  double grad_norm = 0.0;
};

/// For each order, fit the target's moments up to that order and record the
/// grid L1 distance and the KL to the target. Fit failures land in the row.
std::vector<SweepRow> convergence_sweep(const GridDensity& target, const std::vector<int>& orders,
                                        const ProductGrid& grid, const FitConfig& config,
                                        BasisKind kind = BasisKind::legendre);

/// Condition number of the weighted feature Gram matrix sum_x w_x T(x) T(x)^T.
double weighted_gram_condition(const ProductGrid& grid, const ExponentSet& basis, BasisKind kind);

}  // namespace mepoly
