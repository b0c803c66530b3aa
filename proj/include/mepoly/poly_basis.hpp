#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace mepoly {

enum class BasisKind { legendre, monomial };

// Guard against accidental combinatorial blow-up for large dim/order.
inline constexpr std::size_t kDefaultFeatureCap = 20000;

// Ordered multi-index basis of all exponent vectors with total degree <= order.
// The ordering is lexicographic over per-dimension degree tuples, all-zero
// first, and is identical across runs; natural-parameter indexing depends on it.
struct ExponentSet {
  int dim = 0;
  int order = 0;
  std::vector<std::vector<int>> exponents;

  std::size_t size() const { return exponents.size(); }
};

/// C(dim + order, dim), rejecting dim < 1 and counts above the cap.
std::size_t feature_count(int dim, int order, std::size_t cap = kDefaultFeatureCap);

ExponentSet enumerate_exponents(int dim, int order, std::size_t cap = kDefaultFeatureCap);

// P_0..P_max_order at x by the three-term recurrence
// P_n = ((2n-1)/n) x P_{n-1} - ((n-1)/n) P_{n-2}.
// Total on the reals; |x| > 1 is flagged only in debug builds so that densities
// of clipped actions never crash a release run.
std::vector<double> legendre_table(double x, int max_order);
void legendre_table_into(double x, int max_order, std::span<double> out);

// Feature vector T(point): entry for multi-index alpha is the product over
// dimensions of P_{alpha_i}(point_i) (legendre) or point_i^{alpha_i} (monomial).
std::vector<double> features(std::span<const double> point, const ExponentSet& basis,
                             BasisKind kind);
void features_into(std::span<const double> point, const ExponentSet& basis, BasisKind kind,
                   std::span<double> out);

}  // namespace mepoly
