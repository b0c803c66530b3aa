#include "mepoly/poly_basis.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace mepoly {

std::size_t feature_count(int dim, int order, std::size_t cap) {
  if (dim < 1) throw std::invalid_argument("feature_count: dim must be >= 1");
  if (order < 0) throw std::invalid_argument("feature_count: order must be >= 0");
  // C(dim + order, dim) built up multiplicatively with an overflow cap.
  std::size_t count = 1;
  for (int i = 1; i <= dim; ++i) {
    count = count * (static_cast<std::size_t>(order) + i) / static_cast<std::size_t>(i);
    if (count > cap)
      throw std::length_error("feature_count: basis size exceeds the configured cap");
  }
  return count;
}

ExponentSet enumerate_exponents(int dim, int order, std::size_t cap) {
  const std::size_t expected = feature_count(dim, order, cap);
  ExponentSet basis;
  basis.dim = dim;
  basis.order = order;
  basis.exponents.reserve(expected);

  // Odometer over degree tuples in lexicographic order, pruned to total
  // degree <= order. Starts at the all-zero index.
  std::vector<int> alpha(static_cast<std::size_t>(dim), 0);
  int total = 0;
  while (true) {
    basis.exponents.push_back(alpha);
    int pos = dim - 1;
    while (pos >= 0) {
      if (total < order && alpha[static_cast<std::size_t>(pos)] < order) {
        ++alpha[static_cast<std::size_t>(pos)];
        ++total;
        break;
      }
      total -= alpha[static_cast<std::size_t>(pos)];
      alpha[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
  }

  assert(basis.exponents.size() == expected);
  return basis;
}

void legendre_table_into(double x, int max_order, std::span<double> out) {
  assert(std::fabs(x) <= 1.0 + 1e-12 && "legendre_table: point outside [-1,1]");
  assert(out.size() == static_cast<std::size_t>(max_order) + 1);
  out[0] = 1.0;
  if (max_order >= 1) out[1] = x;
  for (int n = 2; n <= max_order; ++n) {
    const double nf = static_cast<double>(n);
    out[static_cast<std::size_t>(n)] =
        ((2.0 * nf - 1.0) / nf) * x * out[static_cast<std::size_t>(n) - 1] -
        ((nf - 1.0) / nf) * out[static_cast<std::size_t>(n) - 2];
  }
}

std::vector<double> legendre_table(double x, int max_order) {
  if (max_order < 0) throw std::invalid_argument("legendre_table: max_order must be >= 0");
  std::vector<double> out(static_cast<std::size_t>(max_order) + 1);
  legendre_table_into(x, max_order, out);
  return out;
}

void features_into(std::span<const double> point, const ExponentSet& basis, BasisKind kind,
                   std::span<double> out) {
  if (point.size() != static_cast<std::size_t>(basis.dim))
    throw std::invalid_argument("features: point length does not match basis dim");
  assert(out.size() == basis.size());

  const std::size_t dim = static_cast<std::size_t>(basis.dim);
  const std::size_t table_width = static_cast<std::size_t>(basis.order) + 1;
  // Per-dimension value tables: entry [i][n] is P_n(point_i) or point_i^n.
  std::vector<double> table(dim * table_width);
  for (std::size_t i = 0; i < dim; ++i) {
    std::span<double> row(table.data() + i * table_width, table_width);
    if (kind == BasisKind::legendre) {
      legendre_table_into(point[i], basis.order, row);
    } else {
      row[0] = 1.0;
      for (std::size_t n = 1; n < table_width; ++n) row[n] = row[n - 1] * point[i];
    }
  }

  for (std::size_t f = 0; f < basis.size(); ++f) {
    double prod = 1.0;
    const auto& alpha = basis.exponents[f];
    for (std::size_t i = 0; i < dim; ++i)
      prod *= table[i * table_width + static_cast<std::size_t>(alpha[i])];
    out[f] = prod;
  }
}

std::vector<double> features(std::span<const double> point, const ExponentSet& basis,
                             BasisKind kind) {
  std::vector<double> out(basis.size());
  features_into(point, basis, kind, out);
  return out;
}

}  // namespace mepoly
