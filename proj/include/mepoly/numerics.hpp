#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

namespace mepoly {

// Raised when an optimization or evaluation produces non-finite values;
// distinct from argument/IO errors so callers can map exit codes.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Deterministic random stream. Wraps a 64-bit SplitMix-seeded xoshiro-style
// core so that draws are identical across platforms and standard-library
// versions (std::uniform_real_distribution is implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform double in [0, 1).
  double uniform();
  double uniform(double lo, double hi);
  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();

 private:
  std::uint64_t state_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Compensated (Kahan) accumulator. Sums with O(eps) error independent of
// the term count; grid reductions over 64^3 points need this to hit the
// 1e-12 exactness contracts.
class KahanSum {
 public:
  void add(double x) {
    const double y = x - comp_;
    const double t = sum_ + y;
    comp_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double kahan_total(std::span<const double> xs);

/// log(sum_i exp(xs[i])) with max subtraction and compensated summation.
double log_sum_exp(std::span<const double> xs);

/// Regularized lower incomplete gamma P(a, x).
double regularized_gamma_p(double a, double x);

/// Upper-tail p-value of a chi-square statistic at `dof` degrees of freedom.
double chi_square_pvalue(double stat, int dof);

// Eigenvalues of a dense symmetric matrix (row-major, n x n) by cyclic
// Jacobi rotations. Returned ascending.
std::vector<double> symmetric_eigenvalues(std::vector<double> a, int n);

/// Numerical rank of a row-major rows x cols matrix via scaled Gaussian elimination.
int matrix_rank(std::vector<double> a, int rows, int cols, double tol = 1e-9);

// Solves the symmetric positive-definite system A x = b in place via
// Cholesky; returns false (leaving x unspecified) when A is not SPD.
bool cholesky_solve(std::vector<double> a, int n, std::vector<double>& x);

/// Worker count: min(hardware, MEPOLY_THREADS if set). At least 1.
int worker_count();

// Splits [0, n) into contiguous chunks, one worker each. The body receives
// (begin, end). Writes must be disjoint; no reduction is performed, so the
// result is deterministic regardless of worker count.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace mepoly
