#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "mepoly/environments.hpp"
#include "mepoly/maxent_fit.hpp"

using namespace mepoly;

namespace {

PolyDistribution make_dist(int dim, int order, int grid_size,
                           BasisKind kind = BasisKind::legendre) {
  return PolyDistribution(enumerate_exponents(dim, order),
                          product_grid(trapezoid_grid(grid_size), dim), kind);
}

}  // namespace

TEST_CASE("empirical_moments basics") {
  const ExponentSet basis = enumerate_exponents(2, 3);

  const std::vector<double> one_sample{0.4, -0.3};
  const MomentVector single = empirical_moments(one_sample, basis);
  const std::vector<double> direct = features(one_sample, basis, BasisKind::legendre);
  for (std::size_t j = 0; j < basis.size(); ++j)
    CHECK(single.moments[j] == doctest::Approx(direct[j]).epsilon(1e-15));
  CHECK(single.moments[0] == 1.0);

  // Pairwise mirrored samples kill the odd-degree entries.
  const std::vector<double> mirrored{0.7, -0.2, -0.7, 0.2, 0.1, 0.9, -0.1, -0.9};
  const MomentVector sym = empirical_moments(mirrored, basis);
  for (std::size_t j = 0; j < basis.size(); ++j) {
    int total = 0;
    for (int a : basis.exponents[j]) total += a;
    if (total % 2 == 1) CHECK(std::fabs(sym.moments[j]) < 1e-14);
  }

  CHECK_THROWS_AS(empirical_moments({}, basis), std::invalid_argument);
  const std::vector<double> outside{1.5, 0.0};
  CHECK_THROWS_AS(empirical_moments(outside, basis), std::invalid_argument);

  // Moment range: |P_n| <= 1 on the box, so all entries lie in [-1, 1].
  Rng rng(3);
  std::vector<double> randoms(2000);
  for (double& v : randoms) v = rng.uniform(-1.0, 1.0);
  const MomentVector mv = empirical_moments(randoms, basis);
  for (double m : mv.moments) CHECK(std::fabs(m) <= 1.0 + 1e-12);
}

TEST_CASE("empirical moments of many uniform samples match quadrature") {
  PolyDistribution dist = make_dist(2, 3, 64);
  const NaturalParams uniform = clip_params(std::vector<double>(dist.num_features(), 0.0));
  const std::vector<double> mu = dist.expected_features(uniform);

  Rng rng(5);
  const std::size_t n = 100000;
  std::vector<double> samples(2 * n);
  for (double& v : samples) v = rng.uniform(-1.0, 1.0);
  const MomentVector mv = empirical_moments(samples, dist.basis());

  // 3 sigma band per feature; Legendre features have variance below 1.
  for (std::size_t j = 1; j < dist.num_features(); ++j)
    CHECK(std::fabs(mv.moments[j] - mu[j]) <= 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST_CASE("fit_mle on uniform samples returns a nearly-zero parameter vector") {
  PolyDistribution dist = make_dist(2, 2, 48);
  Rng rng(7);
  std::vector<double> samples(2 * 100000);
  for (double& v : samples) v = rng.uniform(-1.0, 1.0);

  FitConfig config;
  config.grad_tol = 1e-6;
  config.max_iters = 2000;
  auto [params, report] = fit_mle(samples, dist, config);
  CHECK(report.converged);
  for (std::size_t j = 1; j < params.lambda.size(); ++j) CHECK(std::fabs(params.lambda[j]) < 0.05);
}

TEST_CASE("fit_mle stationarity: fitted moments match empirical moments") {
  // Samples from a truncated-Gaussian-like quadratic energy, fitted at K=2.
  PolyDistribution dist = make_dist(2, 2, 48);
  std::vector<double> raw(dist.num_features(), 0.0);
  for (std::size_t j = 0; j < dist.num_features(); ++j) {
    const auto& alpha = dist.basis().exponents[j];
    if (alpha == std::vector<int>{2, 0} || alpha == std::vector<int>{0, 2}) raw[j] = -1.5;
    if (alpha == std::vector<int>{1, 0}) raw[j] = 0.4;
  }
  const NaturalParams truth = clip_params(raw);
  Rng rng(11);
  const auto [samples, lps] = dist.sample_many(truth, 20000, rng);

  FitConfig config;
  config.grad_tol = 1e-6;
  config.max_iters = 5000;
  auto [params, report] = fit_mle(samples, dist, config);
  CHECK(report.converged);

  const MomentVector mv = empirical_moments(samples, dist.basis());
  const std::vector<double> mu = dist.expected_features(params);
  for (std::size_t j = 0; j < mu.size(); ++j)
    CHECK(std::fabs(mu[j] - mv.moments[j]) <= 1e-5);
}

TEST_CASE("entropy regularization can only raise the fitted entropy") {
  PolyDistribution dist = make_dist(1, 4, 64);
  const NaturalParams truth = clip_params(std::vector<double>{0.0, 0.9, -1.8, 0.3, 0.7});
  Rng rng(13);
  const auto [samples, lps] = dist.sample_many(truth, 20000, rng);

  FitConfig plain;
  plain.grad_tol = 1e-7;
  plain.max_iters = 5000;
  auto [params0, report0] = fit_mle(samples, dist, plain);

  FitConfig regularized = plain;
  regularized.entropy_coef = 0.5;
  auto [params1, report1] = fit_mle(samples, dist, regularized);

  CHECK(report1.final_entropy >= report0.final_entropy - 1e-9);
}

TEST_CASE("objective trace is non-decreasing under line-search halving") {
  PolyDistribution dist = make_dist(1, 4, 64);
  const NaturalParams truth = clip_params(std::vector<double>{0.0, 1.2, -2.0, -0.4, 0.9});
  Rng rng(17);
  const auto [samples, lps] = dist.sample_many(truth, 5000, rng);
  FitConfig config;
  config.step_size = 4.0;  // deliberately too large; halving must save it
  auto [params, report] = fit_mle(samples, dist, config);
  for (std::size_t i = 1; i < report.objective_trace.size(); ++i)
    CHECK(report.objective_trace[i] >= report.objective_trace[i - 1] - 1e-11 * (1.0 + std::fabs(report.objective_trace[i - 1])));
}

TEST_CASE("fit_moments recovers the uniform law from uniform moments") {
  PolyDistribution dist = make_dist(2, 2, 48);
  MomentVector target;
  target.moments =
      dist.expected_features(clip_params(std::vector<double>(dist.num_features(), 0.0)));

  FitConfig config;
  config.grad_tol = 1e-8;
  auto [params, report] = fit_moments(target, dist, config);
  CHECK(report.converged);
  for (std::size_t j = 1; j < params.lambda.size(); ++j)
    CHECK(std::fabs(params.lambda[j]) < 1e-6);
}

TEST_CASE("fit_moments produces the 1D exponential tilt") {
  PolyDistribution dist = make_dist(1, 1, 1025);
  MomentVector target;
  target.moments = {1.0, 0.3};

  FitConfig config;
  config.grad_tol = 1e-8;
  config.max_iters = 20000;
  auto [params, report] = fit_moments(target, dist, config);
  CHECK(report.converged);

  // Dense-grid oracle: bisection for t with E_t[x] = 0.3 under exp(t x).
  auto mean_under_tilt = [](double t) {
    KahanSum num, den;
    const int n = 200000;
    const double dx = 2.0 / n;
    for (int i = 0; i < n; ++i) {
      const double x = -1.0 + (i + 0.5) * dx;
      const double w = std::exp(t * x);
      num.add(x * w * dx);
      den.add(w * dx);
    }
    return num.value() / den.value();
  };
  double lo = 0.0, hi = 3.0;
  for (int it = 0; it < 80; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mean_under_tilt(mid) < 0.3 ? lo : hi) = mid;
  }
  const double oracle_t = 0.5 * (lo + hi);

  CHECK(params.lambda[1] == doctest::Approx(oracle_t).epsilon(1e-3));
  CHECK(dist.expected_action(params)[0] == doctest::Approx(0.3).epsilon(1e-6));
}

TEST_CASE("fit_moments round trip recovers known parameters") {
  PolyDistribution dist = make_dist(2, 3, 48);
  std::vector<double> raw(dist.num_features(), 0.0);
  Rng rng(19);
  for (std::size_t j = 1; j < raw.size(); ++j) raw[j] = rng.uniform(-0.9, 0.9);
  const NaturalParams truth = clip_params(raw);

  MomentVector target;
  target.moments = dist.expected_features(truth);

  FitConfig config;
  config.grad_tol = 1e-8;
  config.max_iters = 50000;
  auto [params, report] = fit_moments(target, dist, config);
  CHECK(report.converged);
  for (std::size_t j = 1; j < raw.size(); ++j)
    CHECK(std::fabs(params.lambda[j] - truth.lambda[j]) < 1e-3);
}

TEST_CASE("fit_moments reports non-convergence for near-boundary moments") {
  // E[P_1] = 0.999 needs a tilt far beyond the clip band; the fit must stall
  // and say so rather than fake a success.
  PolyDistribution dist = make_dist(1, 1, 64);
  MomentVector target;
  target.moments = {1.0, 0.999};
  FitConfig config;
  config.max_iters = 300;
  auto [params, report] = fit_moments(target, dist, config);
  CHECK_FALSE(report.converged);
  CHECK(!report.message.empty());
  CHECK(params.lambda[1] == doctest::Approx(config.lambda_clip));  // pinned at the clip

  MomentVector bad;
  bad.moments = {0.5, 0.0};
  CHECK_THROWS_AS(fit_moments(bad, dist, config), std::invalid_argument);
}

TEST_CASE("manifold_reward closed forms") {
  const std::vector<double> pts{0.2, -0.4, -0.6, 0.1};
  const std::vector<double> on_manifold{0.2, -0.4};
  CHECK(manifold_reward(on_manifold, pts, 0.05) == doctest::Approx(1.0));

  const std::vector<double> at_sigma{0.2 + 0.05, -0.4};
  CHECK(manifold_reward(at_sigma, pts, 0.05) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));

  const std::vector<double> at_twice_sigma{0.2, -0.4 + 0.1};
  CHECK(manifold_reward(at_twice_sigma, pts, 0.05) ==
        doctest::Approx(std::exp(-2.0)).epsilon(1e-12));

  CHECK_THROWS_AS(manifold_reward(on_manifold, {}, 0.05), std::invalid_argument);
  CHECK_THROWS_AS(manifold_reward(on_manifold, pts, 0.0), std::invalid_argument);
}

TEST_CASE("boltzmann_target limits") {
  const ProductGrid grid = product_grid(trapezoid_grid(32), 2);

  const GridDensity flat =
      boltzmann_target([](std::span<const double>) { return 0.7; }, grid, 0.05);
  KahanSum weight_total;
  for (double lw : grid.log_weights) weight_total.add(std::exp(lw));
  for (std::size_t i = 0; i < grid.size(); ++i)
    CHECK(flat.masses[i] ==
          doctest::Approx(std::exp(grid.log_weights[i]) / weight_total.value()).epsilon(1e-12));

  // Huge temperature: mass ratio approaches the weight ratio (4 between
  // interior and corner points).
  const GridDensity near_uniform = boltzmann_target(
      [](std::span<const double> a) { return a[0] > 0 ? 1.0 : 0.0; }, grid, 1e7);
  double lo = 1e300, hi = 0.0;
  for (double m : near_uniform.masses) {
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  CHECK(hi / lo == doctest::Approx(4.0).epsilon(1e-3));

  CHECK_THROWS_AS(boltzmann_target([](std::span<const double>) { return 0.0; }, grid, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(boltzmann_target([](std::span<const double>) { return 0.0; }, grid, -1.0),
                  std::invalid_argument);
}

TEST_CASE("two-moons Boltzmann target concentrates on the manifold") {
  const ProductGrid grid = product_grid(trapezoid_grid(64), 2);
  Rng rng(23);
  const std::vector<double> moons = make_manifold(ManifoldKind::two_moons, 2000, rng);
  const double sigma = 0.05;
  const GridDensity target = boltzmann_target(
      [&](std::span<const double> a) { return manifold_reward(a, moons, sigma); }, grid, 0.05);

  KahanSum near_mass;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto p = grid.point(i);
    double best = 1e300;
    for (std::size_t k = 0; k + 1 < moons.size(); k += 2) {
      const double dx = p[0] - moons[k];
      const double dy = p[1] - moons[k + 1];
      best = std::min(best, dx * dx + dy * dy);
    }
    if (std::sqrt(best) <= 3.0 * sigma) near_mass.add(target.masses[i]);
  }
  CHECK(near_mass.value() >= 0.99);
}

TEST_CASE("convergence_sweep is exact for realizable targets") {
  PolyDistribution dist = make_dist(2, 2, 48);
  std::vector<double> raw(dist.num_features(), 0.0);
  raw[1] = 0.5;
  raw[3] = -0.8;
  const GridDensity target{dist.grid_masses(clip_params(raw))};

  FitConfig config;
  config.grad_tol = 1e-9;
  config.max_iters = 20000;
  const std::vector<SweepRow> rows = convergence_sweep(target, {2, 4}, dist.grid(), config);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].order == 2);
  CHECK(rows[0].converged);
  CHECK(rows[0].l1 < 1e-2);
  CHECK(rows[1].converged);
}

TEST_CASE("convergence_sweep L1 decreases with order on the lemniscate target") {
  const ProductGrid grid = product_grid(trapezoid_grid(48), 2);
  Rng rng(29);
  const std::vector<double> curve = make_manifold(ManifoldKind::lemniscate, 1200, rng);
  const GridDensity target = boltzmann_target(
      [&](std::span<const double> a) { return manifold_reward(a, curve, 0.05); }, grid, 0.05);

  FitConfig config;
  config.grad_tol = 1e-5;
  config.max_iters = 30000;
  config.lambda_clip = 30.0;
  const std::vector<SweepRow> rows = convergence_sweep(target, {2, 4, 6, 8}, grid, config);
  REQUIRE(rows.size() == 4);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].l1 < rows[i - 1].l1);
}

TEST_CASE("legendre gram matrix is better conditioned than the monomial one") {
  const ProductGrid grid = product_grid(trapezoid_grid(64), 1);
  const ExponentSet basis = enumerate_exponents(1, 8);
  const double cond_legendre = weighted_gram_condition(grid, basis, BasisKind::legendre);
  const double cond_monomial = weighted_gram_condition(grid, basis, BasisKind::monomial);
  CHECK(cond_legendre < cond_monomial);
  CHECK(cond_legendre < 100.0);   // near-diagonal by orthogonality
  CHECK(cond_monomial > 1000.0);  // Hilbert-like blow-up
}

TEST_CASE("fitted maxent density dominates moment-preserving perturbations") {
  PolyDistribution dist = make_dist(1, 2, 64);
  MomentVector target;
  target.moments = {1.0, 0.2, 0.1};
  FitConfig config;
  config.grad_tol = 1e-8;
  auto [params, report] = fit_moments(target, dist, config);
  REQUIRE(report.converged);

  const std::vector<double> masses = dist.grid_masses(params);
  const std::size_t n = masses.size();
  const auto& table = dist.feature_table();

  auto grid_entropy = [&](const std::vector<double>& m) {
    KahanSum acc;
    for (std::size_t i = 0; i < n; ++i) {
      if (m[i] <= 0.0) continue;
      acc.add(m[i] * (std::log(m[i]) - dist.grid().log_weights[i]));
    }
    return -acc.value();
  };
  const double base_entropy = grid_entropy(masses);

  // Orthonormalize the feature columns over grid points so the projection
  // onto the moment null space is exact.
  std::vector<std::vector<double>> q;
  for (std::size_t j = 0; j < dist.num_features(); ++j) {
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = table.row(i)[j];
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& prev : q) {
        double dot = 0.0;
        for (std::size_t i = 0; i < n; ++i) dot += col[i] * prev[i];
        for (std::size_t i = 0; i < n; ++i) col[i] -= dot * prev[i];
      }
    double norm = 0.0;
    for (double v : col) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : col) v /= norm;
    q.push_back(std::move(col));
  }

  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> delta(n);
    for (double& d : delta) d = rng.uniform(-1.0, 1.0);
    for (const auto& basis_vec : q) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += delta[i] * basis_vec[i];
      for (std::size_t i = 0; i < n; ++i) delta[i] -= dot * basis_vec[i];
    }
    double scale = 1e300;
    for (std::size_t i = 0; i < n; ++i)
      if (delta[i] < 0.0) scale = std::min(scale, -0.5 * masses[i] / delta[i]);
    scale = std::min(scale, 0.01);
    std::vector<double> perturbed(n);
    for (std::size_t i = 0; i < n; ++i) perturbed[i] = masses[i] + scale * delta[i];
    CHECK(grid_entropy(perturbed) <= base_entropy + 1e-9);
  }
}
