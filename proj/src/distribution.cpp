#include "mepoly/distribution.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace mepoly {

NaturalParams clip_params(std::span<const double> raw, double clip) {
  if (clip <= 0.0) throw std::invalid_argument("clip_params: clip must be positive");
  for (double v : raw)
    if (!std::isfinite(v))
      throw std::invalid_argument("clip_params: non-finite natural parameter");
  NaturalParams p;
  p.clip = clip;
  p.lambda.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) p.lambda[i] = std::clamp(raw[i], -clip, clip);
  return p;
}

PolyDistribution::PolyDistribution(ExponentSet basis, ProductGrid grid, BasisKind kind)
    : basis_(std::move(basis)), kind_(kind), grid_(std::move(grid)) {
  if (basis_.dim != grid_.dim)
    throw std::invalid_argument("PolyDistribution: basis dim does not match grid dim");
  table_ = precompute_features(grid_, basis_, kind_);
}

void PolyDistribution::check_params(const NaturalParams& p) const {
  if (p.lambda.size() != num_features())
    throw std::invalid_argument("PolyDistribution: lambda length does not match basis size");
  for (double v : p.lambda)
    if (!std::isfinite(v))
      throw std::invalid_argument("PolyDistribution: non-finite natural parameter");
}

GridPosterior PolyDistribution::posterior(const NaturalParams& p) const {
  check_params(p);
  const std::size_t rows = table_.rows;
  const std::size_t cols = table_.cols;
  GridPosterior post;
  post.logits.resize(rows);
  parallel_for(rows, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const double* row = table_.values.data() + i * cols;
      double acc = 0.0;
      for (std::size_t j = 0; j < cols; ++j) acc += row[j] * p.lambda[j];
      post.logits[i] = acc;
    }
  });

  double max_log_mass = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < rows; ++i)
    max_log_mass = std::max(max_log_mass, post.logits[i] + grid_.log_weights[i]);
  KahanSum total;
  post.masses.resize(rows);
  for (std::size_t i = 0; i < rows; ++i) {
    post.masses[i] = std::exp(post.logits[i] + grid_.log_weights[i] - max_log_mass);
    total.add(post.masses[i]);
  }
  const double z = total.value();
  post.log_z = max_log_mass + std::log(z);
  const double inv = 1.0 / z;
  for (double& m : post.masses) m *= inv;
  return post;
}

double PolyDistribution::log_partition(const NaturalParams& p) const {
  check_params(p);
  const std::size_t rows = table_.rows;
  const std::size_t cols = table_.cols;
  std::vector<double> log_mass(rows);
  parallel_for(rows, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const double* row = table_.values.data() + i * cols;
      double acc = 0.0;
      for (std::size_t j = 0; j < cols; ++j) acc += row[j] * p.lambda[j];
      log_mass[i] = acc + grid_.log_weights[i];
    }
  });
  return log_sum_exp(log_mass);
}

double PolyDistribution::log_prob(const NaturalParams& p, std::span<const double> action) const {
  check_params(p);
  if (action.size() != static_cast<std::size_t>(dim()))
    throw std::invalid_argument("log_prob: action length does not match dim");
  std::vector<double> clamped(action.begin(), action.end());
  for (double& a : clamped) {
    if (a < -1.0 || a > 1.0) {
#ifndef NDEBUG
      std::fprintf(stderr, "mepoly: log_prob action outside [-1,1]^d, clamped\n");
#endif
      a = std::clamp(a, -1.0, 1.0);
    }
  }
  std::vector<double> feats = features(clamped, basis_, kind_);
  double acc = 0.0;
  for (std::size_t j = 0; j < feats.size(); ++j) acc += feats[j] * p.lambda[j];
  return acc - log_partition(p);
}

double PolyDistribution::entropy_from(const GridPosterior& post) const {
  // -sum_x pi(x) log pi(x) w(x) with pi(x) w(x) folded into the softmax mass.
  KahanSum acc;
  for (std::size_t i = 0; i < post.masses.size(); ++i)
    acc.add(post.masses[i] * (post.logits[i] - post.log_z));
  return -acc.value();
}

double PolyDistribution::entropy(const NaturalParams& p) const {
  return entropy_from(posterior(p));
}

std::vector<double> PolyDistribution::expected_action_from(const GridPosterior& post) const {
  const auto d = static_cast<std::size_t>(dim());
  std::vector<KahanSum> acc(d);
  for (std::size_t i = 0; i < post.masses.size(); ++i) {
    const double* pt = grid_.points.data() + i * d;
    for (std::size_t k = 0; k < d; ++k) acc[k].add(post.masses[i] * pt[k]);
  }
  std::vector<double> mean(d);
  for (std::size_t k = 0; k < d; ++k) mean[k] = acc[k].value();
  return mean;
}

std::vector<double> PolyDistribution::expected_action(const NaturalParams& p) const {
  return expected_action_from(posterior(p));
}

std::vector<double> PolyDistribution::expected_features_from(const GridPosterior& post) const {
  const std::size_t cols = table_.cols;
  std::vector<KahanSum> acc(cols);
  for (std::size_t i = 0; i < post.masses.size(); ++i) {
    const double* row = table_.values.data() + i * cols;
    const double m = post.masses[i];
    for (std::size_t j = 0; j < cols; ++j) acc[j].add(m * row[j]);
  }
  std::vector<double> mu(cols);
  for (std::size_t j = 0; j < cols; ++j) mu[j] = acc[j].value();
  return mu;
}

std::vector<double> PolyDistribution::expected_features(const NaturalParams& p) const {
  return expected_features_from(posterior(p));
}

std::vector<double> PolyDistribution::fisher_vector_product(const GridPosterior& post,
                                                            std::span<const double> mu,
                                                            std::span<const double> v) const {
  const std::size_t cols = table_.cols;
  if (mu.size() != cols || v.size() != cols)
    throw std::invalid_argument("fisher_vector_product: length mismatch");
  // F v = E[T (T^T v)] - mu (mu^T v)
  std::vector<KahanSum> acc(cols);
  for (std::size_t i = 0; i < post.masses.size(); ++i) {
    const double* row = table_.values.data() + i * cols;
    double tv = 0.0;
    for (std::size_t j = 0; j < cols; ++j) tv += row[j] * v[j];
    const double mtv = post.masses[i] * tv;
    for (std::size_t j = 0; j < cols; ++j) acc[j].add(mtv * row[j]);
  }
  double mu_v = 0.0;
  for (std::size_t j = 0; j < cols; ++j) mu_v += mu[j] * v[j];
  std::vector<double> out(cols);
  for (std::size_t j = 0; j < cols; ++j) out[j] = acc[j].value() - mu[j] * mu_v;
  return out;
}

std::vector<double> PolyDistribution::fisher_matrix(const GridPosterior& post,
                                                    std::span<const double> mu) const {
  const std::size_t m = table_.cols;
  if (mu.size() != m) throw std::invalid_argument("fisher_matrix: length mismatch");
  std::vector<double> fisher(m * m, 0.0);
  for (std::size_t i = 0; i < post.masses.size(); ++i) {
    const double* row = table_.values.data() + i * m;
    const double mass = post.masses[i];
    if (mass == 0.0) continue;
    for (std::size_t a = 0; a < m; ++a) {
      const double ma = mass * row[a];
      double* out = fisher.data() + a * m;
      for (std::size_t b = a; b < m; ++b) out[b] += ma * row[b];
    }
  }
  for (std::size_t a = 0; a < m; ++a)
    for (std::size_t b = a; b < m; ++b) {
      const double v = fisher[a * m + b] - mu[a] * mu[b];
      fisher[a * m + b] = v;
      fisher[b * m + a] = v;
    }
  return fisher;
}

std::vector<double> PolyDistribution::entropy_gradient(const NaturalParams& p) const {
  const GridPosterior post = posterior(p);
  const std::vector<double> mu = expected_features_from(post);
  std::vector<double> grad = fisher_vector_product(post, mu, p.lambda);
  for (double& g : grad) g = -g;
  return grad;
}

std::vector<double> PolyDistribution::grid_masses(const NaturalParams& p) const {
  return posterior(p).masses;
}

std::vector<std::size_t> PolyDistribution::sample_indices(const GridPosterior& post,
                                                          std::size_t n, Rng& rng) const {
  std::vector<double> cdf(post.masses.size());
  double run = 0.0;
  for (std::size_t i = 0; i < post.masses.size(); ++i) {
    run += post.masses[i];
    cdf[i] = run;
  }
  std::vector<std::size_t> idx(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double u = rng.uniform();
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    std::size_t i = static_cast<std::size_t>(it - cdf.begin());
    if (i >= cdf.size()) i = cdf.size() - 1;
    idx[k] = i;
  }
  return idx;
}

std::vector<double> PolyDistribution::jitter_point(std::span<const double> node, Rng& rng) const {
  const double half_cell = 1.0 / static_cast<double>(grid_.nodes_per_dim - 1);
  std::vector<double> out(node.begin(), node.end());
  for (double& x : out) {
    const double lo = std::max(-1.0, x - half_cell);
    const double hi = std::min(1.0, x + half_cell);
    x = rng.uniform(lo, hi);
  }
  return out;
}

std::pair<std::vector<double>, double> PolyDistribution::sample(const NaturalParams& p, Rng& rng,
                                                                bool jitter) const {
  auto [actions, logps] = sample_many(p, 1, rng, jitter);
  return {std::move(actions), logps[0]};
}

std::pair<std::vector<double>, std::vector<double>> PolyDistribution::sample_many(
    const NaturalParams& p, std::size_t n, Rng& rng, bool jitter) const {
  const GridPosterior post = posterior(p);
  const auto d = static_cast<std::size_t>(dim());
  const std::vector<std::size_t> idx = sample_indices(post, n, rng);
  std::vector<double> actions(n * d);
  std::vector<double> logps(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::span<const double> node = grid_.point(idx[k]);
    logps[k] = post.logits[idx[k]] - post.log_z;
    if (jitter) {
      const std::vector<double> pt = jitter_point(node, rng);
      std::copy(pt.begin(), pt.end(), actions.begin() + static_cast<std::ptrdiff_t>(k * d));
    } else {
      std::copy(node.begin(), node.end(), actions.begin() + static_cast<std::ptrdiff_t>(k * d));
    }
  }
  return {std::move(actions), std::move(logps)};
}

double PolyDistribution::kl_divergence(const NaturalParams& p, const NaturalParams& q) const {
  check_params(p);
  check_params(q);
  const GridPosterior pp = posterior(p);
  const GridPosterior pq = posterior(q);
  KahanSum acc;
  for (std::size_t i = 0; i < pp.masses.size(); ++i)
    acc.add(pp.masses[i] * ((pp.logits[i] - pp.log_z) - (pq.logits[i] - pq.log_z)));
  return acc.value();
}

double l1_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("l1_distance: length mismatch");
  KahanSum acc;
  for (std::size_t i = 0; i < a.size(); ++i) acc.add(std::fabs(a[i] - b[i]));
  return acc.value();
}

double kl_masses(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("kl_masses: length mismatch");
  KahanSum acc;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] <= 0.0) continue;
    if (b[i] <= 0.0) return std::numeric_limits<double>::infinity();
    acc.add(a[i] * (std::log(a[i]) - std::log(b[i])));
  }
  return acc.value();
}

}  // namespace mepoly
