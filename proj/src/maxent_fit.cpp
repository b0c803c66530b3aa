#include "mepoly/maxent_fit.hpp"

#include <algorithm>
#include <optional>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mepoly {

namespace {

struct Objective {
  double value = 0.0;
  std::vector<double> gradient;
  std::vector<double> mu;
  double entropy = 0.0;
  double mean_ll = 0.0;
  GridPosterior post;
};

// Shared evaluation for both fits: moments enters as either the empirical
// mean features (MLE) or the target moments (dual ascent).
Objective evaluate(const PolyDistribution& dist, const NaturalParams& params,
                   std::span<const double> moments, double entropy_coef) {
  Objective obj;
  obj.post = dist.posterior(params);
  obj.mu = dist.expected_features_from(obj.post);
  obj.entropy = dist.entropy_from(obj.post);
  double dot = 0.0;
  for (std::size_t j = 0; j < moments.size(); ++j) dot += params.lambda[j] * moments[j];
  obj.mean_ll = dot - obj.post.log_z;
  obj.value = obj.mean_ll + entropy_coef * obj.entropy;
  obj.gradient.resize(moments.size());
  for (std::size_t j = 0; j < moments.size(); ++j) obj.gradient[j] = moments[j] - obj.mu[j];
  if (entropy_coef != 0.0) {
    const std::vector<double> fv = dist.fisher_vector_product(obj.post, obj.mu, params.lambda);
    for (std::size_t j = 0; j < moments.size(); ++j) obj.gradient[j] -= entropy_coef * fv[j];
  }
  return obj;
}

// Ridge-damped Newton direction (F + ridge I)^-1 g. The Fisher matrix is the
// exact dual Hessian when entropy_coef is zero; it is singular along the
// constant feature and near-singular for concentrated masses, so the solve
// must be damped.
std::optional<std::vector<double>> damped_newton_direction(std::span<const double> fisher,
                                                           std::span<const double> gradient,
                                                           double ridge) {
  const std::size_t m = gradient.size();
  std::vector<double> damped(fisher.begin(), fisher.end());
  for (std::size_t j = 0; j < m; ++j) damped[j * m + j] += ridge;
  std::vector<double> direction(gradient.begin(), gradient.end());
  if (!cholesky_solve(std::move(damped), static_cast<int>(m), direction)) return std::nullopt;
  return direction;
}

double grad_inf_norm(std::span<const double> grad) {
  double norm = 0.0;
  for (double g : grad) norm = std::max(norm, std::fabs(g));
  return norm;
}

// Projected ascent on the dual. Directions come from a Levenberg-Marquardt
// loop (ridge-damped Newton with the exact Fisher, widening the ridge until
// a step is accepted) with a plain gradient fallback. Acceptance needs the
// objective to improve or, once objective differences drown in rounding
// noise, the gradient norm to shrink; objective comparisons alone bottom out
// near sqrt(eps), which would block tight grad_tol values.
std::pair<NaturalParams, FitReport> ascend(const PolyDistribution& dist,
                                           std::span<const double> moments,
                                           const FitConfig& config, double entropy_coef) {
  if (moments.size() != dist.num_features())
    throw std::invalid_argument("fit: moment vector length does not match basis");
  if (config.step_size <= 0.0) throw std::invalid_argument("fit: step_size must be positive");

  NaturalParams params;
  params.clip = config.lambda_clip;
  params.lambda.assign(dist.num_features(), 0.0);  // maximal-entropy start

  FitReport report;
  Objective cur = evaluate(dist, params, moments, entropy_coef);
  if (!std::isfinite(cur.value)) throw NumericError("fit: non-finite objective at start");
  report.objective_trace.push_back(cur.value);

  double grad_step = config.step_size;
  double ridge_scale = 1e-8;
  for (int iter = 0; iter < config.max_iters; ++iter) {
    report.iterations = iter;
    report.grad_norm = grad_inf_norm(cur.gradient);
    if (report.grad_norm <= config.grad_tol) {
      report.converged = true;
      break;
    }

    const double cur_norm = report.grad_norm;
    const double flat_tol = 1e-13 * (1.0 + std::fabs(cur.value));

    NaturalParams trial = params;
    Objective trial_obj;
    // Backtracking search along one direction; accepts on improvement or,
    // once the objective is flat to rounding, on a gradient-norm decrease.
    auto search = [&](const std::vector<double>& direction, double step0,
                      int halvings) -> bool {
      double s = step0;
      for (int h = 0; h < halvings; ++h, s *= 0.5) {
        double moved = 0.0;
        for (std::size_t j = 0; j < params.lambda.size(); ++j) {
          trial.lambda[j] =
              std::clamp(params.lambda[j] + s * direction[j], -params.clip, params.clip);
          moved = std::max(moved, std::fabs(trial.lambda[j] - params.lambda[j]));
        }
        if (moved == 0.0) return false;  // pinned on the clip boundary
        trial_obj = evaluate(dist, trial, moments, entropy_coef);
        if (!std::isfinite(trial_obj.value))
          throw NumericError("fit: objective diverged to a non-finite value");
        const double delta = trial_obj.value - cur.value;
        if (delta >= flat_tol ||
            (delta >= -100.0 * flat_tol && grad_inf_norm(trial_obj.gradient) < cur_norm))
          return true;
      }
      return false;
    };

    // Levenberg-Marquardt: small ridge is a Newton step, large ridge decays
    // to a scaled gradient step; the ridge grows until a step is accepted
    // and relaxes again on success.
    bool accepted = false;
    const std::vector<double> fisher = dist.fisher_matrix(cur.post, cur.mu);
    double max_diag = 1e-12;
    for (std::size_t j = 0; j < params.lambda.size(); ++j)
      max_diag = std::max(max_diag, fisher[j * params.lambda.size() + j]);
    for (int attempt = 0; attempt < 16 && !accepted; ++attempt) {
      const auto direction =
          damped_newton_direction(fisher, cur.gradient, ridge_scale * max_diag);
      if (direction && search(*direction, 1.0, 6)) {
        accepted = true;
        ridge_scale = std::max(ridge_scale / 3.0, 1e-10);
      } else {
        ridge_scale *= 10.0;
        if (ridge_scale > 1e12) break;
      }
    }
    if (!accepted && search(cur.gradient, grad_step, 60)) {
      accepted = true;
      grad_step = std::min(grad_step * 1.5, config.step_size * 1024.0);
    }
    if (!accepted) {
      report.message = "line search stalled";
      break;
    }
    params = trial;
    cur = trial_obj;
    report.objective_trace.push_back(cur.value);
    report.iterations = iter + 1;
  }

  report.grad_norm = grad_inf_norm(cur.gradient);
  if (report.grad_norm <= config.grad_tol) report.converged = true;
  report.final_nll = -cur.mean_ll;
  report.final_entropy = cur.entropy;
  report.final_moments = cur.mu;
  if (!report.converged && report.message.empty()) report.message = "max_iters reached";
  return {std::move(params), std::move(report)};
}

}  // namespace

MomentVector empirical_moments(std::span<const double> samples, const ExponentSet& basis,
                               BasisKind kind) {
  const auto dim = static_cast<std::size_t>(basis.dim);
  if (samples.empty() || samples.size() % dim != 0)
    throw std::invalid_argument("empirical_moments: need at least one full sample");
  const std::size_t n = samples.size() / dim;
  for (double v : samples)
    if (!(v >= -1.0 - 1e-9 && v <= 1.0 + 1e-9))
      throw std::invalid_argument("empirical_moments: sample outside [-1,1]^d");

  std::vector<KahanSum> acc(basis.size());
  std::vector<double> feats(basis.size());
  for (std::size_t i = 0; i < n; ++i) {
    features_into(samples.subspan(i * dim, dim), basis, kind, feats);
    for (std::size_t j = 0; j < feats.size(); ++j) acc[j].add(feats[j]);
  }
  MomentVector mv;
  mv.moments.resize(basis.size());
  const double inv = 1.0 / static_cast<double>(n);
  for (std::size_t j = 0; j < basis.size(); ++j) mv.moments[j] = acc[j].value() * inv;
  return mv;
}

std::pair<NaturalParams, FitReport> fit_mle(std::span<const double> samples,
                                            const PolyDistribution& dist,
                                            const FitConfig& config) {
  const MomentVector mv = empirical_moments(samples, dist.basis(), dist.kind());
  return ascend(dist, mv.moments, config, config.entropy_coef);
}

std::pair<NaturalParams, FitReport> fit_moments(const MomentVector& target,
                                                const PolyDistribution& dist,
                                                const FitConfig& config) {
  if (target.moments.empty() || std::fabs(target.moments[0] - 1.0) > 1e-9)
    throw std::invalid_argument("fit_moments: constant moment must equal 1");
  return ascend(dist, target.moments, config, 0.0);
}

double manifold_reward(std::span<const double> action, std::span<const double> target_points,
                       double sigma) {
  if (target_points.empty() || target_points.size() % action.size() != 0)
    throw std::invalid_argument("manifold_reward: empty or ragged target point set");
  if (sigma <= 0.0) throw std::invalid_argument("manifold_reward: sigma must be positive");
  const std::size_t dim = action.size();
  const std::size_t n = target_points.size() / dim;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double d2 = 0.0;
    for (std::size_t k = 0; k < dim; ++k) {
      const double diff = action[k] - target_points[i * dim + k];
      d2 += diff * diff;
    }
    best = std::min(best, d2);
  }
  return std::exp(-best / (2.0 * sigma * sigma));
}

GridDensity boltzmann_target(const std::function<double(std::span<const double>)>& reward,
                             const ProductGrid& grid, double alpha) {
  if (alpha <= 0.0) throw std::invalid_argument("boltzmann_target: alpha must be positive");
  const std::size_t n = grid.size();
  std::vector<double> log_mass(n);
  parallel_for(n, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i)
      log_mass[i] = reward(grid.point(i)) / alpha + grid.log_weights[i];
  });
  const double log_z = log_sum_exp(log_mass);
  GridDensity density;
  density.masses.resize(n);
  for (std::size_t i = 0; i < n; ++i) density.masses[i] = std::exp(log_mass[i] - log_z);
  return density;
}

std::vector<SweepRow> convergence_sweep(const GridDensity& target, const std::vector<int>& orders,
                                        const ProductGrid& grid, const FitConfig& config,
                                        BasisKind kind) {
  if (target.masses.size() != grid.size())
    throw std::invalid_argument("convergence_sweep: target does not match grid");
  std::vector<SweepRow> rows;
  rows.reserve(orders.size());
  for (int order : orders) {
    const ExponentSet basis = enumerate_exponents(grid.dim, order);
    PolyDistribution dist(basis, grid, kind);

    // Target moments under the fitting basis.
    MomentVector mv;
    mv.moments.assign(basis.size(), 0.0);
    std::vector<KahanSum> acc(basis.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
      const auto row = dist.feature_table().row(i);
      for (std::size_t j = 0; j < basis.size(); ++j) acc[j].add(target.masses[i] * row[j]);
    }
    for (std::size_t j = 0; j < basis.size(); ++j) mv.moments[j] = acc[j].value();
    mv.moments[0] = 1.0;

    SweepRow out;
    out.order = order;
    auto [params, report] = fit_moments(mv, dist, config);
    out.converged = report.converged;
    out.grad_norm = report.grad_norm;
    const std::vector<double> fit_masses = dist.grid_masses(params);
    out.l1 = l1_distance(fit_masses, target.masses);
    out.kl = kl_masses(target.masses, fit_masses);
    rows.push_back(std::move(out));
  }
  return rows;
}

double weighted_gram_condition(const ProductGrid& grid, const ExponentSet& basis,
                               BasisKind kind) {
  const GridFeatureTable table = precompute_features(grid, basis, kind);
  const int m = static_cast<int>(basis.size());
  std::vector<double> gram(static_cast<std::size_t>(m) * m, 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double w = std::exp(grid.log_weights[i]);
    const auto row = table.row(i);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b)
        gram[static_cast<std::size_t>(a) * m + b] +=
            w * row[static_cast<std::size_t>(a)] * row[static_cast<std::size_t>(b)];
  }
  const std::vector<double> eig = symmetric_eigenvalues(std::move(gram), m);
  const double lo = eig.front();
  const double hi = eig.back();
  if (lo <= 0.0) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

}  // namespace mepoly
