#include "mepoly/rl_trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mepoly {

RolloutBuffer collect_rollouts(const SmoothWorld& world, const PolyDistribution& dist,
                               const MlpParams& policy, const MlpParams& value, int n_steps,
                               Rng& rng, double lambda_clip) {
  if (dist.dim() != 2) throw std::invalid_argument("collect_rollouts: world actions are 2D");
  RolloutBuffer buf;
  buf.states.reserve(static_cast<std::size_t>(n_steps) * 2);
  buf.actions.reserve(static_cast<std::size_t>(n_steps) * 2);

  std::array<double, 2> state = world.start;
  int steps_in_episode = 0;
  double episode_return = 0.0;
  for (int t = 0; t < n_steps; ++t) {
    const std::vector<double> raw = mlp_forward(policy, state);
    const NaturalParams params = clip_params(raw, lambda_clip);
    const GridPosterior post = dist.posterior(params);
    const std::size_t idx = dist.sample_indices(post, 1, rng)[0];
    const auto node = dist.grid().point(idx);
    const std::array<double, 2> action{node[0], node[1]};
    const double logp = post.logits[idx] - post.log_z;
    const double v = mlp_forward(value, state)[0];

    const Transition tr = world_step(world, state, action, steps_in_episode);
    buf.states.insert(buf.states.end(), state.begin(), state.end());
    buf.actions.insert(buf.actions.end(), action.begin(), action.end());
    buf.log_probs.push_back(logp);
    buf.rewards.push_back(tr.reward);
    buf.values.push_back(v);
    buf.dones.push_back(tr.done ? 1 : 0);
    episode_return += tr.reward;

    if (tr.done) {
      buf.episode_returns.push_back(episode_return);
      buf.episode_causes.push_back(tr.cause);
      episode_return = 0.0;
      steps_in_episode = 0;
      state = world.start;
    } else {
      ++steps_in_episode;
      state = tr.next_state;
    }
  }
  buf.last_value = mlp_forward(value, state)[0];
  return buf;
}

double clipped_surrogate_dlogp(double ratio, double advantage, double clip_eps) {
  const double clipped = std::clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
  return ratio * advantage <= clipped * advantage ? ratio * advantage : 0.0;
}

void compute_gae(RolloutBuffer& buffer, double gamma, double gae_lambda) {
  const std::size_t n = buffer.size();
  if (buffer.values.size() != n) throw std::invalid_argument("compute_gae: missing values");
  buffer.advantages.assign(n, 0.0);
  buffer.returns.assign(n, 0.0);
  double gae = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double nonterminal = buffer.dones[t] ? 0.0 : 1.0;
    const double next_value = (t + 1 < n) ? buffer.values[t + 1] : buffer.last_value;
    const double delta =
        buffer.rewards[t] + gamma * next_value * nonterminal - buffer.values[t];
    gae = delta + gamma * gae_lambda * nonterminal * gae;
    buffer.advantages[t] = gae;
    buffer.returns[t] = gae + buffer.values[t];
  }
}

PpoUpdateReport ppo_update(MlpParams& policy, AdamState& policy_opt, MlpParams& value,
                           AdamState& value_opt, const PolyDistribution& dist,
                           RolloutBuffer& buffer, const PpoConfig& config, Rng& rng) {
  const std::size_t n = buffer.size();
  if (buffer.advantages.size() != n)
    throw std::invalid_argument("ppo_update: advantages missing; run compute_gae first");
  if (config.clip_eps <= 0.0 || config.clip_eps >= 1.0)
    throw std::invalid_argument("ppo_update: clip_eps must lie in (0,1)");
  if (config.gamma < 0.0 || config.gamma >= 1.0)
    throw std::invalid_argument("ppo_update: gamma must lie in [0,1)");
  if (config.entropy_coef < 0.0)
    throw std::invalid_argument("ppo_update: entropy coefficient must be >= 0");

  // Per-batch advantage normalization.
  double mean = 0.0;
  for (double a : buffer.advantages) mean += a;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double a : buffer.advantages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(n);
  const double inv_std = 1.0 / (std::sqrt(var) + 1e-8);
  std::vector<double> adv(n);
  for (std::size_t i = 0; i < n; ++i) adv[i] = (buffer.advantages[i] - mean) * inv_std;

  const MlpParams policy_backup = policy;
  const MlpParams value_backup = value;
  const AdamState policy_opt_backup = policy_opt;
  const AdamState value_opt_backup = value_opt;

  PpoUpdateReport report;
  double entropy_sum = 0.0;
  double objective_sum = 0.0;
  double value_loss_sum = 0.0;
  long sample_count = 0;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  const std::size_t m = dist.num_features();
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates shuffle driven by the caller's stream.
    for (std::size_t i = n; i > 1; --i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    for (std::size_t begin = 0; begin < n; begin += static_cast<std::size_t>(config.minibatch_size)) {
      const std::size_t end = std::min(n, begin + static_cast<std::size_t>(config.minibatch_size));
      const double inv_mb = 1.0 / static_cast<double>(end - begin);
      GradientBuffer policy_grads = make_gradient_buffer(policy);
      GradientBuffer value_grads = make_gradient_buffer(value);

      for (std::size_t k = begin; k < end; ++k) {
        const std::size_t i = order[k];
        const std::span<const double> state(buffer.states.data() + 2 * i, 2);
        const std::span<const double> action(buffer.actions.data() + 2 * i, 2);

        MlpCache cache;
        const std::vector<double> raw = mlp_forward(policy, state, cache);
        const NaturalParams params = clip_params(raw, config.lambda_clip);
        const GridPosterior post = dist.posterior(params);
        const std::vector<double> mu = dist.expected_features_from(post);
        const std::vector<double> feats = features(action, dist.basis(), dist.kind());

        double logit = 0.0;
        for (std::size_t j = 0; j < m; ++j) logit += feats[j] * params.lambda[j];
        const double new_logp = logit - post.log_z;
        const double ratio = std::exp(new_logp - buffer.log_probs[i]);
        const double a_i = adv[i];
        const double clipped = std::clamp(ratio, 1.0 - config.clip_eps, 1.0 + config.clip_eps);
        objective_sum += std::min(ratio * a_i, clipped * a_i);
        const double dlogp = clipped_surrogate_dlogp(ratio, a_i, config.clip_eps);

        const double ent = dist.entropy_from(post);
        entropy_sum += ent;
        ++sample_count;

        // Ascent gradient in lambda space, then negated into descent upstream.
        std::vector<double> glambda(m, 0.0);
        for (std::size_t j = 0; j < m; ++j) glambda[j] = dlogp * (feats[j] - mu[j]);
        if (config.entropy_coef != 0.0) {
          const std::vector<double> fv = dist.fisher_vector_product(post, mu, params.lambda);
          for (std::size_t j = 0; j < m; ++j) glambda[j] -= config.entropy_coef * fv[j];
        }
        std::vector<double> upstream(m, 0.0);
        for (std::size_t j = 0; j < m; ++j) {
          // Hard clamp: no gradient through saturated coordinates.
          const bool saturated = raw[j] <= -config.lambda_clip || raw[j] >= config.lambda_clip;
          upstream[j] = saturated ? 0.0 : -glambda[j] * inv_mb;
        }
        mlp_backward(policy, cache, upstream, policy_grads);

        MlpCache vcache;
        const double v = mlp_forward(value, state, vcache)[0];
        const double verr = v - buffer.returns[i];
        value_loss_sum += 0.5 * verr * verr;
        const std::vector<double> vupstream{verr * inv_mb};
        mlp_backward(value, vcache, vupstream, value_grads);
      }

      bool finite = true;
      for (const GradientBuffer* gb : {&policy_grads, &value_grads})
        for (const auto& w : gb->weights)
          for (double g : w)
            if (!std::isfinite(g)) finite = false;
      if (!finite) {
        policy = policy_backup;
        value = value_backup;
        policy_opt = policy_opt_backup;
        value_opt = value_opt_backup;
        report.aborted = true;
        return report;
      }
      adam_step(policy, policy_grads, policy_opt, config.lr_policy);
      adam_step(value, value_grads, value_opt, config.lr_value);
    }
  }

  report.policy_objective = objective_sum / static_cast<double>(sample_count);
  report.value_loss = value_loss_sum / static_cast<double>(sample_count);
  report.mean_entropy = entropy_sum / static_cast<double>(sample_count);
  return report;
}

namespace {

// Unbiased MaxEnt ascent direction: Bessel-corrected score-function
// covariance for the reward term (batch-mean baseline) plus alpha times the
// exact grid entropy gradient -F lambda.
std::vector<double> bandit_gradient(const NaturalParams& params, const GridPosterior& post,
                                    std::span<const double> mu,
                                    const std::function<const double*(std::size_t)>& feature_row,
                                    std::size_t batch, std::span<const double> rewards,
                                    double alpha, const PolyDistribution& dist) {
  if (rewards.size() != batch)
    throw std::invalid_argument("bandit update: rewards do not match batch");
  const std::size_t m = dist.num_features();
  std::vector<double> grad(m, 0.0);
  if (batch >= 2) {
    double mean_r = 0.0;
    for (double r : rewards) mean_r += r;
    mean_r /= static_cast<double>(batch);
    const double scale = 1.0 / static_cast<double>(batch - 1);
    for (std::size_t i = 0; i < batch; ++i) {
      const double w = (rewards[i] - mean_r) * scale;
      const double* row = feature_row(i);
      for (std::size_t j = 0; j < m; ++j) grad[j] += w * (row[j] - mu[j]);
    }
  }
  const std::vector<double> fv = dist.fisher_vector_product(post, mu, params.lambda);
  for (std::size_t j = 0; j < m; ++j) grad[j] -= alpha * fv[j];
  return grad;
}

NaturalParams bandit_apply(const NaturalParams& params, const GridPosterior& post,
                           const std::function<const double*(std::size_t)>& feature_row,
                           std::size_t batch, std::span<const double> rewards, double alpha,
                           double step_size, const PolyDistribution& dist) {
  const std::vector<double> mu = dist.expected_features_from(post);
  const std::vector<double> grad =
      bandit_gradient(params, post, mu, feature_row, batch, rewards, alpha, dist);
  std::vector<double> raw(grad.size());
  for (std::size_t j = 0; j < grad.size(); ++j) raw[j] = params.lambda[j] + step_size * grad[j];
  return clip_params(raw, params.clip);
}

}  // namespace

NaturalParams bandit_maxent_update(const NaturalParams& params, std::span<const double> actions,
                                   std::span<const double> rewards, double alpha,
                                   double step_size, const PolyDistribution& dist) {
  const auto dim = static_cast<std::size_t>(dist.dim());
  if (actions.size() % dim != 0)
    throw std::invalid_argument("bandit_maxent_update: ragged action batch");
  const std::size_t batch = actions.size() / dim;
  std::vector<double> feats(batch * dist.num_features());
  for (std::size_t i = 0; i < batch; ++i)
    features_into(actions.subspan(i * dim, dim), dist.basis(), dist.kind(),
                  {feats.data() + i * dist.num_features(), dist.num_features()});
  const GridPosterior post = dist.posterior(params);
  return bandit_apply(
      params, post, [&](std::size_t i) { return feats.data() + i * dist.num_features(); }, batch,
      rewards, alpha, step_size, dist);
}

NaturalParams bandit_update_from_indices(const NaturalParams& params, const GridPosterior& post,
                                         std::span<const std::size_t> indices,
                                         std::span<const double> rewards, double alpha,
                                         double step_size, const PolyDistribution& dist) {
  const auto& table = dist.feature_table();
  return bandit_apply(
      params, post, [&](std::size_t i) { return table.values.data() + indices[i] * table.cols; },
      indices.size(), rewards, alpha, step_size, dist);
}

namespace {

std::vector<TerminalCluster> cluster_terminals(const std::vector<std::array<double, 2>>& points,
                                               double radius) {
  const std::size_t n = points.size();
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
    while (parent[i] != i) {
      parent[i] = parent[parent[i]];
      i = parent[i];
    }
    return i;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = points[i][0] - points[j][0];
      const double dy = points[i][1] - points[j][1];
      if (dx * dx + dy * dy <= radius * radius) parent[find(i)] = find(j);
    }
  std::vector<TerminalCluster> clusters;
  std::vector<int> root_to_cluster(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = find(i);
    if (root_to_cluster[r] < 0) {
      root_to_cluster[r] = static_cast<int>(clusters.size());
      clusters.push_back({});
    }
    TerminalCluster& c = clusters[static_cast<std::size_t>(root_to_cluster[r])];
    c.x += points[i][0];
    c.y += points[i][1];
    c.count += 1;
  }
  for (TerminalCluster& c : clusters) {
    c.x /= c.count;
    c.y /= c.count;
  }
  std::sort(clusters.begin(), clusters.end(),
            [](const TerminalCluster& a, const TerminalCluster& b) { return a.count > b.count; });
  return clusters;
}

}  // namespace

EvalMetrics evaluate(const SmoothWorld& world, const PolyDistribution& dist,
                     const MlpParams& policy, int episodes, Rng& rng, double lambda_clip,
                     std::vector<TrajectoryRow>* trajectories) {
  if (episodes < 1) throw std::invalid_argument("evaluate: episodes must be >= 1");
  EvalMetrics metrics;
  metrics.goal_histogram.assign(world.goals.size(), 0);
  std::vector<std::array<double, 2>> terminals;
  double return_sum = 0.0;
  int successes = 0;
  int timeouts = 0;

  for (int ep = 0; ep < episodes; ++ep) {
    std::array<double, 2> state = world.start;
    double ep_return = 0.0;
    for (int t = 0; t < world.max_steps; ++t) {
      const std::vector<double> raw = mlp_forward(policy, state);
      const NaturalParams params = clip_params(raw, lambda_clip);
      const GridPosterior post = dist.posterior(params);
      const std::size_t idx = dist.sample_indices(post, 1, rng)[0];
      const auto node = dist.grid().point(idx);
      const Transition tr = world_step(world, state, {node[0], node[1]}, t);
      ep_return += tr.reward;
      if (trajectories)
        trajectories->push_back({ep, t, tr.next_state[0], tr.next_state[1], node[0], node[1],
                                 tr.reward, tr.cause});
      state = tr.next_state;
      if (tr.done) {
        if (tr.cause == TerminalCause::goal) {
          ++successes;
          if (tr.goal_index >= 0)
            ++metrics.goal_histogram[static_cast<std::size_t>(tr.goal_index)];
        } else if (tr.cause == TerminalCause::timeout) {
          ++timeouts;
        }
        break;
      }
    }
    return_sum += ep_return;
    terminals.push_back(state);
  }

  metrics.mean_return = return_sum / episodes;
  metrics.success_rate = static_cast<double>(successes) / episodes;
  metrics.timeout_fraction = static_cast<double>(timeouts) / episodes;
  for (int c : metrics.goal_histogram)
    if (c > 0) ++metrics.distinct_goals;
  metrics.terminal_clusters = cluster_terminals(terminals, 0.15);
  return metrics;
}

PpoTrainResult train_ppo(const SmoothWorld& world, const PolyDistribution& dist,
                         const PpoTrainConfig& config) {
  Rng rng(config.seed);
  std::vector<int> policy_sizes{2};
  for (int h : config.hidden) policy_sizes.push_back(h);
  policy_sizes.push_back(static_cast<int>(dist.num_features()));
  std::vector<int> value_sizes{2};
  for (int h : config.hidden) value_sizes.push_back(h);
  value_sizes.push_back(1);

  PpoTrainResult result;
  result.policy = make_mlp(policy_sizes, rng, /*zero_init_output=*/true);
  result.value = make_mlp(value_sizes, rng, /*zero_init_output=*/true);
  AdamState policy_opt = make_adam_state(result.policy);
  AdamState value_opt = make_adam_state(result.value);

  long steps_done = 0;
  int iteration = 0;
  while (steps_done < config.total_steps) {
    RolloutBuffer buffer = collect_rollouts(world, dist, result.policy, result.value,
                                            config.ppo.n_steps, rng, config.ppo.lambda_clip);
    compute_gae(buffer, config.ppo.gamma, config.ppo.gae_lambda);
    const PpoUpdateReport rep = ppo_update(result.policy, policy_opt, result.value, value_opt,
                                           dist, buffer, config.ppo, rng);
    steps_done += config.ppo.n_steps;
    ++iteration;

    PpoIterationLog log;
    log.iteration = iteration;
    log.env_steps = steps_done;
    log.entropy = rep.mean_entropy;
    log.value_loss = rep.value_loss;
    if (!buffer.episode_returns.empty()) {
      double sum = 0.0;
      int goals = 0;
      for (std::size_t e = 0; e < buffer.episode_returns.size(); ++e) {
        sum += buffer.episode_returns[e];
        if (buffer.episode_causes[e] == TerminalCause::goal) ++goals;
      }
      log.mean_return = sum / static_cast<double>(buffer.episode_returns.size());
      log.success_rate =
          static_cast<double>(goals) / static_cast<double>(buffer.episode_returns.size());
    }
    result.logs.push_back(log);
  }
  return result;
}

BanditTrainResult train_bandit(const BanditTrainConfig& config, const PolyDistribution& dist) {
  if (dist.dim() != 2) throw std::invalid_argument("train_bandit: manifold rewards are 2D");
  Rng rng(config.seed);
  BanditTrainResult result;
  result.manifold_points = make_manifold(config.kind, config.manifold_points, rng);

  const auto reward_fn = [&](std::span<const double> a) {
    return manifold_reward(a, result.manifold_points, config.sigma);
  };
  result.target = boltzmann_target(reward_fn, dist.grid(), config.alpha);

  // Rewards are fixed per grid point; precompute once.
  std::vector<double> grid_rewards(dist.grid().size());
  parallel_for(dist.grid().size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) grid_rewards[i] = reward_fn(dist.grid().point(i));
  });

  NaturalParams params;
  params.clip = config.lambda_clip;
  params.lambda.assign(dist.num_features(), 0.0);

  const std::size_t m = dist.num_features();
  const auto& table = dist.feature_table();
  std::vector<double> batch_rewards(static_cast<std::size_t>(config.batch_size));
  std::vector<double> average(m, 0.0);
  long average_n = 0;

  for (int step = 1; step <= config.steps; ++step) {
    const GridPosterior post = dist.posterior(params);
    const std::vector<std::size_t> idx =
        dist.sample_indices(post, static_cast<std::size_t>(config.batch_size), rng);
    double mean_r = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      batch_rewards[i] = grid_rewards[idx[i]];
      mean_r += batch_rewards[i];
    }
    mean_r /= static_cast<double>(idx.size());

    const double step_t = config.step_size / (1.0 + step / std::max(config.step_decay, 1.0));
    if (!config.natural_gradient) {
      params = bandit_update_from_indices(params, post, idx, batch_rewards, config.alpha,
                                          step_t, dist);
    } else {
      const std::vector<double> mu = dist.expected_features_from(post);
      const std::vector<double> grad = bandit_gradient(
          params, post, mu, [&](std::size_t i) { return table.values.data() + idx[i] * m; },
          idx.size(), batch_rewards, config.alpha, dist);
      std::vector<double> fisher = dist.fisher_matrix(post, mu);
      double max_diag = 1e-12;
      for (std::size_t j = 0; j < m; ++j) max_diag = std::max(max_diag, fisher[j * m + j]);
      for (std::size_t j = 0; j < m; ++j) fisher[j * m + j] += config.fisher_ridge * max_diag;
      std::vector<double> direction = grad;
      if (cholesky_solve(std::move(fisher), static_cast<int>(m), direction)) {
        // A unit step is a damped Newton step on E[r]/alpha + H; the trust
        // cap bounds the move when the solve amplifies batch noise.
        const double scale = step_t / std::max(config.alpha, 1e-6);
        double move = 0.0;
        for (std::size_t j = 0; j < m; ++j) move = std::max(move, std::fabs(scale * direction[j]));
        const double shrink = move > config.trust_cap ? config.trust_cap / move : 1.0;
        std::vector<double> raw(m);
        for (std::size_t j = 0; j < m; ++j)
          raw[j] = params.lambda[j] + shrink * scale * direction[j];
        params = clip_params(raw, params.clip);
      } else {
        params = bandit_update_from_indices(params, post, idx, batch_rewards, config.alpha,
                                            step_t, dist);
      }
    }

    if (config.polyak_average && step > config.steps / 2) {
      ++average_n;
      for (std::size_t j = 0; j < m; ++j)
        average[j] += (params.lambda[j] - average[j]) / static_cast<double>(average_n);
    }

    if (step % config.log_every == 0 || step == config.steps) {
      const std::vector<double> masses = dist.grid_masses(params);
      BanditLog log;
      log.step = step;
      log.kl_to_target = kl_masses(masses, result.target.masses);
      log.entropy = dist.entropy(params);
      log.mean_reward = mean_r;
      result.logs.push_back(log);
    }
  }

  if (config.polyak_average && average_n > 0) {
    result.params = clip_params(average, config.lambda_clip);
    BanditLog log;
    log.step = config.steps;
    log.kl_to_target = kl_masses(dist.grid_masses(result.params), result.target.masses);
    log.entropy = dist.entropy(result.params);
    log.mean_reward = result.logs.empty() ? 0.0 : result.logs.back().mean_reward;
    result.logs.push_back(log);
  } else {
    result.params = std::move(params);
  }
  return result;
}

}  // namespace mepoly
