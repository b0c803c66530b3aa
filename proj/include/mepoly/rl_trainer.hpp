#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mepoly/conditioner.hpp"
#include "mepoly/distribution.hpp"
#include "mepoly/environments.hpp"
#include "mepoly/maxent_fit.hpp"

namespace mepoly {

// On-policy records plus the GAE-computed advantage/return columns.
struct RolloutBuffer {
  std::vector<double> states;     // flattened, 2 per step
  std::vector<double> actions;    // flattened, 2 per step
  std::vector<double> log_probs;  // behavior log-densities at collection time
  std::vector<double> rewards;
  std::vector<double> values;
  std::vector<std::uint8_t> dones;
  std::vector<double> advantages;
  std::vector<double> returns;
  double last_value = 0.0;  // bootstrap for the state after the final record

  // Completed-episode summaries for logging.
  std::vector<double> episode_returns;
  std::vector<TerminalCause> episode_causes;

  std::size_t size() const { return rewards.size(); }
};

struct PpoConfig {
  double clip_eps = 0.2;
  double entropy_coef = 0.01;  // beta
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double lr_policy = 3e-4;
  double lr_value = 1e-3;
  int epochs = 4;
  int minibatch_size = 256;
  int n_steps = 2048;
  double lambda_clip = kDefaultLambdaClip;
};

RolloutBuffer collect_rollouts(const SmoothWorld& world, const PolyDistribution& dist,
                               const MlpParams& policy, const MlpParams& value, int n_steps,
                               Rng& rng, double lambda_clip = kDefaultLambdaClip);

// d/dlogpi of min(ratio * adv, clip(ratio, 1 -/+ eps) * adv): the full
// ratio * adv when the unclipped branch is active, zero otherwise.
double clipped_surrogate_dlogp(double ratio, double advantage, double clip_eps);

/// Generalized advantage recursion; returns = advantage + value.
void compute_gae(RolloutBuffer& buffer, double gamma, double gae_lambda);

struct PpoUpdateReport {
  double policy_objective = 0.0;
  double value_loss = 0.0;
  double mean_entropy = 0.0;
  bool aborted = false;
};

// Clipped-surrogate ascent with the exact grid entropy bonus, plus a squared
//-error value update. A non-finite loss aborts and restores both networks.
PpoUpdateReport ppo_update(MlpParams& policy, AdamState& policy_opt, MlpParams& value,
                           AdamState& value_opt, const PolyDistribution& dist,
                           RolloutBuffer& buffer, const PpoConfig& config, Rng& rng);

// One MaxEnt ascent step for the single-state bandit: an unbiased
// score-function estimate of grad E[r] (batch-mean baseline) plus
// alpha times the exact grid entropy gradient.
NaturalParams bandit_maxent_update(const NaturalParams& params, std::span<const double> actions,
                                   std::span<const double> rewards, double alpha,
                                   double step_size, const PolyDistribution& dist);
NaturalParams bandit_update_from_indices(const NaturalParams& params, const GridPosterior& post,
                                         std::span<const std::size_t> indices,
                                         std::span<const double> rewards, double alpha,
                                         double step_size, const PolyDistribution& dist);

struct TrajectoryRow {
  int episode = 0;
  int t = 0;
  double x = 0.0, y = 0.0, vx = 0.0, vy = 0.0;
  double reward = 0.0;
  TerminalCause cause = TerminalCause::none;
};

struct TerminalCluster {
  double x = 0.0, y = 0.0;
  int count = 0;
};

struct EvalMetrics {
  double mean_return = 0.0;
  double success_rate = 0.0;
  double timeout_fraction = 0.0;
  std::vector<int> goal_histogram;  // one counter per goal region
  int distinct_goals = 0;
  std::vector<TerminalCluster> terminal_clusters;
};

EvalMetrics evaluate(const SmoothWorld& world, const PolyDistribution& dist,
                     const MlpParams& policy, int episodes, Rng& rng,
                     double lambda_clip = kDefaultLambdaClip,
                     std::vector<TrajectoryRow>* trajectories = nullptr);

struct PpoIterationLog {
  int iteration = 0;
  long env_steps = 0;
  double mean_return = 0.0;
  double success_rate = 0.0;
  double entropy = 0.0;
  double value_loss = 0.0;
};

struct PpoTrainConfig {
  PpoConfig ppo;
  long total_steps = 65536;
  std::vector<int> hidden{256, 256};
  int order = 4;
  int grid_size = kDefaultGridSize;
  std::uint64_t seed = 0;
};

struct PpoTrainResult {
  MlpParams policy;
  MlpParams value;
  std::vector<PpoIterationLog> logs;
};

PpoTrainResult train_ppo(const SmoothWorld& world, const PolyDistribution& dist,
                         const PpoTrainConfig& config);

struct BanditLog {
  int step = 0;
  double kl_to_target = 0.0;
  double entropy = 0.0;
  double mean_reward = 0.0;
};

struct BanditTrainConfig {
  ManifoldKind kind = ManifoldKind::two_moons;
  int manifold_points = 2000;
  double sigma = 0.05;
  double alpha = 0.05;
  int order = 24;
  int grid_size = kDefaultGridSize;
  int batch_size = 4096;
  int steps = 800;
  double step_size = 0.5;
  double lambda_clip = 50.0;
  std::uint64_t seed = 0;
  int log_every = 50;
  // The reward term keeps its unbiased score-function estimate; the exact
  // grid Fisher preconditions the combined ascent direction. Plain gradient
  // steps crawl on this landscape (the dual conditioning grows with sharp
  // targets), so this is on by default.
  bool natural_gradient = true;
  double fisher_ridge = 3e-4;  // relative to the largest Fisher diagonal
  double step_decay = 100.0;   // step_t = step_size / (1 + t / step_decay)
  double trust_cap = 1.0;      // per-step cap on |delta lambda|_inf
  bool polyak_average = true;  // report the tail-half average of lambda
};

struct BanditTrainResult {
  NaturalParams params;
  GridDensity target;  // Boltzmann target on the training grid
  std::vector<BanditLog> logs;
  std::vector<double> manifold_points;  // flattened 2D
};

BanditTrainResult train_bandit(const BanditTrainConfig& config, const PolyDistribution& dist);

}  // namespace mepoly
