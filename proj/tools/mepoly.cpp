// mepoly: fit, train, sample, and export polynomial exponential-family
// distributions on [-1,1]^d from the command line.

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mepoly/io.hpp"
#include "mepoly/rl_trainer.hpp"

using namespace mepoly;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitNumeric = 1;
constexpr int kExitUsage = 2;

std::string out_path(const std::string& dir, const std::string& name) {
  fs::create_directories(dir);
  return (fs::path(dir) / name).string();
}

void write_resolved_config(const std::string& dir, const json& config) {
  io::write_text_file(out_path(dir, "resolved-config.json"), config.dump(2) + "\n");
}

PolyDistribution build_distribution(int dim, int order, int grid_size, BasisKind kind,
                                    std::uint64_t seed) {
  const Grid1D g = trapezoid_grid(grid_size);
  if (dim <= kFullGridMaxDim)
    return PolyDistribution(enumerate_exponents(dim, order), product_grid(g, dim), kind);
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  return PolyDistribution(enumerate_exponents(dim, order),
                          stochastic_grid(g, dim, kDefaultStochasticGridSize, rng), kind);
}

void export_density(const std::string& dir, const PolyDistribution& dist,
                    const NaturalParams& params) {
  if (dist.dim() <= 2) io::write_density_csv(out_path(dir, "density.csv"), dist, params);
  if (dist.dim() == 2 && dist.grid().kind == ProductGrid::Kind::full)
    io::write_density_pgm(out_path(dir, "density.pgm"), dist, params);
}

SmoothWorld resolve_layout(const std::string& layout) {
  for (const std::string& name : builtin_layout_names())
    if (layout == name) return builtin_layout(name);
  return load_layout_file(layout);
}

std::vector<int> parse_order_list(const std::string& orders) {
  std::vector<int> out;
  std::stringstream ss(orders);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  if (out.empty()) throw CLI::ValidationError("--orders", "expected a comma-separated list");
  return out;
}

struct FitArgs {
  std::string manifold;
  std::string samples;
  std::string orders;
  int order = 8;
  int grid_size = kDefaultGridSize;
  double alpha = 0.05;
  double sigma = 0.05;
  double entropy_coef = 0.0;
  double clip = 30.0;
  double step_size = 1.0;
  int max_iters = 20000;
  double grad_tol = 1e-5;
  int manifold_points = 2000;
  std::uint64_t seed = 0;
  std::string out = ".";
};

int cmd_fit(const FitArgs& args) {
  FitConfig config;
  config.step_size = args.step_size;
  config.max_iters = args.max_iters;
  config.grad_tol = args.grad_tol;
  config.entropy_coef = args.entropy_coef;
  config.lambda_clip = args.clip;

  json resolved{{"command", "fit"},       {"order", args.order},
                {"grid_size", args.grid_size}, {"seed", args.seed},
                {"clip", args.clip},      {"step_size", args.step_size},
                {"max_iters", args.max_iters}, {"grad_tol", args.grad_tol},
                {"entropy_coef", args.entropy_coef}, {"out", args.out}};

  if (!args.samples.empty()) {
    int dim = 0;
    const std::vector<double> samples = io::read_samples_csv(args.samples, dim);
    PolyDistribution dist =
        build_distribution(dim, args.order, args.grid_size, BasisKind::legendre, args.seed);
    auto [params, report] = fit_mle(samples, dist, config);
    io::save_lambda_checkpoint(out_path(args.out, "lambda.bin"), params, dim, args.order,
                               BasisKind::legendre);
    io::write_fit_report_json(out_path(args.out, "fit_report.json"), report);
    export_density(args.out, dist, params);
    resolved["samples"] = args.samples;
    resolved["dim"] = dim;
    write_resolved_config(args.out, resolved);
    if (!report.converged) {
      std::fprintf(stderr, "fit did not converge: %s (grad norm %.3e)\n",
                   report.message.c_str(), report.grad_norm);
      return kExitNumeric;
    }
    std::printf("fit: nll %.6f entropy %.6f grad %.2e iters %d\n", report.final_nll,
                report.final_entropy, report.grad_norm, report.iterations);
    return kExitOk;
  }

  if (args.manifold.empty())
    throw CLI::ValidationError("fit", "provide --manifold or --samples");

  const ManifoldKind kind = manifold_kind_from_name(args.manifold);
  Rng rng(args.seed);
  const std::vector<double> points = make_manifold(kind, args.manifold_points, rng);
  const ProductGrid grid = product_grid(trapezoid_grid(args.grid_size), 2);
  const GridDensity target = boltzmann_target(
      [&](std::span<const double> a) { return manifold_reward(a, points, args.sigma); }, grid,
      args.alpha);

  resolved["manifold"] = args.manifold;
  resolved["alpha"] = args.alpha;
  resolved["sigma"] = args.sigma;
  resolved["manifold_points"] = args.manifold_points;

  std::vector<int> orders;
  if (!args.orders.empty()) {
    orders = parse_order_list(args.orders);
    const std::vector<SweepRow> rows = convergence_sweep(target, orders, grid, config);
    io::write_sweep_csv(out_path(args.out, "convergence.csv"), rows);
    for (const SweepRow& row : rows)
      std::printf("sweep: order %d l1 %.4f kl %.4f converged %d\n", row.order, row.l1, row.kl,
                  row.converged ? 1 : 0);
    resolved["orders"] = orders;
  }

  const int final_order = orders.empty() ? args.order : orders.back();
  PolyDistribution dist(enumerate_exponents(2, final_order), grid);
  MomentVector mv;
  mv.moments.assign(dist.num_features(), 0.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto row = dist.feature_table().row(i);
    for (std::size_t j = 0; j < dist.num_features(); ++j)
      mv.moments[j] += target.masses[i] * row[j];
  }
  mv.moments[0] = 1.0;
  auto [params, report] = fit_moments(mv, dist, config);
  io::save_lambda_checkpoint(out_path(args.out, "lambda.bin"), params, 2, final_order,
                             BasisKind::legendre);
  io::write_fit_report_json(out_path(args.out, "fit_report.json"), report);
  export_density(args.out, dist, params);
  resolved["final_order"] = final_order;
  write_resolved_config(args.out, resolved);
  if (!report.converged) {
    std::fprintf(stderr, "fit did not converge: %s (grad norm %.3e)\n", report.message.c_str(),
                 report.grad_norm);
    return kExitNumeric;
  }
  std::printf("fit: order %d entropy %.6f grad %.2e iters %d\n", final_order,
              report.final_entropy, report.grad_norm, report.iterations);
  return kExitOk;
}

struct BanditArgs {
  std::string manifold = "two_moons";
  double alpha = 0.05;
  double sigma = 0.05;
  int order = 24;
  int grid_size = kDefaultGridSize;
  int steps = 800;
  int batch_size = 4096;
  double step_size = 0.5;
  double clip = 50.0;
  int manifold_points = 2000;
  std::uint64_t seed = 0;
  std::string out = ".";
};

int cmd_bandit(const BanditArgs& args) {
  BanditTrainConfig config;
  config.kind = manifold_kind_from_name(args.manifold);
  config.manifold_points = args.manifold_points;
  config.sigma = args.sigma;
  config.alpha = args.alpha;
  config.order = args.order;
  config.grid_size = args.grid_size;
  config.batch_size = args.batch_size;
  config.steps = args.steps;
  config.step_size = args.step_size;
  config.lambda_clip = args.clip;
  config.seed = args.seed;

  PolyDistribution dist(enumerate_exponents(2, args.order),
                        product_grid(trapezoid_grid(args.grid_size), 2));
  const BanditTrainResult result = train_bandit(config, dist);

  io::save_lambda_checkpoint(out_path(args.out, "lambda.bin"), result.params, 2, args.order,
                             BasisKind::legendre);
  io::write_bandit_log_csv(out_path(args.out, "bandit_log.csv"), result.logs);
  export_density(args.out, dist, result.params);

  write_resolved_config(args.out, json{{"command", "bandit"},
                                       {"manifold", args.manifold},
                                       {"alpha", args.alpha},
                                       {"sigma", args.sigma},
                                       {"order", args.order},
                                       {"grid_size", args.grid_size},
                                       {"steps", args.steps},
                                       {"batch_size", args.batch_size},
                                       {"step_size", args.step_size},
                                       {"clip", args.clip},
                                       {"manifold_points", args.manifold_points},
                                       {"seed", args.seed},
                                       {"out", args.out}});
  const BanditLog& last = result.logs.back();
  std::printf("bandit: kl %.4f entropy %.4f mean reward %.4f after %d steps\n",
              last.kl_to_target, last.entropy, last.mean_reward, last.step);
  return kExitOk;
}

struct NavigateArgs {
  std::string layout = "two_goals";
  std::string config_file;
  long total_steps = 65536;
  int order = 4;
  int grid_size = kDefaultGridSize;
  double beta = 0.01;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  double lr_policy = 3e-4;
  double lr_value = 1e-3;
  int epochs = 4;
  int minibatch = 256;
  int n_steps = 2048;
  double clip = kDefaultLambdaClip;
  std::vector<int> hidden{256, 256};
  int eval_episodes = 100;
  std::uint64_t seed = 0;
  std::string out = ".";
};

// Training config files reuse the layout text format: `key = values` lines.
void apply_navigate_config_file(NavigateArgs& args, const CLI::App* sub) {
  std::ifstream in(args.config_file);
  if (!in) throw std::runtime_error("config: cannot open '" + args.config_file + "'");
  std::string line;
  int line_no = 0;
  auto overridden = [&](const std::string& flag) { return sub->count(flag) > 0; };
  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::size_t eq = line.find('=');
    std::string key = line.substr(0, eq == std::string::npos ? line.size() : eq);
    key.erase(std::remove_if(key.begin(), key.end(), [](char c) { return std::isspace(c); }),
              key.end());
    if (key.empty()) continue;
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(line_no) +
                               ": expected 'key = value'");
    std::istringstream vals(line.substr(eq + 1));
    auto num = [&]() {
      double v = 0.0;
      if (!(vals >> v))
        throw std::runtime_error("config line " + std::to_string(line_no) + ": bad number");
      return v;
    };
    if (key == "total_steps") {
      if (!overridden("--steps")) args.total_steps = static_cast<long>(num());
    } else if (key == "order") {
      if (!overridden("--order")) args.order = static_cast<int>(num());
    } else if (key == "grid_size") {
      if (!overridden("--grid-size")) args.grid_size = static_cast<int>(num());
    } else if (key == "beta") {
      if (!overridden("--beta")) args.beta = num();
    } else if (key == "gamma") {
      args.gamma = num();
    } else if (key == "gae_lambda") {
      args.gae_lambda = num();
    } else if (key == "clip_eps") {
      args.clip_eps = num();
    } else if (key == "lr_policy") {
      args.lr_policy = num();
    } else if (key == "lr_value") {
      args.lr_value = num();
    } else if (key == "epochs") {
      args.epochs = static_cast<int>(num());
    } else if (key == "minibatch") {
      args.minibatch = static_cast<int>(num());
    } else if (key == "n_steps") {
      args.n_steps = static_cast<int>(num());
    } else if (key == "lambda_clip") {
      args.clip = num();
    } else if (key == "eval_episodes") {
      args.eval_episodes = static_cast<int>(num());
    } else if (key == "seed") {
      if (!overridden("--seed")) args.seed = static_cast<std::uint64_t>(num());
    } else if (key == "hidden") {
      args.hidden.clear();
      double v = 0.0;
      while (vals >> v) args.hidden.push_back(static_cast<int>(v));
      if (args.hidden.empty())
        throw std::runtime_error("config line " + std::to_string(line_no) + ": empty hidden");
    } else {
      throw std::runtime_error("config line " + std::to_string(line_no) + ": unknown key '" +
                               key + "'");
    }
  }
}

int cmd_navigate(const NavigateArgs& args) {
  const SmoothWorld world = resolve_layout(args.layout);
  PolyDistribution dist(enumerate_exponents(2, args.order),
                        product_grid(trapezoid_grid(args.grid_size), 2));

  PpoTrainConfig config;
  config.ppo.clip_eps = args.clip_eps;
  config.ppo.entropy_coef = args.beta;
  config.ppo.gamma = args.gamma;
  config.ppo.gae_lambda = args.gae_lambda;
  config.ppo.lr_policy = args.lr_policy;
  config.ppo.lr_value = args.lr_value;
  config.ppo.epochs = args.epochs;
  config.ppo.minibatch_size = args.minibatch;
  config.ppo.n_steps = args.n_steps;
  config.ppo.lambda_clip = args.clip;
  config.total_steps = args.total_steps;
  config.hidden = args.hidden;
  config.order = args.order;
  config.grid_size = args.grid_size;
  config.seed = args.seed;

  const PpoTrainResult result = train_ppo(world, dist, config);
  save_checkpoint(result.policy, out_path(args.out, "policy.bin"));
  save_checkpoint(result.value, out_path(args.out, "value.bin"));
  io::write_ppo_log_csv(out_path(args.out, "training_log.csv"), result.logs);

  Rng eval_rng(args.seed + 1);
  std::vector<TrajectoryRow> trajectories;
  const EvalMetrics metrics = evaluate(world, dist, result.policy, args.eval_episodes, eval_rng,
                                       args.clip, &trajectories);
  io::write_trajectories_csv(out_path(args.out, "trajectories.csv"), trajectories);
  io::write_eval_metrics(out_path(args.out, "eval_metrics.json"),
                         out_path(args.out, "terminal_histogram.csv"), metrics);
  io::write_text_file(out_path(args.out, "layout.txt"), serialize_layout(world));

  write_resolved_config(args.out, json{{"command", "navigate"},
                                       {"layout", args.layout},
                                       {"total_steps", args.total_steps},
                                       {"order", args.order},
                                       {"grid_size", args.grid_size},
                                       {"beta", args.beta},
                                       {"gamma", args.gamma},
                                       {"gae_lambda", args.gae_lambda},
                                       {"clip_eps", args.clip_eps},
                                       {"lr_policy", args.lr_policy},
                                       {"lr_value", args.lr_value},
                                       {"epochs", args.epochs},
                                       {"minibatch", args.minibatch},
                                       {"n_steps", args.n_steps},
                                       {"lambda_clip", args.clip},
                                       {"hidden", args.hidden},
                                       {"eval_episodes", args.eval_episodes},
                                       {"seed", args.seed},
                                       {"out", args.out}});
  std::printf("navigate: success %.2f distinct goals %d mean return %.3f\n",
              metrics.success_rate, metrics.distinct_goals, metrics.mean_return);
  return kExitOk;
}

struct SampleArgs {
  std::string checkpoint;
  int count = 10000;
  int grid_size = kDefaultGridSize;
  bool jitter = false;
  std::uint64_t seed = 0;
  std::string out = ".";
};

int cmd_sample(const SampleArgs& args) {
  const io::LambdaCheckpoint ck = io::load_lambda_checkpoint(args.checkpoint);
  PolyDistribution dist =
      build_distribution(ck.dim, ck.order, args.grid_size, ck.kind, args.seed);
  Rng rng(args.seed);
  const auto [actions, log_probs] =
      dist.sample_many(ck.params, static_cast<std::size_t>(args.count), rng, args.jitter);
  io::write_samples_csv(out_path(args.out, "samples.csv"), ck.dim, actions, log_probs);
  write_resolved_config(args.out, json{{"command", "sample"},
                                       {"checkpoint", args.checkpoint},
                                       {"n", args.count},
                                       {"grid_size", args.grid_size},
                                       {"jitter", args.jitter},
                                       {"dim", ck.dim},
                                       {"order", ck.order},
                                       {"seed", args.seed},
                                       {"out", args.out}});
  std::printf("sample: wrote %d draws (dim %d, order %d)\n", args.count, ck.dim, ck.order);
  return kExitOk;
}

struct DensityArgs {
  std::string checkpoint;
  int grid_size = kDefaultGridSize;
  std::uint64_t seed = 0;
  std::string out = ".";
};

int cmd_density(const DensityArgs& args) {
  const io::LambdaCheckpoint ck = io::load_lambda_checkpoint(args.checkpoint);
  if (ck.dim > 2)
    throw CLI::ValidationError("density", "only 1D and 2D densities are exportable");
  PolyDistribution dist =
      build_distribution(ck.dim, ck.order, args.grid_size, ck.kind, args.seed);
  export_density(args.out, dist, ck.params);
  write_resolved_config(args.out, json{{"command", "density"},
                                       {"checkpoint", args.checkpoint},
                                       {"grid_size", args.grid_size},
                                       {"dim", ck.dim},
                                       {"order", ck.order},
                                       {"seed", args.seed},
                                       {"out", args.out}});
  std::printf("density: wrote grid export (dim %d, order %d)\n", ck.dim, ck.order);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MePoly: maximum-entropy polynomial distributions on [-1,1]^d"};
  app.require_subcommand(1);

  FitArgs fit_args;
  CLI::App* fit = app.add_subcommand("fit", "Fit natural parameters to samples or a manifold");
  fit->add_option("--manifold", fit_args.manifold, "Target manifold (lemniscate|two_moons)");
  fit->add_option("--samples", fit_args.samples, "CSV of action samples to fit by MLE");
  fit->add_option("--orders", fit_args.orders, "Comma-separated order sweep, e.g. 2,4,6,8");
  fit->add_option("--order", fit_args.order, "Polynomial order");
  fit->add_option("--grid-size", fit_args.grid_size, "Quadrature nodes per dimension");
  fit->add_option("--alpha", fit_args.alpha, "Boltzmann temperature for manifold targets");
  fit->add_option("--sigma", fit_args.sigma, "Manifold reward kernel width");
  fit->add_option("--entropy-coef", fit_args.entropy_coef, "Entropy bonus in the MLE objective");
  fit->add_option("--clip", fit_args.clip, "Natural-parameter clip bound");
  fit->add_option("--step-size", fit_args.step_size, "Initial ascent step");
  fit->add_option("--max-iters", fit_args.max_iters, "Iteration budget");
  fit->add_option("--grad-tol", fit_args.grad_tol, "Gradient norm stopping tolerance");
  fit->add_option("--manifold-points", fit_args.manifold_points, "Target point count");
  fit->add_option("--seed", fit_args.seed, "Random seed");
  fit->add_option("--out", fit_args.out, "Output directory");

  BanditArgs bandit_args;
  CLI::App* bandit = app.add_subcommand("bandit", "MaxEnt bandit training on a manifold reward");
  bandit->add_option("--manifold", bandit_args.manifold, "lemniscate|two_moons");
  bandit->add_option("--alpha", bandit_args.alpha, "Entropy temperature");
  bandit->add_option("--sigma", bandit_args.sigma, "Reward kernel width");
  bandit->add_option("--order", bandit_args.order, "Polynomial order");
  bandit->add_option("--grid-size", bandit_args.grid_size, "Quadrature nodes per dimension");
  bandit->add_option("--steps", bandit_args.steps, "Training steps");
  bandit->add_option("--batch", bandit_args.batch_size, "Actions per step");
  bandit->add_option("--step-size", bandit_args.step_size, "Ascent step size");
  bandit->add_option("--clip", bandit_args.clip, "Natural-parameter clip bound");
  bandit->add_option("--manifold-points", bandit_args.manifold_points, "Target point count");
  bandit->add_option("--seed", bandit_args.seed, "Random seed");
  bandit->add_option("--out", bandit_args.out, "Output directory");

  NavigateArgs nav_args;
  CLI::App* nav = app.add_subcommand("navigate", "PPO training on a Smooth World layout");
  nav->add_option("--layout", nav_args.layout, "Builtin layout name or layout file path");
  nav->add_option("--config", nav_args.config_file, "Training config file (key = value)");
  nav->add_option("--steps", nav_args.total_steps, "Total environment steps");
  nav->add_option("--order", nav_args.order, "Polynomial order");
  nav->add_option("--grid-size", nav_args.grid_size, "Quadrature nodes per dimension");
  nav->add_option("--beta", nav_args.beta, "Entropy bonus coefficient");
  nav->add_option("--seed", nav_args.seed, "Random seed");
  nav->add_option("--out", nav_args.out, "Output directory");

  SampleArgs sample_args;
  CLI::App* sample = app.add_subcommand("sample", "Draw actions from a saved distribution");
  sample->add_option("--checkpoint", sample_args.checkpoint, "Lambda checkpoint path")
      ->required();
  sample->add_option("-n,--n", sample_args.count, "Number of draws");
  sample->add_option("--grid-size", sample_args.grid_size, "Quadrature nodes per dimension");
  sample->add_flag("--jitter", sample_args.jitter, "Uniform jitter within the grid cell");
  sample->add_option("--seed", sample_args.seed, "Random seed");
  sample->add_option("--out", sample_args.out, "Output directory");

  DensityArgs density_args;
  CLI::App* density = app.add_subcommand("density", "Export density CSV and graymap image");
  density->add_option("--checkpoint", density_args.checkpoint, "Lambda checkpoint path")
      ->required();
  density->add_option("--grid-size", density_args.grid_size, "Quadrature nodes per dimension");
  density->add_option("--seed", density_args.seed, "Random seed");
  density->add_option("--out", density_args.out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (fit->parsed()) return cmd_fit(fit_args);
    if (bandit->parsed()) return cmd_bandit(bandit_args);
    if (nav->parsed()) {
      if (!nav_args.config_file.empty()) apply_navigate_config_file(nav_args, nav);
      return cmd_navigate(nav_args);
    }
    if (sample->parsed()) return cmd_sample(sample_args);
    if (density->parsed()) return cmd_density(density_args);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
