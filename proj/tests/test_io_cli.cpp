#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mepoly/io.hpp"

using namespace mepoly;
namespace fs = std::filesystem;

namespace {

const std::string kCli = MEPOLY_CLI_PATH;

fs::path fresh_dir(const char* name) {
  const fs::path dir = fs::temp_directory_path() / (std::string("mepoly_io_") + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(static_cast<bool>(in));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = kCli + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

PolyDistribution make_dist(int dim, int order, int grid_size) {
  return PolyDistribution(enumerate_exponents(dim, order),
                          product_grid(trapezoid_grid(grid_size), dim));
}

}  // namespace

TEST_CASE("samples CSV round trip preserves values") {
  const fs::path dir = fresh_dir("samples");
  const std::vector<double> actions{0.125, -0.75, 0.3333333333333333, 0.99};
  const std::vector<double> logps{-1.5, -0.25};
  const std::string path = (dir / "s.csv").string();
  io::write_samples_csv(path, 2, actions, logps);

  int dim = 0;
  const std::vector<double> back = io::read_samples_csv(path, dim);
  CHECK(dim == 2);
  CHECK(back == actions);  // %.17g round-trips doubles exactly

  // Headerless files are treated as all-action columns.
  io::write_text_file((dir / "plain.csv").string(), "0.5,0.25\n-0.5,0.75\n");
  const std::vector<double> plain = io::read_samples_csv((dir / "plain.csv").string(), dim);
  CHECK(dim == 2);
  CHECK(plain == std::vector<double>{0.5, 0.25, -0.5, 0.75});

  io::write_text_file((dir / "bad.csv").string(), "a0,a1\n0.5,oops\n");
  CHECK_THROWS_WITH_AS(io::read_samples_csv((dir / "bad.csv").string(), dim),
                       doctest::Contains("bad number"), std::runtime_error);
  CHECK_THROWS_AS(io::read_samples_csv((dir / "missing.csv").string(), dim),
                  std::runtime_error);
}

TEST_CASE("lambda checkpoint round trip and corruption errors") {
  const fs::path dir = fresh_dir("lambda");
  PolyDistribution dist = make_dist(2, 3, 16);
  Rng rng(5);
  std::vector<double> raw(dist.num_features());
  for (double& v : raw) v = rng.uniform(-2.0, 2.0);
  const NaturalParams params = clip_params(raw, 7.5);

  const std::string path = (dir / "lambda.bin").string();
  io::save_lambda_checkpoint(path, params, 2, 3, BasisKind::legendre);
  const io::LambdaCheckpoint ck = io::load_lambda_checkpoint(path);
  CHECK(ck.dim == 2);
  CHECK(ck.order == 3);
  CHECK(ck.kind == BasisKind::legendre);
  CHECK(ck.params.clip == 7.5);
  CHECK(ck.params.lambda == params.lambda);

  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("ZZZZ", 4);
  }
  CHECK_THROWS_WITH_AS(io::load_lambda_checkpoint(path), doctest::Contains("magic"),
                       std::runtime_error);

  // Feature count inconsistent with dim/order is rejected.
  io::save_lambda_checkpoint(path, params, 2, 5, BasisKind::legendre);
  CHECK_THROWS_WITH_AS(io::load_lambda_checkpoint(path), doctest::Contains("feature count"),
                       std::runtime_error);
}

TEST_CASE("density exports for uniform parameters are flat") {
  const fs::path dir = fresh_dir("density");
  PolyDistribution dist = make_dist(2, 2, 24);
  const NaturalParams uniform = clip_params(std::vector<double>(dist.num_features(), 0.0));

  const std::string csv = (dir / "density.csv").string();
  io::write_density_csv(csv, dist, uniform);
  std::ifstream in(csv);
  std::string header;
  std::getline(in, header);
  CHECK(header == "x,y,density");
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    const std::size_t comma = line.rfind(',');
    CHECK(std::stod(line.substr(comma + 1)) == doctest::Approx(0.25).epsilon(1e-12));
  }
  CHECK(rows == 24 * 24);

  const std::string pgm = (dir / "density.pgm").string();
  io::write_density_pgm(pgm, dist, uniform);
  const std::string bytes = slurp(pgm);
  CHECK(bytes.rfind("P5\n24 24\n255\n", 0) == 0);
  const std::string payload = bytes.substr(bytes.find("255\n") + 4);
  REQUIRE(payload.size() == 24 * 24);
  for (char c : payload) CHECK(static_cast<unsigned char>(c) == 255);

  PolyDistribution dist3 = make_dist(3, 1, 8);
  const NaturalParams u3 = clip_params(std::vector<double>(dist3.num_features(), 0.0));
  CHECK_THROWS_AS(io::write_density_csv((dir / "d3.csv").string(), dist3, u3),
                  std::invalid_argument);
  CHECK_THROWS_AS(io::write_density_pgm((dir / "d3.pgm").string(), dist3, u3),
                  std::invalid_argument);

  PolyDistribution dist1 = make_dist(1, 2, 16);
  const NaturalParams u1 = clip_params(std::vector<double>(dist1.num_features(), 0.0));
  io::write_density_csv((dir / "d1.csv").string(), dist1, u1);
  CHECK(slurp(dir / "d1.csv").rfind("x,density\n", 0) == 0);
}

TEST_CASE("report and log writers emit headers") {
  const fs::path dir = fresh_dir("logs");
  FitReport report;
  report.iterations = 3;
  report.converged = true;
  report.objective_trace = {0.1, 0.2};
  report.final_moments = {1.0, 0.5};
  io::write_fit_report_json((dir / "r.json").string(), report);
  const std::string json_text = slurp(dir / "r.json");
  CHECK(json_text.find("\"converged\": true") != std::string::npos);
  CHECK(json_text.find("\"iterations\": 3") != std::string::npos);

  io::write_sweep_csv((dir / "sweep.csv").string(), {{2, 0.5, 0.1, true, 1e-6}});
  CHECK(slurp(dir / "sweep.csv").rfind("order,l1,kl,converged,grad_norm\n", 0) == 0);

  io::write_trajectories_csv((dir / "t.csv").string(),
                             {{0, 1, 0.5, 0.25, 1.0, -1.0, 0.0, TerminalCause::timeout}});
  CHECK(slurp(dir / "t.csv").find("timeout") != std::string::npos);

  EvalMetrics metrics;
  metrics.goal_histogram = {3, 1};
  metrics.distinct_goals = 2;
  io::write_eval_metrics((dir / "m.json").string(), (dir / "h.csv").string(), metrics);
  CHECK(slurp(dir / "h.csv") == "goal_index,count\n0,3\n1,1\n");
}

TEST_CASE("cli usage errors exit with code 2 and name the problem") {
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("definitely-not-a-subcommand") == 2);
  CHECK(run_cli("fit") == 2);  // neither --manifold nor --samples
  CHECK(run_cli("sample") == 2);  // missing required --checkpoint
  const fs::path dir = fresh_dir("cli_missing");
  CHECK(run_cli("fit --samples " + (dir / "nope.csv").string() + " --order 2") == 2);
  CHECK(run_cli("sample --checkpoint " + (dir / "nope.bin").string()) == 2);
  CHECK(run_cli("navigate --layout " + (dir / "nope.txt").string() + " --steps 256") == 2);
}

TEST_CASE("cli fit on uniform samples reports a near-zero parameter vector") {
  const fs::path dir = fresh_dir("cli_uniform");
  Rng rng(11);
  std::vector<double> actions(2 * 20000);
  for (double& v : actions) v = rng.uniform(-1.0, 1.0);
  std::vector<double> logps(20000, 0.0);
  io::write_samples_csv((dir / "uniform.csv").string(), 2, actions, logps);

  CHECK(run_cli("fit --samples " + (dir / "uniform.csv").string() + " --order 2 --out " +
                (dir / "out").string()) == 0);
  const io::LambdaCheckpoint ck = io::load_lambda_checkpoint((dir / "out/lambda.bin").string());
  for (std::size_t j = 1; j < ck.params.lambda.size(); ++j)
    CHECK(std::fabs(ck.params.lambda[j]) < 0.05);
  CHECK(fs::exists(dir / "out/fit_report.json"));
  CHECK(fs::exists(dir / "out/density.csv"));
  CHECK(fs::exists(dir / "out/density.pgm"));
  CHECK(fs::exists(dir / "out/resolved-config.json"));
}

TEST_CASE("cli sample then fit recovers the source parameters") {
  const fs::path dir = fresh_dir("cli_roundtrip");
  PolyDistribution dist = make_dist(2, 2, 64);
  std::vector<double> raw(dist.num_features(), 0.0);
  raw[1] = 0.6;
  raw[3] = -1.1;
  raw[5] = 0.4;
  const NaturalParams truth = clip_params(raw);
  io::save_lambda_checkpoint((dir / "truth.bin").string(), truth, 2, 2, BasisKind::legendre);

  CHECK(run_cli("sample --checkpoint " + (dir / "truth.bin").string() +
                " -n 100000 --seed 21 --out " + (dir / "draws").string()) == 0);
  CHECK(run_cli("fit --samples " + (dir / "draws/samples.csv").string() +
                " --order 2 --grad-tol 1e-5 --out " + (dir / "refit").string()) == 0);
  const io::LambdaCheckpoint ck =
      io::load_lambda_checkpoint((dir / "refit/lambda.bin").string());
  for (std::size_t j = 1; j < truth.lambda.size(); ++j)
    CHECK(std::fabs(ck.params.lambda[j] - truth.lambda[j]) < 0.05);
}

TEST_CASE("cli order sweep writes one convergence row per order") {
  const fs::path dir = fresh_dir("cli_sweep");
  CHECK(run_cli("fit --manifold lemniscate --orders 1,2 --sigma 0.25 --alpha 0.2 "
                "--grad-tol 1e-2 --grid-size 32 --out " +
                (dir / "out").string()) == 0);
  std::ifstream in(dir / "out/convergence.csv");
  REQUIRE(static_cast<bool>(in));
  std::string line;
  std::getline(in, line);
  CHECK(line == "order,l1,kl,converged,grad_norm");
  int rows = 0;
  while (std::getline(in, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 2);
  CHECK(fs::exists(dir / "out/lambda.bin"));
}

TEST_CASE("cli navigate honors a config file with flag overrides") {
  const fs::path dir = fresh_dir("cli_navcfg");
  io::write_text_file((dir / "train.cfg").string(),
                      "total_steps = 999999\n"  // overridden by --steps below
                      "n_steps = 128\n"
                      "minibatch = 64\n"
                      "epochs = 1\n"
                      "hidden = 8 8\n"
                      "order = 2\n"
                      "grid_size = 16\n"
                      "eval_episodes = 5\n");
  CHECK(run_cli("navigate --layout two_goals --config " + (dir / "train.cfg").string() +
                " --steps 256 --seed 4 --out " + (dir / "out").string()) == 0);
  const std::string resolved = slurp(dir / "out/resolved-config.json");
  CHECK(resolved.find("\"total_steps\": 256") != std::string::npos);  // flag wins
  CHECK(resolved.find("\"n_steps\": 128") != std::string::npos);
  CHECK(resolved.find("\"order\": 2") != std::string::npos);
  CHECK(fs::exists(dir / "out/policy.bin"));
  CHECK(fs::exists(dir / "out/value.bin"));
  CHECK(fs::exists(dir / "out/training_log.csv"));
  CHECK(fs::exists(dir / "out/trajectories.csv"));
  CHECK(fs::exists(dir / "out/terminal_histogram.csv"));

  io::write_text_file((dir / "bad.cfg").string(), "mystery_key = 3\n");
  CHECK(run_cli("navigate --layout two_goals --config " + (dir / "bad.cfg").string() +
                " --out " + (dir / "out2").string()) == 2);
}

TEST_CASE("cli density of the uniform checkpoint renders a constant image") {
  const fs::path dir = fresh_dir("cli_flat");
  PolyDistribution dist = make_dist(2, 2, 64);
  const NaturalParams uniform = clip_params(std::vector<double>(dist.num_features(), 0.0));
  io::save_lambda_checkpoint((dir / "flat.bin").string(), uniform, 2, 2, BasisKind::legendre);
  CHECK(run_cli("density --checkpoint " + (dir / "flat.bin").string() + " --grid-size 32 --out " +
                (dir / "out").string()) == 0);
  const std::string bytes = slurp(dir / "out/density.pgm");
  const std::string payload = bytes.substr(bytes.find("255\n") + 4);
  REQUIRE(payload.size() == 32 * 32);
  for (char c : payload) CHECK(static_cast<unsigned char>(c) == 255);
}
