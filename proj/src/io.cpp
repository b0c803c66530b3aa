#include "mepoly/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace mepoly::io {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

void write_text_file(const std::string& path, const std::string& content) {
  auto out = open_out(path);
  out << content;
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void write_density_csv(const std::string& path, const PolyDistribution& dist,
                       const NaturalParams& params) {
  const int d = dist.dim();
  if (d > 2) throw std::invalid_argument("write_density_csv: only 1D/2D grids are exportable");
  const GridPosterior post = dist.posterior(params);
  auto out = open_out(path);
  out << (d == 1 ? "x,density\n" : "x,y,density\n");
  for (std::size_t i = 0; i < dist.grid().size(); ++i) {
    const auto pt = dist.grid().point(i);
    const double density = std::exp(post.logits[i] - post.log_z);
    for (int k = 0; k < d; ++k) out << fmt(pt[static_cast<std::size_t>(k)]) << ',';
    out << fmt(density) << '\n';
  }
}

void write_density_pgm(const std::string& path, const PolyDistribution& dist,
                       const NaturalParams& params) {
  if (dist.dim() != 2) throw std::invalid_argument("write_density_pgm: 2D density only");
  if (dist.grid().kind != ProductGrid::Kind::full)
    throw std::invalid_argument("write_density_pgm: full grid required");
  const int n = dist.grid().nodes_per_dim;
  const GridPosterior post = dist.posterior(params);
  double max_logit = post.logits[0];
  for (double l : post.logits) max_logit = std::max(max_logit, l);

  auto out = open_out(path, std::ios::binary);
  out << "P5\n" << n << ' ' << n << "\n255\n";
  // Grid points are row-major in (x, y); render x as columns and y as rows,
  // with y decreasing down the image.
  std::vector<unsigned char> image(static_cast<std::size_t>(n) * n);
  for (int ix = 0; ix < n; ++ix) {
    for (int iy = 0; iy < n; ++iy) {
      const std::size_t point_index = static_cast<std::size_t>(ix) * n + iy;
      const double rel = std::exp(post.logits[point_index] - max_logit);
      const int row = n - 1 - iy;
      image[static_cast<std::size_t>(row) * n + ix] =
          static_cast<unsigned char>(std::lround(rel * 255.0));
    }
  }
  out.write(reinterpret_cast<const char*>(image.data()),
            static_cast<std::streamsize>(image.size()));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

void write_samples_csv(const std::string& path, int dim, const std::vector<double>& actions,
                       const std::vector<double>& log_probs) {
  auto out = open_out(path);
  for (int k = 0; k < dim; ++k) out << 'a' << k << ',';
  out << "log_prob\n";
  const std::size_t n = log_probs.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < dim; ++k)
      out << fmt(actions[i * static_cast<std::size_t>(dim) + static_cast<std::size_t>(k)]) << ',';
    out << fmt(log_probs[i]) << '\n';
  }
}

std::vector<double> read_samples_csv(const std::string& path, int& dim) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string line;
  std::vector<double> values;
  dim = 0;
  int action_cols = 0;
  bool first = true;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (first) {
      first = false;
      // Header: count a0, a1, ... columns. Headerless files are all-action.
      bool header = false;
      for (const std::string& c : cells)
        if (!c.empty() && (std::isalpha(static_cast<unsigned char>(c[0])) || c[0] == '_'))
          header = true;
      if (header) {
        for (const std::string& c : cells)
          if (c.size() >= 2 && c[0] == 'a' && std::isdigit(static_cast<unsigned char>(c[1])))
            ++action_cols;
        if (action_cols == 0)
          throw std::runtime_error(path + ": header has no a0..aN action columns");
        dim = action_cols;
        continue;
      }
      dim = action_cols = static_cast<int>(cells.size());
    }
    if (static_cast<int>(cells.size()) < action_cols)
      throw std::runtime_error(path + ":" + std::to_string(line_no) + ": too few columns");
    for (int k = 0; k < action_cols; ++k) {
      try {
        values.push_back(std::stod(cells[static_cast<std::size_t>(k)]));
      } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) + ": bad number '" +
                                 cells[static_cast<std::size_t>(k)] + "'");
      }
    }
  }
  if (values.empty()) throw std::runtime_error(path + ": no samples found");
  return values;
}

namespace {

constexpr char kLambdaMagic[4] = {'M', 'E', 'P', 'L'};
constexpr std::uint32_t kLambdaVersion = 1;

}  // namespace

void save_lambda_checkpoint(const std::string& path, const NaturalParams& params, int dim,
                            int order, BasisKind kind) {
  auto out = open_out(path, std::ios::binary);
  out.write(kLambdaMagic, sizeof(kLambdaMagic));
  auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  put_u32(kLambdaVersion);
  put_u32(static_cast<std::uint32_t>(dim));
  put_u32(static_cast<std::uint32_t>(order));
  put_u32(kind == BasisKind::legendre ? 0u : 1u);
  put_u32(static_cast<std::uint32_t>(params.lambda.size()));
  out.write(reinterpret_cast<const char*>(&params.clip), sizeof(double));
  out.write(reinterpret_cast<const char*>(params.lambda.data()),
            static_cast<std::streamsize>(params.lambda.size() * sizeof(double)));
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

LambdaCheckpoint load_lambda_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  char magic[4];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kLambdaMagic, sizeof(kLambdaMagic)) != 0)
    throw std::runtime_error(path + ": bad magic bytes");
  auto get_u32 = [&]() {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw std::runtime_error(path + ": truncated file");
    return v;
  };
  if (get_u32() != kLambdaVersion) throw std::runtime_error(path + ": unsupported version");
  LambdaCheckpoint ck;
  ck.dim = static_cast<int>(get_u32());
  ck.order = static_cast<int>(get_u32());
  ck.kind = get_u32() == 0 ? BasisKind::legendre : BasisKind::monomial;
  const std::uint32_t m = get_u32();
  in.read(reinterpret_cast<char*>(&ck.params.clip), sizeof(double));
  ck.params.lambda.resize(m);
  in.read(reinterpret_cast<char*>(ck.params.lambda.data()),
          static_cast<std::streamsize>(m * sizeof(double)));
  if (!in) throw std::runtime_error(path + ": truncated payload");
  if (feature_count(ck.dim, ck.order) != m)
    throw std::runtime_error(path + ": feature count does not match dim/order");
  return ck;
}

void write_fit_report_json(const std::string& path, const FitReport& report) {
  nlohmann::json j;
  j["iterations"] = report.iterations;
  j["converged"] = report.converged;
  j["final_nll"] = report.final_nll;
  j["final_entropy"] = report.final_entropy;
  j["grad_norm"] = report.grad_norm;
  j["objective_trace"] = report.objective_trace;
  j["final_moments"] = report.final_moments;
  if (!report.message.empty()) j["message"] = report.message;
  write_text_file(path, j.dump(2) + "\n");
}

void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows) {
  auto out = open_out(path);
  out << "order,l1,kl,converged,grad_norm\n";
  for (const SweepRow& r : rows)
    out << r.order << ',' << fmt(r.l1) << ',' << fmt(r.kl) << ',' << (r.converged ? 1 : 0) << ','
        << fmt(r.grad_norm) << '\n';
}

void write_ppo_log_csv(const std::string& path, const std::vector<PpoIterationLog>& logs) {
  auto out = open_out(path);
  out << "iteration,env_steps,mean_return,success_rate,entropy,value_loss\n";
  for (const PpoIterationLog& l : logs)
    out << l.iteration << ',' << l.env_steps << ',' << fmt(l.mean_return) << ','
        << fmt(l.success_rate) << ',' << fmt(l.entropy) << ',' << fmt(l.value_loss) << '\n';
}

void write_bandit_log_csv(const std::string& path, const std::vector<BanditLog>& logs) {
  auto out = open_out(path);
  out << "step,kl_to_target,entropy,mean_reward\n";
  for (const BanditLog& l : logs)
    out << l.step << ',' << fmt(l.kl_to_target) << ',' << fmt(l.entropy) << ','
        << fmt(l.mean_reward) << '\n';
}

const char* terminal_cause_name(TerminalCause cause) {
  switch (cause) {
    case TerminalCause::goal: return "goal";
    case TerminalCause::death: return "death";
    case TerminalCause::timeout: return "timeout";
    case TerminalCause::none: break;
  }
  return "none";
}

void write_trajectories_csv(const std::string& path, const std::vector<TrajectoryRow>& rows) {
  auto out = open_out(path);
  out << "episode,t,x,y,vx,vy,reward,cause\n";
  for (const TrajectoryRow& r : rows)
    out << r.episode << ',' << r.t << ',' << fmt(r.x) << ',' << fmt(r.y) << ',' << fmt(r.vx)
        << ',' << fmt(r.vy) << ',' << fmt(r.reward) << ',' << terminal_cause_name(r.cause)
        << '\n';
}

void write_eval_metrics(const std::string& metrics_json_path,
                        const std::string& histogram_csv_path, const EvalMetrics& metrics) {
  nlohmann::json j;
  j["mean_return"] = metrics.mean_return;
  j["success_rate"] = metrics.success_rate;
  j["timeout_fraction"] = metrics.timeout_fraction;
  j["goal_histogram"] = metrics.goal_histogram;
  j["distinct_goals"] = metrics.distinct_goals;
  nlohmann::json clusters = nlohmann::json::array();
  for (const TerminalCluster& c : metrics.terminal_clusters)
    clusters.push_back({{"x", c.x}, {"y", c.y}, {"count", c.count}});
  j["terminal_clusters"] = clusters;
  write_text_file(metrics_json_path, j.dump(2) + "\n");

  auto out = open_out(histogram_csv_path);
  out << "goal_index,count\n";
  for (std::size_t g = 0; g < metrics.goal_histogram.size(); ++g)
    out << g << ',' << metrics.goal_histogram[g] << '\n';
}

}  // namespace mepoly::io
