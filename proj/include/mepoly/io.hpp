#pragma once

#include <string>
#include <vector>

#include "mepoly/distribution.hpp"
#include "mepoly/maxent_fit.hpp"
#include "mepoly/rl_trainer.hpp"

namespace mepoly::io {

// Data CSVs carry a header row, dot decimals, %.17g values, and a trailing
// newline; identical inputs produce byte-identical files.

void write_text_file(const std::string& path, const std::string& content);

/// (point, density) rows over the full grid; 1D or 2D only.
void write_density_csv(const std::string& path, const PolyDistribution& dist,
                       const NaturalParams& params);

/// Binary portable graymap (P5) of the 2D density, grid_size x grid_size,
/// normalized so the peak density maps to 255.
void write_density_pgm(const std::string& path, const PolyDistribution& dist,
                       const NaturalParams& params);

void write_samples_csv(const std::string& path, int dim, const std::vector<double>& actions,
                       const std::vector<double>& log_probs);

/// Reads sample coordinates from a CSV written by write_samples_csv (or any
/// headered CSV whose action columns are named a0, a1, ...).
std::vector<double> read_samples_csv(const std::string& path, int& dim);

// Natural-parameter checkpoint: little-endian header {magic, version, dim,
// order, basis kind, feature count, clip}, then the lambda payload.
struct LambdaCheckpoint {
  int dim = 0;
  int order = 0;
  BasisKind kind = BasisKind::legendre;
  NaturalParams params;
};

void save_lambda_checkpoint(const std::string& path, const NaturalParams& params, int dim,
                            int order, BasisKind kind);
LambdaCheckpoint load_lambda_checkpoint(const std::string& path);

void write_fit_report_json(const std::string& path, const FitReport& report);
void write_sweep_csv(const std::string& path, const std::vector<SweepRow>& rows);
void write_ppo_log_csv(const std::string& path, const std::vector<PpoIterationLog>& logs);
void write_bandit_log_csv(const std::string& path, const std::vector<BanditLog>& logs);
void write_trajectories_csv(const std::string& path, const std::vector<TrajectoryRow>& rows);
void write_eval_metrics(const std::string& metrics_json_path,
                        const std::string& histogram_csv_path, const EvalMetrics& metrics);

const char* terminal_cause_name(TerminalCause cause);

}  // namespace mepoly::io
