#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gfsvi/config.hpp"
#include "gfsvi/eval.hpp"

namespace gfsvi {

/// A trained model as stored in checkpoint.json.
struct Checkpoint {
  Method method = Method::GFSVI;
  Architecture arch;
  VariationalPosterior q;
  LikelihoodParams likelihood;
  PriorSpec function_prior;
  WeightPrior weight_prior;
  std::optional<Standardization> standardization;
  std::vector<std::string> feature_names;
  std::vector<bool> one_hot;
  Matrix train_x;  // gp only, standardized units
  Vector train_y;
  long best_step = 0;
};

Json to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const Json& j);
Checkpoint load_checkpoint(const std::string& path);

/// Predictive at inputs already in the model's (standardized) units.
PredictiveSummary predict(const Checkpoint& checkpoint, const Matrix& xs, Rng& rng);
/// Single-output function draws (n x count) in model units.
Matrix function_samples(const Checkpoint& checkpoint, const Matrix& xs, Rng& rng,
                        Eigen::Index count);

/// The full dataset named by a config (training draw for generators).
Dataset load_dataset(const ExperimentConfig& config);
/// Held-out data: a fresh draw for generators, the whole file for CSVs.
Dataset load_test_dataset(const ExperimentConfig& config);

struct FitOutcome {
  Checkpoint checkpoint;
  std::vector<TraceRow> trace;
  ExperimentConfig resolved;  // defaults that depend on data filled in
};

/// Standardizes (if configured), fits the prior (if configured) and trains.
FitOutcome fit_model(const ExperimentConfig& config, const Dataset& train_raw,
                     const Dataset& val_raw, std::uint64_t seed);

/// Metrics of one checkpoint on raw (unstandardized) data.
Json evaluate(const Checkpoint& checkpoint, const Dataset& test_raw, const std::string& protocol,
              std::uint64_t seed, const std::optional<GaussianMarginal>& reference = std::nullopt,
              const std::optional<Matrix>& grid = std::nullopt);

/// Mean and standard error (sample std / sqrt(n)) of each metric across
/// entries of `per_fold`, which hold a "metrics" object.
Json aggregate(const Json& per_fold);

/// "lo:hi:n" per dimension, comma separated; rows in row-major raster order
/// (last dimension fastest).
Matrix parse_grid(const std::string& spec);

std::string format_double(double v);
void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

/// Entry point of the command-line tool; returns the process exit code:
/// 0 success, 2 configuration or input error, 3 numerical failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gfsvi
