#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gfsvi/kernels.hpp"
#include "gfsvi/objective.hpp"
#include "gfsvi/random.hpp"
#include "gfsvi/variational.hpp"

namespace gfsvi {

enum class LossKind { GFSVI, MFVI, TFSVI };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

/// Uniform distribution over an axis-aligned box.
struct MeasurementSampler {
  Vector lower;
  Vector upper;
  Eigen::Index count = 100;

  void validate() const;

  /// Per-dimension [min - 0.5 range, max + 0.5 range] of the rows of `xs`.
  static MeasurementSampler inflated_box(const Matrix& xs, Eigen::Index count);
};

Matrix sample_measurement_points(const MeasurementSampler& sampler, Rng& rng);

struct TrainerConfig {
  Eigen::Index batch_size = 32;
  int steps = 3000;
  double learning_rate = 1e-3;
  int val_every = 50;
  int patience = 10;  // validation checks without improvement
  bool learn_noise = true;
  int mfvi_samples = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Everything the objective needs besides data.
struct Model {
  Architecture arch;
  VariationalPosterior q;
  PriorSpec function_prior;  // GFSVI
  WeightPrior weight_prior;  // MFVI, TFSVI
  LikelihoodParams likelihood;
};

struct TraceRow {
  long step;
  double train_loss;  // mean per-datum objective since the previous row
  double val_loss;    // negative mean expected log-likelihood
};

struct TrainResult {
  Model model;  // checkpoint with the lowest validation loss
  std::vector<TraceRow> trace;
  std::vector<double> step_losses;  // per-datum objective of every step
  long best_step = 0;
  bool stopped_early = false;
};

Batch select_rows(const Batch& data, const std::vector<Eigen::Index>& rows);

/// Negative mean expected log-likelihood of `data` under the model's
/// predictive; Monte Carlo terms use fixed noise drawn from `seed`.
double validation_loss(const Model& model, LossKind kind, const Batch& data, std::uint64_t seed);

/// Mini-batch optimization with fresh measurement points every step and
/// early stopping on the validation loss. An empty validation split falls
/// back to the training data.
TrainResult train(const Model& initial, const Batch& train_split, const Batch& val_split,
                  const TrainerConfig& config, const MeasurementSampler& sampler,
                  const RegKLConfig& reg_kl, LossKind kind);

}  // namespace gfsvi
