#pragma once

#include <vector>

#include "gfsvi/gp.hpp"
#include "gfsvi/objective.hpp"
#include "gfsvi/random.hpp"
#include "gfsvi/variational.hpp"

namespace gfsvi {

/// Predictive distribution at a set of test points.
struct PredictiveSummary {
  Matrix mean;           // n x C, function (regression) or logit mean
  Matrix epistemic_std;  // n x C
  Matrix total_std;      // n x C; adds the observation noise for regression
  Matrix class_probs;    // n x C, classification only
  std::vector<Matrix> logit_draws;  // classification only

  Eigen::Index size() const { return mean.rows(); }
};

inline constexpr int kPredictiveSamples = 100;

/// Linearized network: closed form for regression, sampled logits for
/// classification.
PredictiveSummary predict_linearized(const Architecture& arch, const VariationalPosterior& q,
                                     const LikelihoodParams& lik, const Matrix& xs, Rng& rng,
                                     int samples = kPredictiveSamples);

/// Nonlinear network under sampled weights.
PredictiveSummary predict_sampled(const Architecture& arch, const VariationalPosterior& q,
                                  const LikelihoodParams& lik, const Matrix& xs, Rng& rng,
                                  int samples = kPredictiveSamples);

PredictiveSummary predict_gp(const GPPosterior& post, const Matrix& xs);

/// Function draws (n x count) for a single-output model.
Matrix function_samples_linearized(const Architecture& arch, const VariationalPosterior& q,
                                   const Matrix& xs, Rng& rng, Eigen::Index count);
Matrix function_samples_sampled(const Architecture& arch, const VariationalPosterior& q,
                                const Matrix& xs, Rng& rng, Eigen::Index count);

/// Mean per-point expected log-likelihood of Gaussian targets.
double test_expected_ll(const PredictiveSummary& summary, const Vector& targets, double sigma_y);
/// Mean per-point expected log-likelihood of labels over the logit draws.
double test_expected_ll(const PredictiveSummary& summary, const std::vector<int>& labels);

double mse(const PredictiveSummary& summary, const Vector& targets);
double accuracy(const Matrix& probs, const std::vector<int>& labels);

/// Top-label expected calibration error over equal-width confidence bins.
double ece(const Matrix& probs, const std::vector<int>& labels, int n_bins = 10);

/// Entropy of each row of a probability matrix.
Vector predictive_entropy(const Matrix& probs);

struct StumpResult {
  double threshold;
  double accuracy;
};

/// Best single threshold separating the two sets, calling values above it
/// OOD. Candidates are -inf, midpoints of the sorted pooled values and +inf;
/// ties go to the smaller threshold.
StumpResult ood_stump_accuracy(const Vector& id_uncertainty, const Vector& ood_uncertainty);

/// Mean over points of the 1-D Gaussian W2 distance between epistemic
/// marginals.
double pointwise_w2(const PredictiveSummary& approx, const GaussianMarginal& exact);
double pointwise_w2(const GaussianMarginal& a, const GaussianMarginal& b);

/// Mean squared second difference of the columns of `samples` (grid points
/// in rows, spacing h) divided by h^4.
double roughness(const Matrix& samples, double spacing);

}  // namespace gfsvi
