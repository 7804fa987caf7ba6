#pragma once

#include "gfsvi/kernels.hpp"
#include "gfsvi/numerics.hpp"
#include "gfsvi/random.hpp"

namespace gfsvi {

/// Exact GP regression posterior; observation noise is
/// prior.observation_noise.
struct GPPosterior {
  PriorSpec prior;
  Matrix train_x;
  Vector train_y;
  CholeskyFactor chol;  // of K(X, X) + noise^2 I
  Vector alpha;         // (K + noise^2 I)^-1 (y - mean)
};

/// Largest training set accepted by the dense solver.
inline constexpr Eigen::Index kMaxExactGpRows = 2000;

GPPosterior gp_fit(const PriorSpec& prior, const Matrix& xs, const Vector& ys);

/// Fits the prior hyperparameters by mini-batch marginal likelihood first.
GPPosterior gp_fit(const PriorSpec& prior, const Matrix& xs, const Vector& ys,
                   const PriorFitConfig& fit, Rng& rng);

/// Latent-function posterior at `xs` (no observation noise added).
GaussianMarginal gp_predict(const GPPosterior& post, const Matrix& xs);

double gp_log_marginal(const PriorSpec& prior, const Matrix& xs, const Vector& ys);

}  // namespace gfsvi
