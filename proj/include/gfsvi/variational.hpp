#pragma once

#include "gfsvi/network.hpp"

namespace gfsvi {

double softplus(double x);
double inverse_softplus(double y);
double sigmoid(double x);

/// Mean-field Gaussian q(w) = N(mean, diag(scale^2)) with
/// scale = softplus(raw_scale).
struct VariationalPosterior {
  WeightVector mean;
  Vector raw_scale;

  Eigen::Index size() const { return mean.size(); }
  Vector scale() const;
  Vector variance() const;
  /// d scale / d raw_scale
  Vector scale_derivative() const;

  /// Glorot mean; scale 1e-3 times each layer's Glorot limit.
  static VariationalPosterior initialize(const Architecture& arch, Rng& rng);
  /// Every coordinate gets the same scale.
  static VariationalPosterior with_scale(const WeightVector& mean, double scale);
};

/// Zero-mean isotropic Gaussian prior over weights.
struct WeightPrior {
  double scale = 1.0;
};

/// Reparameterized draws mean + scale * noise; `noise` is p x count.
Matrix sample_weights(const VariationalPosterior& q, const Matrix& noise);
Matrix sample_weights(const VariationalPosterior& q, Rng& rng, Eigen::Index count);

struct WeightKlGradient {
  Vector mean;
  Vector raw_scale;
};

/// Closed-form KL(q || N(0, prior.scale^2 I)).
double weight_kl(const VariationalPosterior& q, const WeightPrior& prior,
                 WeightKlGradient* grad = nullptr);

inline GaussianMarginal pushforward_marginal(const Architecture& arch,
                                             const VariationalPosterior& q, const Matrix& xs) {
  return pushforward_marginal(arch, q.mean, q.variance(), xs);
}

}  // namespace gfsvi
