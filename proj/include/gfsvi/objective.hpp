#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gfsvi/kernels.hpp"
#include "gfsvi/variational.hpp"

namespace gfsvi {

/// Regularized KL settings. Both covariances get gamma * M added to their
/// diagonal, M being the number of measurement points.
struct RegKLConfig {
  double gamma = 1e-10;
  double base_jitter = 0.0;
  /// When false, J(x; m) is treated as a constant while differentiating
  /// with respect to m.
  bool differentiate_jacobian = true;
};

enum class LikelihoodKind { Gaussian, Categorical };

std::string to_string(LikelihoodKind kind);
LikelihoodKind likelihood_kind_from_string(const std::string& name);

struct LikelihoodParams {
  LikelihoodKind kind = LikelihoodKind::Gaussian;
  double gaussian_raw_noise = 0.0;  // sigma_y = softplus(raw)
  int mc_samples = 5;               // categorical draws per step

  double noise() const;
};

struct RegKLGradient {
  Vector mean_q;
  Vector mean_p;
  Matrix cov_q;
  Matrix cov_p;
};

/// KL(N(m1, c1 + gamma M I) || N(m2, c2 + gamma M I)). `measurement_count`
/// defaults to the marginal dimension.
double reg_kl_estimate(const GaussianMarginal& q, const GaussianMarginal& p,
                       const RegKLConfig& cfg, Eigen::Index measurement_count = -1,
                       RegKLGradient* grad = nullptr);

// ---------------------------------------------------------------------------
// Infinite-KL probe

using MarginalFamily = std::function<GaussianMarginal(const Matrix& xs)>;

struct ProbeRow {
  Eigen::Index m;
  double naive_kl;
  double reg_kl;
};

/// Evaluates KL estimates between `posterior` and the GP prior on nested
/// prefixes of one uniform draw of max(ms) points in [lower, upper].
///
/// The naive column adds only the fixed absolute jitter `naive_jitter` to both
/// covariances; the regularized column uses gamma_reg * M.
std::vector<ProbeRow> kl_blowup_probe(const MarginalFamily& posterior, const PriorSpec& prior,
                                      const std::vector<Eigen::Index>& ms, double naive_jitter,
                                      double gamma_reg, const Vector& lower, const Vector& upper,
                                      Rng& rng);

/// Rank-limited family: pushforward of a one-hidden-layer ReLU network with
/// random first-layer weights where only the `rank` output weights are
/// uncertain (unit total variance).
MarginalFamily degenerate_relu_family(Eigen::Index input_dim, Eigen::Index rank, Rng& rng);

/// Full-rank family backed by a GP kernel plus a nugget.
MarginalFamily gp_family(const PriorSpec& spec, double nugget);

// ---------------------------------------------------------------------------
// Likelihood terms

/// Sum over points of E[log N(y | f, sigma_y^2)] for f ~ N(mean, var).
double expected_ll_gaussian(const Vector& y, const Vector& mean, const Vector& var,
                            double sigma_y);

/// (1/K) sum_k sum_i log softmax(logits_k)_i[y_i]; each entry of
/// `logit_draws` is batch x classes.
double expected_ll_categorical(const std::vector<int>& labels,
                               const std::vector<Matrix>& logit_draws);

// ---------------------------------------------------------------------------
// Composite objectives (minimized negatives of the maximized objectives)

struct Batch {
  Matrix x;
  Vector y;                 // Gaussian targets
  std::vector<int> labels;  // Categorical labels

  Eigen::Index size() const { return x.rows(); }
};

struct LossGradient {
  Vector mean;
  Vector raw_scale;
  double raw_noise = 0.0;
};

struct LossResult {
  double value = 0.0;
  double expected_ll = 0.0;  // (N/B) times the batch expected log-likelihood
  double divergence = 0.0;
  LossGradient grad;
};

/// GFSVI: -(N/B) E_q[log p(y | f_L)] + regularized KL at the measurement
/// points. `weight_noise` (p x K standard normals) is required for the
/// categorical likelihood.
LossResult gfsvi_loss(const Architecture& arch, const VariationalPosterior& q,
                      const PriorSpec& prior, const Batch& batch, const Matrix& measurement_points,
                      const LikelihoodParams& lik, const RegKLConfig& cfg, double n_total,
                      const Matrix& weight_noise = Matrix(), bool want_grad = true);

/// Weight-space ELBO with the nonlinear network; `weight_noise` is p x K.
LossResult mfvi_loss(const Architecture& arch, const VariationalPosterior& q,
                     const WeightPrior& prior, const Batch& batch, const LikelihoodParams& lik,
                     double n_total, const Matrix& weight_noise, bool want_grad = true);

LossResult mfvi_loss(const Architecture& arch, const VariationalPosterior& q,
                     const WeightPrior& prior, const Batch& batch, const LikelihoodParams& lik,
                     double n_total, Rng& rng, Eigen::Index samples = 1);

/// Function-space objective whose prior is the linearized pushforward of
/// N(0, prior.scale^2 I) at the current mean.
LossResult tfsvi_loss(const Architecture& arch, const VariationalPosterior& q,
                      const WeightPrior& prior, const Batch& batch,
                      const Matrix& measurement_points, const LikelihoodParams& lik,
                      const RegKLConfig& cfg, double n_total,
                      const Matrix& weight_noise = Matrix(), bool want_grad = true);

}  // namespace gfsvi
