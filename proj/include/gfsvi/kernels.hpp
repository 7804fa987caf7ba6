#pragma once

#include <string>
#include <vector>

#include "gfsvi/adam.hpp"
#include "gfsvi/numerics.hpp"

namespace gfsvi {

enum class KernelFamily { RBF, Matern12, Matern32, Matern52, RationalQuadratic, Linear, Periodic };

std::string to_string(KernelFamily family);
KernelFamily kernel_family_from_string(const std::string& name);

/// Covariance function description. A single lengthscale entry means an
/// isotropic kernel; otherwise one entry per input dimension.
struct KernelSpec {
  KernelFamily family = KernelFamily::RBF;
  double amplitude = 1.0;
  Vector lengthscale = Vector::Ones(1);
  double alpha = 1.0;   // rational quadratic mixture
  double period = 1.0;  // periodic

  bool stationary() const { return family != KernelFamily::Linear; }
  void validate(Eigen::Index input_dim) const;
};

/// GP prior: constant mean, kernel, and the observation noise used only for
/// marginal-likelihood fitting and the exact GP.
struct PriorSpec {
  double mean = 0.0;
  KernelSpec kernel;
  double observation_noise = 0.1;

  void validate(Eigen::Index input_dim) const;
};

double kernel_eval(const KernelSpec& spec, const Vector& x1, const Vector& x2);

/// Rows of `xs` and `ys` are points.
Matrix gram(const KernelSpec& spec, const Matrix& xs, const Matrix& ys);
inline Matrix gram(const KernelSpec& spec, const Matrix& xs) { return gram(spec, xs, xs); }

/// Log-space hyperparameters: [log amplitude, log lengthscale..., (log alpha),
/// (log period), log noise].
Vector pack_log_params(const PriorSpec& prior);
PriorSpec unpack_log_params(const PriorSpec& layout, const Vector& log_params);

/// Derivatives of gram(xs, xs) + noise^2 I with respect to each packed
/// log-parameter, in pack order.
std::vector<Matrix> gram_log_param_gradients(const PriorSpec& prior, const Matrix& xs);

/// Log marginal likelihood of `ys` under the prior plus observation noise,
/// optionally with its gradient with respect to the packed log-parameters.
double log_marginal_likelihood(const PriorSpec& prior, const Matrix& xs, const Vector& ys,
                               Vector* log_param_grad = nullptr);

struct PriorFitConfig {
  Eigen::Index batch_size = 256;
  int steps = 2000;
  double learning_rate = 1e-2;
};

/// Ascends the mini-batch log marginal likelihood with Adam on log-parameters.
PriorSpec fit_prior_minibatch(const PriorSpec& prior, const Matrix& xs, const Vector& ys,
                              const PriorFitConfig& config, Rng& rng);

}  // namespace gfsvi
