#pragma once

#include <Eigen/Dense>

#include "gfsvi/random.hpp"

namespace gfsvi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Finite-dimensional Gaussian: a GP measure restricted to a set of points.
struct GaussianMarginal {
  Vector mean;
  Matrix cov;

  Eigen::Index dim() const { return mean.size(); }
  Vector stddev() const { return cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }
};

struct CholeskyFactor {
  Matrix lower;
  double jitter_applied = 0.0;

  Eigen::Index dim() const { return lower.rows(); }
};

/// Lower Cholesky factor of a symmetric matrix.
///
/// The first attempt adds `base_jitter` to the diagonal. On failure the
/// jitter is escalated by a factor of ten per retry, starting from
/// `base_jitter` (or 1e-12 times the mean diagonal when `base_jitter` is
/// zero), and the last attempt uses the cap 1e-2 times the mean diagonal.
/// This is the only jitter recovery in the library.
CholeskyFactor cholesky(const Matrix& a, double base_jitter = 0.0);

Matrix solve_with_factor(const CholeskyFactor& factor, const Matrix& b);
Vector solve_with_factor(const CholeskyFactor& factor, const Vector& b);

/// (L L^T)^{-1}, symmetrized.
Matrix inverse_from_factor(const CholeskyFactor& factor);

/// 2 * sum(log(diag(L))).
double log_det_from_factor(const CholeskyFactor& factor);

/// KL(N(m1, c1) || N(m2, c2)) in closed form.
double mvn_kl(const Vector& m1, const Matrix& c1, const Vector& m2, const Matrix& c2,
              double base_jitter = 0.0);

/// Draws `count` samples as the columns of a dim x count matrix.
///
/// Positive semidefinite covariances are handled exactly through a pivoted
/// LDL^T factorization when plain Cholesky fails.
Matrix mvn_sample(const Vector& mean, const Matrix& cov, Rng& rng, Eigen::Index count);

/// Wasserstein-2 distance between two univariate Gaussians.
double gauss_w2_1d(double mu1, double sigma1, double mu2, double sigma2);

/// Throws ShapeMismatch unless `rows x cols` matches.
void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* what);

}  // namespace gfsvi
