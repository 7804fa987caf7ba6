#include <gtest/gtest.h>

#include <cmath>

#include "gfsvi/error.hpp"
#include "gfsvi/gp.hpp"
#include "test_util.hpp"

using namespace gfsvi;

namespace {

PriorSpec prior_of(double amplitude, double lengthscale, double noise, double mean = 0.0) {
  PriorSpec p;
  p.mean = mean;
  p.kernel.amplitude = amplitude;
  p.kernel.lengthscale = Vector::Constant(1, lengthscale);
  p.observation_noise = noise;
  return p;
}

/// Textbook conditioning with an explicit inverse.
GaussianMarginal naive_predict(const PriorSpec& p, const Matrix& x, const Vector& y, const Matrix& xt) {
  Matrix k = gram(p.kernel, x);
  k.diagonal().array() += p.observation_noise * p.observation_noise;
  const Matrix kinv = k.inverse();
  const Matrix ks = gram(p.kernel, xt, x);
  const Vector centered = y.array() - p.mean;
  return GaussianMarginal{(ks * kinv * centered).array() + p.mean, gram(p.kernel, xt) - ks * kinv * ks.transpose()};
}

}  // namespace

TEST(GpFit, SinglePointInterpolates) {
  const PriorSpec p = prior_of(1.0, 1.0, 0.0);
  const GPPosterior post = gp_fit(p, Matrix::Constant(1, 1, 0.3), Vector::Constant(1, 1.7));
  const GaussianMarginal m = gp_predict(post, Matrix::Constant(1, 1, 0.3));
  EXPECT_NEAR(m.mean[0], 1.7, 1e-12);
  EXPECT_LE(m.cov(0, 0), 1e-8);
}

TEST(GpPredict, MatchesNaiveInverse) {
  Rng rng(1);
  const PriorSpec p = prior_of(1.2, 0.7, 0.2, 0.4);
  const Matrix x = standard_normal(rng, 5, 1);
  const Vector y = standard_normal(rng, 5, 1);
  const Matrix xt = standard_normal(rng, 3, 1);
  const GPPosterior post = gp_fit(p, x, y);
  const GaussianMarginal got = gp_predict(post, xt);
  const GaussianMarginal want = naive_predict(p, x, y, xt);
  EXPECT_LE((got.mean - want.mean).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_LE((got.cov - want.cov).cwiseAbs().maxCoeff(), 1e-8);
  Matrix k = gram(p.kernel, x);
  k.diagonal().array() += p.observation_noise * p.observation_noise;
  EXPECT_LE((k * post.alpha - (y.array() - p.mean).matrix()).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(GpPredict, VanishingAmplitudeGivesPriorMean) {
  Rng rng(2);
  const PriorSpec p = prior_of(1e-12, 1.0, 0.1, 2.5);
  const Matrix x = standard_normal(rng, 6, 1);
  const GPPosterior post = gp_fit(p, x, standard_normal(rng, 6, 1));
  const GaussianMarginal m = gp_predict(post, standard_normal(rng, 4, 1));
  EXPECT_LE((m.mean.array() - 2.5).abs().maxCoeff(), 1e-12);
}

TEST(GpPredict, FarPointRevertsToPrior) {
  const PriorSpec p = prior_of(1.5, 0.3, 0.1, -0.5);
  Matrix x(3, 1);
  x << -0.2, 0.0, 0.4;
  const GPPosterior post = gp_fit(p, x, Vector::Constant(3, 3.0));
  const GaussianMarginal m = gp_predict(post, Matrix::Constant(1, 1, 0.4 + 20 * 0.3));
  EXPECT_NEAR(m.mean[0], -0.5, 1e-6);
  EXPECT_NEAR(m.cov(0, 0), 1.5 * 1.5, 1e-6);
}

TEST(GpPredict, NoiselessInterpolationAndShrinkage) {
  Rng rng(3);
  const PriorSpec p = prior_of(1.0, 0.5, 0.0);
  const Matrix x = Vector::LinSpaced(6, -1.0, 1.0);
  const Vector y = (3.0 * x.array()).sin();
  const GPPosterior post = gp_fit(p, x, y);
  const GaussianMarginal at_train = gp_predict(post, x);
  EXPECT_LE((at_train.mean - y).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LE(at_train.cov.diagonal().maxCoeff(), 1e-8);

  const Matrix xt = 2.0 * standard_normal(rng, 40, 1);
  const GaussianMarginal m = gp_predict(post, xt);
  const Matrix prior_cov = gram(p.kernel, xt);
  for (Eigen::Index i = 0; i < xt.rows(); ++i) EXPECT_LE(m.cov(i, i), prior_cov(i, i) + 1e-12);
  EXPECT_LE((m.cov - m.cov.transpose()).cwiseAbs().maxCoeff(), 0.0);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m.cov);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8);
}

TEST(GpPredict, SequentialEqualsJointConditioning) {
  Rng rng(4);
  const PriorSpec p = prior_of(1.0, 0.6, 0.3);
  const Matrix x = standard_normal(rng, 6, 1);
  const Vector y = standard_normal(rng, 6, 1);
  const Matrix xt = standard_normal(rng, 3, 1);
  const GaussianMarginal joint = gp_predict(gp_fit(p, x, y), xt);
  // Condition on the first half, then use that posterior as the prior for
  // the second half via the explicit Gaussian update.
  const Matrix all = (Matrix(9, 1) << x, xt).finished();
  const GaussianMarginal stage1 = gp_predict(gp_fit(p, x.topRows(3), y.head(3)), all);
  const Matrix s11 = stage1.cov.block(3, 3, 3, 3) + 0.09 * Matrix::Identity(3, 3);
  const Matrix s21 = stage1.cov.block(6, 3, 3, 3);
  const Vector resid = y.tail(3) - stage1.mean.segment(3, 3);
  const Vector mean = stage1.mean.tail(3) + s21 * s11.inverse() * resid;
  const Matrix cov = stage1.cov.block(6, 6, 3, 3) - s21 * s11.inverse() * s21.transpose();
  EXPECT_LE((mean - joint.mean).cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_LE((cov - joint.cov).cwiseAbs().maxCoeff(), 1e-7);
}

TEST(GpLogMarginal, SinglePointAndDenseOracle) {
  const PriorSpec one = prior_of(1.0, 1.0, 0.0, 0.7);
  EXPECT_NEAR(gp_log_marginal(one, Matrix::Zero(1, 1), Vector::Constant(1, 0.7)), -0.5 * std::log(2 * M_PI), 1e-12);

  Rng rng(5);
  const PriorSpec p = prior_of(0.8, 0.4, 0.25, 0.1);
  const Matrix x = standard_normal(rng, 4, 1);
  const Vector y = standard_normal(rng, 4, 1);
  Matrix k = gram(p.kernel, x);
  k.diagonal().array() += p.observation_noise * p.observation_noise;
  const Vector d = y.array() - p.mean;
  const double dense = -0.5 * d.dot(k.inverse() * d) - 0.5 * std::log(k.determinant()) - 2.0 * std::log(2 * M_PI);
  EXPECT_NEAR(gp_log_marginal(p, x, y), dense, 1e-10);
}

TEST(GpLogMarginal, DuplicatePointsWithNoise) {
  const PriorSpec p = prior_of(1.0, 1.0, 0.1);
  const Matrix x = Matrix::Constant(3, 1, 0.2);
  EXPECT_TRUE(std::isfinite(gp_log_marginal(p, x, Vector::Constant(3, 0.5))));
}

TEST(GpFit, RejectsTooManyRows) {
  const Eigen::Index n = kMaxExactGpRows + 1;
  try {
    gp_fit(prior_of(1.0, 1.0, 0.1), Matrix::Zero(n, 1), Vector::Zero(n));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Infeasible);
  }
}

TEST(GpFit, WithHyperparameterFit) {
  Rng rng(6);
  const Matrix x = standard_normal(rng, 60, 1);
  const Vector y = (2.0 * x.array()).sin().matrix() + 0.05 * standard_normal(rng, 60, 1);
  Rng fit_rng(7);
  PriorFitConfig cfg;
  cfg.steps = 300;
  const GPPosterior post = gp_fit(prior_of(1.0, 1.0, 0.5), x, y, cfg, fit_rng);
  EXPECT_GT(gp_log_marginal(post.prior, x, y), gp_log_marginal(prior_of(1.0, 1.0, 0.5), x, y));
}
