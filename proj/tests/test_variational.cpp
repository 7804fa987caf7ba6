#include <gtest/gtest.h>

#include <cmath>

#include "gfsvi/variational.hpp"
#include "test_util.hpp"

using namespace gfsvi;
using testing_util::max_relative_error;
using testing_util::numeric_gradient;

namespace {

VariationalPosterior posterior(const Vector& mean, const Vector& scale) {
  VariationalPosterior q;
  q.mean = mean;
  q.raw_scale = scale.unaryExpr([](double s) { return inverse_softplus(s); });
  return q;
}

}  // namespace

TEST(Softplus, InverseRoundTrip) {
  for (double y : {1e-8, 1e-3, 0.5, 1.0, 20.0, 800.0}) EXPECT_NEAR(softplus(inverse_softplus(y)) / y, 1.0, 1e-12);
  EXPECT_GT(softplus(-800.0), -1e-300);
  EXPECT_NEAR(sigmoid(0.0), 0.5, 1e-15);
}

TEST(SampleWeights, CollapsedScaleGivesMean) {
  VariationalPosterior q;
  q.mean = Vector::LinSpaced(4, -1, 1);
  q.raw_scale = Vector::Constant(4, -800.0);
  Rng rng(1);
  const Matrix draws = sample_weights(q, rng, 3);
  for (Eigen::Index c = 0; c < 3; ++c) EXPECT_LE((draws.col(c) - q.mean).cwiseAbs().maxCoeff(), 1e-300);
}

TEST(SampleWeights, VarianceMatches) {
  Vector scale(5);
  scale << 0.1, 0.5, 1.0, 2.0, 3.0;
  const VariationalPosterior q = posterior(Vector::Constant(5, 0.7), scale);
  Rng rng(2);
  const Matrix draws = sample_weights(q, rng, 100000);
  for (Eigen::Index i = 0; i < 5; ++i) {
    const double mean = draws.row(i).mean();
    const double var = (draws.row(i).array() - mean).square().mean();
    EXPECT_NEAR(var / (scale[i] * scale[i]), 1.0, 0.05);
  }
}

TEST(SampleWeights, SeedDeterminismAndReparameterization) {
  const VariationalPosterior q = posterior(Vector::Constant(3, 1.0), Vector::Constant(3, 0.5));
  Rng a(3);
  Rng b(3);
  EXPECT_EQ(sample_weights(q, a, 4), sample_weights(q, b, 4));
  const Matrix noise = Matrix::Ones(3, 2);
  EXPECT_LE((sample_weights(q, noise).array() - 1.5).abs().maxCoeff(), 1e-14);
}

TEST(WeightKl, Examples) {
  const WeightPrior prior{1.0};
  EXPECT_NEAR(weight_kl(posterior(Vector::Zero(4), Vector::Ones(4)), prior), 0.0, 1e-12);
  EXPECT_NEAR(weight_kl(posterior(Vector::Ones(1), Vector::Ones(1)), prior), 0.5, 1e-12);
  EXPECT_NEAR(weight_kl(posterior(Vector::Zero(1), Vector::Constant(1, 2.0)), prior), 2.0 - 0.5 - std::log(2.0),
              1e-12);
  EXPECT_NEAR(weight_kl(posterior(Vector::Zero(3), Vector::Constant(3, 0.2)), WeightPrior{0.2}), 0.0, 1e-10);
}

TEST(WeightKl, NonNegativeOnRandomPosteriors) {
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const Vector m = testing_util::random_vector(rng, 6);
    const Vector s = testing_util::random_vector(rng, 6).cwiseAbs().array() + 0.01;
    EXPECT_GE(weight_kl(posterior(m, s), WeightPrior{0.3 + 0.1 * t}), 0.0);
  }
}

TEST(WeightKl, AgreesWithMonteCarlo) {
  Vector m(3);
  m << 0.5, -1.0, 0.2;
  Vector s(3);
  s << 0.3, 1.5, 0.8;
  const VariationalPosterior q = posterior(m, s);
  const double sp = 0.9;
  Rng rng(5);
  const Matrix draws = sample_weights(q, rng, 100000);
  Vector terms(draws.cols());
  for (Eigen::Index c = 0; c < draws.cols(); ++c) {
    double log_ratio = 0.0;
    for (Eigen::Index i = 0; i < 3; ++i) {
      const double w = draws(i, c);
      const double zq = (w - m[i]) / s[i];
      const double zp = w / sp;
      log_ratio += -0.5 * zq * zq - std::log(s[i]) + 0.5 * zp * zp + std::log(sp);
    }
    terms[c] = log_ratio;
  }
  const double mean = terms.mean();
  const double se = std::sqrt((terms.array() - mean).square().sum() / (terms.size() - 1) / terms.size());
  EXPECT_NEAR(weight_kl(q, WeightPrior{sp}), mean, 3.0 * se);
}

TEST(WeightKl, GradientMatchesFiniteDifferences) {
  Rng rng(6);
  VariationalPosterior q;
  q.mean = testing_util::random_vector(rng, 5);
  q.raw_scale = testing_util::random_vector(rng, 5);
  const WeightPrior prior{0.7};
  WeightKlGradient grad;
  weight_kl(q, prior, &grad);
  const Vector fd_mean = numeric_gradient(
      [&](const Vector& v) {
        VariationalPosterior p = q;
        p.mean = v;
        return weight_kl(p, prior);
      },
      q.mean);
  const Vector fd_raw = numeric_gradient(
      [&](const Vector& v) {
        VariationalPosterior p = q;
        p.raw_scale = v;
        return weight_kl(p, prior);
      },
      q.raw_scale);
  EXPECT_LE(max_relative_error(grad.mean, fd_mean), 1e-6);
  EXPECT_LE(max_relative_error(grad.raw_scale, fd_raw), 1e-6);
}

TEST(Initialize, SmallScaleAndGlorotMean) {
  Architecture arch;
  arch.hidden = {30, 30};
  Rng rng(7);
  const VariationalPosterior q = VariationalPosterior::initialize(arch, rng);
  EXPECT_EQ(q.size(), arch.num_weights());
  const double limit = std::sqrt(6.0 / 31.0);
  EXPECT_LE(q.scale().maxCoeff(), 1e-3 * limit * (1 + 1e-9));
  EXPECT_GT(q.scale().minCoeff(), 0.0);
}
