#include <gtest/gtest.h>

#include <cmath>

#include "gfsvi/error.hpp"
#include "gfsvi/eval.hpp"
#include "gfsvi/gp.hpp"
#include "test_util.hpp"

using namespace gfsvi;

namespace {

PredictiveSummary regression_summary(const Vector& mean, const Vector& std) {
  PredictiveSummary s;
  s.mean = mean;
  s.epistemic_std = std;
  s.total_std = std;
  return s;
}

Vector vec(std::initializer_list<double> values) {
  Vector v(static_cast<Eigen::Index>(values.size()));
  Eigen::Index i = 0;
  for (double x : values) v[i++] = x;
  return v;
}

}  // namespace

TEST(TestExpectedLl, PerfectPredictions) {
  const Vector y = vec({0.3, -1.0, 2.0});
  EXPECT_NEAR(test_expected_ll(regression_summary(y, Vector::Zero(3)), y, 1.0), -0.5 * std::log(2 * M_PI), 1e-14);
}

TEST(TestExpectedLl, MonteCarloAgreement) {
  Rng rng(1);
  const Vector mean = testing_util::random_vector(rng, 5);
  const Vector sd = testing_util::random_vector(rng, 5).cwiseAbs();
  const Vector y = testing_util::random_vector(rng, 5);
  const double sigma = 0.6;
  const int n = 100000;
  Vector draws(n);
  for (int k = 0; k < n; ++k) {
    double total = 0.0;
    for (int i = 0; i < 5; ++i) {
      const double f = mean[i] + sd[i] * rng.normal();
      total += -0.5 * std::log(2 * M_PI * sigma * sigma) - (y[i] - f) * (y[i] - f) / (2 * sigma * sigma);
    }
    draws[k] = total / 5.0;
  }
  const double mc = draws.mean();
  const double se = std::sqrt((draws.array() - mc).square().sum() / (n - 1) / n);
  EXPECT_NEAR(test_expected_ll(regression_summary(mean, sd), y, sigma), mc, 3 * se);
}

TEST(TestExpectedLl, OptimalNoiseByScan) {
  Rng rng(2);
  const Vector mean = testing_util::random_vector(rng, 30);
  const Vector sd = 0.3 * testing_util::random_vector(rng, 30).cwiseAbs();
  const Vector y = testing_util::random_vector(rng, 30);
  const PredictiveSummary s = regression_summary(mean, sd);
  const double optimum = std::sqrt((y - mean).squaredNorm() / 30.0 + sd.squaredNorm() / 30.0);
  double best_sigma = 0.0;
  double best = -1e300;
  double prev = -1e300;
  bool decreasing_after = true;
  for (int i = 1; i <= 4000; ++i) {
    const double sigma = 1e-3 * i;
    const double v = test_expected_ll(s, y, sigma);
    if (v > best) {
      best = v;
      best_sigma = sigma;
    }
    if (sigma > optimum + 1e-3 && v >= prev) decreasing_after = false;
    prev = v;
  }
  EXPECT_NEAR(best_sigma, optimum, 1e-3);
  EXPECT_TRUE(decreasing_after);
}

TEST(TestExpectedLl, ShapeMismatch) {
  try {
    test_expected_ll(regression_summary(Vector::Zero(3), Vector::Zero(3)), Vector::Zero(2), 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
  }
}

TEST(TestExpectedLl, CategoricalUsesDraws) {
  PredictiveSummary s;
  s.logit_draws = {Matrix::Zero(2, 3), Matrix::Zero(2, 3)};
  EXPECT_NEAR(test_expected_ll(s, std::vector<int>{0, 2}), -std::log(3.0), 1e-14);
}

TEST(Mse, Examples) {
  const Vector y = vec({1.0, -2.0, 0.5});
  EXPECT_EQ(mse(regression_summary(y, Vector::Zero(3)), y), 0.0);
  EXPECT_NEAR(mse(regression_summary(vec({0.0, 0.0, 1.0}), Vector::Zero(3)), y), (1.0 + 4.0 + 0.25) / 3.0, 1e-15);
  Rng rng(3);
  Vector z = testing_util::random_vector(rng, 10000);
  z = (z.array() - z.mean()) / std::sqrt((z.array() - z.mean()).square().mean());
  EXPECT_NEAR(mse(regression_summary(Vector::Zero(10000), Vector::Zero(10000)), z), 1.0, 1e-12);
}

TEST(Ece, Examples) {
  Matrix certain(4, 2);
  certain << 1, 0, 0, 1, 1, 0, 0, 1;
  EXPECT_NEAR(ece(certain, {0, 1, 0, 1}), 0.0, 1e-15);
  EXPECT_NEAR(ece(certain, {0, 0, 0, 0}), 0.5, 1e-15);
  Matrix seventy(10, 2);
  for (int i = 0; i < 10; ++i) seventy.row(i) << 0.7, 0.3;
  EXPECT_NEAR(ece(seventy, {0, 0, 0, 0, 0, 0, 0, 1, 1, 1}), 0.0, 1e-12);
  EXPECT_THROW(ece(Matrix(0, 2), {}), Error);
}

TEST(Ece, BoundedOnRandomInputs) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    Matrix logits = standard_normal(rng, 50, 3);
    Matrix probs = logits.array().exp();
    for (Eigen::Index i = 0; i < 50; ++i) probs.row(i) /= probs.row(i).sum();
    std::vector<int> labels(50);
    for (auto& l : labels) l = static_cast<int>(rng() % 3);
    const double e = ece(probs, labels);
    EXPECT_GE(e, 0.0);
    EXPECT_LE(e, 1.0);
  }
}

TEST(Accuracy, AndEntropy) {
  Matrix probs(3, 2);
  probs << 0.9, 0.1, 0.2, 0.8, 0.5, 0.5;
  EXPECT_NEAR(accuracy(probs, {0, 1, 1}), 2.0 / 3.0, 1e-15);
  const Vector h = predictive_entropy(probs);
  EXPECT_NEAR(h[2], std::log(2.0), 1e-15);
  EXPECT_NEAR(h[0], -(0.9 * std::log(0.9) + 0.1 * std::log(0.1)), 1e-15);
}

TEST(OodStump, Examples) {
  const StumpResult sep = ood_stump_accuracy(vec({0.1, 0.2}), vec({0.8, 0.9}));
  EXPECT_EQ(sep.accuracy, 1.0);
  EXPECT_GT(sep.threshold, 0.2);
  EXPECT_LT(sep.threshold, 0.8);
  EXPECT_EQ(ood_stump_accuracy(vec({0.3, 0.5}), vec({0.3, 0.5})).accuracy, 0.5);
  const Vector id = vec({0.1, 0.9});
  const Vector ood = vec({0.2, 0.8});
  EXPECT_EQ(ood_stump_accuracy(id, ood).accuracy, testing_util::brute_force_stump(id, ood));
  EXPECT_THROW(ood_stump_accuracy(Vector(), ood), Error);
}

TEST(OodStump, MatchesBruteForce) {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const Eigen::Index a = 1 + static_cast<Eigen::Index>(rng() % 8);
    const Eigen::Index b = 1 + static_cast<Eigen::Index>(rng() % 8);
    // Rounded values so ties occur.
    const Vector id = (4.0 * testing_util::random_vector(rng, a)).array().round() / 4.0;
    const Vector ood = (4.0 * testing_util::random_vector(rng, b) + Vector::Constant(b, 1.0)).array().round() / 4.0;
    const StumpResult r = ood_stump_accuracy(id, ood);
    EXPECT_EQ(r.accuracy, testing_util::brute_force_stump(id, ood));
    const double realized = static_cast<double>((id.array() <= r.threshold).count() + (ood.array() > r.threshold).count()) /
                            static_cast<double>(a + b);
    EXPECT_EQ(realized, r.accuracy);
    if (a == b) EXPECT_GE(r.accuracy, 0.5);
  }
}

TEST(PointwiseW2, Examples) {
  const GaussianMarginal exact{vec({0.0, 1.0, 2.0}), Matrix(vec({1.0, 4.0, 0.25}).asDiagonal())};
  EXPECT_NEAR(pointwise_w2(regression_summary(exact.mean, vec({1.0, 2.0, 0.5})), exact), 0.0, 1e-15);
  EXPECT_NEAR(pointwise_w2(regression_summary(exact.mean.array() + 0.7, vec({1.0, 2.0, 0.5})), exact), 0.7, 1e-14);
  const PredictiveSummary approx = regression_summary(vec({0.5, 1.0, 1.0}), vec({2.0, 1.0, 0.5}));
  const double hand = (std::sqrt(0.25 + 1.0) + std::sqrt(0.0 + 1.0) + std::sqrt(1.0 + 0.0)) / 3.0;
  EXPECT_NEAR(pointwise_w2(approx, exact), hand, 1e-14);
  EXPECT_THROW(pointwise_w2(regression_summary(Vector::Zero(2), Vector::Zero(2)), exact), Error);
}

TEST(PointwiseW2, MetricOnRandomTriples) {
  Rng rng(6);
  auto random_marginal = [&] {
    const Vector m = testing_util::random_vector(rng, 8);
    const Vector s = testing_util::random_vector(rng, 8).cwiseAbs();
    return GaussianMarginal{m, Matrix(s.cwiseAbs2().asDiagonal())};
  };
  for (int t = 0; t < 50; ++t) {
    const GaussianMarginal a = random_marginal();
    const GaussianMarginal b = random_marginal();
    const GaussianMarginal c = random_marginal();
    EXPECT_NEAR(pointwise_w2(a, b), pointwise_w2(b, a), 1e-10);
    EXPECT_LE(pointwise_w2(a, c), pointwise_w2(a, b) + pointwise_w2(b, c) + 1e-10);
  }
}

TEST(Roughness, Examples) {
  const Vector grid = Vector::LinSpaced(2001, 0.0, 2.0);
  const double h = grid[1] - grid[0];
  Matrix lines(grid.size(), 2);
  lines.col(0) = 3.0 * grid.array() - 1.0;
  lines.col(1) = -0.5 * grid;
  EXPECT_NEAR(roughness(lines, h), 0.0, 1e-6);
  const Matrix sine = (2 * M_PI * grid.array()).sin().matrix();
  EXPECT_NEAR(roughness(sine, h) / (std::pow(2 * M_PI, 4) / 2.0), 1.0, 0.05);
  try {
    roughness(Matrix::Zero(2, 1), 0.1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GridTooSmall);
  }
}

TEST(Roughness, WhiteNoiseRougherThanSmoothed) {
  Rng rng(7);
  const Matrix noise = standard_normal(rng, 200, 5);
  Matrix smooth = Matrix::Zero(200, 5);
  for (Eigen::Index i = 0; i < 200; ++i) {
    for (Eigen::Index k = std::max<Eigen::Index>(0, i - 5); k <= std::min<Eigen::Index>(199, i + 5); ++k) {
      smooth.row(i) += noise.row(k) / 11.0;
    }
  }
  EXPECT_GT(roughness(noise, 0.01), roughness(smooth, 0.01));
}

TEST(Predict, LinearizedMatchesPushforwardAndProbabilitiesNormalize) {
  Rng rng(8);
  Architecture arch;
  arch.hidden = {6};
  VariationalPosterior q = VariationalPosterior::with_scale(glorot_init(arch, rng), 0.2);
  const Matrix xs = standard_normal(rng, 5, 1);
  LikelihoodParams lik;
  lik.gaussian_raw_noise = inverse_softplus(0.3);
  const PredictiveSummary s = predict_linearized(arch, q, lik, xs, rng);
  const GaussianMarginal g = pushforward_marginal(arch, q, xs);
  EXPECT_LE((s.mean.col(0) - g.mean).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LE((s.epistemic_std.col(0) - g.stddev()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((s.total_std.col(0).cwiseAbs2() - g.stddev().cwiseAbs2() - Vector::Constant(5, 0.09)).cwiseAbs().maxCoeff(),
            1e-12);

  arch.output_dim = 3;
  q = VariationalPosterior::with_scale(glorot_init(arch, rng), 0.5);
  lik.kind = LikelihoodKind::Categorical;
  for (const PredictiveSummary& c :
       {predict_linearized(arch, q, lik, xs, rng), predict_sampled(arch, q, lik, xs, rng)}) {
    EXPECT_EQ(c.class_probs.cols(), 3);
    EXPECT_EQ(c.logit_draws.size(), static_cast<std::size_t>(kPredictiveSamples));
    EXPECT_LE((c.class_probs.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-8);
    EXPECT_GE(c.class_probs.minCoeff(), 0.0);
  }
}

TEST(Predict, GpSummary) {
  Rng rng(9);
  PriorSpec prior;
  const Matrix x = standard_normal(rng, 6, 1);
  const GPPosterior post = gp_fit(prior, x, testing_util::random_vector(rng, 6));
  const Matrix xt = standard_normal(rng, 4, 1);
  const PredictiveSummary s = predict_gp(post, xt);
  const GaussianMarginal g = gp_predict(post, xt);
  EXPECT_LE((s.mean.col(0) - g.mean).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_NEAR(pointwise_w2(s, g), 0.0, 1e-12);
}

TEST(FunctionSamples, MomentsMatchPushforward) {
  Rng rng(10);
  Architecture arch;
  arch.hidden = {5};
  const VariationalPosterior q = VariationalPosterior::with_scale(glorot_init(arch, rng), 0.3);
  const Matrix xs = standard_normal(rng, 3, 1);
  const Matrix draws = function_samples_linearized(arch, q, xs, rng, 20000);
  const GaussianMarginal g = pushforward_marginal(arch, q, xs);
  for (Eigen::Index i = 0; i < 3; ++i) {
    const double m = draws.row(i).mean();
    const double v = (draws.row(i).array() - m).square().mean();
    EXPECT_NEAR(m, g.mean[i], 5 * std::sqrt(g.cov(i, i) / 20000));
    EXPECT_NEAR(v / g.cov(i, i), 1.0, 0.05);
  }
}
