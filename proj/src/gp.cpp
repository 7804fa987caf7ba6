#include "gfsvi/gp.hpp"

#include "gfsvi/error.hpp"

namespace gfsvi {

GPPosterior gp_fit(const PriorSpec& prior, const Matrix& xs, const Vector& ys) {
  if (xs.rows() < 1) throw Error(ErrorKind::EmptyInput, "GP needs at least one training point");
  if (xs.rows() > kMaxExactGpRows) {
    throw Error(ErrorKind::Infeasible, "exact GP limited to " + std::to_string(kMaxExactGpRows) +
                                           " training points, got " + std::to_string(xs.rows()));
  }
  if (ys.size() != xs.rows()) throw Error(ErrorKind::ShapeMismatch, "targets differ from inputs");
  if (!ys.allFinite()) throw Error(ErrorKind::InvalidArgument, "non-finite targets");
  prior.validate(xs.cols());

  GPPosterior post;
  post.prior = prior;
  post.train_x = xs;
  post.train_y = ys;
  Matrix k = gram(prior.kernel, xs);
  k.diagonal().array() += prior.observation_noise * prior.observation_noise;
  post.chol = cholesky(k);
  post.alpha = solve_with_factor(post.chol, Vector(ys.array() - prior.mean));
  return post;
}

GPPosterior gp_fit(const PriorSpec& prior, const Matrix& xs, const Vector& ys,
                   const PriorFitConfig& fit, Rng& rng) {
  return gp_fit(fit_prior_minibatch(prior, xs, ys, fit, rng), xs, ys);
}

GaussianMarginal gp_predict(const GPPosterior& post, const Matrix& xs) {
  if (xs.cols() != post.train_x.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "test inputs differ in dimension from training");
  }
  const Matrix cross = gram(post.prior.kernel, xs, post.train_x);
  GaussianMarginal out;
  out.mean = (cross * post.alpha).array() + post.prior.mean;
  const Matrix v = post.chol.lower.triangularView<Eigen::Lower>().solve(cross.transpose());
  out.cov = gram(post.prior.kernel, xs);
  out.cov.noalias() -= v.transpose() * v;
  out.cov = 0.5 * (out.cov + out.cov.transpose());
  return out;
}

double gp_log_marginal(const PriorSpec& prior, const Matrix& xs, const Vector& ys) {
  return log_marginal_likelihood(prior, xs, ys);
}

}  // namespace gfsvi
