#include "gfsvi/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "gfsvi/error.hpp"

namespace gfsvi {

namespace {

Matrix softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Eigen::RowVectorXd e = (logits.row(i).array() - logits.row(i).maxCoeff()).exp();
    out.row(i) = e / e.sum();
  }
  return out;
}

Matrix unflatten(const Vector& v, Eigen::Index outputs) {
  return v.reshaped(outputs, v.size() / outputs).transpose();
}

void finish_classification(PredictiveSummary& s) {
  const auto n = s.logit_draws.front().rows();
  const auto c = s.logit_draws.front().cols();
  s.class_probs = Matrix::Zero(n, c);
  Matrix sum = Matrix::Zero(n, c);
  Matrix sum_sq = Matrix::Zero(n, c);
  for (const Matrix& l : s.logit_draws) {
    s.class_probs += softmax_rows(l);
    sum += l;
    sum_sq += l.cwiseAbs2();
  }
  const double k = static_cast<double>(s.logit_draws.size());
  s.class_probs /= k;
  if (s.mean.size() == 0) {
    s.mean = sum / k;
    s.epistemic_std = (sum_sq / k - s.mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
  }
  s.total_std = s.epistemic_std;
}

}  // namespace

PredictiveSummary predict_linearized(const Architecture& arch, const VariationalPosterior& q,
                                     const LikelihoodParams& lik, const Matrix& xs, Rng& rng,
                                     int samples) {
  const ForwardJacobian fj = forward_with_jacobian(arch, q.mean, xs);
  const Vector var = q.variance();
  PredictiveSummary s;
  s.mean = fj.outputs;
  const Vector f_var = fj.jacobian.array().square().matrix() * var;
  s.epistemic_std = unflatten(f_var.cwiseSqrt(), arch.output_dim);
  if (lik.kind == LikelihoodKind::Gaussian) {
    const double s2 = lik.noise() * lik.noise();
    s.total_std = (s.epistemic_std.cwiseAbs2().array() + s2).sqrt();
    return s;
  }
  if (samples < 1) throw Error(ErrorKind::InvalidArgument, "need at least one sample");
  const Matrix scaled = q.scale().asDiagonal() * standard_normal(rng, q.size(), samples);
  const Matrix lin = fj.jacobian * scaled;
  for (int k = 0; k < samples; ++k) s.logit_draws.push_back(s.mean + unflatten(lin.col(k), arch.output_dim));
  finish_classification(s);
  return s;
}

PredictiveSummary predict_sampled(const Architecture& arch, const VariationalPosterior& q,
                                  const LikelihoodParams& lik, const Matrix& xs, Rng& rng,
                                  int samples) {
  if (samples < 1) throw Error(ErrorKind::InvalidArgument, "need at least one sample");
  const Matrix ws = sample_weights(q, rng, samples);
  PredictiveSummary s;
  if (lik.kind == LikelihoodKind::Categorical) {
    for (int k = 0; k < samples; ++k) s.logit_draws.push_back(forward(arch, ws.col(k), xs));
    finish_classification(s);
    return s;
  }
  Matrix sum = Matrix::Zero(xs.rows(), arch.output_dim);
  Matrix sum_sq = sum;
  for (int k = 0; k < samples; ++k) {
    const Matrix f = forward(arch, ws.col(k), xs);
    sum += f;
    sum_sq += f.cwiseAbs2();
  }
  const double n = static_cast<double>(samples);
  s.mean = sum / n;
  s.epistemic_std = (sum_sq / n - s.mean.cwiseAbs2()).cwiseMax(0.0).cwiseSqrt();
  const double s2 = lik.noise() * lik.noise();
  s.total_std = (s.epistemic_std.cwiseAbs2().array() + s2).sqrt();
  return s;
}

PredictiveSummary predict_gp(const GPPosterior& post, const Matrix& xs) {
  const GaussianMarginal m = gp_predict(post, xs);
  PredictiveSummary s;
  s.mean = m.mean;
  s.epistemic_std = m.stddev();
  const double s2 = post.prior.observation_noise * post.prior.observation_noise;
  s.total_std = (s.epistemic_std.cwiseAbs2().array() + s2).sqrt();
  return s;
}

Matrix function_samples_linearized(const Architecture& arch, const VariationalPosterior& q,
                                   const Matrix& xs, Rng& rng, Eigen::Index count) {
  if (arch.output_dim != 1) throw Error(ErrorKind::DimensionMismatch, "single-output model expected");
  const ForwardJacobian fj = forward_with_jacobian(arch, q.mean, xs);
  Matrix out = fj.jacobian * (q.scale().asDiagonal() * standard_normal(rng, q.size(), count));
  out.colwise() += fj.outputs.col(0);
  return out;
}

Matrix function_samples_sampled(const Architecture& arch, const VariationalPosterior& q,
                                const Matrix& xs, Rng& rng, Eigen::Index count) {
  if (arch.output_dim != 1) throw Error(ErrorKind::DimensionMismatch, "single-output model expected");
  const Matrix ws = sample_weights(q, rng, count);
  Matrix out(xs.rows(), count);
  for (Eigen::Index k = 0; k < count; ++k) out.col(k) = forward(arch, ws.col(k), xs).col(0);
  return out;
}

double test_expected_ll(const PredictiveSummary& summary, const Vector& targets, double sigma_y) {
  if (summary.mean.cols() != 1 || summary.size() != targets.size()) {
    throw Error(ErrorKind::ShapeMismatch, "summary and targets differ in length");
  }
  if (targets.size() == 0) throw Error(ErrorKind::EmptyInput, "no targets");
  return expected_ll_gaussian(targets, summary.mean.col(0),
                              summary.epistemic_std.col(0).cwiseAbs2(), sigma_y) /
         static_cast<double>(targets.size());
}

double test_expected_ll(const PredictiveSummary& summary, const std::vector<int>& labels) {
  if (summary.logit_draws.empty()) throw Error(ErrorKind::EmptyInput, "summary has no logit draws");
  if (static_cast<Eigen::Index>(labels.size()) != summary.logit_draws.front().rows()) {
    throw Error(ErrorKind::ShapeMismatch, "summary and labels differ in length");
  }
  if (labels.empty()) throw Error(ErrorKind::EmptyInput, "no labels");
  return expected_ll_categorical(labels, summary.logit_draws) / static_cast<double>(labels.size());
}

double mse(const PredictiveSummary& summary, const Vector& targets) {
  if (summary.mean.cols() != 1 || summary.size() != targets.size()) {
    throw Error(ErrorKind::ShapeMismatch, "summary and targets differ in length");
  }
  if (targets.size() == 0) throw Error(ErrorKind::EmptyInput, "no targets");
  return (summary.mean.col(0) - targets).squaredNorm() / static_cast<double>(targets.size());
}

double accuracy(const Matrix& probs, const std::vector<int>& labels) {
  if (static_cast<Eigen::Index>(labels.size()) != probs.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "probabilities and labels differ in length");
  }
  if (labels.empty()) throw Error(ErrorKind::EmptyInput, "no labels");
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index arg;
    probs.row(i).maxCoeff(&arg);
    correct += arg == labels[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double ece(const Matrix& probs, const std::vector<int>& labels, int n_bins) {
  if (labels.empty() || probs.rows() == 0) throw Error(ErrorKind::EmptyInput, "no predictions");
  if (static_cast<Eigen::Index>(labels.size()) != probs.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "probabilities and labels differ in length");
  }
  if (n_bins < 1) throw Error(ErrorKind::InvalidArgument, "n_bins must be >= 1");
  std::vector<double> conf_sum(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<double> correct(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<double> count(static_cast<std::size_t>(n_bins), 0.0);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    Eigen::Index arg;
    const double conf = probs.row(i).maxCoeff(&arg);
    const auto b = static_cast<std::size_t>(
        std::clamp(static_cast<int>(std::floor(conf * n_bins)), 0, n_bins - 1));
    conf_sum[b] += conf;
    correct[b] += arg == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    count[b] += 1.0;
  }
  double total = 0.0;
  for (std::size_t b = 0; b < count.size(); ++b) {
    if (count[b] > 0.0) total += std::abs(correct[b] - conf_sum[b]);
  }
  return total / static_cast<double>(probs.rows());
}

Vector predictive_entropy(const Matrix& probs) {
  Vector h(probs.rows());
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      const double p = probs(i, c);
      if (p > 0.0) s -= p * std::log(p);
    }
    h[i] = s;
  }
  return h;
}

StumpResult ood_stump_accuracy(const Vector& id_uncertainty, const Vector& ood_uncertainty) {
  if (id_uncertainty.size() == 0 || ood_uncertainty.size() == 0) {
    throw Error(ErrorKind::EmptyInput, "both uncertainty sets must be non-empty");
  }
  std::vector<double> pooled(id_uncertainty.begin(), id_uncertainty.end());
  pooled.insert(pooled.end(), ood_uncertainty.begin(), ood_uncertainty.end());
  std::sort(pooled.begin(), pooled.end());
  std::vector<double> candidates{-std::numeric_limits<double>::infinity()};
  for (std::size_t i = 1; i < pooled.size(); ++i) {
    if (pooled[i] > pooled[i - 1]) candidates.push_back(0.5 * (pooled[i] + pooled[i - 1]));
  }
  candidates.push_back(std::numeric_limits<double>::infinity());

  const double total = static_cast<double>(pooled.size());
  StumpResult best{candidates.front(), -1.0};
  for (double t : candidates) {
    const auto id_ok = (id_uncertainty.array() <= t).count();
    const auto ood_ok = (ood_uncertainty.array() > t).count();
    const double acc = static_cast<double>(id_ok + ood_ok) / total;
    if (acc > best.accuracy) best = {t, acc};
  }
  return best;
}

double pointwise_w2(const GaussianMarginal& a, const GaussianMarginal& b) {
  if (a.dim() != b.dim()) throw Error(ErrorKind::ShapeMismatch, "marginals differ in length");
  if (a.dim() == 0) throw Error(ErrorKind::EmptyInput, "no evaluation points");
  const Vector sa = a.stddev();
  const Vector sb = b.stddev();
  double total = 0.0;
  for (Eigen::Index i = 0; i < a.dim(); ++i) total += gauss_w2_1d(a.mean[i], sa[i], b.mean[i], sb[i]);
  return total / static_cast<double>(a.dim());
}

double pointwise_w2(const PredictiveSummary& approx, const GaussianMarginal& exact) {
  if (approx.mean.cols() != 1) throw Error(ErrorKind::ShapeMismatch, "single-output summary expected");
  GaussianMarginal a{approx.mean.col(0), approx.epistemic_std.col(0).cwiseAbs2().asDiagonal()};
  return pointwise_w2(a, exact);
}

double roughness(const Matrix& samples, double spacing) {
  if (samples.rows() < 3) throw Error(ErrorKind::GridTooSmall, "roughness needs >= 3 grid points");
  if (samples.cols() == 0) throw Error(ErrorKind::EmptyInput, "no samples");
  if (!(spacing > 0.0)) throw Error(ErrorKind::InvalidArgument, "spacing must be > 0");
  const Eigen::Index n = samples.rows();
  const Matrix d2 = samples.topRows(n - 2) - 2.0 * samples.middleRows(1, n - 2) + samples.bottomRows(n - 2);
  return d2.cwiseAbs2().mean() / std::pow(spacing, 4);
}

}  // namespace gfsvi
