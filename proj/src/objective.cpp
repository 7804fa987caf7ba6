#include "gfsvi/objective.hpp"

#include <cmath>
#include <numbers>

#include "gfsvi/error.hpp"

namespace gfsvi {

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Matrix shifted(const Matrix& cov, double shift) {
  Matrix out = cov;
  out.diagonal().array() += shift;
  return out;
}

/// Point-major flattening of a batch x outputs matrix.
Vector flatten(const Matrix& outputs) { return outputs.transpose().reshaped(); }

Matrix unflatten(const Vector& v, Eigen::Index outputs) {
  return v.reshaped(outputs, v.size() / outputs).transpose();
}

/// log-softmax of each row.
Matrix log_softmax_rows(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double top = logits.row(i).maxCoeff();
    const double lse = top + std::log((logits.row(i).array() - top).exp().sum());
    out.row(i) = logits.row(i).array() - lse;
  }
  return out;
}

void check_labels(const std::vector<int>& labels, Eigen::Index rows, Eigen::Index classes) {
  if (static_cast<Eigen::Index>(labels.size()) != rows) {
    throw Error(ErrorKind::ShapeMismatch, "label count differs from batch size");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw Error(ErrorKind::LabelOutOfRange, "label " + std::to_string(y) + " outside [0, " +
                                                  std::to_string(classes) + ")");
    }
  }
}

/// Cotangent of -(scale / K) sum log softmax(logits)[y] with respect to logits.
Matrix categorical_cotangent(const Matrix& logits, const std::vector<int>& labels, double factor) {
  Matrix cot = log_softmax_rows(logits).array().exp();
  for (Eigen::Index i = 0; i < cot.rows(); ++i) cot(i, labels[static_cast<std::size_t>(i)]) -= 1.0;
  return factor * cot;
}

void check_batch(const Batch& batch, const LikelihoodParams& lik, int outputs) {
  if (batch.size() < 1) throw Error(ErrorKind::EmptyInput, "empty batch");
  if (lik.kind == LikelihoodKind::Gaussian) {
    if (outputs != 1) {
      throw Error(ErrorKind::DimensionMismatch, "Gaussian likelihood needs a single output");
    }
    if (batch.y.size() != batch.size()) {
      throw Error(ErrorKind::ShapeMismatch, "target count differs from batch size");
    }
  } else {
    check_labels(batch.labels, batch.size(), outputs);
  }
}

enum class PriorKind { GaussianProcess, WeightPushforward };

/// Shared body of the GFSVI and TFSVI objectives; both use the linearized
/// network for the likelihood and differ only in the prior marginal.
LossResult linearized_loss(const Architecture& arch, const VariationalPosterior& q,
                           PriorKind prior_kind, const PriorSpec* gp_prior,
                           const WeightPrior* weight_prior, const Batch& batch,
                           const Matrix& meas, const LikelihoodParams& lik,
                           const RegKLConfig& cfg, double n_total, const Matrix& noise,
                           bool want_grad) {
  const int outputs = arch.output_dim;
  check_batch(batch, lik, outputs);
  if (meas.rows() < 1) throw Error(ErrorKind::EmptyInput, "no measurement points");
  const Eigen::Index nb = batch.size();
  const Eigen::Index nm = meas.rows();
  const Eigen::Index p = q.size();
  const Eigen::Index rows_b = nb * outputs;
  const Eigen::Index rows_m = nm * outputs;

  Matrix x_all(nb + nm, arch.input_dim);
  x_all << batch.x, meas;
  const ForwardJacobian fj = forward_with_jacobian(arch, q.mean, x_all);
  const Vector variance = q.variance();
  const Vector sigma = q.scale();

  Matrix g_f;
  Matrix g_jac;
  Vector g_var;
  Vector g_sigma;
  Vector g_mean_direct;
  if (want_grad) {
    g_f = Matrix::Zero(nb + nm, outputs);
    g_jac = Matrix::Zero(rows_b + rows_m, p);
    g_var = Vector::Zero(p);
    g_sigma = Vector::Zero(p);
    g_mean_direct = Vector::Zero(p);
  }

  LossResult out;
  const double scale = n_total / static_cast<double>(nb);
  const auto jb = fj.jacobian.topRows(rows_b);

  if (lik.kind == LikelihoodKind::Gaussian) {
    const double sy = lik.noise();
    const Vector f = fj.outputs.topRows(nb).col(0);
    const Vector v = jb.array().square().matrix() * variance;
    const double ell = expected_ll_gaussian(batch.y, f, v, sy);
    out.expected_ll = scale * ell;
    if (want_grad) {
      const double s2 = sy * sy;
      g_f.col(0).head(nb) = -scale * (batch.y - f) / s2;
      const double c_v = scale / (2.0 * s2);
      g_jac.topRows(rows_b) = (2.0 * c_v) * (jb * variance.asDiagonal());
      g_var += c_v * jb.array().square().colwise().sum().transpose().matrix();
      const double d_sigma =
          -scale * ((-1.0 / sy) * static_cast<double>(nb) +
                    ((batch.y - f).squaredNorm() + v.sum()) / (s2 * sy));
      out.grad.raw_noise = d_sigma * sigmoid(lik.gaussian_raw_noise);
    }
  } else {
    if (noise.rows() != p || noise.cols() < 1) {
      throw Error(ErrorKind::ShapeMismatch, "categorical likelihood needs p x K weight noise");
    }
    const Eigen::Index draws = noise.cols();
    const Matrix scaled_noise = sigma.asDiagonal() * noise;
    const Matrix lin = jb * scaled_noise;  // rows_b x K
    const Matrix f = fj.outputs.topRows(nb);
    std::vector<Matrix> logit_draws;
    logit_draws.reserve(static_cast<std::size_t>(draws));
    for (Eigen::Index k = 0; k < draws; ++k) logit_draws.push_back(f + unflatten(lin.col(k), outputs));
    const double ell = expected_ll_categorical(batch.labels, logit_draws);
    out.expected_ll = scale * ell;
    if (want_grad) {
      Matrix t(rows_b, draws);
      for (Eigen::Index k = 0; k < draws; ++k) {
        const Matrix cot = categorical_cotangent(logit_draws[static_cast<std::size_t>(k)],
                                                 batch.labels,
                                                 scale / static_cast<double>(draws));
        t.col(k) = flatten(cot);
        g_f.topRows(nb) += cot;
      }
      g_jac.topRows(rows_b) += t * scaled_noise.transpose();
      g_sigma += ((jb.transpose() * t).array() * noise.array()).rowwise().sum().matrix();
    }
  }

  // regularized KL at the measurement points
  const auto jm = fj.jacobian.bottomRows(rows_m);
  GaussianMarginal qm;
  qm.mean = flatten(fj.outputs.bottomRows(nm));
  const Matrix jm_scaled = jm * variance.cwiseSqrt().asDiagonal();
  qm.cov.noalias() = jm_scaled * jm_scaled.transpose();
  GaussianMarginal pm;
  double prior_var = 0.0;
  if (prior_kind == PriorKind::GaussianProcess) {
    pm.mean = Vector::Constant(rows_m, gp_prior->mean);
    const Matrix k = gram(gp_prior->kernel, meas);
    pm.cov = Matrix::Zero(rows_m, rows_m);
    for (int c = 0; c < outputs; ++c) {
      for (Eigen::Index i = 0; i < nm; ++i)
        for (Eigen::Index j = 0; j < nm; ++j) pm.cov(i * outputs + c, j * outputs + c) = k(i, j);
    }
  } else {
    prior_var = weight_prior->scale * weight_prior->scale;
    pm.mean = qm.mean - jm * q.mean;
    pm.cov.noalias() = prior_var * (jm * jm.transpose());
  }
  RegKLGradient kg;
  out.divergence = reg_kl_estimate(qm, pm, cfg, nm, want_grad ? &kg : nullptr);
  out.value = -out.expected_ll + out.divergence;
  if (!want_grad) return out;

  g_f.bottomRows(nm) += unflatten(kg.mean_q, outputs);
  const Matrix gcov_jm = kg.cov_q * jm;
  g_jac.bottomRows(rows_m) += 2.0 * gcov_jm * variance.asDiagonal();
  g_var += (gcov_jm.array() * jm.array()).colwise().sum().transpose().matrix();
  if (prior_kind == PriorKind::WeightPushforward) {
    g_f.bottomRows(nm) += unflatten(kg.mean_p, outputs);
    g_jac.bottomRows(rows_m) -= kg.mean_p * q.mean.transpose();
    g_mean_direct -= jm.transpose() * kg.mean_p;
    g_jac.bottomRows(rows_m) += (2.0 * prior_var) * (kg.cov_p * jm);
  }

  out.grad.mean = fj.jacobian.transpose() * flatten(g_f) + g_mean_direct;
  if (cfg.differentiate_jacobian) out.grad.mean += jacobian_pullback(arch, q.mean, x_all, g_jac);
  const Vector dsig = q.scale_derivative();
  out.grad.raw_scale =
      (g_var.array() * 2.0 * sigma.array() * dsig.array() + g_sigma.array() * dsig.array())
          .matrix();
  return out;
}

}  // namespace

std::string to_string(LikelihoodKind kind) {
  return kind == LikelihoodKind::Gaussian ? "gaussian" : "categorical";
}

LikelihoodKind likelihood_kind_from_string(const std::string& name) {
  if (name == "gaussian") return LikelihoodKind::Gaussian;
  if (name == "categorical") return LikelihoodKind::Categorical;
  throw Error(ErrorKind::InvalidArgument, "unknown likelihood '" + name + "'");
}

double LikelihoodParams::noise() const { return softplus(gaussian_raw_noise); }

double reg_kl_estimate(const GaussianMarginal& q, const GaussianMarginal& p,
                       const RegKLConfig& cfg, Eigen::Index measurement_count,
                       RegKLGradient* grad) {
  const Eigen::Index n = q.dim();
  if (p.dim() != n) throw Error(ErrorKind::ShapeMismatch, "marginal dimensions differ");
  if (n < 1) throw Error(ErrorKind::EmptyInput, "empty marginals");
  require_shape(q.cov, n, n, "q covariance");
  require_shape(p.cov, n, n, "p covariance");
  if (!(cfg.gamma > 0.0)) throw Error(ErrorKind::InvalidArgument, "gamma must be > 0");
  const Eigen::Index count = measurement_count > 0 ? measurement_count : n;
  const double shift = cfg.gamma * static_cast<double>(count);

  const Matrix s1 = shifted(q.cov, shift);
  const Matrix s2 = shifted(p.cov, shift);
  const CholeskyFactor f1 = cholesky(s1, cfg.base_jitter);
  const CholeskyFactor f2 = cholesky(s2, cfg.base_jitter);
  const auto l2 = f2.lower.triangularView<Eigen::Lower>();
  const Vector d = q.mean - p.mean;
  const Vector a = l2.solve(d);
  const double trace = l2.solve(f1.lower).squaredNorm();
  const double value = 0.5 * (a.squaredNorm() + trace - static_cast<double>(n) -
                              log_det_from_factor(f1) + log_det_from_factor(f2));
  if (grad) {
    const Matrix inv1 = inverse_from_factor(f1);
    const Matrix inv2 = inverse_from_factor(f2);
    const Vector alpha = inv2 * d;
    grad->mean_q = alpha;
    grad->mean_p = -alpha;
    grad->cov_q = 0.5 * (inv2 - inv1);
    Matrix used1 = shifted(s1, f1.jitter_applied);
    const Matrix inner = inv2 * (used1 + d * d.transpose()) * inv2;
    grad->cov_p = 0.5 * (inv2 - 0.5 * (inner + inner.transpose()));
  }
  return value;
}

std::vector<ProbeRow> kl_blowup_probe(const MarginalFamily& posterior, const PriorSpec& prior,
                                      const std::vector<Eigen::Index>& ms, double naive_jitter,
                                      double gamma_reg, const Vector& lower, const Vector& upper,
                                      Rng& rng) {
  if (ms.empty()) throw Error(ErrorKind::EmptyInput, "no measurement counts");
  if (lower.size() != upper.size()) {
    throw Error(ErrorKind::DimensionMismatch, "box bounds differ in dimension");
  }
  const Eigen::Index largest = *std::max_element(ms.begin(), ms.end());
  Matrix pool(largest, lower.size());
  for (Eigen::Index i = 0; i < largest; ++i)
    for (Eigen::Index d = 0; d < lower.size(); ++d) pool(i, d) = rng.uniform(lower[d], upper[d]);

  std::vector<ProbeRow> rows;
  for (Eigen::Index m : ms) {
    if (m < 1) throw Error(ErrorKind::InvalidArgument, "measurement count must be >= 1");
    const Matrix xs = pool.topRows(m);
    const GaussianMarginal qm = posterior(xs);
    GaussianMarginal pm{Vector::Constant(m, prior.mean), gram(prior.kernel, xs)};
    ProbeRow row{m, 0.0, 0.0};
    row.naive_kl = mvn_kl(qm.mean, shifted(qm.cov, naive_jitter), pm.mean,
                          shifted(pm.cov, naive_jitter));
    row.reg_kl = reg_kl_estimate(qm, pm, RegKLConfig{gamma_reg, 0.0, true}, m);
    rows.push_back(row);
  }
  return rows;
}

MarginalFamily degenerate_relu_family(Eigen::Index input_dim, Eigen::Index rank, Rng& rng) {
  if (rank < 1) throw Error(ErrorKind::InvalidArgument, "rank must be >= 1");
  Architecture arch{static_cast<int>(input_dim), {static_cast<int>(rank)}, 1, Activation::ReLU};
  const auto layers = arch.layers();
  WeightVector w = WeightVector::Zero(arch.num_weights());
  Vector var = Vector::Zero(arch.num_weights());
  const auto& first = layers[0];
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(first.in) * first.out; ++i)
    w[first.offset + i] = 2.0 * rng.normal();
  for (Eigen::Index o = 0; o < first.out; ++o)
    w[first.offset + static_cast<Eigen::Index>(first.in) * first.out + o] = rng.uniform(-1.0, 1.0);
  var.segment(layers[1].offset, rank).setConstant(1.0 / static_cast<double>(rank));
  return [arch, w, var](const Matrix& xs) { return pushforward_marginal(arch, w, var, xs); };
}

MarginalFamily gp_family(const PriorSpec& spec, double nugget) {
  return [spec, nugget](const Matrix& xs) {
    GaussianMarginal out{Vector::Constant(xs.rows(), spec.mean), gram(spec.kernel, xs)};
    out.cov.diagonal().array() += nugget;
    return out;
  };
}

double expected_ll_gaussian(const Vector& y, const Vector& mean, const Vector& var,
                            double sigma_y) {
  if (y.size() != mean.size() || y.size() != var.size()) {
    throw Error(ErrorKind::ShapeMismatch, "targets, means and variances differ in length");
  }
  if (!(sigma_y > 0.0)) throw Error(ErrorKind::InvalidArgument, "sigma_y must be > 0");
  if ((var.array() < 0.0).any()) throw Error(ErrorKind::NegativeVariance, "negative variance");
  const double s2 = sigma_y * sigma_y;
  const double n = static_cast<double>(y.size());
  return -0.5 * n * (kLog2Pi + std::log(s2)) - ((y - mean).squaredNorm() + var.sum()) / (2.0 * s2);
}

double expected_ll_categorical(const std::vector<int>& labels,
                               const std::vector<Matrix>& logit_draws) {
  if (logit_draws.empty()) throw Error(ErrorKind::EmptyInput, "no logit draws");
  double total = 0.0;
  for (const Matrix& logits : logit_draws) {
    check_labels(labels, logits.rows(), logits.cols());
    const Matrix ls = log_softmax_rows(logits);
    for (Eigen::Index i = 0; i < ls.rows(); ++i) total += ls(i, labels[static_cast<std::size_t>(i)]);
  }
  return total / static_cast<double>(logit_draws.size());
}

LossResult gfsvi_loss(const Architecture& arch, const VariationalPosterior& q,
                      const PriorSpec& prior, const Batch& batch, const Matrix& measurement_points,
                      const LikelihoodParams& lik, const RegKLConfig& cfg, double n_total,
                      const Matrix& weight_noise, bool want_grad) {
  return linearized_loss(arch, q, PriorKind::GaussianProcess, &prior, nullptr, batch,
                         measurement_points, lik, cfg, n_total, weight_noise, want_grad);
}

LossResult tfsvi_loss(const Architecture& arch, const VariationalPosterior& q,
                      const WeightPrior& prior, const Batch& batch,
                      const Matrix& measurement_points, const LikelihoodParams& lik,
                      const RegKLConfig& cfg, double n_total, const Matrix& weight_noise,
                      bool want_grad) {
  return linearized_loss(arch, q, PriorKind::WeightPushforward, nullptr, &prior, batch,
                         measurement_points, lik, cfg, n_total, weight_noise, want_grad);
}

LossResult mfvi_loss(const Architecture& arch, const VariationalPosterior& q,
                     const WeightPrior& prior, const Batch& batch, const LikelihoodParams& lik,
                     double n_total, const Matrix& weight_noise, bool want_grad) {
  const int outputs = arch.output_dim;
  check_batch(batch, lik, outputs);
  const Eigen::Index p = q.size();
  if (weight_noise.rows() != p || weight_noise.cols() < 1) {
    throw Error(ErrorKind::ShapeMismatch, "MFVI needs p x K weight noise");
  }
  const Eigen::Index draws = weight_noise.cols();
  const double scale = n_total / static_cast<double>(batch.size());
  const Matrix ws = sample_weights(q, weight_noise);

  LossResult out;
  Vector g_w_sum = Vector::Zero(p);
  Vector g_sigma = Vector::Zero(p);
  const double per_draw = 1.0 / static_cast<double>(draws);
  const double sy = lik.noise();
  double d_sigma_y = 0.0;
  double ell = 0.0;
  for (Eigen::Index k = 0; k < draws; ++k) {
    const WeightVector w = ws.col(k);
    const Matrix f = forward(arch, w, batch.x);
    Matrix cot;
    if (lik.kind == LikelihoodKind::Gaussian) {
      const Vector resid = batch.y - f.col(0);
      ell += per_draw *
             expected_ll_gaussian(batch.y, f.col(0), Vector::Zero(batch.size()), sy);
      if (want_grad) {
        cot = -scale * per_draw * resid / (sy * sy);
        d_sigma_y += -scale * per_draw *
                     (-static_cast<double>(batch.size()) / sy + resid.squaredNorm() / (sy * sy * sy));
      }
    } else {
      ell += per_draw * expected_ll_categorical(batch.labels, {f});
      if (want_grad) cot = categorical_cotangent(f, batch.labels, scale * per_draw);
    }
    if (want_grad) {
      const Vector gw = output_pullback(arch, w, batch.x, cot);
      g_w_sum += gw;
      g_sigma += gw.cwiseProduct(weight_noise.col(k));
    }
  }
  out.expected_ll = scale * ell;
  WeightKlGradient kg;
  out.divergence = weight_kl(q, prior, want_grad ? &kg : nullptr);
  out.value = -out.expected_ll + out.divergence;
  if (want_grad) {
    out.grad.mean = g_w_sum + kg.mean;
    out.grad.raw_scale = g_sigma.cwiseProduct(q.scale_derivative()) + kg.raw_scale;
    out.grad.raw_noise =
        lik.kind == LikelihoodKind::Gaussian ? d_sigma_y * sigmoid(lik.gaussian_raw_noise) : 0.0;
  }
  return out;
}

LossResult mfvi_loss(const Architecture& arch, const VariationalPosterior& q,
                     const WeightPrior& prior, const Batch& batch, const LikelihoodParams& lik,
                     double n_total, Rng& rng, Eigen::Index samples) {
  return mfvi_loss(arch, q, prior, batch, lik, n_total, standard_normal(rng, q.size(), samples));
}

}  // namespace gfsvi
