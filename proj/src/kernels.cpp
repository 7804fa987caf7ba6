#include "gfsvi/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "gfsvi/error.hpp"

namespace gfsvi {

namespace {

constexpr double kSqrt3 = 1.7320508075688772;
constexpr double kSqrt5 = 2.23606797749979;

double lengthscale_at(const KernelSpec& spec, Eigen::Index d) {
  return spec.lengthscale.size() == 1 ? spec.lengthscale[0] : spec.lengthscale[d];
}

bool has_alpha(KernelFamily f) { return f == KernelFamily::RationalQuadratic; }
bool has_period(KernelFamily f) { return f == KernelFamily::Periodic; }

/// Correlation value and derivative pieces for one pair of points.
struct PairTerms {
  double value = 0.0;
  // d value / d log lengthscale_d, one per lengthscale entry
  Eigen::VectorXd d_log_lengthscale;
  double d_log_alpha = 0.0;
  double d_log_period = 0.0;
};

PairTerms pair_terms(const KernelSpec& spec, const double* x1, const double* x2, Eigen::Index dim,
                     bool want_grad) {
  PairTerms out;
  const Eigen::Index nls = spec.lengthscale.size();
  if (want_grad) out.d_log_lengthscale = Eigen::VectorXd::Zero(nls);
  const double s2 = spec.amplitude * spec.amplitude;
  auto ls_index = [&](Eigen::Index d) { return nls == 1 ? Eigen::Index{0} : d; };

  if (spec.family == KernelFamily::Linear) {
    double dot = 0.0;
    for (Eigen::Index d = 0; d < dim; ++d) dot += x1[d] * x2[d];
    out.value = s2 * (dot + 1.0);
    return out;
  }

  if (spec.family == KernelFamily::Periodic) {
    const double p = spec.period;
    double acc = 0.0;
    for (Eigen::Index d = 0; d < dim; ++d) {
      const double l = lengthscale_at(spec, d);
      const double s = std::sin(std::numbers::pi * (x1[d] - x2[d]) / p);
      acc += s * s / (l * l);
    }
    out.value = s2 * std::exp(-2.0 * acc);
    if (want_grad) {
      for (Eigen::Index d = 0; d < dim; ++d) {
        const double l = lengthscale_at(spec, d);
        const double theta = std::numbers::pi * (x1[d] - x2[d]) / p;
        const double s = std::sin(theta);
        out.d_log_lengthscale[ls_index(d)] += out.value * 4.0 * s * s / (l * l);
        out.d_log_period += out.value * 4.0 * s * std::cos(theta) * theta / (l * l);
      }
    }
    return out;
  }

  // stationary, radial families: r^2 = sum_d u_d^2 with u_d = (x1_d - x2_d) / l_d
  double r2 = 0.0;
  Eigen::VectorXd u2;
  if (want_grad) u2.resize(dim);
  for (Eigen::Index d = 0; d < dim; ++d) {
    const double u = (x1[d] - x2[d]) / lengthscale_at(spec, d);
    r2 += u * u;
    if (want_grad) u2[d] = u * u;
  }
  const double r = std::sqrt(r2);
  // g such that d value / d log l_d = g * u_d^2
  double g = 0.0;
  switch (spec.family) {
    case KernelFamily::RBF:
      out.value = s2 * std::exp(-0.5 * r2);
      g = out.value;
      break;
    case KernelFamily::Matern12:
      out.value = s2 * std::exp(-r);
      g = r > 0.0 ? out.value / r : 0.0;
      break;
    case KernelFamily::Matern32: {
      const double e = std::exp(-kSqrt3 * r);
      out.value = s2 * (1.0 + kSqrt3 * r) * e;
      g = s2 * 3.0 * e;
      break;
    }
    case KernelFamily::Matern52: {
      const double e = std::exp(-kSqrt5 * r);
      out.value = s2 * (1.0 + kSqrt5 * r + 5.0 * r2 / 3.0) * e;
      g = s2 * (5.0 / 3.0) * (1.0 + kSqrt5 * r) * e;
      break;
    }
    case KernelFamily::RationalQuadratic: {
      const double a = spec.alpha;
      const double t = 1.0 + r2 / (2.0 * a);
      out.value = s2 * std::pow(t, -a);
      g = out.value / t;
      if (want_grad) out.d_log_alpha = a * out.value * (-std::log(t) + r2 / (2.0 * a * t));
      break;
    }
    default:
      break;
  }
  if (want_grad) {
    for (Eigen::Index d = 0; d < dim; ++d) out.d_log_lengthscale[ls_index(d)] += g * u2[d];
  }
  return out;
}

void check_dims(const KernelSpec& spec, Eigen::Index dim) {
  if (spec.lengthscale.size() != 1 && spec.lengthscale.size() != dim) {
    throw Error(ErrorKind::DimensionMismatch,
                "lengthscale has " + std::to_string(spec.lengthscale.size()) +
                    " entries for input dimension " + std::to_string(dim));
  }
}

}  // namespace

std::string to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::RBF: return "rbf";
    case KernelFamily::Matern12: return "matern12";
    case KernelFamily::Matern32: return "matern32";
    case KernelFamily::Matern52: return "matern52";
    case KernelFamily::RationalQuadratic: return "rq";
    case KernelFamily::Linear: return "linear";
    case KernelFamily::Periodic: return "periodic";
  }
  return "unknown";
}

KernelFamily kernel_family_from_string(const std::string& name) {
  for (auto f : {KernelFamily::RBF, KernelFamily::Matern12, KernelFamily::Matern32,
                 KernelFamily::Matern52, KernelFamily::RationalQuadratic, KernelFamily::Linear,
                 KernelFamily::Periodic}) {
    if (to_string(f) == name) return f;
  }
  throw Error(ErrorKind::InvalidArgument, "unknown kernel family '" + name + "'");
}

void KernelSpec::validate(Eigen::Index input_dim) const {
  if (!(amplitude > 0.0)) throw Error(ErrorKind::InvalidArgument, "amplitude must be > 0");
  if (lengthscale.size() == 0 || !(lengthscale.array() > 0.0).all()) {
    throw Error(ErrorKind::InvalidArgument, "lengthscales must be > 0");
  }
  if (!(alpha > 0.0)) throw Error(ErrorKind::InvalidArgument, "alpha must be > 0");
  if (!(period > 0.0)) throw Error(ErrorKind::InvalidArgument, "period must be > 0");
  if (input_dim > 0) check_dims(*this, input_dim);
}

void PriorSpec::validate(Eigen::Index input_dim) const {
  kernel.validate(input_dim);
  if (!(observation_noise >= 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "observation noise must be >= 0");
  }
}

double kernel_eval(const KernelSpec& spec, const Vector& x1, const Vector& x2) {
  if (x1.size() != x2.size()) {
    throw Error(ErrorKind::DimensionMismatch, "points have different dimensions");
  }
  check_dims(spec, x1.size());
  return pair_terms(spec, x1.data(), x2.data(), x1.size(), false).value;
}

Matrix gram(const KernelSpec& spec, const Matrix& xs, const Matrix& ys) {
  if (xs.cols() != ys.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "point sets have different dimensions");
  }
  const Eigen::Index dim = xs.cols();
  check_dims(spec, dim);
  // row-major copies so each point is contiguous
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> a = xs, b = ys;
  const bool square = &xs == &ys;
  Matrix k(xs.rows(), ys.rows());
  for (Eigen::Index i = 0; i < xs.rows(); ++i) {
    for (Eigen::Index j = square ? i : 0; j < ys.rows(); ++j) {
      k(i, j) = pair_terms(spec, a.row(i).data(), b.row(j).data(), dim, false).value;
      if (square) k(j, i) = k(i, j);
    }
  }
  return k;
}

Vector pack_log_params(const PriorSpec& prior) {
  const auto& k = prior.kernel;
  const Eigen::Index nls = k.lengthscale.size();
  Vector out(1 + nls + (has_alpha(k.family) ? 1 : 0) + (has_period(k.family) ? 1 : 0) + 1);
  Eigen::Index at = 0;
  out[at++] = std::log(k.amplitude);
  for (Eigen::Index d = 0; d < nls; ++d) out[at++] = std::log(k.lengthscale[d]);
  if (has_alpha(k.family)) out[at++] = std::log(k.alpha);
  if (has_period(k.family)) out[at++] = std::log(k.period);
  out[at++] = std::log(std::max(prior.observation_noise, 1e-300));
  return out;
}

PriorSpec unpack_log_params(const PriorSpec& layout, const Vector& log_params) {
  PriorSpec out = layout;
  auto& k = out.kernel;
  const Eigen::Index nls = k.lengthscale.size();
  if (log_params.size() != pack_log_params(layout).size()) {
    throw Error(ErrorKind::ShapeMismatch, "log-parameter vector has wrong length");
  }
  Eigen::Index at = 0;
  k.amplitude = std::exp(log_params[at++]);
  for (Eigen::Index d = 0; d < nls; ++d) k.lengthscale[d] = std::exp(log_params[at++]);
  if (has_alpha(k.family)) k.alpha = std::exp(log_params[at++]);
  if (has_period(k.family)) k.period = std::exp(log_params[at++]);
  out.observation_noise = std::exp(log_params[at++]);
  return out;
}

std::vector<Matrix> gram_log_param_gradients(const PriorSpec& prior, const Matrix& xs) {
  const auto& spec = prior.kernel;
  const Eigen::Index n = xs.rows();
  const Eigen::Index dim = xs.cols();
  check_dims(spec, dim);
  const Eigen::Index nls = spec.lengthscale.size();
  const bool alpha = has_alpha(spec.family);
  const bool period = has_period(spec.family);
  const Eigen::Index count = 1 + nls + (alpha ? 1 : 0) + (period ? 1 : 0) + 1;
  std::vector<Matrix> grads(count, Matrix::Zero(n, n));
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> a = xs;
  const bool lengthscale_used = spec.family != KernelFamily::Linear;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i; j < n; ++j) {
      const PairTerms t = pair_terms(spec, a.row(i).data(), a.row(j).data(), dim, true);
      Eigen::Index at = 0;
      grads[at](i, j) = grads[at](j, i) = 2.0 * t.value;
      ++at;
      for (Eigen::Index d = 0; d < nls; ++d, ++at) {
        const double v = lengthscale_used ? t.d_log_lengthscale[d] : 0.0;
        grads[at](i, j) = grads[at](j, i) = v;
      }
      if (alpha) {
        grads[at](i, j) = grads[at](j, i) = t.d_log_alpha;
        ++at;
      }
      if (period) {
        grads[at](i, j) = grads[at](j, i) = t.d_log_period;
        ++at;
      }
    }
  }
  grads.back().diagonal().setConstant(2.0 * prior.observation_noise * prior.observation_noise);
  return grads;
}

double log_marginal_likelihood(const PriorSpec& prior, const Matrix& xs, const Vector& ys,
                               Vector* log_param_grad) {
  const Eigen::Index n = xs.rows();
  if (ys.size() != n) throw Error(ErrorKind::ShapeMismatch, "targets and inputs differ in count");
  Matrix k = gram(prior.kernel, xs);
  k.diagonal().array() += prior.observation_noise * prior.observation_noise;
  const CholeskyFactor factor = cholesky(k);
  const Vector centered = ys.array() - prior.mean;
  const Vector alpha = solve_with_factor(factor, centered);
  const double lml = -0.5 * centered.dot(alpha) - 0.5 * log_det_from_factor(factor) -
                     0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  if (log_param_grad) {
    const Matrix w = alpha * alpha.transpose() - inverse_from_factor(factor);
    const auto dks = gram_log_param_gradients(prior, xs);
    log_param_grad->resize(static_cast<Eigen::Index>(dks.size()));
    for (std::size_t p = 0; p < dks.size(); ++p) {
      (*log_param_grad)[static_cast<Eigen::Index>(p)] = 0.5 * w.cwiseProduct(dks[p]).sum();
    }
  }
  return lml;
}

PriorSpec fit_prior_minibatch(const PriorSpec& prior, const Matrix& xs, const Vector& ys,
                              const PriorFitConfig& config, Rng& rng) {
  const Eigen::Index n = xs.rows();
  if (n == 0) throw Error(ErrorKind::EmptyInput, "cannot fit a prior to an empty dataset");
  if (ys.size() != n) throw Error(ErrorKind::ShapeMismatch, "targets and inputs differ in count");
  prior.validate(xs.cols());
  const Eigen::Index batch = std::min<Eigen::Index>(n, config.batch_size);
  Vector params = pack_log_params(prior);
  Adam adam(params.size(), AdamConfig{config.learning_rate});
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  Eigen::Index cursor = n;
  Matrix bx(batch, xs.cols());
  Vector by(batch);
  for (int step = 0; step < config.steps; ++step) {
    if (batch == n) {
      bx = xs;
      by = ys;
    } else {
      for (Eigen::Index b = 0; b < batch; ++b) {
        if (cursor >= n) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        const Eigen::Index idx = order[static_cast<std::size_t>(cursor++)];
        bx.row(b) = xs.row(idx);
        by[b] = ys[idx];
      }
    }
    const PriorSpec current = unpack_log_params(prior, params);
    Vector grad;
    const double lml = log_marginal_likelihood(current, bx, by, &grad);
    if (!std::isfinite(lml) || !grad.allFinite()) {
      throw Error(ErrorKind::NonFiniteLoss,
                  "log marginal likelihood diverged at step " + std::to_string(step));
    }
    // Adam minimizes; the LML is scaled per point so the step size is batch-independent
    adam.step(params, -grad / static_cast<double>(batch));
    params = params.cwiseMax(-30.0).cwiseMin(30.0);
  }
  return unpack_log_params(prior, params);
}

}  // namespace gfsvi
