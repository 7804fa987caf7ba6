#include "gfsvi/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gfsvi/adam.hpp"
#include "gfsvi/error.hpp"

namespace gfsvi {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::GFSVI: return "gfsvi";
    case LossKind::MFVI: return "mfvi";
    case LossKind::TFSVI: return "tfsvi";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "gfsvi") return LossKind::GFSVI;
  if (name == "mfvi") return LossKind::MFVI;
  if (name == "tfsvi") return LossKind::TFSVI;
  throw Error(ErrorKind::InvalidArgument, "unknown method '" + name + "'");
}

void MeasurementSampler::validate() const {
  if (lower.size() != upper.size() || lower.size() == 0) {
    throw Error(ErrorKind::DimensionMismatch, "sampler bounds must be non-empty and equal length");
  }
  if ((lower.array() >= upper.array()).any()) {
    throw Error(ErrorKind::InvalidArgument, "sampler needs lower < upper in every dimension");
  }
  if (count < 1) throw Error(ErrorKind::InvalidArgument, "sampler count must be >= 1");
}

MeasurementSampler MeasurementSampler::inflated_box(const Matrix& xs, Eigen::Index count) {
  if (xs.rows() == 0) throw Error(ErrorKind::EmptyInput, "no rows to bound");
  MeasurementSampler s;
  const Vector lo = xs.colwise().minCoeff().transpose();
  const Vector hi = xs.colwise().maxCoeff().transpose();
  Vector range = hi - lo;
  // constant columns (e.g. a one-hot level absent from the split) still need a box
  for (Eigen::Index d = 0; d < range.size(); ++d) range[d] = range[d] > 0.0 ? range[d] : 1.0;
  s.lower = lo - 0.5 * range;
  s.upper = hi + 0.5 * range;
  s.count = count;
  return s;
}

Matrix sample_measurement_points(const MeasurementSampler& sampler, Rng& rng) {
  sampler.validate();
  Matrix out(sampler.count, sampler.lower.size());
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index d = 0; d < out.cols(); ++d)
      out(i, d) = rng.uniform(sampler.lower[d], sampler.upper[d]);
  return out;
}

void TrainerConfig::validate() const {
  if (batch_size < 1) throw Error(ErrorKind::InvalidArgument, "batch_size must be >= 1");
  if (steps < 0) throw Error(ErrorKind::InvalidArgument, "steps must be >= 0");
  if (!(learning_rate >= 0.0)) throw Error(ErrorKind::InvalidArgument, "learning_rate must be >= 0");
  if (val_every < 1) throw Error(ErrorKind::InvalidArgument, "val_every must be >= 1");
  if (patience < 1) throw Error(ErrorKind::InvalidArgument, "patience must be >= 1");
  if (mfvi_samples < 1) throw Error(ErrorKind::InvalidArgument, "mfvi_samples must be >= 1");
}

Batch select_rows(const Batch& data, const std::vector<Eigen::Index>& rows) {
  Batch out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), data.x.cols());
  const bool has_y = data.y.size() == data.size();
  const bool has_labels = static_cast<Eigen::Index>(data.labels.size()) == data.size();
  if (has_y) out.y.resize(out.x.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = rows[i];
    const auto row = static_cast<Eigen::Index>(i);
    out.x.row(row) = data.x.row(r);
    if (has_y) out.y[row] = data.y[r];
    if (has_labels) out.labels.push_back(data.labels[static_cast<std::size_t>(r)]);
  }
  return out;
}

namespace {

constexpr int kValidationDraws = 20;

Matrix fixed_noise(std::uint64_t seed, Eigen::Index rows, Eigen::Index cols) {
  Rng rng(seed);
  return standard_normal(rng, rows, cols);
}

}  // namespace

double validation_loss(const Model& model, LossKind kind, const Batch& data, std::uint64_t seed) {
  if (data.size() == 0) throw Error(ErrorKind::EmptyInput, "empty validation data");
  const auto& arch = model.arch;
  const auto& q = model.q;
  const auto& lik = model.likelihood;
  const double n = static_cast<double>(data.size());
  if (kind != LossKind::MFVI && lik.kind == LikelihoodKind::Gaussian) {
    const GaussianMarginal m = pushforward_marginal(arch, q, data.x);
    return -expected_ll_gaussian(data.y, m.mean, m.cov.diagonal(), lik.noise()) / n;
  }
  const Matrix noise = fixed_noise(seed, q.size(), kValidationDraws);
  const Matrix ws = sample_weights(q, noise);
  double total = 0.0;
  Matrix base;
  Matrix jac;
  if (kind != LossKind::MFVI) {
    const ForwardJacobian fj = forward_with_jacobian(arch, q.mean, data.x);
    base = fj.outputs;
    jac = fj.jacobian;
  }
  for (Eigen::Index k = 0; k < ws.cols(); ++k) {
    Matrix f;
    if (kind == LossKind::MFVI) {
      f = forward(arch, ws.col(k), data.x);
    } else {
      const Vector lin = jac * (ws.col(k) - q.mean);
      f = base + lin.reshaped(arch.output_dim, data.size()).transpose();
    }
    if (lik.kind == LikelihoodKind::Gaussian) {
      total += expected_ll_gaussian(data.y, f.col(0), Vector::Zero(data.size()), lik.noise());
    } else {
      total += expected_ll_categorical(data.labels, {f});
    }
  }
  return -total / (static_cast<double>(ws.cols()) * n);
}

TrainResult train(const Model& initial, const Batch& train_split, const Batch& val_split,
                  const TrainerConfig& config, const MeasurementSampler& sampler,
                  const RegKLConfig& reg_kl, LossKind kind) {
  config.validate();
  if (kind != LossKind::MFVI) sampler.validate();
  if (train_split.size() == 0) throw Error(ErrorKind::EmptyInput, "empty training split");
  initial.arch.validate();
  const Batch& val = val_split.size() > 0 ? val_split : train_split;

  const Eigen::Index n = train_split.size();
  const Eigen::Index p = initial.q.size();
  const Eigen::Index batch_size = std::min(config.batch_size, n);
  const bool gaussian = initial.likelihood.kind == LikelihoodKind::Gaussian;
  const bool learn_noise = config.learn_noise && gaussian;
  const Eigen::Index noise_draws =
      kind == LossKind::MFVI ? config.mfvi_samples : (gaussian ? 0 : initial.likelihood.mc_samples);

  Rng batch_rng(derive_seed(config.seed, "batches"));
  Rng measurement_rng(derive_seed(config.seed, "measurement"));
  Rng noise_rng(derive_seed(config.seed, "weight-noise"));
  const std::uint64_t val_seed = derive_seed(config.seed, "validation");

  Model model = initial;
  Vector params(2 * p + 1);
  params << model.q.mean, model.q.raw_scale, model.likelihood.gaussian_raw_noise;
  Adam adam(params.size(), AdamConfig{config.learning_rate, 0.9, 0.999, 1e-8});

  TrainResult result;
  result.model = model;
  double best = validation_loss(model, kind, val, val_seed);
  result.trace.push_back({0, std::nan(""), best});
  int checks_without_improvement = 0;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::size_t cursor = order.size();
  double window_sum = 0.0;
  long window_count = 0;

  for (long step = 1; step <= config.steps; ++step) {
    if (cursor + static_cast<std::size_t>(batch_size) > order.size()) {
      std::shuffle(order.begin(), order.end(), batch_rng);
      cursor = 0;
    }
    const std::vector<Eigen::Index> rows(order.begin() + static_cast<std::ptrdiff_t>(cursor),
                                         order.begin() +
                                             static_cast<std::ptrdiff_t>(cursor + batch_size));
    cursor += static_cast<std::size_t>(batch_size);
    const Batch batch = select_rows(train_split, rows);
    const Matrix noise =
        noise_draws > 0 ? standard_normal(noise_rng, p, noise_draws) : Matrix();

    LossResult loss;
    switch (kind) {
      case LossKind::GFSVI:
        loss = gfsvi_loss(model.arch, model.q, model.function_prior, batch,
                          sample_measurement_points(sampler, measurement_rng), model.likelihood,
                          reg_kl, static_cast<double>(n), noise);
        break;
      case LossKind::TFSVI:
        loss = tfsvi_loss(model.arch, model.q, model.weight_prior, batch,
                          sample_measurement_points(sampler, measurement_rng), model.likelihood,
                          reg_kl, static_cast<double>(n), noise);
        break;
      case LossKind::MFVI:
        loss = mfvi_loss(model.arch, model.q, model.weight_prior, batch, model.likelihood,
                         static_cast<double>(n), noise);
        break;
    }
    if (!std::isfinite(loss.value)) throw NonFiniteLossError(step, "objective is not finite");
    Vector grad(params.size());
    grad << loss.grad.mean, loss.grad.raw_scale, learn_noise ? loss.grad.raw_noise : 0.0;
    if (!grad.allFinite()) throw NonFiniteLossError(step, "gradient is not finite");

    const double per_datum = loss.value / static_cast<double>(n);
    result.step_losses.push_back(per_datum);
    window_sum += per_datum;
    ++window_count;

    adam.step(params, grad);
    model.q.mean = params.head(p);
    model.q.raw_scale = params.segment(p, p);
    model.likelihood.gaussian_raw_noise = params[2 * p];

    if (step % config.val_every == 0 || step == config.steps) {
      const double v = validation_loss(model, kind, val, val_seed);
      if (!std::isfinite(v)) throw NonFiniteLossError(step, "validation loss is not finite");
      result.trace.push_back({step, window_sum / static_cast<double>(window_count), v});
      window_sum = 0.0;
      window_count = 0;
      if (v < best) {
        best = v;
        result.model = model;
        result.best_step = step;
        checks_without_improvement = 0;
      } else if (++checks_without_improvement >= config.patience) {
        result.stopped_early = true;
        break;
      }
    }
  }
  return result;
}

}  // namespace gfsvi
