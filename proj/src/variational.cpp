#include "gfsvi/variational.hpp"

#include <cmath>

#include "gfsvi/error.hpp"

namespace gfsvi {

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double inverse_softplus(double y) {
  if (!(y > 0.0)) throw Error(ErrorKind::InvalidArgument, "softplus inverse needs y > 0");
  return y > 30.0 ? y : y + std::log(-std::expm1(-y));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Vector VariationalPosterior::scale() const { return raw_scale.unaryExpr(&softplus); }

Vector VariationalPosterior::variance() const { return scale().cwiseAbs2(); }

Vector VariationalPosterior::scale_derivative() const { return raw_scale.unaryExpr(&sigmoid); }

VariationalPosterior VariationalPosterior::initialize(const Architecture& arch, Rng& rng) {
  VariationalPosterior q;
  q.mean = glorot_init(arch, rng);
  q.raw_scale.resize(q.mean.size());
  for (const auto& l : arch.layers()) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    const Eigen::Index count = static_cast<Eigen::Index>(l.in + 1) * l.out;
    q.raw_scale.segment(l.offset, count).setConstant(inverse_softplus(1e-3 * limit));
  }
  return q;
}

VariationalPosterior VariationalPosterior::with_scale(const WeightVector& mean, double scale) {
  VariationalPosterior q;
  q.mean = mean;
  q.raw_scale = Vector::Constant(mean.size(), inverse_softplus(scale));
  return q;
}

Matrix sample_weights(const VariationalPosterior& q, const Matrix& noise) {
  require_shape(noise, q.size(), noise.cols(), "weight noise");
  Matrix w = q.scale().asDiagonal() * noise;
  w.colwise() += q.mean;
  return w;
}

Matrix sample_weights(const VariationalPosterior& q, Rng& rng, Eigen::Index count) {
  return sample_weights(q, standard_normal(rng, q.size(), count));
}

double weight_kl(const VariationalPosterior& q, const WeightPrior& prior, WeightKlGradient* grad) {
  if (!(prior.scale > 0.0)) throw Error(ErrorKind::InvalidArgument, "prior scale must be > 0");
  const Vector sigma = q.scale();
  const double sp2 = prior.scale * prior.scale;
  const double kl = (std::log(prior.scale) - sigma.array().log() +
                     (sigma.array().square() + q.mean.array().square()) / (2.0 * sp2) - 0.5)
                        .sum();
  if (grad) {
    grad->mean = q.mean / sp2;
    grad->raw_scale = ((-1.0 / sigma.array() + sigma.array() / sp2) *
                       q.scale_derivative().array())
                          .matrix();
  }
  return kl;
}

}  // namespace gfsvi
