#include "gfsvi/numerics.hpp"

#include <cmath>
#include <string>

#include "gfsvi/error.hpp"

namespace gfsvi {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::NonSquare: return "NonSquare";
    case ErrorKind::NotSymmetric: return "NotSymmetric";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NegativeScale: return "NegativeScale";
    case ErrorKind::NegativeVariance: return "NegativeVariance";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::MissingValue: return "MissingValue";
    case ErrorKind::TooFewRows: return "TooFewRows";
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::GridTooSmall: return "GridTooSmall";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Config: return "ConfigError";
  }
  return "Error";
}

void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw Error(ErrorKind::ShapeMismatch,
                std::string(what) + " is " + std::to_string(m.rows()) + "x" +
                    std::to_string(m.cols()) + ", expected " + std::to_string(rows) + "x" +
                    std::to_string(cols));
  }
}

namespace {

void require_symmetric(const Matrix& a) {
  if (a.rows() != a.cols()) {
    throw Error(ErrorKind::NonSquare,
                "matrix is " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()));
  }
  const double scale = a.cwiseAbs().maxCoeff();
  if (!std::isfinite(scale)) throw Error(ErrorKind::NotPositiveDefinite, "non-finite entries");
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-8 * std::max(scale, 1e-300)) {
    throw Error(ErrorKind::NotSymmetric, "asymmetry exceeds 1e-8 relative");
  }
}

bool try_llt(const Matrix& a, double jitter, Matrix& lower) {
  Matrix shifted = a;
  shifted.diagonal().array() += jitter;
  Eigen::LLT<Matrix> llt(shifted);
  if (llt.info() != Eigen::Success) return false;
  lower = llt.matrixL();
  return (lower.diagonal().array() > 0.0).all() && lower.allFinite();
}

}  // namespace

CholeskyFactor cholesky(const Matrix& a, double base_jitter) {
  require_symmetric(a);
  if (base_jitter < 0.0) throw Error(ErrorKind::InvalidArgument, "negative base jitter");
  CholeskyFactor out;
  if (a.rows() == 0) return out;
  if (try_llt(a, base_jitter, out.lower)) {
    out.jitter_applied = base_jitter;
    return out;
  }
  const double mean_diag = a.diagonal().mean();
  const double scale = mean_diag > 0.0 ? mean_diag : 1.0;
  const double cap = 1e-2 * scale;
  double jitter = base_jitter > 0.0 ? base_jitter * 10.0 : 1e-12 * scale;
  while (true) {
    jitter = std::min(jitter, cap);
    if (try_llt(a, jitter, out.lower)) {
      out.jitter_applied = jitter;
      return out;
    }
    if (jitter >= cap) break;
    jitter *= 10.0;
  }
  throw Error(ErrorKind::NotPositiveDefinite,
              "Cholesky failed with jitter up to " + std::to_string(cap));
}

Matrix solve_with_factor(const CholeskyFactor& factor, const Matrix& b) {
  if (factor.lower.rows() != b.rows()) {
    throw Error(ErrorKind::ShapeMismatch, "factor has " + std::to_string(factor.lower.rows()) +
                                              " rows, rhs has " + std::to_string(b.rows()));
  }
  const auto lower = factor.lower.triangularView<Eigen::Lower>();
  Matrix y = lower.solve(b);
  return lower.transpose().solve(y);
}

Vector solve_with_factor(const CholeskyFactor& factor, const Vector& b) {
  return solve_with_factor(factor, Matrix(b)).col(0);
}

Matrix inverse_from_factor(const CholeskyFactor& factor) {
  const Eigen::Index n = factor.dim();
  Matrix linv = factor.lower.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
  Matrix inv = linv.transpose() * linv;
  return 0.5 * (inv + inv.transpose());
}

double log_det_from_factor(const CholeskyFactor& factor) {
  return 2.0 * factor.lower.diagonal().array().log().sum();
}

double mvn_kl(const Vector& m1, const Matrix& c1, const Vector& m2, const Matrix& c2,
              double base_jitter) {
  const Eigen::Index n = m1.size();
  if (m2.size() != n) throw Error(ErrorKind::ShapeMismatch, "mean dimensions differ");
  require_shape(c1, n, n, "c1");
  require_shape(c2, n, n, "c2");
  const CholeskyFactor f1 = cholesky(c1, base_jitter);
  const CholeskyFactor f2 = cholesky(c2, base_jitter);
  const auto l2 = f2.lower.triangularView<Eigen::Lower>();
  const Vector a = l2.solve(m1 - m2);
  // tr(c2^{-1} c1) = ||L2^{-1} L1||_F^2 using the factor actually used for c1
  const Matrix b = l2.solve(f1.lower);
  const double trace = b.squaredNorm();
  const double value = 0.5 * (a.squaredNorm() + trace - static_cast<double>(n) -
                              log_det_from_factor(f1) + log_det_from_factor(f2));
  return value;
}

Matrix mvn_sample(const Vector& mean, const Matrix& cov, Rng& rng, Eigen::Index count) {
  const Eigen::Index n = mean.size();
  require_shape(cov, n, n, "covariance");
  require_symmetric(cov);
  const Matrix z = standard_normal(rng, n, count);
  Matrix samples(n, count);
  Eigen::LLT<Matrix> llt(cov);
  if (llt.info() == Eigen::Success && (llt.matrixL().toDenseMatrix().diagonal().array() > 0).all()) {
    samples = llt.matrixL() * z;
  } else {
    Eigen::LDLT<Matrix> ldlt(cov);
    Vector d = ldlt.vectorD();
    const double tol = 1e-10 * std::max(d.cwiseAbs().maxCoeff(), 1e-300);
    if ((d.array() < -tol).any() || ldlt.info() != Eigen::Success) {
      throw Error(ErrorKind::NotPositiveDefinite, "covariance is not positive semidefinite");
    }
    d = d.cwiseMax(0.0).cwiseSqrt();
    Matrix lz = ldlt.matrixL() * (d.asDiagonal() * z);
    samples = ldlt.transpositionsP().transpose() * lz;
  }
  samples.colwise() += mean;
  return samples;
}

double gauss_w2_1d(double mu1, double sigma1, double mu2, double sigma2) {
  if (sigma1 < 0.0 || sigma2 < 0.0) throw Error(ErrorKind::NegativeScale, "negative std");
  return std::hypot(mu1 - mu2, sigma1 - sigma2);
}

}  // namespace gfsvi
