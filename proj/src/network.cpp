#include "gfsvi/network.hpp"

#include <cmath>

#include <unsupported/Eigen/AutoDiff>

#include "gfsvi/error.hpp"

namespace gfsvi {

namespace {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Tangent = Eigen::AutoDiffScalar<Eigen::Matrix<double, 1, 1>>;

void check_inputs(const Architecture& arch, const WeightVector& w, const Matrix& xs) {
  if (xs.cols() != arch.input_dim) {
    throw Error(ErrorKind::DimensionMismatch, "inputs have dimension " +
                                                  std::to_string(xs.cols()) + ", network expects " +
                                                  std::to_string(arch.input_dim));
  }
  if (w.size() != arch.num_weights()) {
    throw Error(ErrorKind::DimensionMismatch, "weight vector has length " +
                                                  std::to_string(w.size()) + ", network has " +
                                                  std::to_string(arch.num_weights()));
  }
}

Eigen::Map<const RowMajorMatrix> layer_weight(const WeightVector& w, const Architecture::Layer& l) {
  return {w.data() + l.offset, l.out, l.in};
}

Eigen::Map<const Vector> layer_bias(const WeightVector& w, const Architecture::Layer& l) {
  return {w.data() + l.offset + static_cast<Eigen::Index>(l.out) * l.in, l.out};
}

/// Batched forward pass keeping the input to every layer.
std::vector<Matrix> forward_activations(const Architecture& arch, const WeightVector& w,
                                        const Matrix& xs, Matrix& outputs) {
  const auto layers = arch.layers();
  std::vector<Matrix> acts;
  acts.reserve(layers.size());
  acts.push_back(xs);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Matrix z = acts.back() * layer_weight(w, layers[l]).transpose();
    z.rowwise() += layer_bias(w, layers[l]).transpose();
    if (l + 1 == layers.size()) {
      outputs = std::move(z);
      break;
    }
    if (arch.activation == Activation::Tanh) {
      z = z.array().tanh();
    } else {
      z = z.cwiseMax(0.0);
    }
    acts.push_back(std::move(z));
  }
  return acts;
}

/// Multiplies `delta` by the activation derivative given post-activations.
void apply_activation_derivative(Activation activation, const Matrix& post, Matrix& delta) {
  if (activation == Activation::Tanh) {
    delta.array() *= 1.0 - post.array().square();
  } else {
    delta.array() *= (post.array() > 0.0).cast<double>();
  }
}

}  // namespace

std::string to_string(Activation activation) {
  return activation == Activation::Tanh ? "tanh" : "relu";
}

Activation activation_from_string(const std::string& name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::ReLU;
  throw Error(ErrorKind::InvalidArgument, "unknown activation '" + name + "'");
}

std::vector<Architecture::Layer> Architecture::layers() const {
  std::vector<Layer> out;
  int in = input_dim;
  Eigen::Index offset = 0;
  auto add = [&](int width) {
    out.push_back({in, width, offset});
    offset += static_cast<Eigen::Index>(in + 1) * width;
    in = width;
  };
  for (int width : hidden) add(width);
  add(output_dim);
  return out;
}

Eigen::Index Architecture::num_weights() const {
  const auto ls = layers();
  const auto& last = ls.back();
  return last.offset + static_cast<Eigen::Index>(last.in + 1) * last.out;
}

void Architecture::validate() const {
  if (input_dim < 1 || output_dim < 1) {
    throw Error(ErrorKind::InvalidArgument, "input and output dimensions must be >= 1");
  }
  for (int width : hidden) {
    if (width < 1) throw Error(ErrorKind::InvalidArgument, "hidden widths must be >= 1");
  }
}

WeightVector glorot_init(const Architecture& arch, Rng& rng) {
  WeightVector w = WeightVector::Zero(arch.num_weights());
  for (const auto& l : arch.layers()) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    const Eigen::Index count = static_cast<Eigen::Index>(l.in) * l.out;
    for (Eigen::Index i = 0; i < count; ++i) w[l.offset + i] = rng.uniform(-limit, limit);
  }
  return w;
}

Matrix forward(const Architecture& arch, const WeightVector& w, const Matrix& xs) {
  check_inputs(arch, w, xs);
  Matrix outputs;
  forward_activations(arch, w, xs, outputs);
  return outputs;
}

ForwardJacobian forward_with_jacobian(const Architecture& arch, const WeightVector& w,
                                      const Matrix& xs) {
  check_inputs(arch, w, xs);
  ForwardJacobian out;
  const std::vector<Matrix> acts = forward_activations(arch, w, xs, out.outputs);
  const auto layers = arch.layers();
  const Eigen::Index n = xs.rows();
  const Eigen::Index outputs = arch.output_dim;
  out.jacobian = Matrix::Zero(n * outputs, arch.num_weights());
  using Strided = Eigen::Map<Vector, 0, Eigen::InnerStride<>>;

  for (Eigen::Index k = 0; k < outputs; ++k) {
    Matrix delta = Matrix::Zero(n, outputs);
    delta.col(k).setOnes();
    for (std::size_t l = layers.size(); l-- > 0;) {
      const auto& layer = layers[l];
      const Matrix& a = acts[l];
      for (int o = 0; o < layer.out; ++o) {
        for (int j = 0; j < layer.in; ++j) {
          const Eigen::Index c = layer.offset + static_cast<Eigen::Index>(o) * layer.in + j;
          Strided(out.jacobian.col(c).data() + k, n, Eigen::InnerStride<>(outputs)) =
              delta.col(o).cwiseProduct(a.col(j));
        }
        const Eigen::Index cb = layer.offset + static_cast<Eigen::Index>(layer.out) * layer.in + o;
        Strided(out.jacobian.col(cb).data() + k, n, Eigen::InnerStride<>(outputs)) = delta.col(o);
      }
      if (l == 0) break;
      Matrix back = delta * layer_weight(w, layer);
      apply_activation_derivative(arch.activation, acts[l], back);
      delta = std::move(back);
    }
  }
  return out;
}

Matrix jacobian(const Architecture& arch, const WeightVector& w, const Matrix& xs) {
  return forward_with_jacobian(arch, w, xs).jacobian;
}

Matrix linearized_forward(const Architecture& arch, const WeightVector& m, const WeightVector& w,
                          const Matrix& xs) {
  check_inputs(arch, w, xs);
  const ForwardJacobian fj = forward_with_jacobian(arch, m, xs);
  const Vector delta = fj.jacobian * (w - m);
  // delta is ordered point-major; outputs are batch x output_dim
  Matrix out = fj.outputs;
  for (Eigen::Index i = 0; i < out.rows(); ++i)
    for (Eigen::Index k = 0; k < out.cols(); ++k) out(i, k) += delta[i * out.cols() + k];
  return out;
}

GaussianMarginal pushforward_marginal(const Architecture& arch, const WeightVector& m,
                                      const Vector& weight_var, const Matrix& xs) {
  if (weight_var.size() != m.size()) {
    throw Error(ErrorKind::DimensionMismatch, "posterior variance length differs from mean");
  }
  const ForwardJacobian fj = forward_with_jacobian(arch, m, xs);
  GaussianMarginal out;
  out.mean = fj.outputs.transpose().reshaped();  // point-major
  const Matrix scaled = fj.jacobian * weight_var.cwiseSqrt().asDiagonal();
  out.cov.noalias() = scaled * scaled.transpose();
  return out;
}

Vector output_pullback(const Architecture& arch, const WeightVector& w, const Matrix& xs,
                       const Matrix& output_cotangent) {
  check_inputs(arch, w, xs);
  require_shape(output_cotangent, xs.rows(), arch.output_dim, "output cotangent");
  Matrix outputs;
  const std::vector<Matrix> acts = forward_activations(arch, w, xs, outputs);
  const auto layers = arch.layers();
  Vector grad(w.size());
  Matrix delta = output_cotangent;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& layer = layers[l];
    Eigen::Map<RowMajorMatrix> gw(grad.data() + layer.offset, layer.out, layer.in);
    gw.noalias() = delta.transpose() * acts[l];
    grad.segment(layer.offset + static_cast<Eigen::Index>(layer.out) * layer.in, layer.out) =
        delta.colwise().sum().transpose();
    if (l == 0) break;
    Matrix back = delta * layer_weight(w, layer);
    apply_activation_derivative(arch.activation, acts[l], back);
    delta = std::move(back);
  }
  return grad;
}

Vector jacobian_pullback(const Architecture& arch, const WeightVector& m, const Matrix& xs,
                         const Matrix& jacobian_cotangent) {
  check_inputs(arch, m, xs);
  const Eigen::Index outputs = arch.output_dim;
  require_shape(jacobian_cotangent, xs.rows() * outputs, m.size(), "jacobian cotangent");
  const Eigen::Index p = m.size();
  Vector result = Vector::Zero(p);
  VectorX<Tangent> w(p);
  for (Eigen::Index r = 0; r < jacobian_cotangent.rows(); ++r) {
    if (jacobian_cotangent.row(r).isZero(0.0)) continue;
    for (Eigen::Index j = 0; j < p; ++j) {
      w[j].value() = m[j];
      w[j].derivatives()[0] = jacobian_cotangent(r, j);
    }
    const Eigen::Index i = r / outputs;
    const int k = static_cast<int>(r % outputs);
    const Vector x = xs.row(i).transpose();
    const VectorX<Tangent> g = output_gradient<Tangent>(arch, w, x, k);
    for (Eigen::Index j = 0; j < p; ++j) result[j] += g[j].derivatives()[0];
  }
  return result;
}

}  // namespace gfsvi
