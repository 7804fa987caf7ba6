#pragma once

#include <string>
#include <vector>

#include "gfsvi/numerics.hpp"

namespace gfsvi {

enum class Activation { Tanh, ReLU };

std::string to_string(Activation activation);
Activation activation_from_string(const std::string& name);

/// Fully-connected network with `activation` on hidden layers and a linear
/// output layer.
///
/// Weight layout: layers in order; each layer stores its (out x in) weight
/// matrix row-major followed by its `out` biases.
struct Architecture {
  int input_dim = 1;
  std::vector<int> hidden;
  int output_dim = 1;
  Activation activation = Activation::Tanh;

  struct Layer {
    int in;
    int out;
    Eigen::Index offset;  // first weight index of this layer
  };

  std::vector<Layer> layers() const;
  Eigen::Index num_weights() const;
  void validate() const;
};

using WeightVector = Vector;

/// Per-layer uniform in +-sqrt(6 / (fan_in + fan_out)); biases zero.
WeightVector glorot_init(const Architecture& arch, Rng& rng);

/// Outputs for a batch (rows of `xs` are points): batch x output_dim.
Matrix forward(const Architecture& arch, const WeightVector& w, const Matrix& xs);

struct ForwardJacobian {
  Matrix outputs;   // batch x output_dim
  Matrix jacobian;  // (batch * output_dim) x p, row i * output_dim + k
};

/// Exact reverse-mode Jacobian of every output with respect to every weight.
ForwardJacobian forward_with_jacobian(const Architecture& arch, const WeightVector& w,
                                      const Matrix& xs);
Matrix jacobian(const Architecture& arch, const WeightVector& w, const Matrix& xs);

/// f(xs; m) + J(xs; m) (w - m).
Matrix linearized_forward(const Architecture& arch, const WeightVector& m, const WeightVector& w,
                          const Matrix& xs);

/// Gaussian marginal of the linearized network under N(m, diag(weight_var))
/// at `xs`; output k of point i sits at index i * output_dim + k.
GaussianMarginal pushforward_marginal(const Architecture& arch, const WeightVector& m,
                                      const Vector& weight_var, const Matrix& xs);

/// Gradient with respect to w of sum_{i,k} cot(i, k) f_k(x_i; w).
Vector output_pullback(const Architecture& arch, const WeightVector& w, const Matrix& xs,
                       const Matrix& output_cotangent);

/// Gradient with respect to m of sum_r <cot_r, J_r(m)>, where J_r is row r
/// of jacobian(arch, m, xs). Equals sum_r H_r cot_r with H_r the Hessian of
/// the matching output; computed by running the backward rules on dual
/// numbers.
Vector jacobian_pullback(const Architecture& arch, const WeightVector& m, const Matrix& xs,
                         const Matrix& jacobian_cotangent);

// Scalar-generic single-point evaluation. Used with double and with dual
// numbers for Hessian-vector products.

template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

namespace detail {

inline double value_of(double x) { return x; }
template <typename Scalar>
double value_of(const Scalar& x) {
  return x.value();
}

}  // namespace detail

/// Gradient of output `k` at point `x` with respect to all weights.
template <typename Scalar>
VectorX<Scalar> output_gradient(const Architecture& arch, const VectorX<Scalar>& w,
                                const Eigen::Ref<const Vector>& x, int k) {
  using std::tanh;
  using RowMajor = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const auto layers = arch.layers();
  const std::size_t depth = layers.size();
  std::vector<VectorX<Scalar>> acts(depth);  // input to each layer
  acts[0] = x.cast<Scalar>();
  for (std::size_t l = 0; l + 1 < depth; ++l) {
    const auto& layer = layers[l];
    Eigen::Map<const RowMajor> weight(w.data() + layer.offset, layer.out, layer.in);
    Eigen::Map<const VectorX<Scalar>> bias(w.data() + layer.offset + layer.out * layer.in,
                                           layer.out);
    VectorX<Scalar> z = weight * acts[l] + bias;
    for (Eigen::Index o = 0; o < z.size(); ++o) {
      if (arch.activation == Activation::Tanh) {
        z[o] = tanh(z[o]);
      } else if (!(detail::value_of(z[o]) > 0.0)) {
        z[o] = Scalar(0.0);
      }
    }
    acts[l + 1] = std::move(z);
  }

  VectorX<Scalar> grad(w.size());
  VectorX<Scalar> delta = VectorX<Scalar>::Zero(layers.back().out);
  delta[k] = Scalar(1.0);
  for (std::size_t l = depth; l-- > 0;) {
    const auto& layer = layers[l];
    Eigen::Map<RowMajor> gw(grad.data() + layer.offset, layer.out, layer.in);
    gw.noalias() = delta * acts[l].transpose();
    grad.segment(layer.offset + layer.out * layer.in, layer.out) = delta;
    if (l == 0) break;
    Eigen::Map<const RowMajor> weight(w.data() + layer.offset, layer.out, layer.in);
    VectorX<Scalar> back = weight.transpose() * delta;
    const VectorX<Scalar>& a = acts[l];
    for (Eigen::Index j = 0; j < back.size(); ++j) {
      if (arch.activation == Activation::Tanh) {
        back[j] = back[j] * (Scalar(1.0) - a[j] * a[j]);
      } else if (!(detail::value_of(a[j]) > 0.0)) {
        back[j] = Scalar(0.0);
      }
    }
    delta = std::move(back);
  }
  return grad;
}

}  // namespace gfsvi
