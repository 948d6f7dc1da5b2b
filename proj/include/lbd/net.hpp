#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lbd/errors.hpp"

namespace lbd {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowMajorMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Flat parameters of one network.
using ParamVector = Eigen::VectorXd;

/// Layer sizes of a tanh MLP with a linear log-softmax head.
///
/// Flat parameter layout, fixed across runs: for each layer in order, the
/// weight matrix (out x in, row-major) followed by the bias vector (out).
struct NetShape {
  Index input_dim = 0;
  std::vector<Index> hidden_dims;
  Index num_classes = 0;

  Index num_layers() const { return static_cast<Index>(hidden_dims.size()) + 1; }
  Index layer_in(Index layer) const;
  Index layer_out(Index layer) const;
  /// Offset of the layer's weight block in the flat vector.
  Index layer_offset(Index layer) const;
  Index param_count() const;

  /// Throws InputError unless all sizes are positive and num_classes >= 2.
  void validate() const;

  bool operator==(const NetShape&) const = default;
};

/// Draws weights and biases uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
ParamVector init_params(const NetShape& shape, std::uint64_t seed);

namespace detail {

template <typename Scalar>
using ConstLayerMap = Eigen::Map<const RowMajorMatrix<Scalar>>;

template <typename Derived>
void check_params(const NetShape& shape, const Eigen::MatrixBase<Derived>& params) {
  if (params.cols() != 1 || params.rows() != shape.param_count()) {
    throw InputError("parameter vector has length " + std::to_string(params.size()) + ", expected " +
                     std::to_string(shape.param_count()));
  }
}

template <typename Scalar>
void log_softmax_rows(Matrix<Scalar>& z) {
  using std::exp;
  using std::log;
  for (Index r = 0; r < z.rows(); ++r) {
    const Scalar peak = z.row(r).maxCoeff();
    Scalar total(0);
    for (Index c = 0; c < z.cols(); ++c) total += exp(z(r, c) - peak);
    const Scalar shift = peak + log(total);
    z.row(r).array() -= shift;
  }
}

}  // namespace detail

/// Activations recorded by a batched forward pass. `layer_inputs[l]` is the
/// B x in_l input to layer l; `logprobs` is B x K.
template <typename Scalar>
struct ForwardTape {
  std::vector<Matrix<Scalar>> layer_inputs;
  Matrix<Scalar> logprobs;
};

/// Batched forward pass over the rows of `inputs` (B x input_dim).
template <typename ParamDerived, typename InputDerived>
ForwardTape<typename ParamDerived::Scalar> forward_tape(const NetShape& shape,
                                                        const Eigen::MatrixBase<ParamDerived>& params,
                                                        const Eigen::MatrixBase<InputDerived>& inputs) {
  using Scalar = typename ParamDerived::Scalar;
  using std::tanh;
  detail::check_params(shape, params);
  if (inputs.cols() != shape.input_dim) {
    throw InputError("input has " + std::to_string(inputs.cols()) + " features, expected " +
                     std::to_string(shape.input_dim));
  }
  const Vector<Scalar> flat = params;
  ForwardTape<Scalar> tape;
  tape.layer_inputs.reserve(static_cast<std::size_t>(shape.num_layers()));
  Matrix<Scalar> act = inputs.template cast<Scalar>();
  for (Index l = 0; l < shape.num_layers(); ++l) {
    const Index in = shape.layer_in(l);
    const Index out = shape.layer_out(l);
    const Index off = shape.layer_offset(l);
    detail::ConstLayerMap<Scalar> weight(flat.data() + off, out, in);
    Eigen::Map<const Vector<Scalar>> bias(flat.data() + off + out * in, out);
    Matrix<Scalar> pre = act * weight.transpose();
    pre.rowwise() += bias.transpose();
    tape.layer_inputs.push_back(std::move(act));
    if (l + 1 < shape.num_layers()) {
      act = pre.unaryExpr([](const Scalar& v) { return Scalar(tanh(v)); });
    } else {
      detail::log_softmax_rows(pre);
      tape.logprobs = std::move(pre);
    }
  }
  return tape;
}

/// Log-probabilities for every row of `inputs`; returns B x K.
template <typename ParamDerived, typename InputDerived>
Matrix<typename ParamDerived::Scalar> forward_logprobs_batch(const NetShape& shape,
                                                             const Eigen::MatrixBase<ParamDerived>& params,
                                                             const Eigen::MatrixBase<InputDerived>& inputs) {
  return forward_tape(shape, params, inputs).logprobs;
}

/// Log-probabilities log p(y | x, params) for a single feature vector.
template <typename ParamDerived, typename InputDerived>
Vector<typename ParamDerived::Scalar> forward_logprobs(const NetShape& shape,
                                                       const Eigen::MatrixBase<ParamDerived>& params,
                                                       const Eigen::MatrixBase<InputDerived>& x) {
  if (x.cols() != 1) throw InputError("feature vector must be a column");
  return forward_tape(shape, params, x.transpose()).logprobs.row(0).transpose();
}

/// Gradient of sum_b cotangents.row(b) . logprobs.row(b) with respect to the
/// flat parameters, given a tape from forward_tape with the same params.
template <typename ParamDerived, typename CotDerived>
Vector<typename ParamDerived::Scalar> backward_from_tape(const NetShape& shape,
                                                         const Eigen::MatrixBase<ParamDerived>& params,
                                                         const ForwardTape<typename ParamDerived::Scalar>& tape,
                                                         const Eigen::MatrixBase<CotDerived>& cotangents) {
  using Scalar = typename ParamDerived::Scalar;
  if (cotangents.rows() != tape.logprobs.rows() || cotangents.cols() != shape.num_classes) {
    throw InputError("cotangent must be " + std::to_string(tape.logprobs.rows()) + " x " +
                     std::to_string(shape.num_classes));
  }
  const Vector<Scalar> flat = params;
  Vector<Scalar> grad = Vector<Scalar>::Zero(shape.param_count());

  // d/dz of log_softmax(z) applied to c is c - softmax(z) * sum(c).
  const Matrix<Scalar> probs = tape.logprobs.array().exp().matrix();
  Matrix<Scalar> delta = cotangents.template cast<Scalar>();
  const Vector<Scalar> cot_sums = delta.rowwise().sum();
  delta -= (probs.array().colwise() * cot_sums.array()).matrix();

  for (Index l = shape.num_layers() - 1; l >= 0; --l) {
    const Index in = shape.layer_in(l);
    const Index out = shape.layer_out(l);
    const Index off = shape.layer_offset(l);
    const Matrix<Scalar>& layer_input = tape.layer_inputs[static_cast<std::size_t>(l)];
    Eigen::Map<RowMajorMatrix<Scalar>> grad_weight(grad.data() + off, out, in);
    Eigen::Map<Vector<Scalar>> grad_bias(grad.data() + off + out * in, out);
    grad_weight.noalias() = delta.transpose() * layer_input;
    grad_bias = delta.colwise().sum().transpose();
    if (l > 0) {
      detail::ConstLayerMap<Scalar> weight(flat.data() + off, out, in);
      Matrix<Scalar> upstream = delta * weight;
      delta = (upstream.array() * (Scalar(1) - layer_input.array().square())).matrix();
    }
  }
  return grad;
}

/// Batched backward pass; the gradient is summed over rows.
template <typename ParamDerived, typename InputDerived, typename CotDerived>
Vector<typename ParamDerived::Scalar> backward_batch(const NetShape& shape,
                                                     const Eigen::MatrixBase<ParamDerived>& params,
                                                     const Eigen::MatrixBase<InputDerived>& inputs,
                                                     const Eigen::MatrixBase<CotDerived>& cotangents) {
  const auto tape = forward_tape(shape, params, inputs);
  return backward_from_tape(shape, params, tape, cotangents);
}

/// Gradient of cotangent . forward_logprobs(shape, params, x).
template <typename ParamDerived, typename InputDerived, typename CotDerived>
Vector<typename ParamDerived::Scalar> backward(const NetShape& shape, const Eigen::MatrixBase<ParamDerived>& params,
                                               const Eigen::MatrixBase<InputDerived>& x,
                                               const Eigen::MatrixBase<CotDerived>& cotangent) {
  if (x.cols() != 1 || cotangent.cols() != 1) throw InputError("feature and cotangent vectors must be columns");
  if (cotangent.rows() != shape.num_classes) {
    throw InputError("cotangent has length " + std::to_string(cotangent.rows()) + ", expected " +
                     std::to_string(shape.num_classes));
  }
  return backward_batch(shape, params, x.transpose(), cotangent.transpose());
}

}  // namespace lbd
