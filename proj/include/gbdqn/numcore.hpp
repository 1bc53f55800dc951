#pragma once

// Dense feed-forward Q-network substrate: flat parameter vector, batched
// forward pass, exact backprop for the taken-action squared loss, global-norm
// clipping, Adam and Polyak blending.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gbdqn {

using Index = Eigen::Index;

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NetSpec {
  Index input_dim = 1;
  std::vector<Index> hidden{128, 128};
  Index output_dim = 1;

  void validate() const {
    if (input_dim < 1 || output_dim < 1 || hidden.empty())
      throw std::invalid_argument("NetSpec: dimensions must be >= 1 and hidden non-empty");
    for (Index h : hidden)
      if (h < 1) throw std::invalid_argument("NetSpec: hidden width must be >= 1");
  }

  Index layer_count() const { return static_cast<Index>(hidden.size()) + 1; }
  Index fan_in(Index layer) const { return layer == 0 ? input_dim : hidden[layer - 1]; }
  Index fan_out(Index layer) const {
    return layer == layer_count() - 1 ? output_dim : hidden[layer];
  }

  Index param_count() const {
    Index n = 0;
    for (Index l = 0; l < layer_count(); ++l) n += fan_in(l) * fan_out(l) + fan_out(l);
    return n;
  }

  bool operator==(const NetSpec&) const = default;
};

/// Feed-forward ReLU network stored as one flat, layer-ordered parameter
/// vector. Layer l occupies [W_l (column-major, fan_out x fan_in), b_l].
template <typename Scalar_>
class Mlp {
 public:
  using Scalar = Scalar_;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using MatrixMap = Eigen::Map<Matrix>;
  using ConstMatrixMap = Eigen::Map<const Matrix>;
  using VectorMap = Eigen::Map<Vector>;
  using ConstVectorMap = Eigen::Map<const Vector>;

  Mlp() = default;
  explicit Mlp(NetSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    theta_ = Vector::Zero(spec_.param_count());
    offsets_.reserve(spec_.layer_count());
    Index off = 0;
    for (Index l = 0; l < spec_.layer_count(); ++l) {
      offsets_.push_back(off);
      off += spec_.fan_in(l) * spec_.fan_out(l) + spec_.fan_out(l);
    }
  }

  const NetSpec& spec() const { return spec_; }
  Index layer_count() const { return spec_.layer_count(); }
  Index size() const { return theta_.size(); }

  Vector& params() { return theta_; }
  const Vector& params() const { return theta_; }

  MatrixMap weight(Index l) { return MatrixMap(theta_.data() + offsets_[l], spec_.fan_out(l), spec_.fan_in(l)); }
  ConstMatrixMap weight(Index l) const {
    return ConstMatrixMap(theta_.data() + offsets_[l], spec_.fan_out(l), spec_.fan_in(l));
  }
  VectorMap bias(Index l) { return VectorMap(theta_.data() + bias_offset(l), spec_.fan_out(l)); }
  ConstVectorMap bias(Index l) const {
    return ConstVectorMap(theta_.data() + bias_offset(l), spec_.fan_out(l));
  }

  Index weight_offset(Index l) const { return offsets_[l]; }
  Index bias_offset(Index l) const { return offsets_[l] + spec_.fan_in(l) * spec_.fan_out(l); }

 private:
  NetSpec spec_;
  Vector theta_;
  std::vector<Index> offsets_;
};

using Net = Mlp<double>;
using Vector = Net::Vector;
using Matrix = Net::Matrix;

/// He fan-in normal initialization, zero biases.
template <typename Scalar = double, typename Rng>
Mlp<Scalar> init_params(const NetSpec& spec, Rng& rng) {
  Mlp<Scalar> net(spec);
  for (Index l = 0; l < net.layer_count(); ++l) {
    std::normal_distribution<Scalar> dist(Scalar(0), std::sqrt(Scalar(2) / Scalar(spec.fan_in(l))));
    auto w = net.weight(l);
    for (Index j = 0; j < w.cols(); ++j)
      for (Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
  }
  return net;
}

namespace detail {

template <typename Scalar>
typename Mlp<Scalar>::Matrix forward_batch(const Mlp<Scalar>& net,
                                           const Eigen::Ref<const typename Mlp<Scalar>::Matrix>& states) {
  if (states.rows() != net.spec().input_dim)
    throw std::invalid_argument("forward: state dimension " + std::to_string(states.rows()) +
                                " does not match network input " +
                                std::to_string(net.spec().input_dim));
  typename Mlp<Scalar>::Matrix x = states;
  const Index last = net.layer_count() - 1;
  for (Index l = 0; l <= last; ++l) {
    typename Mlp<Scalar>::Matrix z = net.weight(l) * x;
    z.colwise() += net.bias(l);
    if (l < last) z = z.cwiseMax(Scalar(0));
    x = std::move(z);
  }
  return x;
}

}  // namespace detail

/// Forward pass. `states` holds one state per column and the result one
/// q-vector per column; a compile-time column vector yields a vector.
template <typename Scalar, typename Derived>
auto forward(const Mlp<Scalar>& net, const Eigen::MatrixBase<Derived>& states) {
  if constexpr (Derived::ColsAtCompileTime == 1) {
    return typename Mlp<Scalar>::Vector(
        detail::forward_batch<Scalar>(net, typename Mlp<Scalar>::Matrix(states)).col(0));
  } else {
    return detail::forward_batch<Scalar>(net, states);
  }
}

namespace detail {
template <typename Scalar>
void check_batch(const Mlp<Scalar>& net, Index batch, std::span<const int> actions, Index targets,
                 Index weights) {
  if (static_cast<Index>(actions.size()) != batch || targets != batch || weights != batch)
    throw std::invalid_argument("weighted loss: batch length mismatch");
  for (int a : actions)
    if (a < 0 || a >= net.spec().output_dim) throw std::invalid_argument("weighted loss: action out of range");
}
}  // namespace detail

/// Loss 1/2 sum_i w_i (target_i - q(s_i)[a_i])^2 and its exact gradient with
/// respect to the flat parameter vector.
template <typename Scalar>
Scalar weighted_mse_gradient(const Mlp<Scalar>& net,
                             const Eigen::Ref<const typename Mlp<Scalar>::Matrix>& states,
                             std::span<const int> actions,
                             const Eigen::Ref<const typename Mlp<Scalar>::Vector>& targets,
                             const Eigen::Ref<const typename Mlp<Scalar>::Vector>& weights,
                             typename Mlp<Scalar>::Vector& grad) {
  using Matrix = typename Mlp<Scalar>::Matrix;
  const Index batch = states.cols();
  detail::check_batch(net, batch, actions, targets.size(), weights.size());
  if (states.rows() != net.spec().input_dim) throw std::invalid_argument("weighted loss: state dimension mismatch");

  const Index layers = net.layer_count();
  std::vector<Matrix> acts;  // acts[l] = input to layer l
  acts.reserve(layers + 1);
  acts.push_back(states);
  for (Index l = 0; l < layers; ++l) {
    Matrix z = net.weight(l) * acts.back();
    z.colwise() += net.bias(l);
    if (l < layers - 1) z = z.cwiseMax(Scalar(0));
    acts.push_back(std::move(z));
  }

  const Matrix& q = acts.back();
  Matrix delta = Matrix::Zero(q.rows(), batch);
  Scalar loss = 0;
  for (Index i = 0; i < batch; ++i) {
    const Scalar err = q(actions[i], i) - targets[i];
    loss += Scalar(0.5) * weights[i] * err * err;
    delta(actions[i], i) = weights[i] * err;
  }

  grad.setZero(net.size());
  for (Index l = layers - 1; l >= 0; --l) {
    Eigen::Map<Matrix> gw(grad.data() + net.weight_offset(l), net.spec().fan_out(l), net.spec().fan_in(l));
    gw.noalias() = delta * acts[l].transpose();
    grad.segment(net.bias_offset(l), net.spec().fan_out(l)) = delta.rowwise().sum();
    if (l > 0) {
      Matrix back = net.weight(l).transpose() * delta;
      delta = (acts[l].array() > Scalar(0)).select(back, Scalar(0));
    }
  }

  if (!std::isfinite(loss) || !grad.allFinite()) throw NumericError("weighted loss: non-finite loss or gradient");
  return loss;
}

/// Rescales `grad` so its 2-norm does not exceed `max_norm`.
template <typename Derived>
typename Derived::PlainObject clip_global_norm(const Eigen::MatrixBase<Derived>& grad,
                                               typename Derived::Scalar max_norm) {
  if (!(max_norm > 0)) throw std::invalid_argument("clip_global_norm: max_norm must be > 0");
  const auto norm = grad.norm();
  if (norm <= max_norm) return grad;
  return grad * (max_norm / norm);
}

template <typename Scalar>
void polyak_update(Mlp<Scalar>& target, const Mlp<Scalar>& online, Scalar tau) {
  if (!(tau > 0 && tau <= 1)) throw std::invalid_argument("polyak_update: tau must be in (0,1]");
  if (target.spec() != online.spec()) throw std::invalid_argument("polyak_update: shape mismatch");
  if (tau == Scalar(1)) {
    target.params() = online.params();
    return;
  }
  target.params() = (Scalar(1) - tau) * target.params() + tau * online.params();
}

template <typename Scalar_>
struct AdamState {
  using Scalar = Scalar_;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Scalar lr = Scalar(1e-3);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
  Vector m;
  Vector v;
  std::int64_t step = 0;

  AdamState() = default;
  AdamState(Index size, Scalar learning_rate) : lr(learning_rate), m(Vector::Zero(size)), v(Vector::Zero(size)) {}

  void apply(Vector& params, const Vector& grad) {
    if (m.size() != params.size()) {
      m = Vector::Zero(params.size());
      v = Vector::Zero(params.size());
    }
    ++step;
    m = beta1 * m + (Scalar(1) - beta1) * grad;
    v = beta2 * v + (Scalar(1) - beta2) * grad.cwiseAbs2();
    const Scalar c1 = Scalar(1) - std::pow(beta1, Scalar(step));
    const Scalar c2 = Scalar(1) - std::pow(beta2, Scalar(step));
    params.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
    if (!params.allFinite()) throw NumericError("adam: parameters became non-finite");
  }
};

using Adam = AdamState<double>;

/// One clipped Adam step on the taken-action weighted squared loss. Returns
/// the loss evaluated before the update.
template <typename Scalar>
Scalar weighted_mse_grad_step(Mlp<Scalar>& net, AdamState<Scalar>& opt,
                              const Eigen::Ref<const typename Mlp<Scalar>::Matrix>& states,
                              std::span<const int> actions,
                              const Eigen::Ref<const typename Mlp<Scalar>::Vector>& targets,
                              const Eigen::Ref<const typename Mlp<Scalar>::Vector>& weights,
                              Scalar clip_norm) {
  if ((weights.array() < Scalar(0)).any()) throw std::invalid_argument("weighted loss: negative weight");
  typename Mlp<Scalar>::Vector grad;
  const Scalar loss = weighted_mse_gradient(net, states, actions, targets, weights, grad);
  opt.apply(net.params(), clip_global_norm(grad, clip_norm));
  return loss;
}

}  // namespace gbdqn
