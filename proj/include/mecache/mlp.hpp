#pragma once

// Fully connected network with ReLU hidden layers and a sigmoid output layer,
// trained on the mean-square error with classical momentum.

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace mecache {

template <class Scalar>
struct MlpGradient {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  std::vector<Matrix> weights;
  std::vector<Vector> biases;
  Scalar loss = Scalar(0);  // batch MSE at the evaluated parameters
};

template <class Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Gradient = MlpGradient<Scalar>;

  Mlp() = default;

  // dims = {input, hidden..., output}; all parameters zero.
  explicit Mlp(std::vector<int> dims) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw std::invalid_argument("mlp needs two layers");
    for (int d : dims_) {
      if (d < 1) throw std::invalid_argument("mlp layer width must be >= 1");
    }
    for (std::size_t i = 0; i + 1 < dims_.size(); ++i) {
      weights_.push_back(Matrix::Zero(dims_[i + 1], dims_[i]));
      biases_.push_back(Vector::Zero(dims_[i + 1]));
    }
  }

  // Glorot-uniform weights, zero biases.
  template <class Rng>
  static Mlp glorot(std::vector<int> dims, Rng& rng) {
    Mlp m(std::move(dims));
    for (auto& W : m.weights_) {
      const double limit = std::sqrt(6.0 / static_cast<double>(W.rows() + W.cols()));
      std::uniform_real_distribution<double> u(-limit, limit);
      for (Eigen::Index j = 0; j < W.cols(); ++j) {
        for (Eigen::Index i = 0; i < W.rows(); ++i) {
          W(i, j) = static_cast<Scalar>(u(rng));
        }
      }
    }
    return m;
  }

  const std::vector<int>& dims() const { return dims_; }
  int num_layers() const { return static_cast<int>(weights_.size()); }
  int input_size() const { return dims_.front(); }
  int output_size() const { return dims_.back(); }

  std::vector<Matrix>& weights() { return weights_; }
  const std::vector<Matrix>& weights() const { return weights_; }
  std::vector<Vector>& biases() { return biases_; }
  const std::vector<Vector>& biases() const { return biases_; }

  // Output-layer pre-activations for a batch stored column-wise.
  Matrix logits(const Matrix& X) const {
    check_input(X);
    Matrix a = X;
    for (int i = 0; i < num_layers(); ++i) {
      Matrix z = (weights_[i] * a).colwise() + biases_[i];
      if (i + 1 < num_layers()) z = z.cwiseMax(Scalar(0));
      a = std::move(z);
    }
    return a;
  }

  Vector logits(const Vector& x) const { return logits(Matrix(x)).col(0); }

  static Matrix sigmoid(const Matrix& z) {
    return z.unaryExpr([](Scalar v) { return sigmoid(v); });
  }
  static Scalar sigmoid(Scalar v) {
    using std::exp;
    // Branches keep exp from overflowing.
    if (v >= Scalar(0)) return Scalar(1) / (Scalar(1) + exp(-v));
    const Scalar e = exp(v);
    return e / (Scalar(1) + e);
  }

  Matrix forward(const Matrix& X) const { return sigmoid(logits(X)); }
  Vector forward(const Vector& x) const { return forward(Matrix(x)).col(0); }

  // (1/n) sum_i ||y_i - f(x_i)||^2 over the n batch columns.
  Scalar loss(const Matrix& X, const Matrix& Y) const {
    return (Y - forward(X)).squaredNorm() / static_cast<Scalar>(X.cols());
  }

  Gradient backward(const Matrix& X, const Matrix& Y) const {
    check_input(X);
    if (X.cols() == 0) throw std::invalid_argument("empty batch");
    if (Y.rows() != output_size() || Y.cols() != X.cols()) {
      throw std::invalid_argument("label shape does not match the network");
    }
    const int n = num_layers();
    std::vector<Matrix> acts;  // acts[i] is the input to layer i
    acts.reserve(n + 1);
    acts.push_back(X);
    for (int i = 0; i < n; ++i) {
      Matrix z = (weights_[i] * acts.back()).colwise() + biases_[i];
      acts.push_back(i + 1 < n ? Matrix(z.cwiseMax(Scalar(0))) : sigmoid(z));
    }
    const Scalar inv_n = Scalar(1) / static_cast<Scalar>(X.cols());
    const Matrix& out = acts.back();
    Gradient g;
    g.loss = (Y - out).squaredNorm() * inv_n;
    g.weights.resize(n);
    g.biases.resize(n);
    // dL/dz at the output: 2 (f - y) f (1 - f) / n.
    Matrix delta = (Scalar(2) * inv_n) *
                   ((out - Y).array() * out.array() * (Scalar(1) - out.array()))
                       .matrix();
    for (int i = n - 1; i >= 0; --i) {
      g.weights[i].noalias() = delta * acts[i].transpose();
      g.biases[i] = delta.rowwise().sum();
      if (i > 0) {
        Matrix back = weights_[i].transpose() * delta;
        delta = (back.array() * (acts[i].array() > Scalar(0)).template cast<Scalar>())
                    .matrix();
      }
    }
    return g;
  }

  Gradient zero_gradient() const {
    Gradient g;
    for (int i = 0; i < num_layers(); ++i) {
      g.weights.push_back(Matrix::Zero(weights_[i].rows(), weights_[i].cols()));
      g.biases.push_back(Vector::Zero(biases_[i].size()));
    }
    return g;
  }

  bool finite() const {
    for (int i = 0; i < num_layers(); ++i) {
      if (!weights_[i].allFinite() || !biases_[i].allFinite()) return false;
    }
    return true;
  }

 private:
  void check_input(const Matrix& X) const {
    if (X.rows() != input_size()) {
      throw std::invalid_argument("input width does not match the network");
    }
  }

  std::vector<int> dims_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

struct MomentumConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
};

// velocity <- m velocity + grad; theta <- theta - eta velocity.
template <class Scalar>
void sgd_momentum_step(Mlp<Scalar>& net, const MlpGradient<Scalar>& grad,
                       MlpGradient<Scalar>& velocity, const MomentumConfig& c) {
  const Scalar m = static_cast<Scalar>(c.momentum);
  const Scalar eta = static_cast<Scalar>(c.learning_rate);
  for (int i = 0; i < net.num_layers(); ++i) {
    velocity.weights[i] = m * velocity.weights[i] + grad.weights[i];
    velocity.biases[i] = m * velocity.biases[i] + grad.biases[i];
    net.weights()[i] -= eta * velocity.weights[i];
    net.biases()[i] -= eta * velocity.biases[i];
  }
}

}  // namespace mecache
