#include <cmath>
#include <random>

#include "doctest.h"
#include "mecache/mlp.hpp"

using namespace mecache;
using Net = Mlp<double>;

namespace {

Eigen::MatrixXd random_matrix(int r, int c, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd m(r, c);
  for (int j = 0; j < c; ++j) {
    for (int i = 0; i < r; ++i) m(i, j) = g(rng);
  }
  return m;
}

}  // namespace

TEST_SUITE("mlp") {

TEST_CASE("backpropagation matches central finite differences") {
  std::mt19937_64 rng(1);
  Net net = Net::glorot({4, 3, 2}, rng);
  const Eigen::MatrixXd X = random_matrix(4, 5, rng);
  Eigen::MatrixXd Y = (random_matrix(2, 5, rng).array() > 0).cast<double>();
  const auto g = net.backward(X, Y);
  CHECK(g.loss == doctest::Approx(net.loss(X, Y)).epsilon(1e-14));

  const double h = 1e-6;
  double worst = 0;
  auto probe = [&](double& param, double analytic) {
    const double keep = param;
    param = keep + h;
    const double up = net.loss(X, Y);
    param = keep - h;
    const double down = net.loss(X, Y);
    param = keep;
    const double fd = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(fd - analytic) /
                                std::max(1e-3, std::abs(fd) + std::abs(analytic)));
  };
  for (int i = 0; i < net.num_layers(); ++i) {
    auto& W = net.weights()[i];
    for (int c = 0; c < W.cols(); ++c) {
      for (int r = 0; r < W.rows(); ++r) probe(W(r, c), g.weights[i](r, c));
    }
    auto& b = net.biases()[i];
    for (int r = 0; r < b.size(); ++r) probe(b[r], g.biases[i][r]);
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("forward pass is ReLU then sigmoid") {
  Net net({2, 2, 1});
  net.weights()[0] << 1, 0, 0, -1;
  net.biases()[0] << 0, 0;
  net.weights()[1] << 2, 3;
  net.biases()[1] << -1;
  const Eigen::Vector2d x(0.5, 0.7);
  // hidden = (0.5, max(-0.7, 0)) = (0.5, 0); logit = 1 - 1 = 0.
  CHECK(net.logits(Eigen::VectorXd(x))[0] == doctest::Approx(0.0));
  CHECK(net.forward(Eigen::VectorXd(x))[0] == doctest::Approx(0.5));
  CHECK(Net::sigmoid(-800.0) >= 0.0);
  CHECK(Net::sigmoid(800.0) == 1.0);
  CHECK_THROWS_AS(net.logits(Eigen::VectorXd(Eigen::VectorXd::Zero(3))), std::invalid_argument);
}

TEST_CASE("momentum update unrolls to eta g (1 + (1 + m) + (1 + m + m^2))") {
  Net net({1, 1});
  auto vel = net.zero_gradient();
  auto g = net.zero_gradient();
  g.weights[0](0, 0) = 2.0;
  g.biases[0][0] = -1.0;
  const MomentumConfig mc{0.1, 0.9};
  for (int i = 0; i < 3; ++i) sgd_momentum_step(net, g, vel, mc);
  const double factor = 1 + 1.9 + (1 + 0.9 + 0.81);
  CHECK(net.weights()[0](0, 0) == doctest::Approx(-0.1 * 2.0 * factor));
  CHECK(net.biases()[0][0] == doctest::Approx(0.1 * factor));
}

TEST_CASE("glorot init is bounded and seeded") {
  std::mt19937_64 a(9), b(9);
  const Net n1 = Net::glorot({30, 160, 120, 80, 10}, a);
  const Net n2 = Net::glorot({30, 160, 120, 80, 10}, b);
  CHECK(n1.weights()[0] == n2.weights()[0]);
  const double lim = std::sqrt(6.0 / (30 + 160));
  CHECK(n1.weights()[0].cwiseAbs().maxCoeff() <= lim);
  CHECK(n1.biases()[2].isZero());
  CHECK(n1.finite());
  CHECK(n1.input_size() == 30);
  CHECK(n1.output_size() == 10);
}

TEST_CASE("training on a separable toy problem lowers the loss") {
  std::mt19937_64 rng(4);
  Net net = Net::glorot({2, 8, 1}, rng);
  Eigen::MatrixXd X = random_matrix(2, 64, rng);
  Eigen::MatrixXd Y = (X.row(0).array() > X.row(1).array()).cast<double>();
  auto vel = net.zero_gradient();
  const double before = net.loss(X, Y);
  for (int i = 0; i < 500; ++i) {
    sgd_momentum_step(net, net.backward(X, Y), vel, {0.1, 0.9});
  }
  CHECK(net.loss(X, Y) < 0.3 * before);
}

}
