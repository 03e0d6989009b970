#pragma once

// Deep-cut ellipsoid method for maximizing a concave function over a box-free
// domain described by separation oracles.

#include <cmath>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

namespace mecache {

// E = { y : (y - c)^T P^{-1} (y - c) <= 1 }.
template <class Scalar>
struct Ellipsoid {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Vector center;
  Matrix shape;  // symmetric positive definite

  static Ellipsoid ball(const Vector& c, Scalar radius) {
    return {c, Matrix::Identity(c.size(), c.size()) * radius * radius};
  }
  static Ellipsoid axis_aligned(const Vector& c, const Vector& radii) {
    return {c, radii.array().square().matrix().asDiagonal()};
  }

  int dimension() const { return static_cast<int>(center.size()); }

  // Half-width of E along direction a: max_{y in E} a^T (y - c).
  Scalar support(const Vector& a) const {
    using std::sqrt;
    return sqrt((a.transpose() * shape * a).value());
  }
};

enum class CutResult { updated, empty };

// Replaces E with the minimum-volume ellipsoid containing
// E intersect { y : a^T (y - c) <= -depth }. depth >= 0 gives a deep cut,
// depth = 0 a central cut. Returns empty when the half-space misses E.
template <class Scalar>
CutResult cut(Ellipsoid<Scalar>& e,
              const typename Ellipsoid<Scalar>::Vector& a, Scalar depth) {
  using std::sqrt;
  const Scalar n = static_cast<Scalar>(e.dimension());
  if (n < 2) throw std::invalid_argument("ellipsoid cut needs dimension >= 2");
  const typename Ellipsoid<Scalar>::Vector Pa = e.shape * a;
  const Scalar aPa = a.dot(Pa);
  if (!(aPa > Scalar(0))) return CutResult::empty;
  const Scalar s = sqrt(aPa);
  const Scalar alpha = depth / s;
  if (alpha >= Scalar(1)) return CutResult::empty;
  const Scalar tau = (Scalar(1) + n * alpha) / (n + Scalar(1));
  const Scalar delta = n * n * (Scalar(1) - alpha * alpha) / (n * n - Scalar(1));
  const Scalar gamma = Scalar(2) * tau / (Scalar(1) + alpha);
  const typename Ellipsoid<Scalar>::Vector b = Pa / s;
  e.center.noalias() -= tau * b;
  e.shape = delta * (e.shape - gamma * b * b.transpose());
  e.shape = Scalar(0.5) * (e.shape + e.shape.transpose());
  return CutResult::updated;
}

}  // namespace mecache
