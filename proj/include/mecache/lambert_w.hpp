#pragma once

// Principal branch of the Lambert W function.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace mecache {

// Returns w >= -1 with w e^w = x. Inputs within 1e-12 below -1/e are treated
// as the branch point.
template <class Scalar>
Scalar lambert_w0(Scalar x) {
  using std::abs;
  using std::exp;
  using std::log;
  using std::sqrt;
  const Scalar inv_e = Scalar(1) / std::numbers::e_v<Scalar>;
  if (std::isnan(x)) return x;
  if (x < -inv_e) {
    if (x < -inv_e - Scalar(1e-12)) {
      throw std::domain_error("lambert_w0 requires x >= -1/e");
    }
    return Scalar(-1);
  }
  if (x == Scalar(0)) return Scalar(0);
  if (std::isinf(x)) return x;

  // Initial guess: branch-point series near -1/e, log asymptotics for large x.
  Scalar w;
  const Scalar q = x + inv_e;
  if (q < Scalar(0.3)) {
    const Scalar p = sqrt(Scalar(2) * std::numbers::e_v<Scalar> * q);
    w = Scalar(-1) + p - p * p / Scalar(3) + Scalar(11) / Scalar(72) * p * p * p;
  } else if (x < Scalar(3)) {
    w = log(Scalar(1) + x) * (Scalar(1) - log(Scalar(1) + log(Scalar(1) + x)) /
                                              (Scalar(2) + log(Scalar(1) + x)));
  } else {
    const Scalar l1 = log(x);
    const Scalar l2 = log(l1);
    w = l1 - l2 + l2 / l1;
  }
  if (w == Scalar(-1)) return w;

  const Scalar tol = Scalar(1e-12) * std::max(Scalar(1), abs(x));
  for (int it = 0; it < 64; ++it) {
    const Scalar ew = exp(w);
    const Scalar f = w * ew - x;
    if (abs(f) <= tol * Scalar(1e-2)) break;
    const Scalar wp1 = w + Scalar(1);
    if (wp1 == Scalar(0)) break;
    // Halley step.
    const Scalar step =
        f / (ew * wp1 - (w + Scalar(2)) * f / (Scalar(2) * wp1));
    Scalar next = w - step;
    if (next < Scalar(-1)) next = (w + Scalar(-1)) / Scalar(2);
    if (next == w) break;
    w = next;
  }
  return w;
}

}  // namespace mecache
