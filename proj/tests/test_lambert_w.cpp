#include <cmath>
#include <numbers>

#include "doctest.h"
#include "mecache/lambert_w.hpp"

using namespace mecache;

TEST_SUITE("lambert_w") {

TEST_CASE("inverse identity holds on a log-spaced grid") {
  const double inv_e = 1.0 / std::numbers::e;
  double worst = 0;
  // Offsets above the branch point from 1e-9 up to 1/e, then x up to 1e6.
  for (int i = 0; i <= 400; ++i) {
    const double x = -inv_e + std::pow(10.0, -9.0 + 9.0 * i / 400.0) * inv_e;
    const double w = lambert_w0(x);
    worst = std::max(worst, std::abs(w * std::exp(w) - x));
    CHECK(w >= -1.0);
  }
  for (int i = 0; i <= 600; ++i) {
    const double x = std::pow(10.0, -12.0 + 18.0 * i / 600.0);
    const double w = lambert_w0(x);
    worst = std::max(worst, std::abs(w * std::exp(w) - x) / std::max(1.0, x));
  }
  CHECK(worst <= 1e-10);
}

TEST_CASE("known values") {
  CHECK(lambert_w0(0.0) == 0.0);
  CHECK(lambert_w0(std::numbers::e) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(lambert_w0(-1.0 / std::numbers::e) == -1.0);
  CHECK(lambert_w0(1.0) == doctest::Approx(0.5671432904097838).epsilon(1e-14));
  CHECK(lambert_w0(-0.3) ==
        doctest::Approx(-0.4894022271802149).epsilon(1e-13));
  CHECK(lambert_w0(1e6) == doctest::Approx(11.383358086140053).epsilon(1e-13));
  CHECK(lambert_w0(2 * std::exp(2.0)) == doctest::Approx(2.0).epsilon(1e-14));
}

TEST_CASE("domain handling") {
  CHECK_THROWS_AS(lambert_w0(-0.5), std::domain_error);
  CHECK(lambert_w0(-1.0 / std::numbers::e - 1e-13) == -1.0);
  CHECK(std::isnan(lambert_w0(std::nan(""))));
  CHECK(std::isinf(lambert_w0(INFINITY)));
}

TEST_CASE("float instantiation") {
  const float w = lambert_w0(1.0f);
  CHECK(w == doctest::Approx(0.567143f).epsilon(1e-5));
}

}
