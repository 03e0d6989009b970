#include <cmath>

#include "doctest.h"
#include "mecache/energy.hpp"

using namespace mecache;

namespace {

Scenario small_scenario(std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.num_services = 2;
  cfg.num_locations = 2;
  cfg.distances_km = {0.03, 0.05};
  return sample_scenario(cfg, seed);
}

ResourceAllocation some_allocation(const Scenario& s) {
  auto a = ResourceAllocation::zeros(2, 2);
  a.alpha_off << 0.4, 0.6;
  a.alpha_dl << 0.3, 0.7;
  a.t_c << 1.1, 1.3;
  a.t_off << 0.2, 0.3, 0.25, 0.35;
  a.t_dl << 0.4, 0.5, 0.45, 0.55;
  (void)s;
  return a;
}

}  // namespace

TEST_SUITE("energy") {

TEST_CASE("link rate is alpha B log2(1 + p g / alpha)") {
  CHECK(link_rate(0.5, 0.25, 4000.0, 1e7) ==
        doctest::Approx(0.5 * 1e7 * std::log2(1.0 + 0.25 * 4000.0 / 0.5)));
  CHECK(link_rate(0.0, 1.0, 1.0, 1e7) == 0.0);
  CHECK(link_rate(-0.1, 1.0, 1.0, 1e7) == 0.0);
  // Concave and increasing in alpha.
  const double r1 = link_rate(0.2, 1.0, 100.0, 1.0);
  const double r2 = link_rate(0.4, 1.0, 100.0, 1.0);
  const double r3 = link_rate(0.6, 1.0, 100.0, 1.0);
  CHECK(r2 > r1);
  CHECK(r2 - r1 > r3 - r2);
}

TEST_CASE("expected energy matches the hand-expanded sum") {
  const Scenario s = small_scenario(3);
  const auto a = some_allocation(s);
  const auto& c = s.constants;
  const auto& P = s.preferences.pmf;
  const auto& ord = s.channels.downlink_order;

  for (int mask = 0; mask < 4; ++mask) {
    const auto I = CachingDecision::from_mask(2, mask);
    double ec = 0, edl = 0;
    Eigen::Vector2d eoff = Eigen::Vector2d::Zero();
    for (int l = 0; l < 2; ++l) {
      const double p0 = P(l, 0), p1 = P(l, 1);
      const double req = 1 - (1 - p0) * (1 - p1);
      const double off[2] = {p0, (1 - p0) * p1};
      const double pa = P(l, ord[0]), pb = P(l, ord[1]);
      const double bc[2] = {pa * (1 - pb), pb};
      if (!I[l]) {
        const double cyc = s.services[l].cycles_per_bit * s.services[l].input_bits;
        ec += c.capacitance * std::pow(cyc, 3) / std::pow(a.t_c[l], 2) * req;
        for (int k = 0; k < 2; ++k) {
          eoff[k] += c.tx_power_user_w[k] * a.t_off(l, k) * off[k];
        }
      }
      for (int j = 0; j < 2; ++j) edl += c.tx_power_bs_w[l] * a.t_dl(l, j) * bc[j];
    }
    const auto e = expected_energy(s, I, a);
    CHECK(e.compute == doctest::Approx(ec).epsilon(1e-13));
    CHECK(e.download == doctest::Approx(edl).epsilon(1e-13));
    CHECK(e.offload[0] == doctest::Approx(eoff[0]).epsilon(1e-13));
    CHECK(e.offload[1] == doctest::Approx(eoff[1]).epsilon(1e-13));
    const double w = c.weight_bs * (ec + edl) + c.weight_user.dot(eoff);
    CHECK(e.weighted_total == doctest::Approx(w).epsilon(1e-13));
    CHECK(service_energy(s, I, a).sum() == doctest::Approx(w).epsilon(1e-13));
  }
}

TEST_CASE("weights follow the reference split") {
  const Scenario s = small_scenario(1);
  CHECK(s.constants.weight_bs == 0.5);
  CHECK(s.constants.weight_user[0] == doctest::Approx(0.25));
  CHECK(s.constants.weight_user[1] == doctest::Approx(0.25));
}

TEST_CASE("feasibility check flags each violated constraint") {
  const Scenario s = small_scenario(5);
  const auto I = CachingDecision(2);
  auto a = ResourceAllocation::zeros(2, 2);
  a.alpha_off << 0.5, 0.5;
  a.alpha_dl << 0.5, 0.5;
  const auto& c = s.constants;
  for (int l = 0; l < 2; ++l) {
    const auto& sv = s.services[l];
    for (int k = 0; k < 2; ++k) {
      a.t_off(l, k) = sv.input_bits / offload_rate(0.5, c.tx_power_user_w[k],
                                                   s.channels.uplink[k],
                                                   c.bandwidth_off_hz);
      a.t_dl(l, k) = sv.output_bits /
                     download_rate(0.5, c.tx_power_bs_w[l],
                                   s.channels.downlink[s.channels.downlink_order[k]],
                                   c.bandwidth_dl_hz);
    }
    a.t_c[l] = sv.cycles() / c.max_core_freq_hz * 1.01;
  }
  const auto ok = check_feasible(s, I, a, 1e-9);
  // Whether the deadline holds depends on the draw; every other group holds.
  for (const auto& v : ok.violations) CHECK(v.constraint == "deadline");

  auto slow = a;
  slow.t_c[0] = s.services[0].cycles() / c.max_core_freq_hz * 0.5;
  bool freq = false;
  for (const auto& v : check_feasible(s, I, slow).violations) {
    freq |= v.constraint == "frequency" && v.service == 0;
  }
  CHECK(freq);

  auto fast = a;
  fast.t_off(1, 0) *= 0.9;
  bool rate = false;
  for (const auto& v : check_feasible(s, I, fast).violations) {
    rate |= v.constraint == "offload_rate" && v.service == 1 && v.location == 0;
  }
  CHECK(rate);

  auto band = a;
  band.alpha_dl << 0.6, 0.6;
  bool bw = false;
  for (const auto& v : check_feasible(s, I, band).violations) {
    bw |= v.constraint == "download_bandwidth";
  }
  CHECK(bw);

  auto late = a;
  late.t_c[1] = 10.0;
  bool dl = false;
  for (const auto& v : check_feasible(s, I, late).violations) {
    dl |= v.constraint == "deadline" && v.service == 1;
  }
  CHECK(dl);
}

TEST_CASE("capacity is checked against cached output sizes") {
  ScenarioConfig cfg;
  cfg.cache_capacity_bits = 50e6;
  const Scenario s = sample_scenario(cfg, 2);
  auto a = ResourceAllocation::zeros(10, 5);
  const auto two = CachingDecision::from_string("1100000000");
  const auto three = CachingDecision::from_string("1110000000");
  CHECK(capacity_feasible(s, two));
  CHECK_FALSE(capacity_feasible(s, three));
  CHECK(two.cached_bits(s) ==
        doctest::Approx(s.services[0].output_bits + s.services[1].output_bits));
  CHECK(two.str() == "1100000000");
  CHECK(two.mask() == 3);
  CHECK(CachingDecision::from_mask(10, 3) == two);
  CHECK(CachingDecision::ones(10).count() == 10);
}

TEST_CASE("zero compute time for an active service is rejected") {
  const Scenario s = small_scenario(3);
  auto a = some_allocation(s);
  a.t_c[0] = 0;
  CHECK_THROWS_AS(expected_energy(s, CachingDecision(2), a), std::domain_error);
  CHECK_NOTHROW(expected_energy(s, CachingDecision::from_string("10"), a));
}

}
