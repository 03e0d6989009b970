#include <cmath>

#include "doctest.h"
#include "mecache/baselines.hpp"

using namespace mecache;

namespace {

ScenarioConfig base_config() {
  ScenarioConfig cfg;
  cfg.deadline_s = 3.2;
  return cfg;
}

}  // namespace

TEST_SUITE("baselines") {

TEST_CASE("per-scenario ordering: all <= optimal <= greedy, popular <= no") {
  const auto cfg = base_config();
  int compared = 0;
  for (std::uint64_t seed = 1; compared < 4 && seed < 20; ++seed) {
    const Scenario s = sample_scenario(cfg, seed);
    PolicyResult no;
    try {
      no = no_caching(s);
    } catch (const infeasible_scenario&) {
      continue;
    }
    OptimalOptions oo;
    oo.maximal_only = true;
    const auto all = all_caching(s);
    const auto opt = optimal_caching(s, {}, oo);
    const auto gr = greedy_caching(s);
    const auto pop = popular_caching(s);
    REQUIRE(all.ok());
    REQUIRE(opt.ok());
    REQUIRE(gr.ok());
    REQUIRE(pop.ok());
    const double tol = 1e-3;
    CHECK(all.energy() <= opt.energy() * (1 + tol));
    CHECK(opt.energy() <= gr.energy() * (1 + tol));
    CHECK(opt.energy() <= pop.energy() * (1 + tol));
    CHECK(gr.energy() <= no.energy() * (1 + tol));
    CHECK(pop.energy() <= no.energy() * (1 + tol));
    CHECK(capacity_feasible(s, gr.decision));
    CHECK(capacity_feasible(s, pop.decision));
    CHECK(capacity_feasible(s, opt.decision));
    CHECK(all.bound_only);
    CHECK(no.decision.count() == 0);
    ++compared;
  }
  CHECK(compared == 4);
}

TEST_CASE("exhaustive search matches enumeration of every feasible decision") {
  ScenarioConfig cfg = base_config();
  cfg.num_services = 6;
  cfg.cache_capacity_bits = 70e6;
  const Scenario s = sample_scenario(cfg, 3);
  const auto opt = optimal_caching(s);
  REQUIRE(opt.ok());
  double best = INFINITY;
  CachingDecision arg;
  int feasible = 0;
  for (std::uint64_t m = 0; m < 64; ++m) {
    const auto I = CachingDecision::from_mask(6, m);
    if (!capacity_feasible(s, I)) continue;
    ++feasible;
    const auto r = solve_allocation(s, I);
    if (r.status == SolveStatus::optimal &&
        better_decision(r.objective, I, best, arg)) {
      best = r.objective;
      arg = I;
    }
  }
  CHECK(static_cast<int>(feasible_decisions(s).size()) == feasible);
  CHECK(opt.decision == arg);
  CHECK(opt.energy() == doctest::Approx(best).epsilon(1e-9));

  OptimalOptions oo;
  oo.maximal_only = true;
  const auto fast = optimal_caching(s, {}, oo);
  CHECK(fast.decision == opt.decision);
  for (const auto& I : feasible_decisions(s, true)) {
    for (int l = 0; l < 6; ++l) {
      if (I[l]) continue;
      auto J = I;
      J.set(l);
      CHECK_FALSE(capacity_feasible(s, J));
    }
  }
}

TEST_CASE("popular caching stops at the first service that does not fit") {
  ScenarioConfig cfg = base_config();
  cfg.cache_capacity_bits = 100e6;
  const Scenario s = sample_scenario(cfg, 2);
  const auto pop = popular_caching(s);
  const auto req = request_probability(s.preferences.pmf);
  std::vector<int> order(10);
  for (int l = 0; l < 10; ++l) order[l] = l;
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return req[a] > req[b]; });
  CachingDecision expect(10);
  double used = 0;
  for (int l : order) {
    if (used + s.services[l].output_bits > cfg.cache_capacity_bits) break;
    used += s.services[l].output_bits;
    expect.set(l);
  }
  CHECK(pop.decision == expect);
  CHECK(pop.decision.count() == 4);
}

TEST_CASE("greedy caches the most energy-consuming service first") {
  const Scenario s = sample_scenario(base_config(), 4);
  const auto gr = greedy_caching(s);
  REQUIRE(gr.ok());
  const auto first = solve_allocation(s, CachingDecision(10));
  REQUIRE(first.status == SolveStatus::optimal);
  const auto per = service_energy(s, CachingDecision(10), first.allocation);
  int top = 0;
  for (int l = 1; l < 10; ++l) {
    if (per[l] > per[top]) top = l;
  }
  CHECK(gr.decision[top]);
  CHECK(gr.solver_calls == gr.decision.count() + 1);
}

TEST_CASE("optimal caching is equivariant under service relabelling") {
  ScenarioConfig cfg = base_config();
  cfg.num_services = 6;
  cfg.cache_capacity_bits = 70e6;
  const Scenario s = sample_scenario(cfg, 5);
  const std::vector<int> perm{4, 2, 5, 0, 1, 3};
  Scenario t = s;
  for (int l = 0; l < 6; ++l) {
    t.services[l] = s.services[perm[l]];
    t.preferences.pmf.row(l) = s.preferences.pmf.row(perm[l]);
    t.constants.tx_power_bs_w[l] = s.constants.tx_power_bs_w[perm[l]];
  }
  const auto a = optimal_caching(s);
  const auto b = optimal_caching(t);
  REQUIRE(a.ok());
  REQUIRE(b.ok());
  CHECK(b.energy() == doctest::Approx(a.energy()).epsilon(1e-6));
  for (int l = 0; l < 6; ++l) CHECK(b.decision[l] == a.decision[perm[l]]);
}

TEST_CASE("no caching reports infeasible scenarios") {
  ScenarioConfig cfg = base_config();
  cfg.deadline_s = 0.5;
  CHECK_THROWS_AS(no_caching(sample_scenario(cfg, 1)), infeasible_scenario);
}

}
