#include "mecache/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

namespace mecache {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

PolicyResult evaluate_decision(const Scenario& s, const CachingDecision& I,
                               const std::string& policy,
                               const SolveOptions& opts) {
  const auto t0 = Clock::now();
  PolicyResult r;
  r.policy = policy;
  r.decision = I;
  r.solve = solve_allocation(s, I, opts);
  r.solver_calls = 1;
  r.runtime_s = seconds_since(t0);
  return r;
}

PolicyResult no_caching(const Scenario& s, const SolveOptions& opts) {
  auto r = evaluate_decision(s, CachingDecision(s.num_services()), "no", opts);
  if (r.solve.status == SolveStatus::infeasible) {
    throw infeasible_scenario("empty cache admits no feasible allocation");
  }
  return r;
}

PolicyResult all_caching(const Scenario& s, const SolveOptions& opts) {
  auto r = evaluate_decision(s, CachingDecision::ones(s.num_services()), "all",
                             opts);
  r.bound_only = true;
  return r;
}

PolicyResult popular_caching(const Scenario& s, const SolveOptions& opts) {
  const int L = s.num_services();
  const Eigen::VectorXd rho = request_probability(s.preferences.pmf);
  std::vector<int> order(L);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return rho[a] > rho[b]; });
  CachingDecision I(L);
  double used = 0.0;
  for (int l : order) {
    used += s.services[l].output_bits;
    if (used > s.constants.cache_capacity_bits) break;
    I.set(l);
  }
  return evaluate_decision(s, I, "popular", opts);
}

PolicyResult greedy_caching(const Scenario& s, const SolveOptions& opts) {
  const auto t0 = Clock::now();
  const int L = s.num_services();
  PolicyResult r;
  r.policy = "greedy";
  r.decision = CachingDecision(L);
  r.solve = solve_allocation(s, r.decision, opts);
  r.solver_calls = 1;
  if (r.solve.status == SolveStatus::infeasible) {
    throw infeasible_scenario("empty cache admits no feasible allocation");
  }
  while (r.decision.count() < L && r.solve.status == SolveStatus::optimal) {
    const Eigen::VectorXd e =
        service_energy(s, r.decision, r.solve.allocation);
    int best = -1;
    for (int l = 0; l < L; ++l) {
      if (r.decision[l]) continue;
      if (best < 0 || e[l] > e[best]) best = l;
    }
    CachingDecision next = r.decision;
    next.set(best);
    if (!capacity_feasible(s, next)) break;
    r.decision = next;
    r.solve = solve_allocation(s, r.decision, opts);
    ++r.solver_calls;
  }
  r.runtime_s = seconds_since(t0);
  return r;
}

std::vector<CachingDecision> feasible_decisions(const Scenario& s,
                                                bool maximal_only) {
  const int L = s.num_services();
  const double S = s.constants.cache_capacity_bits;
  std::vector<CachingDecision> out;
  const std::uint64_t n = std::uint64_t{1} << L;
  for (std::uint64_t mask = 0; mask < n; ++mask) {
    double used = 0.0;
    for (int l = 0; l < L; ++l) {
      if ((mask >> l) & 1U) used += s.services[l].output_bits;
    }
    if (used > S) continue;
    if (maximal_only) {
      bool maximal = true;
      for (int l = 0; l < L && maximal; ++l) {
        if (!((mask >> l) & 1U) && used + s.services[l].output_bits <= S) {
          maximal = false;
        }
      }
      if (!maximal) continue;
    }
    out.push_back(CachingDecision::from_mask(L, mask));
  }
  return out;
}

bool better_decision(double energy_a, const CachingDecision& a,
                     double energy_b, const CachingDecision& b) {
  double tie = 1e-12 * std::max(std::abs(energy_a), std::abs(energy_b));
  if (!std::isfinite(tie)) tie = 0.0;  // an infinite incumbent loses outright
  if (energy_a < energy_b - tie) return true;
  if (energy_a > energy_b + tie) return false;
  if (a.count() != b.count()) return a.count() < b.count();
  return a.str() < b.str();
}

PolicyResult optimal_caching(const Scenario& s, const SolveOptions& opts,
                             const OptimalOptions& oo) {
  const int L = s.num_services();
  if (L > oo.max_services) {
    throw std::length_error("exhaustive search limited to " +
                            std::to_string(oo.max_services) + " services");
  }
  const auto t0 = Clock::now();
  PolicyResult best;
  best.policy = "optimal";
  bool found = false;
  int calls = 0;
  for (const auto& I : feasible_decisions(s, oo.maximal_only)) {
    SolveResult res = solve_allocation(s, I, opts);
    ++calls;
    if (res.status != SolveStatus::optimal) continue;
    if (!found || better_decision(res.objective, I, best.solve.objective,
                                  best.decision)) {
      best.decision = I;
      best.solve = std::move(res);
      found = true;
    }
  }
  if (!found) {
    best.decision = CachingDecision(L);
    best.solve.status = SolveStatus::infeasible;
    best.solve.objective = std::numeric_limits<double>::quiet_NaN();
  }
  best.solver_calls = calls;
  best.runtime_s = seconds_since(t0);
  return best;
}

}  // namespace mecache
