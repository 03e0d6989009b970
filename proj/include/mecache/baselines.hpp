#pragma once

// Reference cache-placement policies. Each returns the decision together with
// the solved resource allocation for it.

#include <stdexcept>
#include <string>

#include "mecache/energy.hpp"
#include "mecache/solver.hpp"

namespace mecache {

struct infeasible_scenario : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PolicyResult {
  std::string policy;
  CachingDecision decision;
  SolveResult solve;
  int solver_calls = 0;
  double runtime_s = 0.0;
  bool bound_only = false;  // decision ignores the cache capacity

  bool ok() const { return solve.status == SolveStatus::optimal; }
  double energy() const { return solve.objective; }
};

// Solves one decision and wraps it as a policy result.
PolicyResult evaluate_decision(const Scenario& s, const CachingDecision& I,
                               const std::string& policy,
                               const SolveOptions& opts = {});

// Throws infeasible_scenario when the empty cache admits no allocation.
PolicyResult no_caching(const Scenario& s, const SolveOptions& opts = {});
PolicyResult all_caching(const Scenario& s, const SolveOptions& opts = {});
// Caches by descending request probability, stopping at the first service
// that does not fit.
PolicyResult popular_caching(const Scenario& s, const SolveOptions& opts = {});
// Caches the most energy-consuming uncached service of the current solve,
// stopping when the next one does not fit.
PolicyResult greedy_caching(const Scenario& s, const SolveOptions& opts = {});

struct OptimalOptions {
  int max_services = 14;
  // Enumerate only capacity-maximal decisions. Exact whenever caching an
  // extra service strictly lowers the energy, which holds for the model.
  bool maximal_only = false;
};

// Exhaustive search over capacity-feasible decisions. Ties go to fewer cached
// services, then to the lexicographically smallest bit string.
PolicyResult optimal_caching(const Scenario& s, const SolveOptions& opts = {},
                             const OptimalOptions& oo = {});

// Capacity-feasible decisions in increasing mask order.
std::vector<CachingDecision> feasible_decisions(const Scenario& s,
                                                bool maximal_only = false);

// True when a is strictly better than b under the exhaustive tie rule.
bool better_decision(double energy_a, const CachingDecision& a,
                     double energy_b, const CachingDecision& b);

}  // namespace mecache
