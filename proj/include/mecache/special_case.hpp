#pragma once

// One-service-per-location special case: closed-form KKT points through the
// Lambert W function, a nested bisection for the bandwidth duals under slack
// deadlines, and a knapsack cache placement over the resulting fixed times.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "mecache/baselines.hpp"
#include "mecache/energy.hpp"
#include "mecache/scenario.hpp"
#include "mecache/solver.hpp"

namespace mecache {

// L = K and location k demands exactly one service with probability one.
struct SpecialScenario {
  Scenario scenario;
  std::vector<int> location_of;  // service -> internal location (uplink order)
  std::vector<int> position_of;  // service -> downlink position

  int size() const { return scenario.num_services(); }
};

// Copies cfg with num_locations = num_services. A distance list of the wrong
// length is replaced by its first entry repeated.
ScenarioConfig special_config(const ScenarioConfig& cfg);

// Original location k demands service k.
PreferenceProfile one_hot_preferences(int num_services);

// Throws std::invalid_argument unless every pmf column is one-hot and every
// service has exactly one owner.
SpecialScenario make_special(Scenario s);

SpecialScenario sample_special_scenario(const ScenarioConfig& cfg,
                                        std::uint64_t seed);

// Per-service multipliers; rate multipliers belong to the owner location.
struct SpecialDuals {
  Eigen::VectorXd deadline;       // mu
  Eigen::VectorXd frequency;      // eta
  Eigen::VectorXd offload_rate;   // omega
  Eigen::VectorXd download_rate;  // gamma
  double offload_bw = 0.0;        // sigma
  double download_bw = 0.0;       // epsilon

  static SpecialDuals zeros(int n);
  // Restriction of a general multiplier vector to the owner columns.
  static SpecialDuals from_general(const DualPoint& d, const SpecialScenario& s);
};

// X > 0 solving X - 1 + exp(-X) = c for c >= 0. Equals
// W0(-exp(phi ln 2)) - phi ln 2 with phi ln 2 = -1 - c; a series replaces the
// closed form near the branch point where it loses precision.
double rate_exponent(double c);

// Bandwidth fraction maximizing weight * r(alpha) - price * alpha for one
// link with x = p g, clamped to [0, 1].
double special_bandwidth(double weight, double price, double x,
                         double bandwidth);

// Closed-form minimizer of the Lagrangian. Non-owner columns get the times at
// which their (zero-weight) rate constraints are active.
ResourceAllocation kkt_special(const SpecialDuals& d, const SpecialScenario& s,
                               const CachingDecision& I);

struct bracket_failure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DualBisectionOptions {
  double lo = 1e-12;
  double hi = 1e6;
  int expansions = 3;  // bracket widened tenfold per failed attempt
  double tol = 1e-8;   // on normalized f and on g
  int max_iter = 200;
};

// One direction of the dual system: rate multipliers and the band price.
struct DualSystemSolution {
  Eigen::VectorXd rate;
  double price = 0.0;
  Eigen::VectorXd alpha;
  double f_residual = 0.0;  // max_k |f_k| / A_k
  double g_residual = 0.0;  // |sum alpha - 1|
};

struct SpecialDualSolution {
  DualSystemSolution offload;
  DualSystemSolution download;

  SpecialDuals duals() const;  // mu = eta = 0
};

// Per-direction coefficients A_k = B x_k / (ln 2 sqrt(D_k w_k)) of the
// rate-activity equations, with x_k = p_k g_k and w_k the energy weight.
struct DualSystemCoefficients {
  Eigen::VectorXd x;
  Eigen::VectorXd size;
  Eigen::VectorXd weight;
  double bandwidth = 0.0;
};

DualSystemCoefficients offload_coefficients(const SpecialScenario& s);
DualSystemCoefficients download_coefficients(const SpecialScenario& s);

// Normalized rate-activity residual f_k / A_k and the band residual g.
double dual_f(const DualSystemCoefficients& c, int k, double rate,
              double price);
double dual_g(const DualSystemCoefficients& c, const Eigen::VectorXd& rate,
              double price);

DualSystemSolution solve_dual_direction(const DualSystemCoefficients& c,
                                        const DualBisectionOptions& o = {});
SpecialDualSolution solve_dual_system(const SpecialScenario& s,
                                      const DualBisectionOptions& o = {});

struct FixedTimes {
  Eigen::VectorXd t_c;
  Eigen::VectorXd t_off;
  Eigen::VectorXd t_dl;
};

// Full-frequency compute times and rate-active link times at the dual
// system's bandwidth fractions.
FixedTimes fixed_times(const SpecialScenario& s, const SpecialDualSolution& d);

// Energy saved by caching each service under fixed times.
Eigen::VectorXd caching_savings(const SpecialScenario& s, const FixedTimes& t);
// Knapsack objective: energy of the uncached services.
double ilp_objective(const SpecialScenario& s, const FixedTimes& t,
                     const CachingDecision& I);

enum class KnapsackMethod {
  branch_and_bound,     // exact for real sizes
  dynamic_programming,  // sizes rounded up to the granularity
};

struct KnapsackOptions {
  KnapsackMethod method = KnapsackMethod::branch_and_bound;
  double granularity_bits = 1000.0;
};

CachingDecision ilp_cache_placement(const SpecialScenario& s,
                                    const FixedTimes& t,
                                    const KnapsackOptions& o = {});

// Maximizes sum value over items with sum size <= capacity.
std::vector<bool> knapsack(const Eigen::VectorXd& value,
                           const Eigen::VectorXd& size, double capacity,
                           const KnapsackOptions& o = {});

struct SpecialResult {
  PolicyResult policy;
  SpecialDualSolution duals;
  FixedTimes times;
  // Slack of the deadlines under the fixed times; negative entries mean the
  // slack-deadline assumption behind the dual system does not hold.
  Eigen::VectorXd assumption_slack;
};

SpecialResult solve_special_detailed(const SpecialScenario& s,
                                     const SolveOptions& opts = {},
                                     const KnapsackOptions& ko = {});
PolicyResult solve_special(const SpecialScenario& s,
                           const SolveOptions& opts = {},
                           const KnapsackOptions& ko = {});

}  // namespace mecache
