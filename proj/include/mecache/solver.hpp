#pragma once

// Lagrangian dual decomposition for the per-decision resource allocation
// problem: closed-form primal minimizers, bisection on bandwidth fractions and
// an ellipsoid iteration on the multipliers.

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "mecache/energy.hpp"
#include "mecache/scenario.hpp"

namespace mecache {

// Multipliers of the per-decision problem. Rate multipliers use the same
// column conventions as the times they price.
struct DualPoint {
  Eigen::VectorXd deadline;       // mu, L
  Eigen::VectorXd frequency;      // eta, L
  Eigen::MatrixXd offload_rate;   // omega, L x K (uplink order)
  Eigen::MatrixXd download_rate;  // gamma, L x K (downlink positions)
  double offload_bw = 0.0;        // sigma
  double download_bw = 0.0;       // epsilon

  static DualPoint constant(int num_services, int num_locations, double v);
  static int dimension(int num_services, int num_locations) {
    return 2 * num_services * num_locations + 2 * num_services + 2;
  }
  // Layout: mu, eta, omega (row-major), gamma (row-major), sigma, epsilon.
  Eigen::VectorXd to_vector() const;
  static DualPoint from_vector(const Eigen::VectorXd& v, int num_services,
                               int num_locations);
};

// Raised when mu_l - eta_l <= 0 for an uncached service: the compute-time
// subproblem is unbounded.
struct unbounded_dual : std::domain_error {
  using std::domain_error::domain_error;
};

struct PrimalTimes {
  Eigen::VectorXd t_c;
  Eigen::MatrixXd t_off;
  Eigen::MatrixXd t_dl;
};

// Closed-form time minimizers of the Lagrangian. Times are capped at
// 10 T_l; cached services get t_c = t_off = 0.
PrimalTimes primal_times(const DualPoint& d, const Scenario& s,
                         const CachingDecision& I);

// F(alpha) = sum_k (w_k B / ln 2)(ln(1 + x_k/alpha) - x_k/(alpha + x_k)) - price
// with x_k = p_k g_k.
double bandwidth_derivative(double alpha, const Eigen::Ref<const Eigen::VectorXd>& weights,
                            const Eigen::Ref<const Eigen::VectorXd>& gains,
                            const Eigen::Ref<const Eigen::VectorXd>& powers,
                            double price, double bandwidth);

// Maximizer of sum_k w_k r_k(alpha) - price alpha over [0, 1].
double optimal_bandwidth(const Eigen::Ref<const Eigen::VectorXd>& weights,
                         const Eigen::Ref<const Eigen::VectorXd>& gains,
                         const Eigen::Ref<const Eigen::VectorXd>& powers,
                         double price, double bandwidth, double tol = 1e-10);

struct DualEvaluation {
  double value = 0.0;
  DualPoint supergradient;        // constraint slacks at the minimizer
  ResourceAllocation allocation;  // Lagrangian minimizer
};

// Dual function with rate constraints written as D/t <= r(alpha). Components
// of the supergradient may be +inf when a zero multiplier prices a zero time.
DualEvaluation dual_function(const DualPoint& d, const Scenario& s,
                             const CachingDecision& I);

enum class SolveMethod {
  bandwidth_prices,  // ellipsoid over (sigma, epsilon), exact inner duals
  full,              // ellipsoid over the whole multiplier vector
};

struct SolveOptions {
  SolveMethod method = SolveMethod::bandwidth_prices;
  double gap_tol = 1e-7;        // relative duality gap
  double band_tol = 1e-7;       // |sum alpha - 1| at the best dual point
  double internal_tol = 1e-13;  // inner root finding, relative
  int max_iter = 0;             // 0 means 2000 * dimension
  double initial_radius = 10.0; // relative to the heuristic dual scale
  int max_restarts = 8;
  double feasibility_tol = 1e-6;
};

enum class SolveStatus { optimal, infeasible, iteration_limit };

std::string to_string(SolveStatus s);

struct SolveResult {
  ResourceAllocation allocation;
  DualPoint duals;
  EnergyBreakdown energy;
  double objective = 0.0;       // weighted expected energy, J
  double dual_objective = 0.0;  // best dual bound, J
  int iterations = 0;
  SolveStatus status = SolveStatus::infeasible;

  double relative_gap() const;
};

// Necessary condition: every service meets its deadline with the full band
// in both directions and the maximum core frequency.
bool precheck_feasible(const Scenario& s, const CachingDecision& I);

SolveResult solve_allocation(const Scenario& s, const CachingDecision& I,
                             const SolveOptions& opts = {});

struct KktReport {
  double stationarity = 0.0;     // time variables, scaled
  double bandwidth = 0.0;        // F(alpha) residuals, scaled
  double complementarity = 0.0;  // multiplier times relative slack

  double max() const;
};

KktReport kkt_residuals(const Scenario& s, const CachingDecision& I,
                        const ResourceAllocation& alloc, const DualPoint& d);

}  // namespace mecache
