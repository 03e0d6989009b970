#pragma once

// Expected-energy objective, achievable rates and constraint checks for a
// fixed caching decision and resource allocation.

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mecache/scenario.hpp"

namespace mecache {

// Binary cache placement over services; bit l set means service l's results
// are stored at the base station.
class CachingDecision {
 public:
  CachingDecision() = default;
  explicit CachingDecision(int num_services) : bits_(num_services, 0) {}

  static CachingDecision ones(int num_services);
  static CachingDecision from_mask(int num_services, std::uint64_t mask);
  static CachingDecision from_string(const std::string& bits);  // "0110"

  int size() const { return static_cast<int>(bits_.size()); }
  int count() const;
  bool operator[](int l) const { return bits_[l] != 0; }
  void set(int l, bool cached = true) { bits_[l] = cached ? 1 : 0; }
  std::uint64_t mask() const;
  std::string str() const;
  double cached_bits(const Scenario& s) const;

  auto operator<=>(const CachingDecision&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

bool capacity_feasible(const Scenario& s, const CachingDecision& I);

struct ResourceAllocation {
  Eigen::VectorXd alpha_off;  // L
  Eigen::VectorXd alpha_dl;   // L
  Eigen::VectorXd t_c;        // L
  Eigen::MatrixXd t_off;      // L x K, columns in uplink order
  Eigen::MatrixXd t_dl;       // L x K, columns are downlink positions

  static ResourceAllocation zeros(int num_services, int num_locations);
};

struct EnergyBreakdown {
  double compute = 0.0;     // E_c
  double download = 0.0;    // E_dl
  Eigen::VectorXd offload;  // E_k^off per location
  double weighted_total = 0.0;

  double offload_total() const { return offload.sum(); }
};

// Request, offload-selection and broadcast-rate probabilities of a scenario.
struct ProbabilityTables {
  Eigen::VectorXd request;    // L, 1 - Pr(no request)
  Eigen::MatrixXd offload;    // L x K, uplink order
  Eigen::MatrixXd broadcast;  // L x K, downlink positions
};

ProbabilityTables probability_tables(const Scenario& s);

// alpha B log2(1 + p g / alpha); zero for alpha <= 0.
template <class Scalar>
Scalar link_rate(Scalar alpha, Scalar power, Scalar gain, Scalar bandwidth) {
  using std::log1p;
  if (alpha <= Scalar(0)) return Scalar(0);
  return alpha * bandwidth * log1p(power * gain / alpha) /
         Scalar(0.69314718055994530942);
}

double offload_rate(double alpha, double power, double gain, double bandwidth);
double download_rate(double alpha, double power, double gain,
                     double bandwidth);

// Throws std::domain_error when an uncached service with nonzero request
// probability has t_c = 0.
EnergyBreakdown expected_energy(const Scenario& s, const CachingDecision& I,
                                const ResourceAllocation& alloc);

// Weighted expected energy attributed to each service.
Eigen::VectorXd service_energy(const Scenario& s, const CachingDecision& I,
                               const ResourceAllocation& alloc);

struct Violation {
  std::string constraint;  // deadline, frequency, offload_rate, ...
  int service = -1;
  int location = -1;       // uplink index or downlink position
  double slack = 0.0;      // relative, negative when violated
};

struct FeasibilityReport {
  std::vector<Violation> violations;
  double worst_slack = 0.0;

  bool feasible() const { return violations.empty(); }
};

// Checks every constraint of the per-decision resource problem with relative
// tolerance rel_tol. The capacity check can be skipped for bound-only
// decisions.
FeasibilityReport check_feasible(const Scenario& s, const CachingDecision& I,
                                 const ResourceAllocation& alloc,
                                 double rel_tol = 1e-6,
                                 bool enforce_capacity = true);

}  // namespace mecache
