#pragma once

// Seeded experiment driver. Every (grid point, replication) task owns a
// derived RNG stream; rows are stored by task index, so the output does not
// depend on the worker count.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mecache/baselines.hpp"
#include "mecache/config.hpp"
#include "mecache/placement.hpp"
#include "mecache/special_case.hpp"

namespace mecache {

inline constexpr int kCsvSchemaVersion = 1;

// A sampled scenario; `special` is set for one-service-per-location draws.
struct Instance {
  Scenario scenario;
  std::optional<SpecialScenario> special;
};

Instance sample_instance(const ScenarioConfig& cfg, bool special,
                         std::uint64_t seed);

struct PolicyContext {
  SolveOptions solver;
  OptimalOptions optimal;
  KnapsackOptions knapsack;
  std::shared_ptr<const PlacementPolicy> dl;  // required by "dl"
};

inline const std::vector<std::string> kPolicyNames = {
    "no", "popular", "greedy", "optimal", "all", "dl", "special"};

// Runs a policy by name. `seed` drives the dl quantizer. Throws
// std::invalid_argument for unknown names and for "special" on a general
// instance; infeasible_scenario propagates.
PolicyResult run_policy(const std::string& name, const Instance& inst,
                        const PolicyContext& ctx, std::uint64_t seed);

struct ResultRow {
  double value = 0.0;  // swept parameter, in its config unit
  std::string policy;
  int replication = 0;
  std::uint64_t seed = 0;
  double energy_kj = 0.0;  // weighted objective
  double compute_kj = 0.0;
  double download_kj = 0.0;
  double offload_kj = 0.0;  // summed over locations
  int iterations = 0;
  double runtime_s = 0.0;  // 0 unless timing is enabled
  std::string decision;
  std::string status;  // solver status, or "error"
  std::string error;

  bool ok() const { return status == "optimal"; }
};

// Runs one policy and converts the outcome, including exceptions, to a row.
ResultRow run_row(const std::string& policy, const Instance& inst,
                  const PolicyContext& ctx, std::uint64_t seed, bool timing);

struct SweepOptions {
  std::uint64_t seed = 1;
  int parallelism = 1;
  bool timing = false;  // wall time breaks byte-identical reruns
  bool special = false;  // sample one-service-per-location scenarios
  // Used by "dl" when set; otherwise a policy is trained per grid point.
  std::shared_ptr<const PlacementPolicy> dl;
};

// Replication r uses derive_seed(seed, "sweep/rep/r") at every grid point, so
// grid points share channel and task draws wherever the dimensions agree.
std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg,
                                 const SweepOptions& opts);

struct SummaryRow {
  double value = 0.0;
  std::string policy;
  int n = 0;  // ok rows
  double mean_kj = 0.0;
  double stderr_kj = 0.0;
  // Over replications where every policy solves at every grid point.
  int common_n = 0;
  double common_mean_kj = 0.0;
  double common_stderr_kj = 0.0;
};

// One row per (value, policy) in first-appearance order. Means of empty
// sets are NaN.
std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);

void write_rows_csv(std::ostream& os, const std::vector<ResultRow>& rows);
void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows);
void write_loss_csv(std::ostream& os, const std::vector<LossPoint>& trace);
// Writes through a temporary file so readers never see a partial file.
void write_file(const std::string& path,
                const std::function<void(std::ostream&)>& body);

struct TrainingExperimentOptions {
  std::uint64_t seed = 1;
  int eval_scenarios = 30;  // held-out scenarios for the comparison
  std::vector<std::string> baselines = {"no", "popular", "greedy", "optimal",
                                        "all"};
  bool timing = false;
};

struct TrainingExperiment {
  TrainResult stochastic;
  TrainResult order_preserving;
  // Policies "dl_stochastic", "dl_order_preserving" and the baselines on the
  // first eval_scenarios test scenarios; replication is the scenario index.
  std::vector<ResultRow> comparison;
};

// Trains both quantizers on identical scenario streams with a shared test
// set, then compares them with the baselines.
TrainingExperiment run_training_experiment(
    const ExperimentConfig& cfg, const TrainingExperimentOptions& opts);

}  // namespace mecache
