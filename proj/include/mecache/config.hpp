#pragma once

// JSON experiment configuration. Keys carry their unit (bandwidth_off_mhz,
// cache_capacity_mbits, ...) and are converted to SI on load. Missing keys
// keep their defaults; unknown keys are rejected. docs/config.md lists them.

#include <string>
#include <vector>

#include "mecache/baselines.hpp"
#include "mecache/placement.hpp"
#include "mecache/scenario.hpp"
#include "mecache/solver.hpp"
#include "mecache/special_case.hpp"

namespace mecache {

inline constexpr int kConfigSchemaVersion = 1;

enum class SweepParameter { cache_capacity, deadline, num_services, weight_bs };

std::string to_string(SweepParameter p);
// Accepts the config key names: cache_capacity_mbits, deadline_s,
// num_services, weight_bs.
SweepParameter sweep_parameter_from_string(const std::string& name);

struct SweepSpec {
  SweepParameter parameter = SweepParameter::cache_capacity;
  std::vector<double> values;  // in the unit of the config key
  int replications = 20;
  std::vector<std::string> policies = {"no", "popular", "greedy", "optimal",
                                       "all"};
};

struct ExperimentConfig {
  ScenarioConfig scenario;
  SolveOptions solver;
  OptimalOptions optimal;
  TrainConfig training;
  KnapsackOptions knapsack;
  // Sweeps draw one-service-per-location scenarios (special.enabled).
  bool special_case = false;
  SweepSpec sweep;
};

ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);
// Full document with every key, in config units.
std::string config_to_json(const ExperimentConfig& c);

// Applies a sweep value, given in the unit of the sweep key, to a scenario.
void apply_sweep_value(ScenarioConfig& cfg, SweepParameter p, double value);

}  // namespace mecache
