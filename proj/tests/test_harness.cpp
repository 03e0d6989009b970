#include <cmath>
#include <sstream>

#include "doctest.h"
#include "mecache/harness.hpp"
#include "mecache/seed.hpp"

using namespace mecache;

namespace {

ExperimentConfig small_sweep() {
  ExperimentConfig c;
  c.scenario.num_services = 5;
  c.scenario.num_locations = 3;
  c.scenario.distances_km = {0.03};
  c.scenario.deadline_s = 2.4;
  c.scenario.cache_capacity_bits = 50e6;
  c.optimal.maximal_only = true;
  c.sweep.parameter = SweepParameter::deadline;
  c.sweep.values = {1.8, 2.4};
  c.sweep.replications = 4;
  c.sweep.policies = {"no", "popular", "optimal", "all"};
  return c;
}

std::string csv(const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  write_rows_csv(os, rows);
  return os.str();
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("sweeps are byte-identical across reruns and worker counts") {
  const auto cfg = small_sweep();
  SweepOptions o;
  o.seed = 3;
  const auto a = run_sweep(cfg, o);
  o.parallelism = 3;
  const auto b = run_sweep(cfg, o);
  CHECK(a.size() == 2 * 4 * 4);
  CHECK(csv(a) == csv(b));
  o.seed = 4;
  CHECK(csv(run_sweep(cfg, o)) != csv(a));
}

TEST_CASE("replications share draws across grid points") {
  const auto cfg = small_sweep();
  const auto rows = run_sweep(cfg, {});
  for (const auto& r : rows) {
    CHECK(r.seed == derive_seed(1, "sweep/rep/" + std::to_string(r.replication)));
    if (r.ok()) {
      CHECK(r.energy_kj >= 0);
      CHECK(r.compute_kj >= 0);
      CHECK(r.energy_kj == doctest::Approx(0.5 * (r.compute_kj + r.download_kj) +
                                           r.offload_kj / 6)
                               .epsilon(1e-9));
    } else {
      CHECK_FALSE(r.error.empty());
      CHECK(std::isnan(r.energy_kj));
    }
  }
}

TEST_CASE("summary reports mean, standard error and common support") {
  std::vector<ResultRow> rows;
  auto add = [&](double v, const char* p, int rep, double e, bool ok) {
    ResultRow r;
    r.value = v;
    r.policy = p;
    r.replication = rep;
    r.energy_kj = ok ? e : NAN;
    r.status = ok ? "optimal" : "infeasible";
    rows.push_back(r);
  };
  add(1, "a", 0, 1.0, true);
  add(1, "a", 1, 3.0, true);
  add(1, "a", 2, 5.0, true);
  add(1, "b", 0, 2.0, true);
  add(1, "b", 1, 0.0, false);
  add(1, "b", 2, 4.0, true);
  const auto s = summarize(rows);
  REQUIRE(s.size() == 2);
  CHECK(s[0].policy == "a");
  CHECK(s[0].n == 3);
  CHECK(s[0].mean_kj == doctest::Approx(3.0));
  CHECK(s[0].stderr_kj == doctest::Approx(2.0 / std::sqrt(3.0)));
  CHECK(s[0].common_n == 2);
  CHECK(s[0].common_mean_kj == doctest::Approx(3.0));
  CHECK(s[1].n == 2);
  CHECK(s[1].mean_kj == doctest::Approx(3.0));
}

TEST_CASE("CSV output carries the schema version and a fixed header") {
  ResultRow r;
  r.policy = "no";
  r.status = "error";
  r.error = "bad, \"quoted\" text";
  const std::string out = csv({r});
  CHECK(out.rfind("# schema_version=1\nvalue,policy,replication,seed,energy_kj,"
                  "compute_kj,download_kj,offload_kj,iterations,runtime_s,"
                  "decision,status,error\n",
                  0) == 0);
  CHECK(out.find("\"bad, \"\"quoted\"\" text\"") != std::string::npos);

  std::ostringstream loss;
  write_loss_csv(loss, {{10, 0.5, 0.25}});
  CHECK(loss.str() == "# schema_version=1\niteration,train_loss,test_loss\n"
                      "10,0.5,0.25\n");
}

TEST_CASE("unknown policies and special without special scenarios are errors") {
  auto cfg = small_sweep();
  cfg.sweep.policies = {"random"};
  CHECK_THROWS_AS(run_sweep(cfg, {}), std::invalid_argument);
  cfg.sweep.policies = {"special"};
  CHECK_THROWS_AS(run_sweep(cfg, {}), std::invalid_argument);
  SweepOptions o;
  o.special = true;
  cfg.sweep.values = {3.5};
  cfg.sweep.replications = 2;
  const auto rows = run_sweep(cfg, o);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].ok());
  cfg.sweep.values.clear();
  CHECK_THROWS_AS(run_sweep(cfg, o), std::invalid_argument);
}

TEST_CASE("training experiment compares both quantizers on shared data") {
  ExperimentConfig c;
  c.scenario.num_services = 4;
  c.scenario.num_locations = 2;
  c.scenario.distances_km = {0.03};
  c.scenario.deadline_s = 3.0;
  c.scenario.cache_capacity_bits = 50e6;
  c.training.iterations = 30;
  c.training.warmup = 8;
  c.training.batch_size = 8;
  c.training.buffer_capacity = 16;
  c.training.hidden = {6};
  c.training.test_size = 4;
  c.training.scaler_samples = 16;
  c.training.quantizer.num_samples = 10;
  c.training.quantizer.num_candidates = 3;
  TrainingExperimentOptions o;
  o.eval_scenarios = 2;
  o.baselines = {"optimal"};
  const auto ex = run_training_experiment(c, o);
  CHECK(ex.stochastic.trace.size() == 3);
  CHECK(ex.order_preserving.trace.size() == 3);
  CHECK(ex.stochastic.labelled + ex.stochastic.unlabelled == 30);
  CHECK(std::isfinite(ex.order_preserving.trace.back().test_loss));
  REQUIRE(ex.comparison.size() == 6);
  CHECK(ex.comparison[0].policy == "dl_stochastic");
  CHECK(ex.comparison[1].policy == "dl_order_preserving");
  CHECK(ex.comparison[2].policy == "optimal");
  CHECK(ex.comparison[2].energy_kj <= ex.comparison[0].energy_kj * (1 + 1e-9));
}

}
