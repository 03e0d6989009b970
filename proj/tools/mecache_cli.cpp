// Command-line driver: every subcommand writes CSV (header row preceded by a
// schema comment) to --out, or to stdout when --out is absent.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <limits>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mecache/config.hpp"
#include "mecache/harness.hpp"
#include "mecache/seed.hpp"

using namespace mecache;

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void emit(const std::string& out,
          const std::function<void(std::ostream&)>& body) {
  if (out.empty()) {
    body(std::cout);
  } else {
    write_file(out, body);
  }
}

struct Common {
  std::string config;
  std::uint64_t seed = 1;
  std::string out;

  ExperimentConfig load() const {
    return config.empty() ? ExperimentConfig{} : load_config(config);
  }
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
  cmd->add_option("--config", c.config, "Experiment JSON (docs/config.md)")
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "Master seed")->capture_default_str();
  cmd->add_option("--out", c.out, out_help);
}

PolicyContext context_of(const ExperimentConfig& cfg) {
  PolicyContext ctx;
  ctx.solver = cfg.solver;
  ctx.optimal = cfg.optimal;
  ctx.knapsack = cfg.knapsack;
  return ctx;
}

// Runs `policies` on `replications` scenarios drawn from the master seed.
std::vector<ResultRow> per_scenario_rows(const ExperimentConfig& cfg,
                                         const PolicyContext& ctx,
                                         const std::vector<std::string>& policies,
                                         int replications, std::uint64_t seed,
                                         bool special, bool timing) {
  ScenarioConfig sc = special ? special_config(cfg.scenario) : cfg.scenario;
  std::vector<ResultRow> rows;
  for (int r = 0; r < replications; ++r) {
    const std::uint64_t s = derive_seed(seed, "rep/" + std::to_string(r));
    const Instance inst = sample_instance(sc, special, s);
    for (const auto& p : policies) {
      ResultRow row = run_row(p, inst, ctx, s, timing);
      row.value = sc.deadline_s;
      row.replication = r;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::filesystem::path out_dir(const std::string& out) {
  std::filesystem::path dir = out.empty() ? "." : out;
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Cache placement and resource allocation experiments"};
  app.require_subcommand(1);

  Common solve_c, base_c, train_c, infer_c, special_c, sweep_c;
  std::string decision, allocation_out;
  std::string base_policies = "no,popular,greedy,optimal,all";
  std::string special_policies = "special,optimal,no,all";
  std::string sweep_policies, checkpoint, sweep_checkpoint;
  int replications = 0, parallelism = 1;
  bool timing = false, compare = false;

  auto* solve = app.add_subcommand("solve", "Solve the allocation for one decision");
  add_common(solve, solve_c, "Result CSV");
  solve->add_option("--decision", decision,
                    "Cache bits, service 1 first (default: nothing cached)");
  solve->add_option("--allocation", allocation_out, "Per-service allocation CSV");

  auto* base = app.add_subcommand("baseline", "Run reference policies per scenario");
  add_common(base, base_c, "Result CSV");
  base->add_option("--policy,--policies", base_policies,
                   "Comma list of no, all, popular, greedy, optimal")
      ->capture_default_str();
  base->add_option("--replications", replications,
                   "Scenarios (default: sweep.replications)");
  base->add_flag("--timing", timing, "Record wall time per row");

  auto* tr = app.add_subcommand("train", "Train a placement policy");
  add_common(tr, train_c, "Output directory");
  tr->add_flag("--compare", compare,
               "Train both quantizers and compare against the baselines");
  tr->add_flag("--timing", timing, "Record wall time in the comparison");

  auto* inf = app.add_subcommand("infer", "Apply a trained policy");
  add_common(inf, infer_c, "Result CSV");
  inf->add_option("--checkpoint", checkpoint, "Policy JSON from train")
      ->required()
      ->check(CLI::ExistingFile);
  inf->add_option("--policies", base_policies,
                  "Extra policies to run on the same scenarios");
  inf->add_option("--replications", replications,
                  "Scenarios (default: sweep.replications)");

  auto* sp = app.add_subcommand("special", "One-service-per-location case");
  add_common(sp, special_c, "Result CSV");
  sp->add_option("--policies", special_policies, "Comma list")
      ->capture_default_str();
  sp->add_option("--replications", replications,
                 "Scenarios (default: sweep.replications)");
  sp->add_flag("--timing", timing, "Record wall time per row");

  auto* sw = app.add_subcommand("sweep", "Parameter sweep with replications");
  add_common(sw, sweep_c, "Output directory (rows.csv, summary.csv)");
  sw->add_option("--policies", sweep_policies, "Overrides sweep.policies");
  sw->add_option("--parallelism", parallelism, "Worker threads")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sw->add_option("--checkpoint", sweep_checkpoint,
                 "Policy for dl; trained per grid point when absent")
      ->check(CLI::ExistingFile);
  sw->add_flag("--timing", timing, "Record wall time per row");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*solve) {
      const ExperimentConfig cfg = solve_c.load();
      const Scenario s = sample_scenario(cfg.scenario, solve_c.seed);
      const CachingDecision I = decision.empty()
                                    ? CachingDecision(s.num_services())
                                    : CachingDecision::from_string(decision);
      if (I.size() != s.num_services()) {
        throw std::invalid_argument("decision length differs from num_services");
      }
      const PolicyResult r = evaluate_decision(s, I, "decision", cfg.solver);
      ResultRow row;
      row.value = cfg.scenario.deadline_s;
      row.policy = "decision";
      row.seed = solve_c.seed;
      row.decision = I.str();
      row.status = to_string(r.solve.status);
      row.iterations = r.solve.iterations;
      row.energy_kj = r.energy() / 1e3;
      row.compute_kj = r.solve.energy.compute / 1e3;
      row.download_kj = r.solve.energy.download / 1e3;
      row.offload_kj = r.solve.energy.offload_total() / 1e3;
      if (!r.ok()) {
        row.energy_kj = row.compute_kj = row.download_kj = row.offload_kj =
            std::numeric_limits<double>::quiet_NaN();
        row.error = "no feasible allocation for the decision";
      }
      emit(solve_c.out, [&](std::ostream& os) { write_rows_csv(os, {row}); });
      if (!allocation_out.empty() && r.ok()) {
        const auto& a = r.solve.allocation;
        write_file(allocation_out, [&](std::ostream& os) {
          os << "# schema_version=" << kCsvSchemaVersion << '\n';
          os << "service,cached,alpha_off,alpha_dl,t_c\n";
          for (int l = 0; l < s.num_services(); ++l) {
            os << l + 1 << ',' << I[l] << ',' << a.alpha_off[l] << ','
               << a.alpha_dl[l] << ',' << a.t_c[l] << '\n';
          }
        });
      }
    } else if (*base) {
      const ExperimentConfig cfg = base_c.load();
      const auto policies = split_list(base_policies);
      for (const auto& p : policies) {
        if (p == "dl" || p == "special") {
          throw std::invalid_argument("baseline runs no, all, popular, greedy, optimal");
        }
      }
      const auto rows = per_scenario_rows(
          cfg, context_of(cfg), policies,
          replications > 0 ? replications : cfg.sweep.replications,
          base_c.seed, cfg.special_case, timing);
      emit(base_c.out, [&](std::ostream& os) { write_rows_csv(os, rows); });
    } else if (*tr) {
      const ExperimentConfig cfg = train_c.load();
      const auto dir = out_dir(train_c.out);
      if (compare) {
        TrainingExperimentOptions o;
        o.seed = train_c.seed;
        o.timing = timing;
        const TrainingExperiment ex = run_training_experiment(cfg, o);
        write_file((dir / "loss_stochastic.csv").string(), [&](std::ostream& os) {
          write_loss_csv(os, ex.stochastic.trace);
        });
        write_file((dir / "loss_order_preserving.csv").string(),
                   [&](std::ostream& os) {
                     write_loss_csv(os, ex.order_preserving.trace);
                   });
        save_policy(ex.stochastic.policy, (dir / "policy_stochastic.json").string());
        save_policy(ex.order_preserving.policy,
                    (dir / "policy_order_preserving.json").string());
        write_file((dir / "comparison.csv").string(), [&](std::ostream& os) {
          write_rows_csv(os, ex.comparison);
        });
        write_file((dir / "comparison_summary.csv").string(),
                   [&](std::ostream& os) {
                     write_summary_csv(os, summarize(ex.comparison));
                   });
      } else {
        const TrainResult r = train(cfg.scenario, cfg.training, train_c.seed,
                                    cfg.solver);
        write_file((dir / "loss.csv").string(),
                   [&](std::ostream& os) { write_loss_csv(os, r.trace); });
        save_policy(r.policy, (dir / "policy.json").string());
        std::cerr << "labelled " << r.labelled << ", unlabelled "
                  << r.unlabelled << '\n';
      }
    } else if (*inf) {
      const ExperimentConfig cfg = infer_c.load();
      PolicyContext ctx = context_of(cfg);
      ctx.dl = std::make_shared<const PlacementPolicy>(load_policy(checkpoint));
      std::vector<std::string> policies{"dl"};
      if (inf->count("--policies")) {
        for (auto& p : split_list(base_policies)) policies.push_back(p);
      }
      const auto rows = per_scenario_rows(
          cfg, ctx, policies,
          replications > 0 ? replications : cfg.sweep.replications,
          infer_c.seed, false, false);
      emit(infer_c.out, [&](std::ostream& os) { write_rows_csv(os, rows); });
    } else if (*sp) {
      const ExperimentConfig cfg = special_c.load();
      const auto rows = per_scenario_rows(
          cfg, context_of(cfg), split_list(special_policies),
          replications > 0 ? replications : cfg.sweep.replications,
          special_c.seed, true, timing);
      emit(special_c.out, [&](std::ostream& os) { write_rows_csv(os, rows); });
    } else if (*sw) {
      ExperimentConfig cfg = sweep_c.load();
      if (!sweep_policies.empty()) cfg.sweep.policies = split_list(sweep_policies);
      SweepOptions o;
      o.seed = sweep_c.seed;
      o.parallelism = parallelism;
      o.timing = timing;
      o.special = cfg.special_case;
      if (!sweep_checkpoint.empty()) {
        o.dl = std::make_shared<const PlacementPolicy>(load_policy(sweep_checkpoint));
      }
      const auto rows = run_sweep(cfg, o);
      const auto dir = out_dir(sweep_c.out);
      write_file((dir / "rows.csv").string(),
                 [&](std::ostream& os) { write_rows_csv(os, rows); });
      write_file((dir / "summary.csv").string(), [&](std::ostream& os) {
        write_summary_csv(os, summarize(rows));
      });
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
