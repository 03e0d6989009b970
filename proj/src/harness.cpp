#include "mecache/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

#include "mecache/seed.hpp"

namespace mecache {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

// Quotes fields holding separators; error messages are free text.
std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

void schema_line(std::ostream& os) {
  os << "# schema_version=" << kCsvSchemaVersion << '\n';
}

struct MeanSe {
  int n = 0;
  double mean = kNaN;
  double se = kNaN;
};

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe m;
  m.n = static_cast<int>(v.size());
  if (v.empty()) return m;
  double s = 0.0;
  for (double x : v) s += x;
  m.mean = s / m.n;
  if (m.n < 2) {
    m.se = 0.0;
    return m;
  }
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.se = std::sqrt(ss / (m.n - 1) / m.n);
  return m;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads.
template <class Fn>
void parallel_for(int n, int workers, Fn fn) {
  workers = std::clamp(workers, 1, std::max(n, 1));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

Instance sample_instance(const ScenarioConfig& cfg, bool special,
                         std::uint64_t seed) {
  Instance inst;
  if (special) {
    inst.special = sample_special_scenario(cfg, seed);
    inst.scenario = inst.special->scenario;
  } else {
    inst.scenario = sample_scenario(cfg, seed);
  }
  return inst;
}

PolicyResult run_policy(const std::string& name, const Instance& inst,
                        const PolicyContext& ctx, std::uint64_t seed) {
  const Scenario& s = inst.scenario;
  if (name == "no") return no_caching(s, ctx.solver);
  if (name == "all") return all_caching(s, ctx.solver);
  if (name == "popular") return popular_caching(s, ctx.solver);
  if (name == "greedy") return greedy_caching(s, ctx.solver);
  if (name == "optimal") return optimal_caching(s, ctx.solver, ctx.optimal);
  if (name == "dl") {
    if (!ctx.dl) throw std::invalid_argument("policy dl needs a trained model");
    Rng rng(derive_seed(seed, "dl"));
    return infer(*ctx.dl, s, rng, ctx.solver);
  }
  if (name == "special") {
    if (!inst.special) {
      throw std::invalid_argument(
          "policy special needs one-service-per-location scenarios");
    }
    return solve_special(*inst.special, ctx.solver, ctx.knapsack);
  }
  throw std::invalid_argument("unknown policy: " + name);
}

ResultRow run_row(const std::string& policy, const Instance& inst,
                  const PolicyContext& ctx, std::uint64_t seed, bool timing) {
  ResultRow row;
  row.policy = policy;
  row.seed = seed;
  const auto start = std::chrono::steady_clock::now();
  try {
    const PolicyResult r = run_policy(policy, inst, ctx, seed);
    row.status = to_string(r.solve.status);
    row.decision = r.decision.str();
    row.iterations = r.solve.iterations;
    if (r.ok()) {
      const auto& e = r.solve.energy;
      row.energy_kj = r.energy() / 1e3;
      row.compute_kj = e.compute / 1e3;
      row.download_kj = e.download / 1e3;
      row.offload_kj = e.offload_total() / 1e3;
    } else {
      row.energy_kj = row.compute_kj = row.download_kj = row.offload_kj = kNaN;
      row.error = "no feasible allocation for the decision";
    }
  } catch (const infeasible_scenario& e) {
    row.status = "infeasible";
    row.error = e.what();
    row.energy_kj = row.compute_kj = row.download_kj = row.offload_kj = kNaN;
  } catch (const std::invalid_argument&) {
    throw;  // configuration errors abort the run
  } catch (const std::exception& e) {
    row.status = "error";
    row.error = e.what();
    row.energy_kj = row.compute_kj = row.download_kj = row.offload_kj = kNaN;
  }
  if (timing) {
    row.runtime_s = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - start)
                        .count();
  }
  return row;
}

std::vector<ResultRow> run_sweep(const ExperimentConfig& cfg,
                                 const SweepOptions& opts) {
  const SweepSpec& sw = cfg.sweep;
  if (sw.values.empty()) throw std::invalid_argument("sweep grid is empty");
  if (sw.replications < 1) {
    throw std::invalid_argument("sweep needs at least one replication");
  }
  if (sw.policies.empty()) throw std::invalid_argument("sweep has no policies");
  for (const auto& p : sw.policies) {
    if (std::find(kPolicyNames.begin(), kPolicyNames.end(), p) ==
        kPolicyNames.end()) {
      throw std::invalid_argument("unknown policy: " + p);
    }
    if (p == "special" && !opts.special) {
      throw std::invalid_argument(
          "policy special needs one-service-per-location scenarios");
    }
  }
  const bool wants_dl = std::find(sw.policies.begin(), sw.policies.end(),
                                  "dl") != sw.policies.end();

  const int G = static_cast<int>(sw.values.size());
  std::vector<ScenarioConfig> scenarios(G, cfg.scenario);
  std::vector<PolicyContext> contexts(G);
  for (int g = 0; g < G; ++g) {
    apply_sweep_value(scenarios[g], sw.parameter, sw.values[g]);
    if (opts.special) scenarios[g] = special_config(scenarios[g]);
    scenarios[g].validate();
    contexts[g].solver = cfg.solver;
    contexts[g].optimal = cfg.optimal;
    contexts[g].knapsack = cfg.knapsack;
    if (!wants_dl) continue;
    if (opts.dl) {
      contexts[g].dl = opts.dl;
    } else {
      // A held-out test set only adds loss reporting; skip it here.
      TrainConfig tc = cfg.training;
      tc.test_size = 0;
      contexts[g].dl = std::make_shared<PlacementPolicy>(
          train(scenarios[g], tc,
                derive_seed(opts.seed, "sweep/train/" + std::to_string(g)),
                cfg.solver)
              .policy);
    }
  }

  const int R = sw.replications;
  const int P = static_cast<int>(sw.policies.size());
  std::vector<ResultRow> rows(static_cast<std::size_t>(G) * R * P);
  parallel_for(G * R, opts.parallelism, [&](int task) {
    const int g = task / R;
    const int r = task % R;
    const std::uint64_t seed =
        derive_seed(opts.seed, "sweep/rep/" + std::to_string(r));
    const Instance inst = sample_instance(scenarios[g], opts.special, seed);
    for (int p = 0; p < P; ++p) {
      ResultRow row =
          run_row(sw.policies[p], inst, contexts[g], seed, opts.timing);
      row.value = sw.values[g];
      row.replication = r;
      rows[static_cast<std::size_t>(task) * P + p] = std::move(row);
    }
  });
  return rows;
}

std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  std::set<int> reps;
  std::set<int> failed;
  for (const auto& r : rows) {
    reps.insert(r.replication);
    if (!r.ok()) failed.insert(r.replication);
  }

  std::vector<std::pair<double, std::string>> keys;
  std::map<std::pair<double, std::string>, std::vector<const ResultRow*>> by;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.value, r.policy);
    auto& v = by[key];
    if (v.empty()) keys.push_back(key);
    v.push_back(&r);
  }

  std::vector<SummaryRow> out;
  for (const auto& key : keys) {
    std::vector<double> all;
    std::vector<double> common;
    for (const ResultRow* r : by[key]) {
      if (!r->ok()) continue;
      all.push_back(r->energy_kj);
      if (!failed.count(r->replication)) common.push_back(r->energy_kj);
    }
    SummaryRow s;
    s.value = key.first;
    s.policy = key.second;
    const MeanSe a = mean_se(all);
    const MeanSe c = mean_se(common);
    s.n = a.n;
    s.mean_kj = a.mean;
    s.stderr_kj = a.se;
    s.common_n = c.n;
    s.common_mean_kj = c.mean;
    s.common_stderr_kj = c.se;
    out.push_back(s);
  }
  return out;
}

void write_rows_csv(std::ostream& os, const std::vector<ResultRow>& rows) {
  schema_line(os);
  os << "value,policy,replication,seed,energy_kj,compute_kj,download_kj,"
        "offload_kj,iterations,runtime_s,decision,status,error\n";
  for (const auto& r : rows) {
    os << fmt(r.value) << ',' << csv_field(r.policy) << ',' << r.replication
       << ',' << r.seed << ',' << fmt(r.energy_kj) << ',' << fmt(r.compute_kj)
       << ',' << fmt(r.download_kj) << ',' << fmt(r.offload_kj) << ','
       << r.iterations << ',' << fmt(r.runtime_s) << ',' << r.decision << ','
       << r.status << ',' << csv_field(r.error) << '\n';
  }
}

void write_summary_csv(std::ostream& os, const std::vector<SummaryRow>& rows) {
  schema_line(os);
  os << "value,policy,n,mean_kj,stderr_kj,common_n,common_mean_kj,"
        "common_stderr_kj\n";
  for (const auto& s : rows) {
    os << fmt(s.value) << ',' << csv_field(s.policy) << ',' << s.n << ','
       << fmt(s.mean_kj) << ',' << fmt(s.stderr_kj) << ',' << s.common_n << ','
       << fmt(s.common_mean_kj) << ',' << fmt(s.common_stderr_kj) << '\n';
  }
}

void write_loss_csv(std::ostream& os, const std::vector<LossPoint>& trace) {
  schema_line(os);
  os << "iteration,train_loss,test_loss\n";
  for (const auto& p : trace) {
    os << p.iteration << ',' << fmt(p.train_loss) << ',' << fmt(p.test_loss)
       << '\n';
  }
}

void write_file(const std::string& path,
                const std::function<void(std::ostream&)>& body) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    body(out);
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

TrainingExperiment run_training_experiment(
    const ExperimentConfig& cfg, const TrainingExperimentOptions& opts) {
  const ScenarioConfig& sc = cfg.scenario;
  const TrainConfig& base = cfg.training;
  const PreferenceProfile prefs = make_preferences(sc);
  const FeatureScaler scaler = fit_scaler(sc, prefs, base.scaler_samples,
                                          derive_seed(opts.seed, "scaler"));
  const TestSet test = make_test_set(sc, prefs, scaler, base.test_size,
                                     derive_seed(opts.seed, "test"), cfg.solver);

  TrainingExperiment ex;
  TrainConfig tc = base;
  tc.quantizer.kind = QuantizerKind::stochastic;
  ex.stochastic = train(sc, tc, opts.seed, cfg.solver, &test);
  tc.quantizer.kind = QuantizerKind::order_preserving;
  ex.order_preserving = train(sc, tc, opts.seed, cfg.solver, &test);

  PolicyContext ctx;
  ctx.solver = cfg.solver;
  ctx.optimal = cfg.optimal;
  ctx.knapsack = cfg.knapsack;
  const auto stochastic =
      std::make_shared<const PlacementPolicy>(ex.stochastic.policy);
  const auto ordered =
      std::make_shared<const PlacementPolicy>(ex.order_preserving.policy);

  const int n = std::min<int>(opts.eval_scenarios,
                              static_cast<int>(test.scenarios.size()));
  for (int i = 0; i < n; ++i) {
    Instance inst;
    inst.scenario = test.scenarios[i];
    const std::uint64_t seed =
        derive_seed(opts.seed, "eval/" + std::to_string(i));
    auto add = [&](const std::string& label, const std::string& policy) {
      ResultRow row = run_row(policy, inst, ctx, seed, opts.timing);
      row.policy = label;
      row.replication = i;
      ex.comparison.push_back(std::move(row));
    };
    ctx.dl = stochastic;
    add("dl_stochastic", "dl");
    ctx.dl = ordered;
    add("dl_order_preserving", "dl");
    for (const auto& b : opts.baselines) add(b, b);
  }
  return ex;
}

}  // namespace mecache
