// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero when any fails. Tolerances are fixed here, not configurable.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "mecache/config.hpp"
#include "mecache/harness.hpp"
#include "mecache/lambert_w.hpp"
#include "mecache/mlp.hpp"
#include "mecache/seed.hpp"
#include "oracle.hpp"

using namespace mecache;

namespace {

int failures = 0;

void report(const std::string& id, bool pass, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", id.c_str(), detail.c_str());
  std::fflush(stdout);
  failures += !pass;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ExperimentConfig load(const char* name) {
  return load_config(std::string(MECACHE_SOURCE_DIR "/configs/") + name);
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

// Worst relative violation of the link-rate equalities of an allocation.
double rate_residual(const Scenario& s, const CachingDecision& I,
                     const ResourceAllocation& a) {
  const auto& c = s.constants;
  double worst = 0;
  for (int l = 0; l < s.num_services(); ++l) {
    if (I[l]) continue;
    const auto& sv = s.services[l];
    for (int k = 0; k < s.num_locations(); ++k) {
      const double up = offload_rate(a.alpha_off[l], c.tx_power_user_w[k],
                                     s.channels.uplink[k], c.bandwidth_off_hz);
      const double down = download_rate(
          a.alpha_dl[l], c.tx_power_bs_w[l],
          s.channels.downlink[s.channels.downlink_order[k]], c.bandwidth_dl_hz);
      worst = std::max(worst, std::abs(a.t_off(l, k) * up / sv.input_bits - 1));
      worst = std::max(worst, std::abs(a.t_dl(l, k) * down / sv.output_bits - 1));
    }
  }
  return worst;
}

int rate_solves = 0;
double rate_worst = 0;

void note_rates(const Scenario& s, const CachingDecision& I, const SolveResult& r) {
  if (r.status != SolveStatus::optimal) return;
  ++rate_solves;
  rate_worst = std::max(rate_worst, rate_residual(s, I, r.allocation));
}

void solver_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  int checked = 0, draws = 0, status_mismatch = 0;
  double worst_obj = 0, worst_gap = 0, worst_kkt = 0;
  while (checked < 50 && draws < 500) {
    ++draws;
    ScenarioConfig cfg;
    cfg.num_services = 1 + static_cast<int>(rng() % 3);
    cfg.num_locations = 1 + static_cast<int>(rng() % 2);
    cfg.distances_km = {0.03};
    cfg.preference_seed = rng();
    cfg.deadline_s = std::uniform_real_distribution<double>(1.0, 3.5)(rng);
    const Scenario s = sample_scenario(cfg, rng());
    CachingDecision I(cfg.num_services);
    for (int l = 0; l < cfg.num_services; ++l) I.set(l, rng() % 3 == 0);
    const auto ref = oracle::minimize(s, I);
    const auto r = solve_allocation(s, I);
    note_rates(s, I, r);
    if (!std::isfinite(ref.energy)) {
      status_mismatch += r.status == SolveStatus::optimal;
      continue;
    }
    if (r.status != SolveStatus::optimal) {
      ++status_mismatch;
      continue;
    }
    worst_obj = std::max(worst_obj, std::abs(r.objective - ref.energy) / ref.energy);
    worst_gap = std::max(worst_gap, r.relative_gap());
    worst_kkt = std::max(worst_kkt,
                         kkt_residuals(s, I, r.allocation, r.duals).max());
    ++checked;
  }
  const double secs = seconds_since(t0);
  report("solver_oracle",
         checked == 50 && status_mismatch == 0 && worst_obj <= 1e-3 &&
             worst_gap <= 1e-3 && worst_kkt <= 1e-4 && secs < 300,
         fmt("%d feasible instances, %d status mismatches, max rel err %.2e, "
             "max gap %.2e, max KKT %.2e, %.1f s",
             checked, status_mismatch, worst_obj, worst_gap, worst_kkt, secs));
}

void rate_activity() {
  // Full-size solves on top of the oracle instances.
  ScenarioConfig cfg;
  std::mt19937_64 rng(7);
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    cfg.deadline_s = 2.8 + 0.1 * static_cast<double>(seed % 8);
    const Scenario s = sample_scenario(cfg, seed);
    CachingDecision I(cfg.num_services);
    for (int l = 0; l < cfg.num_services; ++l) {
      I.set(l, rng() % 3 == 0);
      if (!capacity_feasible(s, I)) I.set(l, false);
    }
    note_rates(s, I, solve_allocation(s, I));
  }
  report("rate_activity", rate_solves >= 30 && rate_worst <= 1e-4,
         fmt("%d optimal solves, max relative rate residual %.2e", rate_solves,
             rate_worst));
}

void tiny_infer() {
  ScenarioConfig cfg;
  cfg.num_services = 4;
  cfg.num_locations = 2;
  cfg.distances_km = {0.03};
  cfg.deadline_s = 2.2;
  cfg.cache_capacity_bits = 50e6;
  Rng init(1);
  PlacementPolicy p;
  p.net = Network::glorot({12, 8, 4}, init);
  p.scaler = fit_scaler(cfg, make_preferences(cfg), 64, 3);
  p.quantizer.num_samples = 2000;
  p.quantizer.num_candidates = 16;
  p.quantizer.noise_std = 3.0;
  int checked = 0, equal = 0;
  for (std::uint64_t seed = 1; checked < 20 && seed < 200; ++seed) {
    const Scenario s = sample_scenario(cfg, seed);
    const auto opt = optimal_caching(s);
    if (!opt.ok()) continue;
    Rng rng(derive_seed(seed, "infer"));
    const auto r = infer(p, s, rng);
    ++checked;
    equal += r.ok() && r.decision == opt.decision && r.energy() == opt.energy();
  }
  report("tiny_infer", checked == 20 && equal == checked,
         fmt("%d/%d instances match the exhaustive optimum exactly", equal,
             checked));
}

// Mean energies of dl and a baseline over scenarios where both solved.
struct Paired {
  double dl = 0, base = 0, opt = 0;  // opt: exhaustive optimum, same set
  int n = 0;
};

Paired paired(const std::vector<ResultRow>& rows, const std::string& baseline) {
  std::map<int, std::map<std::string, const ResultRow*>> by_rep;
  for (const auto& r : rows) by_rep[r.replication][r.policy] = &r;
  Paired p;
  for (const auto& [rep, e] : by_rep) {
    const auto* d = e.at("dl_stochastic");
    const auto* b = e.at(baseline);
    if (!d->ok() || !b->ok()) continue;
    p.dl += d->energy_kj;
    p.base += b->energy_kj;
    p.opt += e.at("optimal")->energy_kj;
    ++p.n;
  }
  p.dl /= p.n;
  p.base /= p.n;
  p.opt /= p.n;
  return p;
}

std::vector<TrainResult> training_runs[2];  // stochastic, order-preserving

void headline() {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig cfg = load("default.json");
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    TrainingExperimentOptions o;
    o.seed = seed;
    o.eval_scenarios = seed == 1 ? cfg.training.test_size : 0;  // whole held-out set
    o.baselines = {"popular", "greedy", "optimal"};
    auto ex = run_training_experiment(cfg, o);
    if (seed == 1) {
      // Greedy needs a solvable empty cache, so each comparison uses the
      // scenarios where both of its policies solve.
      const Paired o = paired(ex.comparison, "optimal");
      const Paired g = paired(ex.comparison, "greedy");
      const Paired p = paired(ex.comparison, "popular");
      report("headline.optimal_ratio", o.n >= 20 && o.base / o.dl >= 0.95,
             fmt("optimal/dl energy %.4f over %d scenarios (need >= 0.95)",
                 o.base / o.dl, o.n));
      report("headline.vs_greedy", g.n >= 20 && 1 - g.dl / g.base >= 0.20,
             fmt("saving vs greedy %.2f%% over %d scenarios (need >= 20%%); "
                 "optimum saves %.2f%%",
                 100 * (1 - g.dl / g.base), g.n, 100 * (1 - g.opt / g.base)));
      report("headline.vs_popular", p.n >= 20 && 1 - p.dl / p.base >= 0.02,
             fmt("saving vs popular %.2f%% over %d scenarios (need >= 2%%); "
                 "optimum saves %.2f%%",
                 100 * (1 - p.dl / p.base), p.n, 100 * (1 - p.opt / p.base)));
    }
    training_runs[0].push_back(std::move(ex.stochastic));
    training_runs[1].push_back(std::move(ex.order_preserving));
  }
  std::printf("  (3 training seeds with both quantizers in %.0f s)\n",
              seconds_since(t0));
}

double window_mean(const std::vector<LossPoint>& trace, int from, int to) {
  double sum = 0;
  int n = 0;
  for (const auto& p : trace) {
    if (p.iteration >= from && p.iteration < to) sum += p.train_loss, ++n;
  }
  return n ? sum / n : NAN;
}

void training_behaviour() {
  double early[2] = {0, 0}, late[2] = {0, 0}, test[2] = {0, 0};
  for (int q = 0; q < 2; ++q) {
    for (const auto& r : training_runs[q]) {
      const int last = r.trace.back().iteration;
      early[q] += window_mean(r.trace, 200, 400) / 3;
      late[q] += window_mean(r.trace, last - 199, last + 1) / 3;
      test[q] += r.trace.back().test_loss / 3;
    }
  }
  report("training.loss_decreases", late[0] < early[0] && late[1] < early[1],
         fmt("train loss, window [200,400) vs last 200 iterations: stochastic "
             "%.4f -> %.4f, order-preserving %.4f -> %.4f",
             early[0], late[0], early[1], late[1]));
  report("training.stochastic_test_loss", test[0] <= test[1],
         fmt("final test loss stochastic %.4f vs order-preserving %.4f",
             test[0], test[1]));
}

void no_caching_level() {
  ScenarioConfig cfg = load("default.json").scenario;
  cfg.deadline_s = 2.8;
  const PolicyContext ctx;
  int feasible = 0, draws = 0;
  double sum = 0;
  while (feasible < 200 && draws < 5000) {
    const std::uint64_t seed = derive_seed(1, "no_caching/" + std::to_string(draws++));
    const auto row = run_row("no", sample_instance(cfg, false, seed), ctx, seed, false);
    if (!row.ok()) continue;
    ++feasible;
    sum += row.energy_kj;
  }
  const double mean = sum / feasible;
  report("no_caching_level",
         feasible >= 200 && std::abs(mean / 0.8529 - 1) <= 0.20,
         fmt("mean %.4f kJ over %d feasible of %d draws (target 0.8529 kJ "
             "+-20%%, ratio %.3f)",
             mean, feasible, draws, mean / 0.8529));
}

// Per policy, energy between neighbouring grid points must move in
// `direction` (-1 non-increasing, +1 non-decreasing) up to the larger of the
// two standard errors, over replications that solve at both points.
void monotone(const char* id, const char* file, int direction) {
  const auto cfg = load(file);
  SweepOptions o;
  const auto rows = run_sweep(cfg, o);
  std::map<std::string, std::map<double, std::map<int, double>>> e;
  for (const auto& r : rows) {
    if (r.ok()) e[r.policy][r.value][r.replication] = r.energy_kj;
  }
  int pairs = 0, violations = 0, skipped = 0;
  std::string worst;
  double worst_excess = 0;
  for (const auto& policy : cfg.sweep.policies) {
    const auto& v = cfg.sweep.values;
    for (std::size_t i = 0; i + 1 < v.size(); ++i) {
      const auto& a = e[policy][v[i]];
      const auto& b = e[policy][v[i + 1]];
      std::vector<double> xa, xb;
      for (const auto& [rep, x] : a) {
        if (b.count(rep)) xa.push_back(x), xb.push_back(b.at(rep));
      }
      const int n = static_cast<int>(xa.size());
      if (n < 2) {
        ++skipped;
        continue;
      }
      auto stats = [n](const std::vector<double>& x) {
        double m = 0, ss = 0;
        for (double y : x) m += y;
        m /= n;
        for (double y : x) ss += (y - m) * (y - m);
        return std::pair{m, std::sqrt(ss / (n - 1) / n)};
      };
      const auto [ma, sa] = stats(xa);
      const auto [mb, sb] = stats(xb);
      ++pairs;
      const double excess = -direction * (mb - ma) - std::max(sa, sb);
      if (excess > 0) {
        ++violations;
        if (excess > worst_excess) {
          worst_excess = excess;
          worst = fmt("; worst %s %g->%g: %.4f -> %.4f kJ (se %.4f)",
                      policy.c_str(), v[i], v[i + 1], ma, mb, std::max(sa, sb));
        }
      }
    }
  }
  report(id, violations == 0 && pairs > 0,
         fmt("%d neighbour pairs checked, %d skipped (<2 common solves), %d "
             "violations%s",
             pairs, skipped, violations, worst.c_str()));
}

void saturation() {
  ScenarioConfig cfg;
  cfg.deadline_s = 3.5;
  cfg.cache_capacity_bits = cfg.num_services * cfg.output_bits_max;
  PolicyContext ctx;
  ctx.optimal.maximal_only = true;
  Rng init(5);
  auto dl = std::make_shared<PlacementPolicy>();
  dl->net = Network::glorot({2 * (cfg.num_services + cfg.num_locations), 16,
                             cfg.num_services},
                            init);
  dl->scaler = fit_scaler(cfg, make_preferences(cfg), 64, 5);
  ctx.dl = dl;
  int instances = 0, skipped = 0, unsolved = 0;
  double worst = 0;
  for (int r = 0; r < 20; ++r) {
    const std::uint64_t seed = derive_seed(3, "saturation/" + std::to_string(r));
    const Instance inst = sample_instance(cfg, false, seed);
    // Greedy grows the cache from an empty one, which must be solvable.
    if (!no_caching(inst.scenario).ok()) {
      ++skipped;
      continue;
    }
    const auto all = run_policy("all", inst, ctx, seed);
    ++instances;
    for (const char* p : {"popular", "greedy", "optimal", "dl"}) {
      const auto x = run_policy(p, inst, ctx, seed);
      if (!x.ok() || !all.ok()) {
        ++unsolved;
        continue;
      }
      worst = std::max(worst, std::abs(x.energy() / all.energy() - 1));
    }
  }
  report("saturation", instances >= 10 && unsolved == 0 && worst <= 1e-6,
         fmt("S = sum of sizes, T = 3.5 s, %d scenarios (%d without an "
             "empty-cache solution skipped), %d unsolved, popular/greedy/"
             "optimal/dl vs all-caching max relative difference %.2e",
             instances, skipped, unsolved, worst));
}

void special_case() {
  const auto cfg = load("special.json");
  SweepOptions o;
  o.special = true;
  const auto rows = run_sweep(cfg, o);
  std::map<double, std::map<std::string, std::pair<double, int>>> sums;
  std::map<double, std::map<int, std::map<std::string, double>>> by_rep;
  for (const auto& r : rows) {
    if (!r.ok()) continue;
    by_rep[r.value][r.replication][r.policy] = r.energy_kj;
    auto& s = sums[r.value][r.policy];
    s.first += r.energy_kj;
    s.second += 1;
  }
  // Near-optimality at the slack deadline, paired per scenario.
  double sp = 0, opt = 0, worst = 0;
  int n = 0;
  for (const auto& [rep, e] : by_rep[3.5]) {
    if (!e.count("special") || !e.count("optimal")) continue;
    sp += e.at("special");
    opt += e.at("optimal");
    worst = std::max(worst, e.at("special") / e.at("optimal"));
    ++n;
  }
  report("special.near_optimal", n >= 20 && sp / opt <= 1.05,
         fmt("T=3.5 s: special/optimal mean energy %.4f over %d scenarios "
             "(worst single %.4f)",
             sp / opt, n, worst));

  std::vector<double> means;
  std::string list;
  for (const auto& [t, m] : sums) {
    const auto& a = m.at("all");
    means.push_back(a.first / a.second);
    list += fmt(" %g:%.3fJ", t, 1e3 * means.back());
  }
  double mu = 0, var = 0;
  for (double x : means) mu += x;
  mu /= static_cast<double>(means.size());
  for (double x : means) var += (x - mu) * (x - mu);
  const double cv = std::sqrt(var / static_cast<double>(means.size())) / mu;
  report("special.all_caching_flat", cv < 0.02,
         fmt("coefficient of variation %.4f across T;%s", cv, list.c_str()));
  report("special.all_caching_level", std::abs(mu * 1e3 / 6.4 - 1) <= 0.25,
         fmt("mean %.3f J (target 6.4 J +-25%%, ratio %.3f)", mu * 1e3,
             mu * 1e3 / 6.4));

  // ILP versus brute force on the fixed-time objective.
  int instances = 0, equal = 0;
  for (int k = 2; k <= 14; ++k) {
    for (int trial = 0; trial < 3; ++trial) {
      ScenarioConfig sc = cfg.scenario;
      sc.num_services = k;
      sc.explicit_ranks.clear();
      sc.cache_capacity_bits = (20 + 10 * trial) * 1e6 * k / 4.0;
      const auto s = sample_special_scenario(
          special_config(sc), derive_seed(k, "ilp/" + std::to_string(trial)));
      const auto t = fixed_times(s, solve_dual_system(s));
      const auto I = ilp_cache_placement(s, t, cfg.knapsack);
      double best = INFINITY;
      for (std::uint64_t m = 0; m < (std::uint64_t{1} << k); ++m) {
        const auto J = CachingDecision::from_mask(k, m);
        if (capacity_feasible(s.scenario, J)) best = std::min(best, ilp_objective(s, t, J));
      }
      ++instances;
      const double got = ilp_objective(s, t, I);
      equal += capacity_feasible(s.scenario, I) &&
               std::abs(got - best) <= 1e-12 * std::abs(best);
    }
  }
  report("special.ilp_exact", equal == instances,
         fmt("%d/%d instances with K = 2..14 equal brute force", equal,
             instances));
}

void kernels() {
  const double inv_e = 1.0 / std::numbers::e;
  double worst_w = 0;
  for (int i = 0; i <= 400; ++i) {
    const double x = -inv_e + std::pow(10.0, -9.0 + 9.0 * i / 400.0) * inv_e;
    const double w = lambert_w0(x);
    worst_w = std::max(worst_w, std::abs(w * std::exp(w) - x));
  }
  for (int i = 0; i <= 600; ++i) {
    const double x = std::pow(10.0, -12.0 + 18.0 * i / 600.0);
    const double w = lambert_w0(x);
    worst_w = std::max(worst_w, std::abs(w * std::exp(w) - x) / std::max(1.0, x));
  }
  report("kernels.lambert_w", worst_w <= 1e-10,
         fmt("max inverse-identity residual %.2e", worst_w));

  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  using Net = Mlp<double>;
  Net net = Net::glorot({6, 5, 4, 3}, rng);
  // Zero biases put whole samples on a ReLU kink once a layer is silent.
  for (auto& b : net.biases()) {
    for (int r = 0; r < b.size(); ++r) b[r] = 0.1 * g(rng);
  }
  Eigen::MatrixXd X(6, 8), Y(3, 8);
  for (int j = 0; j < 8; ++j) {
    for (int i = 0; i < 6; ++i) X(i, j) = g(rng);
    for (int i = 0; i < 3; ++i) Y(i, j) = g(rng) > 0;
  }
  const auto grad = net.backward(X, Y);
  double worst_g = 0;
  auto probe = [&](double& param, double analytic) {
    const double keep = param, h = 1e-6;
    param = keep + h;
    const double up = net.loss(X, Y);
    param = keep - h;
    const double down = net.loss(X, Y);
    param = keep;
    const double fd = (up - down) / (2 * h);
    worst_g = std::max(worst_g, std::abs(fd - analytic) /
                                    std::max(1e-3, std::abs(fd) + std::abs(analytic)));
  };
  for (int i = 0; i < net.num_layers(); ++i) {
    auto& W = net.weights()[i];
    for (int c = 0; c < W.cols(); ++c) {
      for (int r = 0; r < W.rows(); ++r) probe(W(r, c), grad.weights[i](r, c));
    }
    auto& b = net.biases()[i];
    for (int r = 0; r < b.size(); ++r) probe(b[r], grad.biases[i][r]);
  }
  report("kernels.mlp_gradient", worst_g <= 1e-4,
         fmt("max relative finite-difference error %.2e", worst_g));

  ScenarioConfig cfg;
  const auto prefs = make_preferences(cfg);
  const std::vector<int> order{4, 1, 3, 0, 2};
  const auto req = request_probability(prefs.pmf);
  const auto off = offload_select_table(prefs.pmf);
  const auto bc = broadcast_rate_table(prefs.pmf, order);
  const int n = 100000, L = cfg.num_services, K = cfg.num_locations;
  Eigen::VectorXd c_req = Eigen::VectorXd::Zero(L);
  Eigen::MatrixXd c_off = Eigen::MatrixXd::Zero(L, K), c_bc = c_off;
  Rng draw(11);
  for (int i = 0; i < n; ++i) {
    const auto r = sample_requests(prefs, draw).requests;
    for (int l = 0; l < L; ++l) {
      if (r.row(l).sum() == 0) continue;
      c_req[l] += 1;
      int k = 0;
      while (!r(l, k)) ++k;
      c_off(l, k) += 1;
      int j = K - 1;
      while (!r(l, order[j])) --j;
      c_bc(l, j) += 1;
    }
  }
  int checks = 0, outside = 0;
  double worst_z = 0;
  auto within = [&](double q, double count) {
    ++checks;
    const double sigma = std::sqrt(q * (1 - q) / n);
    const double z = sigma > 0 ? std::abs(count / n - q) / sigma
                               : (count == q * n ? 0.0 : INFINITY);
    worst_z = std::max(worst_z, z);
    outside += z > 3;
  };
  for (int l = 0; l < L; ++l) {
    within(req[l], c_req[l]);
    for (int k = 0; k < K; ++k) {
      within(off(l, k), c_off(l, k));
      within(bc(l, k), c_bc(l, k));
    }
  }
  // 3 sigma admits 0.27% misses per comparison; allow one in the family.
  report("kernels.probabilities_monte_carlo", outside <= 1,
         fmt("%d/%d probabilities outside 3 sigma (max |z| %.2f, %d draws)",
             outside, checks, worst_z, n));
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  try {
    kernels();
    solver_oracle();
    rate_activity();
    tiny_infer();
    saturation();
    special_case();
    no_caching_level();
    monotone("monotone.cache_capacity", "default.json", -1);
    monotone("monotone.deadline", "deadline_sweep.json", -1);
    monotone("monotone.services", "services_sweep.json", +1);
    monotone("monotone.weight_bs", "weight_sweep.json", +1);
    headline();
    training_behaviour();
  } catch (const std::exception& e) {
    report("harness", false, std::string("exception: ") + e.what());
  }
  std::printf("%d criteria failed, %.0f s total\n", failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
