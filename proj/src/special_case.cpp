#include "mecache/special_case.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <string>

#include "mecache/lambert_w.hpp"

namespace mecache {

namespace {

constexpr double kLn2 = std::numbers::ln2;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

// log(expm1(X) / X) without overflow, 0 at X = 0.
double log_expm1_ratio(double X) {
  if (X < 1e-8) return X / 2.0;
  if (X < 30.0) return std::log(std::expm1(X) / X);
  return X + std::log1p(-std::exp(-X)) - std::log(X);
}

// x / expm1(X) clamped to [0, 1].
double fraction_from_exponent(double x, double X) {
  if (!(X > 0.0)) return 1.0;
  if (X > 700.0) return 0.0;
  return std::min(1.0, x / std::expm1(X));
}

// Bisection on log(v) for a non-decreasing h with h(lo) < 0 < h(hi).
template <class F>
double log_bisect(F h, double lo, double hi, double tol, int max_iter) {
  double a = std::log(lo);
  double b = std::log(hi);
  double mid = 0.5 * (a + b);
  for (int it = 0; it < max_iter; ++it) {
    mid = 0.5 * (a + b);
    const double v = h(std::exp(mid));
    if (std::abs(v) <= tol) break;
    if (v < 0.0) a = mid; else b = mid;
    if (b - a <= 1e-15 * std::max(1.0, std::abs(mid))) break;
  }
  return std::exp(mid);
}

}  // namespace

ScenarioConfig special_config(const ScenarioConfig& cfg) {
  ScenarioConfig out = cfg;
  out.num_locations = cfg.num_services;
  const auto n = static_cast<std::size_t>(cfg.num_services);
  if (out.distances_km.size() != n && out.distances_km.size() != 1) {
    require(!out.distances_km.empty(), "distance list is empty");
    out.distances_km.assign(n, out.distances_km.front());
  }
  out.explicit_ranks.clear();
  return out;
}

PreferenceProfile one_hot_preferences(int num_services) {
  PreferenceProfile pr;
  pr.pmf = Eigen::MatrixXd::Identity(num_services, num_services);
  pr.zipf_skew = Eigen::VectorXd::Zero(num_services);
  for (int k = 0; k < num_services; ++k) {
    std::vector<int> rank(num_services);
    std::iota(rank.begin(), rank.end(), 1);
    std::swap(rank[0], rank[k]);
    pr.rank.push_back(std::move(rank));
  }
  return pr;
}

SpecialScenario make_special(Scenario s) {
  const int L = s.num_services();
  const int K = s.num_locations();
  require(L == K, "special case needs one service per location");
  const auto& pmf = s.preferences.pmf;
  SpecialScenario out;
  out.location_of.assign(L, -1);
  out.position_of.assign(L, -1);
  for (int k = 0; k < K; ++k) {
    int owner = -1;
    for (int l = 0; l < L; ++l) {
      if (pmf(l, k) == 1.0) {
        require(owner < 0, "pmf column is not one-hot");
        owner = l;
      } else {
        require(pmf(l, k) == 0.0, "pmf column is not one-hot");
      }
    }
    require(owner >= 0, "pmf column is not one-hot");
    require(out.location_of[owner] < 0, "service demanded at two locations");
    out.location_of[owner] = k;
  }
  const auto& order = s.channels.downlink_order;
  for (int l = 0; l < L; ++l) {
    const auto it = std::find(order.begin(), order.end(), out.location_of[l]);
    out.position_of[l] = static_cast<int>(it - order.begin());
  }
  out.scenario = std::move(s);
  return out;
}

SpecialScenario sample_special_scenario(const ScenarioConfig& cfg,
                                        std::uint64_t seed) {
  const ScenarioConfig sc = special_config(cfg);
  Rng rng(seed);
  return make_special(
      sample_scenario(sc, one_hot_preferences(sc.num_services), rng));
}

SpecialDuals SpecialDuals::zeros(int n) {
  SpecialDuals d;
  d.deadline = Eigen::VectorXd::Zero(n);
  d.frequency = Eigen::VectorXd::Zero(n);
  d.offload_rate = Eigen::VectorXd::Zero(n);
  d.download_rate = Eigen::VectorXd::Zero(n);
  return d;
}

SpecialDuals SpecialDuals::from_general(const DualPoint& g,
                                        const SpecialScenario& s) {
  const int n = s.size();
  SpecialDuals d = zeros(n);
  d.deadline = g.deadline;
  d.frequency = g.frequency;
  for (int l = 0; l < n; ++l) {
    d.offload_rate[l] = g.offload_rate(l, s.location_of[l]);
    d.download_rate[l] = g.download_rate(l, s.position_of[l]);
  }
  d.offload_bw = g.offload_bw;
  d.download_bw = g.download_bw;
  return d;
}

double rate_exponent(double c) {
  if (!(c >= 0.0)) throw std::domain_error("rate_exponent requires c >= 0");
  if (c == 0.0) return 0.0;
  if (c >= 1e-3) {
    const double phi_ln2 = -1.0 - c;
    return lambert_w0(-std::exp(phi_ln2)) - phi_ln2;
  }
  // z^2/2! - z^3/3! + ... = c, solved by Newton from z = sqrt(2c).
  double z = std::sqrt(2.0 * c);
  for (int it = 0; it < 20; ++it) {
    double term = z * z / 2.0;
    double h = 0.0;
    double dh = 0.0;
    double dterm = z;
    for (int n = 2; n <= 12; ++n) {
      const double sign = (n % 2 == 0) ? 1.0 : -1.0;
      h += sign * term;
      dh += sign * dterm;
      dterm = term;
      term *= z / (n + 1);
    }
    const double step = (h - c) / dh;
    z -= step;
    if (std::abs(step) <= 1e-16 * z) break;
  }
  return z;
}

double special_bandwidth(double weight, double price, double x,
                         double bandwidth) {
  if (!(weight > 0.0) || !(x > 0.0)) return 0.0;
  if (!(price > 0.0)) return 1.0;
  return fraction_from_exponent(
      x, rate_exponent(price * kLn2 / (weight * bandwidth)));
}

ResourceAllocation kkt_special(const SpecialDuals& d, const SpecialScenario& s,
                               const CachingDecision& I) {
  const int n = s.size();
  const auto& sc = s.scenario;
  const auto& c = sc.constants;
  const auto& ch = sc.channels;
  ResourceAllocation a = ResourceAllocation::zeros(n, n);
  for (int l = 0; l < n; ++l) {
    const auto& sv = sc.services[l];
    const int k = s.location_of[l];
    const int jo = s.position_of[l];
    const double mu = d.deadline[l];

    const double p_dl = c.tx_power_bs_w[l];
    a.alpha_dl[l] = special_bandwidth(d.download_rate[l], d.download_bw,
                                      p_dl * ch.downlink[k], c.bandwidth_dl_hz);
    for (int j = 0; j < n; ++j) {
      if (j == jo) {
        a.t_dl(l, j) = std::sqrt(d.download_rate[l] * sv.output_bits /
                                 (c.weight_bs * p_dl + mu));
      } else if (a.alpha_dl[l] > 0.0) {
        a.t_dl(l, j) =
            sv.output_bits / download_rate(a.alpha_dl[l], p_dl,
                                           ch.downlink[ch.downlink_order[j]],
                                           c.bandwidth_dl_hz);
      }
    }
    if (I[l]) continue;

    const double gap = mu - d.frequency[l];
    if (!(gap > 0.0)) {
      throw unbounded_dual("mu - eta must be positive for uncached services");
    }
    const double cyc = sv.cycles();
    a.t_c[l] = std::cbrt(2.0 * c.capacitance * c.weight_bs * cyc * cyc * cyc /
                         gap);
    const double w_off = c.weight_user[k] * c.tx_power_user_w[k];
    a.alpha_off[l] =
        special_bandwidth(d.offload_rate[l], d.offload_bw,
                          c.tx_power_user_w[k] * ch.uplink[k],
                          c.bandwidth_off_hz);
    for (int kk = 0; kk < n; ++kk) {
      if (kk == k) {
        a.t_off(l, kk) =
            std::sqrt(d.offload_rate[l] * sv.input_bits / (w_off + mu));
      } else if (a.alpha_off[l] > 0.0) {
        a.t_off(l, kk) =
            sv.input_bits / offload_rate(a.alpha_off[l], c.tx_power_user_w[kk],
                                         ch.uplink[kk], c.bandwidth_off_hz);
      }
    }
  }
  return a;
}

DualSystemCoefficients offload_coefficients(const SpecialScenario& s) {
  const int n = s.size();
  const auto& sc = s.scenario;
  const auto& c = sc.constants;
  DualSystemCoefficients out;
  out.x.resize(n);
  out.size.resize(n);
  out.weight.resize(n);
  out.bandwidth = c.bandwidth_off_hz;
  for (int l = 0; l < n; ++l) {
    const int k = s.location_of[l];
    out.x[l] = c.tx_power_user_w[k] * sc.channels.uplink[k];
    out.size[l] = sc.services[l].input_bits;
    out.weight[l] = c.weight_user[k] * c.tx_power_user_w[k];
  }
  return out;
}

DualSystemCoefficients download_coefficients(const SpecialScenario& s) {
  const int n = s.size();
  const auto& sc = s.scenario;
  const auto& c = sc.constants;
  DualSystemCoefficients out;
  out.x.resize(n);
  out.size.resize(n);
  out.weight.resize(n);
  out.bandwidth = c.bandwidth_dl_hz;
  for (int l = 0; l < n; ++l) {
    const int k = s.location_of[l];
    out.x[l] = c.tx_power_bs_w[l] * sc.channels.downlink[k];
    out.size[l] = sc.services[l].output_bits;
    out.weight[l] = c.weight_bs * c.tx_power_bs_w[l];
  }
  return out;
}

double dual_f(const DualSystemCoefficients& c, int k, double rate,
              double price) {
  const double A = c.bandwidth * c.x[k] /
                   (kLn2 * std::sqrt(c.size[k] * c.weight[k]));
  const double X = rate_exponent(price * kLn2 / (rate * c.bandwidth));
  return 1.0 - std::exp(log_expm1_ratio(X) - 0.5 * std::log(rate) -
                        std::log(A));
}

double dual_g(const DualSystemCoefficients& c, const Eigen::VectorXd& rate,
              double price) {
  double sum = 0.0;
  for (Eigen::Index k = 0; k < rate.size(); ++k) {
    sum += fraction_from_exponent(
        c.x[k], rate_exponent(price * kLn2 / (rate[k] * c.bandwidth)));
  }
  return sum - 1.0;
}

DualSystemSolution solve_dual_direction(const DualSystemCoefficients& c,
                                        const DualBisectionOptions& o) {
  const int n = static_cast<int>(c.x.size());
  const double inner_tol = 1e-2 * o.tol;

  // Widens [lo, hi] until sign(h(lo)) <= 0 <= sign(h(hi)) for non-decreasing h.
  auto bracket = [&](auto h, const char* what, double lo) {
    double hi = o.hi;
    for (int e = 0;; ++e) {
      if (h(lo) <= 0.0 && h(hi) >= 0.0) return std::pair{lo, hi};
      if (e >= o.expansions) {
        throw bracket_failure(std::string("no sign change for ") + what);
      }
      lo /= 10.0;
      hi *= 10.0;
    }
  };

  auto rates_at = [&](double price) {
    Eigen::VectorXd rate(n);
    for (int k = 0; k < n; ++k) {
      auto f = [&](double w) { return dual_f(c, k, w, price); };
      // f <= 0 at 1 / A_k^2 since expm1(X) / X >= 1.
      const double A = c.bandwidth * c.x[k] /
                       (kLn2 * std::sqrt(c.size[k] * c.weight[k]));
      const auto [lo, hi] =
          bracket(f, "rate multiplier", std::min(o.lo, 1.0 / (A * A)));
      rate[k] = log_bisect(f, lo, hi, inner_tol, o.max_iter);
    }
    return rate;
  };

  // g is non-increasing in the price; bisect on -g.
  auto neg_g = [&](double price) { return -dual_g(c, rates_at(price), price); };
  const auto [lo, hi] = bracket(neg_g, "band price", o.lo);

  DualSystemSolution sol;
  sol.price = log_bisect(neg_g, lo, hi, inner_tol, o.max_iter);
  sol.rate = rates_at(sol.price);
  sol.alpha.resize(n);
  for (int k = 0; k < n; ++k) {
    sol.alpha[k] = fraction_from_exponent(
        c.x[k], rate_exponent(sol.price * kLn2 / (sol.rate[k] * c.bandwidth)));
    sol.f_residual =
        std::max(sol.f_residual, std::abs(dual_f(c, k, sol.rate[k], sol.price)));
  }
  sol.g_residual = std::abs(sol.alpha.sum() - 1.0);
  return sol;
}

SpecialDualSolution solve_dual_system(const SpecialScenario& s,
                                      const DualBisectionOptions& o) {
  return {solve_dual_direction(offload_coefficients(s), o),
          solve_dual_direction(download_coefficients(s), o)};
}

SpecialDuals SpecialDualSolution::duals() const {
  SpecialDuals d = SpecialDuals::zeros(static_cast<int>(offload.rate.size()));
  d.offload_rate = offload.rate;
  d.download_rate = download.rate;
  d.offload_bw = offload.price;
  d.download_bw = download.price;
  return d;
}

FixedTimes fixed_times(const SpecialScenario& s, const SpecialDualSolution& d) {
  const int n = s.size();
  const auto& sc = s.scenario;
  const auto& c = sc.constants;
  const auto& ch = sc.channels;
  FixedTimes t{Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (int l = 0; l < n; ++l) {
    const auto& sv = sc.services[l];
    const int k = s.location_of[l];
    t.t_c[l] = sv.cycles() / c.max_core_freq_hz;
    t.t_off[l] = sv.input_bits / offload_rate(d.offload.alpha[l],
                                              c.tx_power_user_w[k],
                                              ch.uplink[k], c.bandwidth_off_hz);
    t.t_dl[l] = sv.output_bits / download_rate(d.download.alpha[l],
                                               c.tx_power_bs_w[l],
                                               ch.downlink[k], c.bandwidth_dl_hz);
  }
  return t;
}

Eigen::VectorXd caching_savings(const SpecialScenario& s, const FixedTimes& t) {
  const int n = s.size();
  const auto& c = s.scenario.constants;
  Eigen::VectorXd v(n);
  for (int l = 0; l < n; ++l) {
    const int k = s.location_of[l];
    const double cyc = s.scenario.services[l].cycles();
    v[l] = c.weight_bs * c.capacitance * cyc * cyc * cyc /
               (t.t_c[l] * t.t_c[l]) +
           c.weight_user[k] * c.tx_power_user_w[k] * t.t_off[l];
  }
  return v;
}

double ilp_objective(const SpecialScenario& s, const FixedTimes& t,
                     const CachingDecision& I) {
  const Eigen::VectorXd v = caching_savings(s, t);
  double sum = 0.0;
  for (int l = 0; l < s.size(); ++l) {
    if (!I[l]) sum += v[l];
  }
  return sum;
}

namespace {

std::vector<bool> knapsack_dp(const Eigen::VectorXd& value,
                              const Eigen::VectorXd& size, double capacity,
                              double granularity) {
  const int n = static_cast<int>(value.size());
  const auto cap = static_cast<std::size_t>(
      std::floor(capacity / granularity + 1e-9));
  std::vector<std::size_t> w(n);
  for (int i = 0; i < n; ++i) {
    w[i] = static_cast<std::size_t>(std::ceil(size[i] / granularity - 1e-9));
  }
  std::vector<double> best(cap + 1, 0.0);
  std::vector<std::vector<bool>> take(n, std::vector<bool>(cap + 1, false));
  for (int i = 0; i < n; ++i) {
    if (w[i] > cap) continue;
    for (std::size_t c = cap; c + 1 > w[i]; --c) {
      const double cand = best[c - w[i]] + value[i];
      if (cand > best[c]) {
        best[c] = cand;
        take[i][c] = true;
      }
      if (c == 0) break;
    }
  }
  std::vector<bool> chosen(n, false);
  std::size_t c = cap;
  for (int i = n - 1; i >= 0; --i) {
    if (take[i][c]) {
      chosen[i] = true;
      c -= w[i];
    }
  }
  return chosen;
}

struct BranchAndBound {
  std::vector<int> order;  // by value density, descending
  const Eigen::VectorXd& value;
  const Eigen::VectorXd& size;
  double capacity;
  std::vector<bool> current, best;
  double best_value = -1.0;

  // Fractional relaxation over items order[i..].
  double bound(std::size_t i, double room, double acc) const {
    for (; i < order.size(); ++i) {
      const int it = order[i];
      if (size[it] <= room) {
        room -= size[it];
        acc += value[it];
      } else {
        return acc + value[it] * room / size[it];
      }
    }
    return acc;
  }

  void search(std::size_t i, double room, double acc) {
    if (acc > best_value) {
      best_value = acc;
      best = current;
    }
    if (i == order.size()) return;
    if (bound(i, room, acc) <= best_value) return;
    const int it = order[i];
    if (size[it] <= room) {
      current[it] = true;
      search(i + 1, room - size[it], acc + value[it]);
      current[it] = false;
    }
    search(i + 1, room, acc);
  }
};

}  // namespace

std::vector<bool> knapsack(const Eigen::VectorXd& value,
                           const Eigen::VectorXd& size, double capacity,
                           const KnapsackOptions& o) {
  require(value.size() == size.size(), "knapsack value/size mismatch");
  require((size.array() > 0.0).all(), "knapsack sizes must be positive");
  const int n = static_cast<int>(value.size());
  if (!(capacity > 0.0)) return std::vector<bool>(n, false);
  if (o.method == KnapsackMethod::dynamic_programming) {
    return knapsack_dp(value, size, capacity, o.granularity_bits);
  }
  BranchAndBound bb{{}, value, size, capacity, std::vector<bool>(n, false),
                    std::vector<bool>(n, false)};
  for (int i = 0; i < n; ++i) {
    if (value[i] > 0.0) bb.order.push_back(i);
  }
  std::stable_sort(bb.order.begin(), bb.order.end(), [&](int a, int b) {
    return value[a] * size[b] > value[b] * size[a];
  });
  bb.search(0, capacity, 0.0);
  return bb.best;
}

CachingDecision ilp_cache_placement(const SpecialScenario& s,
                                    const FixedTimes& t,
                                    const KnapsackOptions& o) {
  const int n = s.size();
  Eigen::VectorXd size(n);
  for (int l = 0; l < n; ++l) size[l] = s.scenario.services[l].output_bits;
  const auto chosen = knapsack(caching_savings(s, t), size,
                               s.scenario.constants.cache_capacity_bits, o);
  CachingDecision I(n);
  for (int l = 0; l < n; ++l) {
    if (chosen[l]) I.set(l);
  }
  return I;
}

SpecialResult solve_special_detailed(const SpecialScenario& s,
                                     const SolveOptions& opts,
                                     const KnapsackOptions& ko) {
  SpecialResult r;
  r.duals = solve_dual_system(s);
  r.times = fixed_times(s, r.duals);
  r.assumption_slack.resize(s.size());
  for (int l = 0; l < s.size(); ++l) {
    r.assumption_slack[l] = s.scenario.services[l].deadline_s - r.times.t_c[l] -
                            r.times.t_off[l] - r.times.t_dl[l];
  }
  const CachingDecision I = ilp_cache_placement(s, r.times, ko);
  r.policy = evaluate_decision(s.scenario, I, "special", opts);
  return r;
}

PolicyResult solve_special(const SpecialScenario& s, const SolveOptions& opts,
                           const KnapsackOptions& ko) {
  return solve_special_detailed(s, opts, ko).policy;
}

}  // namespace mecache
