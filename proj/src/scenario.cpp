#include "mecache/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mecache {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

template <class Vec>
Vec permuted(const Vec& v, const std::vector<int>& order) {
  Vec out(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) out[i] = v[order[i]];
  return out;
}

}  // namespace

double Scenario::total_output_bits() const {
  double total = 0.0;
  for (const auto& s : services) total += s.output_bits;
  return total;
}

void Scenario::validate() const {
  const int L = num_services();
  const int K = num_locations();
  require(L >= 1 && K >= 1, "scenario needs at least one service and location");
  for (const auto& s : services) {
    require(s.cycles_per_bit > 0 && s.input_bits > 0 && s.output_bits > 0 &&
                s.deadline_s > 0,
            "service parameters must be positive");
  }
  const auto& c = constants;
  require(c.bandwidth_off_hz > 0 && c.bandwidth_dl_hz > 0,
          "bandwidth must be positive");
  require(c.noise_psd_w_per_hz > 0 && c.ref_gain > 0 && c.ref_distance_km > 0 &&
              c.pathloss_exponent > 0,
          "channel constants must be positive");
  require(c.capacitance > 0 && c.max_core_freq_hz > 0,
          "compute constants must be positive");
  require(c.cache_capacity_bits >= 0, "cache capacity must be non-negative");
  require(c.tx_power_user_w.size() == K && c.weight_user.size() == K,
          "per-location constants have wrong size");
  require(c.tx_power_bs_w.size() == L, "per-service powers have wrong size");
  require((c.tx_power_user_w.array() > 0).all() &&
              (c.tx_power_bs_w.array() > 0).all(),
          "transmit powers must be positive");
  require(c.weight_bs >= 0 && (c.weight_user.array() >= 0).all(),
          "weights must be non-negative");
  require(std::abs(c.weight_bs + c.weight_user.sum() - 1.0) <= 1e-12,
          "weights must sum to one");

  const auto& P = preferences.pmf;
  require(P.rows() == L && P.cols() == K, "pmf must be L x K");
  require((P.array() >= 0).all() && (P.array() <= 1).all(),
          "pmf entries must lie in [0, 1]");
  for (int k = 0; k < K; ++k) {
    require(std::abs(P.col(k).sum() - 1.0) <= 1e-9, "pmf column must sum to 1");
  }

  const auto& ch = channels;
  require(ch.downlink.size() == K, "downlink gains have wrong size");
  require(static_cast<int>(ch.downlink_order.size()) == K,
          "downlink order has wrong size");
  require((ch.uplink.array() > 0).all() && (ch.downlink.array() > 0).all(),
          "channel gains must be positive");
  for (int k = 1; k < K; ++k) {
    require(ch.uplink[k - 1] >= ch.uplink[k], "uplink gains must be sorted");
    require(ch.downlink[ch.downlink_order[k - 1]] >=
                ch.downlink[ch.downlink_order[k]],
            "downlink order must sort gains");
  }
  std::vector<int> seen(ch.downlink_order);
  std::sort(seen.begin(), seen.end());
  for (int k = 0; k < K; ++k) {
    require(seen[k] == k, "downlink order must be a permutation");
  }
}

Eigen::VectorXd zipf_pmf(int num_services, double skew,
                         std::span<const int> rank) {
  require(num_services >= 1, "zipf_pmf needs at least one service");
  require(skew >= 0, "zipf skew must be non-negative");
  require(static_cast<int>(rank.size()) == num_services,
          "rank permutation has wrong size");
  double norm = 0.0;
  for (int j = 1; j <= num_services; ++j) norm += std::pow(j, -skew);
  Eigen::VectorXd p(num_services);
  for (int l = 0; l < num_services; ++l) {
    p[l] = std::pow(rank[l], -skew) / norm;
  }
  return p;
}

double prob_no_request(const Eigen::Ref<const Eigen::VectorXd>& p) {
  return (1.0 - p.array()).prod();
}

double prob_offload_select(const Eigen::Ref<const Eigen::VectorXd>& p, int k) {
  double idle = 1.0;
  for (int j = 0; j < k; ++j) idle *= 1.0 - p[j];
  return idle * p[k];
}

double prob_broadcast_rate(const Eigen::Ref<const Eigen::VectorXd>& p,
                           std::span<const int> downlink_order, int k) {
  const int K = static_cast<int>(downlink_order.size());
  double idle = 1.0;
  for (int j = k + 1; j < K; ++j) idle *= 1.0 - p[downlink_order[j]];
  return idle * p[downlink_order[k]];
}

Eigen::VectorXd request_probability(const Eigen::MatrixXd& pmf) {
  Eigen::VectorXd rho(pmf.rows());
  for (Eigen::Index l = 0; l < pmf.rows(); ++l) {
    rho[l] = 1.0 - prob_no_request(pmf.row(l).transpose());
  }
  return rho;
}

Eigen::MatrixXd offload_select_table(const Eigen::MatrixXd& pmf) {
  Eigen::MatrixXd out(pmf.rows(), pmf.cols());
  for (Eigen::Index l = 0; l < pmf.rows(); ++l) {
    const Eigen::VectorXd p = pmf.row(l).transpose();
    for (int k = 0; k < pmf.cols(); ++k) out(l, k) = prob_offload_select(p, k);
  }
  return out;
}

Eigen::MatrixXd broadcast_rate_table(const Eigen::MatrixXd& pmf,
                                     std::span<const int> downlink_order) {
  Eigen::MatrixXd out(pmf.rows(), pmf.cols());
  for (Eigen::Index l = 0; l < pmf.rows(); ++l) {
    const Eigen::VectorXd p = pmf.row(l).transpose();
    for (int k = 0; k < pmf.cols(); ++k) {
      out(l, k) = prob_broadcast_rate(p, downlink_order, k);
    }
  }
  return out;
}

std::vector<int> descending_order(const Eigen::VectorXd& gains) {
  std::vector<int> order(gains.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return gains[a] > gains[b]; });
  return order;
}

void sort_locations(Scenario& s) {
  const auto order = descending_order(s.channels.uplink);
  const int K = static_cast<int>(order.size());

  s.channels.uplink = permuted(s.channels.uplink, order);
  s.channels.downlink = permuted(s.channels.downlink, order);
  s.channels.downlink_order = descending_order(s.channels.downlink);

  auto& c = s.constants;
  c.tx_power_user_w = permuted(c.tx_power_user_w, order);
  c.weight_user = permuted(c.weight_user, order);

  auto& pr = s.preferences;
  Eigen::MatrixXd pmf(pr.pmf.rows(), K);
  for (int k = 0; k < K; ++k) pmf.col(k) = pr.pmf.col(order[k]);
  pr.pmf = std::move(pmf);
  if (pr.zipf_skew.size() == K) pr.zipf_skew = permuted(pr.zipf_skew, order);
  if (static_cast<int>(pr.rank.size()) == K) pr.rank = permuted(pr.rank, order);

  if (s.distances_km.size() == K) s.distances_km = permuted(s.distances_km, order);
  if (s.location_ids.empty()) {
    s.location_ids.resize(K);
    std::iota(s.location_ids.begin(), s.location_ids.end(), 0);
  }
  s.location_ids = permuted(s.location_ids, order);
}

RequestRealization sample_requests(const PreferenceProfile& prefs, Rng& rng) {
  const auto L = prefs.pmf.rows();
  const auto K = prefs.pmf.cols();
  RequestRealization out{Eigen::MatrixXi::Zero(L, K)};
  for (Eigen::Index k = 0; k < K; ++k) {
    std::discrete_distribution<int> pick(prefs.pmf.col(k).data(),
                                         prefs.pmf.col(k).data() + L);
    out.requests(pick(rng), k) = 1;
  }
  return out;
}

void ScenarioConfig::validate() const {
  require(num_services >= 1 && num_locations >= 1,
          "need at least one service and one location");
  require(bandwidth_off_hz > 0 && bandwidth_dl_hz > 0,
          "bandwidth must be positive");
  require(noise_psd_w_per_hz > 0 && ref_gain > 0 && ref_distance_km > 0 &&
              pathloss_exponent > 0,
          "channel parameters must be positive");
  require(distances_km.size() == 1 ||
              static_cast<int>(distances_km.size()) == num_locations,
          "distance_km must be a scalar or one entry per location");
  for (double d : distances_km) require(d > 0, "distances must be positive");
  require(capacitance > 0 && max_core_freq_hz > 0 && cycles_per_bit > 0,
          "compute parameters must be positive");
  require(cache_capacity_bits >= 0, "cache capacity must be non-negative");
  require(tx_power_user_w > 0 && tx_power_bs_w > 0,
          "transmit powers must be positive");
  require(weight_bs >= 0 && weight_bs <= 1, "weight_bs must lie in [0, 1]");
  require(input_bits_min > 0 && input_bits_min <= input_bits_max,
          "input size range invalid");
  require(output_bits_min > 0 && output_bits_min <= output_bits_max,
          "output size range invalid");
  require(deadline_s > 0, "deadline must be positive");
  require(zipf_skew >= 0, "zipf skew must be non-negative");
  if (!explicit_ranks.empty()) {
    require(static_cast<int>(explicit_ranks.size()) == num_locations,
            "preference_ranks needs one permutation per location");
    for (const auto& r : explicit_ranks) {
      std::vector<int> s(r);
      std::sort(s.begin(), s.end());
      require(static_cast<int>(s.size()) == num_services,
              "rank permutation has wrong size");
      for (int l = 0; l < num_services; ++l) {
        require(s[l] == l + 1, "ranks must be a permutation of 1..L");
      }
    }
  }
}

double ScenarioConfig::mean_gain(int location, double bandwidth_hz) const {
  const double d = distances_km.size() == 1 ? distances_km[0]
                                            : distances_km.at(location);
  return ref_gain * std::pow(ref_distance_km / d, pathloss_exponent) /
         (noise_psd_w_per_hz * bandwidth_hz);
}

PreferenceProfile make_preferences(const ScenarioConfig& cfg) {
  cfg.validate();
  const int L = cfg.num_services;
  const int K = cfg.num_locations;
  PreferenceProfile pr;
  pr.pmf.resize(L, K);
  pr.zipf_skew = Eigen::VectorXd::Constant(K, cfg.zipf_skew);
  Rng rng(cfg.preference_seed);
  for (int k = 0; k < K; ++k) {
    std::vector<int> rank(L);
    if (!cfg.explicit_ranks.empty()) {
      rank = cfg.explicit_ranks[k];
    } else {
      std::iota(rank.begin(), rank.end(), 1);
      if (cfg.rank_mode == RankMode::random) {
        std::shuffle(rank.begin(), rank.end(), rng);
      }
    }
    pr.pmf.col(k) = zipf_pmf(L, cfg.zipf_skew, rank);
    pr.rank.push_back(std::move(rank));
  }
  return pr;
}

Scenario sample_scenario(const ScenarioConfig& cfg,
                         const PreferenceProfile& prefs, Rng& rng) {
  cfg.validate();
  const int L = cfg.num_services;
  const int K = cfg.num_locations;
  require(prefs.pmf.rows() == L && prefs.pmf.cols() == K,
          "preference profile does not match config");

  Scenario s;
  s.preferences = prefs;
  auto& c = s.constants;
  c.bandwidth_off_hz = cfg.bandwidth_off_hz;
  c.bandwidth_dl_hz = cfg.bandwidth_dl_hz;
  c.noise_psd_w_per_hz = cfg.noise_psd_w_per_hz;
  c.ref_gain = cfg.ref_gain;
  c.ref_distance_km = cfg.ref_distance_km;
  c.pathloss_exponent = cfg.pathloss_exponent;
  c.capacitance = cfg.capacitance;
  c.max_core_freq_hz = cfg.max_core_freq_hz;
  c.cache_capacity_bits = cfg.cache_capacity_bits;
  c.tx_power_user_w = Eigen::VectorXd::Constant(K, cfg.tx_power_user_w);
  c.tx_power_bs_w = Eigen::VectorXd::Constant(L, cfg.tx_power_bs_w);
  c.weight_bs = cfg.weight_bs;
  c.weight_user = Eigen::VectorXd::Constant(K, (1.0 - cfg.weight_bs) / K);

  std::exponential_distribution<double> fading(1.0);
  auto& ch = s.channels;
  ch.uplink.resize(K);
  ch.downlink.resize(K);
  s.distances_km.resize(K);
  for (int k = 0; k < K; ++k) {
    const double up = fading(rng);
    const double down = fading(rng);
    const bool rayleigh = cfg.channel_model == ChannelModel::rayleigh;
    ch.uplink[k] = cfg.mean_gain(k, cfg.bandwidth_off_hz) * (rayleigh ? up : 1.0);
    ch.downlink[k] =
        cfg.mean_gain(k, cfg.bandwidth_dl_hz) * (rayleigh ? down : 1.0);
    s.distances_km[k] = cfg.distances_km.size() == 1 ? cfg.distances_km[0]
                                                     : cfg.distances_km[k];
  }

  std::uniform_real_distribution<double> q(cfg.input_bits_min,
                                           cfg.input_bits_max);
  std::uniform_real_distribution<double> r(cfg.output_bits_min,
                                           cfg.output_bits_max);
  s.services.resize(L);
  for (auto& sv : s.services) {
    sv.cycles_per_bit = cfg.cycles_per_bit;
    sv.deadline_s = cfg.deadline_s;
    sv.input_bits = q(rng);
  }
  for (auto& sv : s.services) sv.output_bits = r(rng);

  sort_locations(s);
  s.validate();
  return s;
}

Scenario sample_scenario(const ScenarioConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  return sample_scenario(cfg, make_preferences(cfg), rng);
}

int deadline_offload_column(const Scenario& s, int l) {
  const auto& pmf = s.preferences.pmf;
  for (int k = s.num_locations() - 1; k >= 0; --k) {
    if (pmf(l, k) > 0.0) return k;
  }
  return s.num_locations() - 1;
}

int deadline_download_position(const Scenario& s, int l) {
  const auto& pmf = s.preferences.pmf;
  const auto& order = s.channels.downlink_order;
  for (int j = s.num_locations() - 1; j >= 0; --j) {
    if (pmf(l, order[j]) > 0.0) return j;
  }
  return s.num_locations() - 1;
}

}  // namespace mecache
