#pragma once

// Problem instances for the cache-assisted multi-location MEC model.
//
// Units are SI throughout: bits, Hz, seconds, Watts, Joules. Locations are
// stored in descending order of their normalized uplink gain; the original
// location id of every internal index is kept in Scenario::location_ids.

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace mecache {

using Rng = std::mt19937_64;

struct ServiceSpec {
  double cycles_per_bit = 0.0;  // C_l
  double input_bits = 0.0;      // Q_l
  double output_bits = 0.0;     // R_l
  double deadline_s = 0.0;      // T_l

  double cycles() const { return cycles_per_bit * input_bits; }
};

struct PhysicalConstants {
  double bandwidth_off_hz = 0.0;
  double bandwidth_dl_hz = 0.0;
  double noise_psd_w_per_hz = 0.0;
  double ref_gain = 0.0;  // linear power ratio at the reference distance
  double ref_distance_km = 0.0;
  double pathloss_exponent = 0.0;
  double capacitance = 0.0;
  double max_core_freq_hz = 0.0;
  double cache_capacity_bits = 0.0;
  Eigen::VectorXd tx_power_user_w;  // per location
  Eigen::VectorXd tx_power_bs_w;    // per service
  double weight_bs = 0.0;           // weight on BS energy (compute + download)
  Eigen::VectorXd weight_user;      // per-location weights on offload energy
};

struct PreferenceProfile {
  Eigen::MatrixXd pmf;        // L x K, column k is location k's request pmf
  Eigen::VectorXd zipf_skew;  // per location
  // rank[k][l] is the 1-based popularity rank of service l at location k.
  std::vector<std::vector<int>> rank;
};

struct ChannelRealization {
  Eigen::VectorXd uplink;    // u_k, non-increasing in k
  Eigen::VectorXd downlink;  // v_k, same location indexing as uplink
  // downlink_order[j] is the location at downlink position j; gains are
  // non-increasing along the positions.
  std::vector<int> downlink_order;
};

// Actual request state for one round (Monte-Carlo validation only).
struct RequestRealization {
  Eigen::MatrixXi requests;  // L x K, entries in {0, 1}
};

struct Scenario {
  std::vector<ServiceSpec> services;
  PhysicalConstants constants;
  PreferenceProfile preferences;
  ChannelRealization channels;
  std::vector<int> location_ids;  // internal index -> original location id
  Eigen::VectorXd distances_km;   // per internal location

  int num_services() const { return static_cast<int>(services.size()); }
  int num_locations() const {
    return static_cast<int>(channels.uplink.size());
  }
  double total_output_bits() const;

  // Throws std::invalid_argument on any violated invariant.
  void validate() const;
};

// Zipf pmf over L services; rank[l] is service l's 1-based popularity rank.
Eigen::VectorXd zipf_pmf(int num_services, double skew,
                         std::span<const int> rank);

// Pr(no location requests the service); p holds one service's request
// probability at every location.
double prob_no_request(const Eigen::Ref<const Eigen::VectorXd>& p);

// Probability that location k (uplink order, 0-based) is the offloading
// location: every better location is idle and k requests.
double prob_offload_select(const Eigen::Ref<const Eigen::VectorXd>& p, int k);

// Probability that the result is broadcast at the rate of the location in
// downlink position k (0-based): every worse position is idle and position k
// requests.
double prob_broadcast_rate(const Eigen::Ref<const Eigen::VectorXd>& p,
                           std::span<const int> downlink_order, int k);

// Per-service tables over the scenario's pmf.
Eigen::VectorXd request_probability(const Eigen::MatrixXd& pmf);  // 1 - Pr0
Eigen::MatrixXd offload_select_table(const Eigen::MatrixXd& pmf);
Eigen::MatrixXd broadcast_rate_table(const Eigen::MatrixXd& pmf,
                                     std::span<const int> downlink_order);

// Positions of a gain vector sorted descending, ties by lower index.
std::vector<int> descending_order(const Eigen::VectorXd& gains);

// Reorders locations so that uplink gains are non-increasing and recomputes
// the downlink order. Location-indexed fields are permuted consistently.
void sort_locations(Scenario& s);

// Worst uplink column and worst downlink position among the locations that
// may request service l; K - 1 when none may. Only these bound the deadline.
int deadline_offload_column(const Scenario& s, int l);
int deadline_download_position(const Scenario& s, int l);

RequestRealization sample_requests(const PreferenceProfile& prefs, Rng& rng);

enum class RankMode { random, identity };
enum class ChannelModel { rayleigh, mean };

// Distribution parameters for scenario sampling, SI units. Defaults follow the
// reference setup: 10 services, 5 locations at 30 m, 10 MHz per band.
struct ScenarioConfig {
  int num_services = 10;
  int num_locations = 5;
  double bandwidth_off_hz = 10e6;
  double bandwidth_dl_hz = 10e6;
  double noise_psd_w_per_hz = 1.2589254117941661e-20;  // -169 dBm/Hz
  double ref_gain = 1.5488166189124812e-13;            // -128.1 dB
  double ref_distance_km = 1.0;
  std::vector<double> distances_km = std::vector<double>(5, 0.03);
  double pathloss_exponent = 2.6;
  double capacitance = 1e-27;
  double max_core_freq_hz = 10e9;
  double cache_capacity_bits = 128e6;
  double tx_power_user_w = 0.25;
  double tx_power_bs_w = 1.0;
  double weight_bs = 0.5;  // remaining weight split evenly over locations
  double cycles_per_bit = 1000.0;
  double input_bits_min = 7e6;
  double input_bits_max = 7.5e6;
  double output_bits_min = 21e6;
  double output_bits_max = 22e6;
  double deadline_s = 2.8;
  double zipf_skew = 0.9;
  RankMode rank_mode = RankMode::random;
  std::vector<std::vector<int>> explicit_ranks;  // overrides rank_mode
  std::uint64_t preference_seed = 1;
  ChannelModel channel_model = ChannelModel::rayleigh;

  // Throws std::invalid_argument on non-positive physical parameters.
  void validate() const;
  // Mean normalized gain A0 (d0/d_k)^gamma / (N0 B) for the given band.
  double mean_gain(int location, double bandwidth_hz) const;
};

// Preference profile shared by every scenario drawn from one config.
PreferenceProfile make_preferences(const ScenarioConfig& cfg);

// Draws channels and task sizes; deterministic in (cfg, seed).
Scenario sample_scenario(const ScenarioConfig& cfg, std::uint64_t seed);
Scenario sample_scenario(const ScenarioConfig& cfg,
                         const PreferenceProfile& prefs, Rng& rng);

}  // namespace mecache
