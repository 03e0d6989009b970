#include "mecache/energy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace mecache {

CachingDecision CachingDecision::ones(int num_services) {
  CachingDecision d(num_services);
  for (int l = 0; l < num_services; ++l) d.set(l);
  return d;
}

CachingDecision CachingDecision::from_mask(int num_services,
                                           std::uint64_t mask) {
  if (num_services > 64) throw std::invalid_argument("mask supports L <= 64");
  CachingDecision d(num_services);
  for (int l = 0; l < num_services; ++l) d.set(l, (mask >> l) & 1U);
  return d;
}

CachingDecision CachingDecision::from_string(const std::string& bits) {
  CachingDecision d(static_cast<int>(bits.size()));
  for (std::size_t l = 0; l < bits.size(); ++l) {
    if (bits[l] != '0' && bits[l] != '1') {
      throw std::invalid_argument("caching decision must be a 0/1 string");
    }
    d.set(static_cast<int>(l), bits[l] == '1');
  }
  return d;
}

int CachingDecision::count() const {
  return static_cast<int>(std::count(bits_.begin(), bits_.end(), 1));
}

std::uint64_t CachingDecision::mask() const {
  std::uint64_t m = 0;
  for (int l = 0; l < size() && l < 64; ++l) {
    if (bits_[l]) m |= std::uint64_t{1} << l;
  }
  return m;
}

std::string CachingDecision::str() const {
  std::string out(bits_.size(), '0');
  for (std::size_t l = 0; l < bits_.size(); ++l) {
    if (bits_[l]) out[l] = '1';
  }
  return out;
}

double CachingDecision::cached_bits(const Scenario& s) const {
  double total = 0.0;
  for (int l = 0; l < size(); ++l) {
    if (bits_[l]) total += s.services[l].output_bits;
  }
  return total;
}

bool capacity_feasible(const Scenario& s, const CachingDecision& I) {
  return I.cached_bits(s) <= s.constants.cache_capacity_bits;
}

ResourceAllocation ResourceAllocation::zeros(int L, int K) {
  return {Eigen::VectorXd::Zero(L), Eigen::VectorXd::Zero(L),
          Eigen::VectorXd::Zero(L), Eigen::MatrixXd::Zero(L, K),
          Eigen::MatrixXd::Zero(L, K)};
}

ProbabilityTables probability_tables(const Scenario& s) {
  const auto& pmf = s.preferences.pmf;
  return {request_probability(pmf), offload_select_table(pmf),
          broadcast_rate_table(pmf, s.channels.downlink_order)};
}

double offload_rate(double alpha, double power, double gain,
                    double bandwidth) {
  return link_rate(alpha, power, gain, bandwidth);
}

double download_rate(double alpha, double power, double gain,
                     double bandwidth) {
  return link_rate(alpha, power, gain, bandwidth);
}

namespace {

void check_dims(const Scenario& s, const CachingDecision& I,
                const ResourceAllocation& a) {
  const int L = s.num_services();
  const int K = s.num_locations();
  if (I.size() != L || a.alpha_off.size() != L || a.alpha_dl.size() != L ||
      a.t_c.size() != L || a.t_off.rows() != L || a.t_off.cols() != K ||
      a.t_dl.rows() != L || a.t_dl.cols() != K) {
    throw std::invalid_argument("allocation dimensions do not match scenario");
  }
}

struct ServiceTerms {
  double compute = 0.0;
  double download = 0.0;
  Eigen::VectorXd offload;
};

ServiceTerms service_terms(const Scenario& s, const CachingDecision& I,
                           const ResourceAllocation& a,
                           const ProbabilityTables& pt, int l) {
  const int K = s.num_locations();
  const auto& c = s.constants;
  const auto& sv = s.services[l];
  ServiceTerms out{0.0, 0.0, Eigen::VectorXd::Zero(K)};
  if (!I[l]) {
    if (pt.request[l] > 0) {
      if (a.t_c[l] <= 0) {
        throw std::domain_error("active compute time is zero");
      }
      const double cyc = sv.cycles();
      out.compute =
          c.capacitance * cyc * cyc * cyc / (a.t_c[l] * a.t_c[l]) * pt.request[l];
    }
    for (int k = 0; k < K; ++k) {
      out.offload[k] = c.tx_power_user_w[k] * a.t_off(l, k) * pt.offload(l, k);
    }
  }
  for (int j = 0; j < K; ++j) {
    out.download += c.tx_power_bs_w[l] * a.t_dl(l, j) * pt.broadcast(l, j);
  }
  return out;
}

}  // namespace

EnergyBreakdown expected_energy(const Scenario& s, const CachingDecision& I,
                                const ResourceAllocation& alloc) {
  check_dims(s, I, alloc);
  const auto pt = probability_tables(s);
  EnergyBreakdown e;
  e.offload = Eigen::VectorXd::Zero(s.num_locations());
  for (int l = 0; l < s.num_services(); ++l) {
    const auto t = service_terms(s, I, alloc, pt, l);
    e.compute += t.compute;
    e.download += t.download;
    e.offload += t.offload;
  }
  e.weighted_total = s.constants.weight_bs * (e.compute + e.download) +
                     s.constants.weight_user.dot(e.offload);
  return e;
}

Eigen::VectorXd service_energy(const Scenario& s, const CachingDecision& I,
                               const ResourceAllocation& alloc) {
  check_dims(s, I, alloc);
  const auto pt = probability_tables(s);
  Eigen::VectorXd out(s.num_services());
  for (int l = 0; l < s.num_services(); ++l) {
    const auto t = service_terms(s, I, alloc, pt, l);
    out[l] = s.constants.weight_bs * (t.compute + t.download) +
             s.constants.weight_user.dot(t.offload);
  }
  return out;
}

FeasibilityReport check_feasible(const Scenario& s, const CachingDecision& I,
                                 const ResourceAllocation& a, double rel_tol,
                                 bool enforce_capacity) {
  check_dims(s, I, a);
  const int L = s.num_services();
  const int K = s.num_locations();
  const auto& c = s.constants;
  const auto& ch = s.channels;
  FeasibilityReport rep;
  auto note = [&](const char* name, int l, int k, double slack) {
    rep.worst_slack = std::min(rep.worst_slack, slack);
    if (slack < -rel_tol) rep.violations.push_back({name, l, k, slack});
  };

  for (int l = 0; l < L; ++l) {
    const auto& sv = s.services[l];
    const bool active = !I[l];
    for (int k = 0; k < K; ++k) {
      note("nonnegative", l, k,
           std::min({a.t_off(l, k), a.t_dl(l, k), a.t_c[l]}));
    }
    note("alpha_off_range", l, -1,
         std::min(a.alpha_off[l], 1.0 - a.alpha_off[l]));
    note("alpha_dl_range", l, -1, std::min(a.alpha_dl[l], 1.0 - a.alpha_dl[l]));

    const double latency = a.t_off(l, deadline_offload_column(s, l)) +
                           a.t_c[l] +
                           a.t_dl(l, deadline_download_position(s, l));
    note("deadline", l, -1, (sv.deadline_s - latency) / sv.deadline_s);

    if (active) {
      const double t_min = sv.cycles() / c.max_core_freq_hz;
      note("frequency", l, -1, (a.t_c[l] - t_min) / t_min);
      for (int k = 0; k < K; ++k) {
        const double r = offload_rate(a.alpha_off[l], c.tx_power_user_w[k],
                                      ch.uplink[k], c.bandwidth_off_hz);
        note("offload_rate", l, k,
             (a.t_off(l, k) * r - sv.input_bits) / sv.input_bits);
      }
    }
    for (int j = 0; j < K; ++j) {
      const double r =
          download_rate(a.alpha_dl[l], c.tx_power_bs_w[l],
                        ch.downlink[ch.downlink_order[j]], c.bandwidth_dl_hz);
      note("download_rate", l, j,
           (a.t_dl(l, j) * r - sv.output_bits) / sv.output_bits);
    }
  }
  note("offload_bandwidth", -1, -1, 1.0 - a.alpha_off.sum());
  note("download_bandwidth", -1, -1, 1.0 - a.alpha_dl.sum());
  if (enforce_capacity && c.cache_capacity_bits > 0) {
    note("capacity", -1, -1,
         (c.cache_capacity_bits - I.cached_bits(s)) / c.cache_capacity_bits);
  } else if (enforce_capacity && I.count() > 0) {
    note("capacity", -1, -1, -1.0);
  }
  return rep;
}

}  // namespace mecache
