#include "mecache/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace mecache {

namespace {

using nlohmann::json;

constexpr double kMega = 1e6;
constexpr double kGiga = 1e9;

// Reads keys of one object, rejecting any key that was never looked up.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) {
      throw std::invalid_argument("config section '" + name_ +
                                  "' must be an object");
    }
  }

  template <class T>
  void get(const char* key, T& out) {
    used_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw std::invalid_argument("config key '" + name_ + "." + key +
                                  "': " + e.what());
    }
  }

  // Reads a value in the config unit and stores value * factor.
  void scaled(const char* key, double& out, double factor) {
    double v = out / factor;
    get(key, v);
    out = v * factor;
  }

  bool has(const char* key) {
    used_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) {
    used_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!used_.count(k)) {
        throw std::invalid_argument("unknown config key '" + name_ + "." + k +
                                    "'");
      }
    }
  }

 private:
  const json& j_;
  std::string name_;
  std::set<std::string> used_;
};

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
// Rounded to 1e-9 dB so defaults print as typed.
double linear_to_db(double v) {
  return std::round(10.0 * std::log10(v) * 1e9) / 1e9;
}

RankMode rank_mode_from_string(const std::string& s) {
  if (s == "random") return RankMode::random;
  if (s == "identity") return RankMode::identity;
  throw std::invalid_argument("unknown rank_mode: " + s);
}

ChannelModel channel_model_from_string(const std::string& s) {
  if (s == "rayleigh") return ChannelModel::rayleigh;
  if (s == "mean") return ChannelModel::mean;
  throw std::invalid_argument("unknown channel_model: " + s);
}

SolveMethod solve_method_from_string(const std::string& s) {
  if (s == "bandwidth_prices") return SolveMethod::bandwidth_prices;
  if (s == "full") return SolveMethod::full;
  throw std::invalid_argument("unknown solver method: " + s);
}

KnapsackMethod knapsack_method_from_string(const std::string& s) {
  if (s == "branch_and_bound") return KnapsackMethod::branch_and_bound;
  if (s == "dynamic_programming") return KnapsackMethod::dynamic_programming;
  throw std::invalid_argument("unknown knapsack method: " + s);
}

void read_scenario(Section s, ScenarioConfig& c) {
  s.get("num_services", c.num_services);
  s.get("num_locations", c.num_locations);
  s.scaled("bandwidth_off_mhz", c.bandwidth_off_hz, kMega);
  s.scaled("bandwidth_dl_mhz", c.bandwidth_dl_hz, kMega);
  // -169 dBm/Hz = 10^(-16.9) mW/Hz.
  double noise = linear_to_db(c.noise_psd_w_per_hz * 1e3);
  s.get("noise_psd_dbm_per_hz", noise);
  c.noise_psd_w_per_hz = db_to_linear(noise) * 1e-3;
  double gain = linear_to_db(c.ref_gain);
  s.get("ref_gain_db", gain);
  c.ref_gain = db_to_linear(gain);
  s.get("ref_distance_km", c.ref_distance_km);
  s.get("distances_km", c.distances_km);
  s.get("pathloss_exponent", c.pathloss_exponent);
  s.get("capacitance", c.capacitance);
  s.scaled("max_core_freq_ghz", c.max_core_freq_hz, kGiga);
  s.scaled("cache_capacity_mbits", c.cache_capacity_bits, kMega);
  s.get("tx_power_user_w", c.tx_power_user_w);
  s.get("tx_power_bs_w", c.tx_power_bs_w);
  s.get("weight_bs", c.weight_bs);
  s.get("cycles_per_bit", c.cycles_per_bit);
  s.scaled("input_mbits_min", c.input_bits_min, kMega);
  s.scaled("input_mbits_max", c.input_bits_max, kMega);
  s.scaled("output_mbits_min", c.output_bits_min, kMega);
  s.scaled("output_mbits_max", c.output_bits_max, kMega);
  s.get("deadline_s", c.deadline_s);
  s.get("zipf_skew", c.zipf_skew);
  std::string rank = c.rank_mode == RankMode::random ? "random" : "identity";
  s.get("rank_mode", rank);
  c.rank_mode = rank_mode_from_string(rank);
  s.get("preference_ranks", c.explicit_ranks);
  s.get("preference_seed", c.preference_seed);
  std::string channel =
      c.channel_model == ChannelModel::rayleigh ? "rayleigh" : "mean";
  s.get("channel_model", channel);
  c.channel_model = channel_model_from_string(channel);
  s.finish();
}

void read_solver(Section s, SolveOptions& o) {
  std::string method =
      o.method == SolveMethod::full ? "full" : "bandwidth_prices";
  s.get("method", method);
  o.method = solve_method_from_string(method);
  s.get("gap_tol", o.gap_tol);
  s.get("band_tol", o.band_tol);
  s.get("internal_tol", o.internal_tol);
  s.get("max_iter", o.max_iter);
  s.get("initial_radius", o.initial_radius);
  s.get("max_restarts", o.max_restarts);
  s.get("feasibility_tol", o.feasibility_tol);
  s.finish();
}

void read_optimal(Section s, OptimalOptions& o) {
  s.get("max_services", o.max_services);
  s.get("maximal_only", o.maximal_only);
  s.finish();
}

void read_quantizer(Section s, QuantizerConfig& q) {
  std::string kind = to_string(q.kind);
  s.get("kind", kind);
  q.kind = quantizer_from_string(kind);
  s.get("num_samples", q.num_samples);
  s.get("num_candidates", q.num_candidates);
  s.get("noise_std", q.noise_std);
  s.get("max_rounds", q.max_rounds);
  s.get("keep_noise_free", q.keep_noise_free);
  s.finish();
}

void read_training(Section s, TrainConfig& t) {
  s.get("iterations", t.iterations);
  s.get("learning_rate", t.learning_rate);
  s.get("momentum", t.momentum);
  s.get("batch_size", t.batch_size);
  s.get("train_interval", t.train_interval);
  s.get("buffer_capacity", t.buffer_capacity);
  s.get("warmup", t.warmup);
  s.get("hidden_layers", t.hidden);
  s.get("test_size", t.test_size);
  s.get("scaler_samples", t.scaler_samples);
  if (s.has("quantizer")) read_quantizer(Section(s.at("quantizer"), "training.quantizer"), t.quantizer);
  s.finish();
}

void read_special(Section s, KnapsackOptions& k, bool& enabled) {
  s.get("enabled", enabled);
  std::string method = k.method == KnapsackMethod::branch_and_bound
                           ? "branch_and_bound"
                           : "dynamic_programming";
  s.get("knapsack_method", method);
  k.method = knapsack_method_from_string(method);
  s.scaled("knapsack_granularity_kbits", k.granularity_bits, 1e3);
  s.finish();
}

void read_sweep(Section s, SweepSpec& w) {
  std::string p = to_string(w.parameter);
  s.get("parameter", p);
  w.parameter = sweep_parameter_from_string(p);
  s.get("values", w.values);
  s.get("replications", w.replications);
  s.get("policies", w.policies);
  s.finish();
}

}  // namespace

std::string to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::cache_capacity: return "cache_capacity_mbits";
    case SweepParameter::deadline: return "deadline_s";
    case SweepParameter::num_services: return "num_services";
    case SweepParameter::weight_bs: return "weight_bs";
  }
  return "unknown";
}

SweepParameter sweep_parameter_from_string(const std::string& name) {
  for (auto p : {SweepParameter::cache_capacity, SweepParameter::deadline,
                 SweepParameter::num_services, SweepParameter::weight_bs}) {
    if (name == to_string(p)) return p;
  }
  throw std::invalid_argument("unknown sweep parameter: " + name);
}

void apply_sweep_value(ScenarioConfig& cfg, SweepParameter p, double value) {
  switch (p) {
    case SweepParameter::cache_capacity:
      cfg.cache_capacity_bits = value * kMega;
      break;
    case SweepParameter::deadline:
      cfg.deadline_s = value;
      break;
    case SweepParameter::num_services: {
      const double r = std::round(value);
      if (std::abs(value - r) > 1e-9 || r < 1) {
        throw std::invalid_argument("num_services sweep needs positive integers");
      }
      cfg.num_services = static_cast<int>(r);
      cfg.explicit_ranks.clear();
      break;
    }
    case SweepParameter::weight_bs:
      cfg.weight_bs = value;
      break;
  }
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") +
                                e.what());
  }
  ExperimentConfig c;
  Section root(j, "");
  int version = kConfigSchemaVersion;
  root.get("schema_version", version);
  if (version != kConfigSchemaVersion) {
    throw std::invalid_argument("unsupported config schema_version " +
                                std::to_string(version));
  }
  if (root.has("scenario")) read_scenario(Section(root.at("scenario"), "scenario"), c.scenario);
  if (root.has("solver")) read_solver(Section(root.at("solver"), "solver"), c.solver);
  if (root.has("optimal")) read_optimal(Section(root.at("optimal"), "optimal"), c.optimal);
  if (root.has("training")) read_training(Section(root.at("training"), "training"), c.training);
  if (root.has("special")) read_special(Section(root.at("special"), "special"), c.knapsack,
                 c.special_case);
  if (root.has("sweep")) read_sweep(Section(root.at("sweep"), "sweep"), c.sweep);
  root.finish();
  c.scenario.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  const auto& s = c.scenario;
  json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["scenario"] = {
      {"num_services", s.num_services},
      {"num_locations", s.num_locations},
      {"bandwidth_off_mhz", s.bandwidth_off_hz / kMega},
      {"bandwidth_dl_mhz", s.bandwidth_dl_hz / kMega},
      {"noise_psd_dbm_per_hz", linear_to_db(s.noise_psd_w_per_hz * 1e3)},
      {"ref_gain_db", linear_to_db(s.ref_gain)},
      {"ref_distance_km", s.ref_distance_km},
      {"distances_km", s.distances_km},
      {"pathloss_exponent", s.pathloss_exponent},
      {"capacitance", s.capacitance},
      {"max_core_freq_ghz", s.max_core_freq_hz / kGiga},
      {"cache_capacity_mbits", s.cache_capacity_bits / kMega},
      {"tx_power_user_w", s.tx_power_user_w},
      {"tx_power_bs_w", s.tx_power_bs_w},
      {"weight_bs", s.weight_bs},
      {"cycles_per_bit", s.cycles_per_bit},
      {"input_mbits_min", s.input_bits_min / kMega},
      {"input_mbits_max", s.input_bits_max / kMega},
      {"output_mbits_min", s.output_bits_min / kMega},
      {"output_mbits_max", s.output_bits_max / kMega},
      {"deadline_s", s.deadline_s},
      {"zipf_skew", s.zipf_skew},
      {"rank_mode", s.rank_mode == RankMode::random ? "random" : "identity"},
      {"preference_ranks", s.explicit_ranks},
      {"preference_seed", s.preference_seed},
      {"channel_model",
       s.channel_model == ChannelModel::rayleigh ? "rayleigh" : "mean"}};
  const auto& o = c.solver;
  j["solver"] = {
      {"method", o.method == SolveMethod::full ? "full" : "bandwidth_prices"},
      {"gap_tol", o.gap_tol},
      {"band_tol", o.band_tol},
      {"internal_tol", o.internal_tol},
      {"max_iter", o.max_iter},
      {"initial_radius", o.initial_radius},
      {"max_restarts", o.max_restarts},
      {"feasibility_tol", o.feasibility_tol}};
  j["optimal"] = {{"max_services", c.optimal.max_services},
                  {"maximal_only", c.optimal.maximal_only}};
  const auto& t = c.training;
  j["training"] = {
      {"iterations", t.iterations},
      {"learning_rate", t.learning_rate},
      {"momentum", t.momentum},
      {"batch_size", t.batch_size},
      {"train_interval", t.train_interval},
      {"buffer_capacity", t.buffer_capacity},
      {"warmup", t.warmup},
      {"hidden_layers", t.hidden},
      {"test_size", t.test_size},
      {"scaler_samples", t.scaler_samples},
      {"quantizer",
       {{"kind", to_string(t.quantizer.kind)},
        {"num_samples", t.quantizer.num_samples},
        {"num_candidates", t.quantizer.num_candidates},
        {"noise_std", t.quantizer.noise_std},
        {"max_rounds", t.quantizer.max_rounds},
        {"keep_noise_free", t.quantizer.keep_noise_free}}}};
  j["special"] = {
      {"enabled", c.special_case},
      {"knapsack_method", c.knapsack.method == KnapsackMethod::branch_and_bound
                              ? "branch_and_bound"
                              : "dynamic_programming"},
      {"knapsack_granularity_kbits", c.knapsack.granularity_bits / 1e3}};
  j["sweep"] = {{"parameter", to_string(c.sweep.parameter)},
                {"values", c.sweep.values},
                {"replications", c.sweep.replications},
                {"policies", c.sweep.policies}};
  return j.dump(2);
}

}  // namespace mecache
