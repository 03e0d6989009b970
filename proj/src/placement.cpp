#include "mecache/placement.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "mecache/seed.hpp"

namespace mecache {

namespace {

// First k entries of a uniform random permutation of 0..n-1.
std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  return idx;
}

// Service indices by descending score, ties by lower index.
std::vector<int> by_score(const Eigen::VectorXd& scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return scores[a] > scores[b]; });
  return order;
}

Eigen::VectorXd sigmoid(const Eigen::VectorXd& z) {
  return Network::sigmoid(Eigen::MatrixXd(z)).col(0);
}

Eigen::VectorXd as_vector(const CachingDecision& I) {
  Eigen::VectorXd v(I.size());
  for (int l = 0; l < I.size(); ++l) v[l] = I[l] ? 1.0 : 0.0;
  return v;
}

}  // namespace

Eigen::VectorXd raw_features(const Scenario& s) {
  const int K = s.num_locations();
  const int L = s.num_services();
  Eigen::VectorXd f(2 * K + 2 * L);
  f.segment(0, K) = s.channels.uplink;
  f.segment(K, K) = s.channels.downlink;
  for (int l = 0; l < L; ++l) {
    f[2 * K + l] = s.services[l].input_bits;
    f[2 * K + L + l] = s.services[l].output_bits;
  }
  return f;
}

FeatureScaler FeatureScaler::fit(const std::vector<Eigen::VectorXd>& samples) {
  if (samples.empty()) throw std::invalid_argument("no samples to fit scaler");
  const Eigen::Index n = samples.front().size();
  FeatureScaler sc;
  sc.mean = Eigen::VectorXd::Zero(n);
  for (const auto& x : samples) sc.mean += x;
  sc.mean /= static_cast<double>(samples.size());
  Eigen::VectorXd var = Eigen::VectorXd::Zero(n);
  for (const auto& x : samples) var += (x - sc.mean).cwiseAbs2();
  var /= static_cast<double>(samples.size());
  sc.scale = var.cwiseSqrt();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(sc.scale[i] > 1e-12 * std::max(1.0, std::abs(sc.mean[i])))) {
      sc.scale[i] = 1.0;
    }
  }
  return sc;
}

Eigen::VectorXd FeatureScaler::apply(const Eigen::VectorXd& raw) const {
  if (raw.size() != mean.size()) {
    throw std::invalid_argument("feature width does not match scaler");
  }
  return (raw - mean).cwiseQuotient(scale);
}

std::string to_string(QuantizerKind k) {
  return k == QuantizerKind::stochastic ? "stochastic" : "order_preserving";
}

QuantizerKind quantizer_from_string(const std::string& name) {
  if (name == "stochastic") return QuantizerKind::stochastic;
  if (name == "order_preserving") return QuantizerKind::order_preserving;
  throw std::invalid_argument("unknown quantizer: " + name);
}

CapacityModel CapacityModel::of(const Scenario& s) {
  CapacityModel c;
  c.sizes.resize(s.num_services());
  for (int l = 0; l < s.num_services(); ++l) {
    c.sizes[l] = s.services[l].output_bits;
  }
  c.capacity = s.constants.cache_capacity_bits;
  return c;
}

bool CapacityModel::fits(const CachingDecision& I) const {
  double used = 0.0;
  for (int l = 0; l < I.size(); ++l) {
    if (I[l]) used += sizes[l];
  }
  return used <= capacity;
}

CachingDecision repair(const CachingDecision& I, const Eigen::VectorXd& scores,
                       const CapacityModel& cap) {
  CachingDecision out = I;
  double used = 0.0;
  for (int l = 0; l < I.size(); ++l) {
    if (I[l]) used += cap.sizes[l];
  }
  for (int l : by_score(scores)) {
    if (out[l] || used + cap.sizes[l] > cap.capacity) continue;
    out.set(l);
    used += cap.sizes[l];
  }
  return out;
}

std::vector<CachingDecision> stochastic_quantize(const Eigen::VectorXd& logits,
                                                 const CapacityModel& cap,
                                                 const QuantizerConfig& q,
                                                 Rng& rng) {
  const int L = static_cast<int>(logits.size());
  if (q.num_candidates < 1 || q.num_candidates > std::max(q.num_samples, 1)) {
    throw std::invalid_argument("quantizer needs 1 <= J <= M");
  }
  std::normal_distribution<double> noise(0.0, q.noise_std);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Eigen::VectorXd p_clean = sigmoid(logits);
  Eigen::VectorXd noisy(L);
  // Fresh logit noise for every sample, so each pattern stays reachable.
  auto p_noisy = [&]() {
    for (int l = 0; l < L; ++l) noisy[l] = logits[l] + noise(rng);
    return sigmoid(noisy);
  };

  std::vector<CachingDecision> pool;
  std::set<CachingDecision> seen;
  auto draw = [&](const Eigen::VectorXd& p) {
    CachingDecision I(L);
    for (int l = 0; l < L; ++l) {
      if (unit(rng) < p[l]) I.set(l);
    }
    if (cap.fits(I) && seen.insert(I).second) pool.push_back(I);
  };
  draw(p_clean);
  const bool clean_fits = !pool.empty();
  for (int round = 0; round < q.max_rounds; ++round) {
    for (int m = 0; m < q.num_samples; ++m) draw(p_noisy());
    if (static_cast<int>(pool.size()) >= q.num_candidates) break;
  }

  std::vector<CachingDecision> out;
  std::size_t first = 0;
  if (q.keep_noise_free && clean_fits) {
    out.push_back(repair(pool.front(), p_clean, cap));
    first = 1;
  }
  const int rest = static_cast<int>(pool.size() - first);
  const int take = std::min<int>(q.num_candidates - static_cast<int>(first), rest);
  for (int i : sample_without_replacement(rest, take, rng)) {
    out.push_back(repair(pool[first + i], p_clean, cap));
  }
  while (static_cast<int>(out.size()) < q.num_candidates) {
    out.emplace_back(L);
  }
  return out;
}

std::vector<CachingDecision> order_preserving_quantize(
    const Eigen::VectorXd& scores, const CapacityModel& cap, int num_candidates) {
  const int L = static_cast<int>(scores.size());
  const std::vector<int> order = by_score(scores);
  std::vector<CachingDecision> out;
  CachingDecision I(L);
  for (int k = 0; k < std::min(num_candidates, L + 1); ++k) {
    if (k > 0) I.set(order[k - 1]);
    if (cap.fits(I)) out.push_back(I);
  }
  return out;
}

std::vector<CachingDecision> quantize(const Eigen::VectorXd& logits,
                                      const CapacityModel& cap,
                                      const QuantizerConfig& q, Rng& rng) {
  if (q.kind == QuantizerKind::order_preserving) {
    return order_preserving_quantize(sigmoid(logits), cap, q.num_candidates);
  }
  return stochastic_quantize(logits, cap, q, rng);
}

std::optional<LabelResult> label_step(const Scenario& s,
                                      const std::vector<CachingDecision>& cands,
                                      const SolveOptions& opts) {
  std::vector<CachingDecision> distinct;
  std::set<CachingDecision> seen;
  for (const auto& I : cands) {
    if (seen.insert(I).second) distinct.push_back(I);
  }
  std::optional<LabelResult> best;
  int evaluated = 0;
  auto consider = [&](const CachingDecision& I) {
    SolveResult r = solve_allocation(s, I, opts);
    ++evaluated;
    if (r.status != SolveStatus::optimal) return;
    if (!best || r.objective < best->solve.objective) {
      best = LabelResult{I, std::move(r), 0};
    }
  };
  for (const auto& I : distinct) consider(I);
  const CachingDecision zeros(s.num_services());
  if (!best && !seen.count(zeros)) consider(zeros);
  if (best) best->evaluated = evaluated;
  return best;
}

Eigen::VectorXd PlacementPolicy::logits(const Scenario& s) const {
  return net.logits(Eigen::VectorXd(scaler.apply(raw_features(s))));
}

Eigen::VectorXd PlacementPolicy::scores(const Scenario& s) const {
  return sigmoid(logits(s));
}

using nlohmann::json;

std::string policy_to_json(const PlacementPolicy& p) {
  json j;
  j["format"] = "mecache-placement-policy";
  j["version"] = kCheckpointVersion;
  j["dims"] = p.net.dims();
  j["hidden_activation"] = "relu";
  j["output_activation"] = "sigmoid";
  json layers = json::array();
  for (int i = 0; i < p.net.num_layers(); ++i) {
    const auto& W = p.net.weights()[i];
    std::vector<double> w;
    w.reserve(W.size());
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      for (Eigen::Index c = 0; c < W.cols(); ++c) w.push_back(W(r, c));
    }
    const auto& b = p.net.biases()[i];
    layers.push_back({{"rows", W.rows()},
                      {"cols", W.cols()},
                      {"weights", w},
                      {"bias", std::vector<double>(b.data(), b.data() + b.size())}});
  }
  j["layers"] = layers;
  j["feature_mean"] = std::vector<double>(
      p.scaler.mean.data(), p.scaler.mean.data() + p.scaler.mean.size());
  j["feature_scale"] = std::vector<double>(
      p.scaler.scale.data(), p.scaler.scale.data() + p.scaler.scale.size());
  j["quantizer"] = {{"kind", to_string(p.quantizer.kind)},
                    {"num_samples", p.quantizer.num_samples},
                    {"num_candidates", p.quantizer.num_candidates},
                    {"noise_std", p.quantizer.noise_std},
                    {"max_rounds", p.quantizer.max_rounds},
                    {"keep_noise_free", p.quantizer.keep_noise_free}};
  return j.dump();
}

PlacementPolicy policy_from_json(const std::string& text) {
  const json j = json::parse(text);
  if (j.at("format") != "mecache-placement-policy") {
    throw std::invalid_argument("not a placement policy checkpoint");
  }
  if (j.at("version").get<int>() != kCheckpointVersion) {
    throw std::invalid_argument("unsupported checkpoint version");
  }
  PlacementPolicy p;
  p.net = Network(j.at("dims").get<std::vector<int>>());
  const auto& layers = j.at("layers");
  if (static_cast<int>(layers.size()) != p.net.num_layers()) {
    throw std::invalid_argument("checkpoint layer count mismatch");
  }
  for (int i = 0; i < p.net.num_layers(); ++i) {
    auto& W = p.net.weights()[i];
    auto& b = p.net.biases()[i];
    const auto w = layers[i].at("weights").get<std::vector<double>>();
    const auto bias = layers[i].at("bias").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(w.size()) != W.size() ||
        static_cast<Eigen::Index>(bias.size()) != b.size()) {
      throw std::invalid_argument("checkpoint layer shape mismatch");
    }
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = w[r * W.cols() + c];
    }
    b = Eigen::Map<const Eigen::VectorXd>(bias.data(), b.size());
  }
  const auto mean = j.at("feature_mean").get<std::vector<double>>();
  const auto scale = j.at("feature_scale").get<std::vector<double>>();
  p.scaler.mean = Eigen::Map<const Eigen::VectorXd>(mean.data(), mean.size());
  p.scaler.scale = Eigen::Map<const Eigen::VectorXd>(scale.data(), scale.size());
  const auto& q = j.at("quantizer");
  p.quantizer.kind = quantizer_from_string(q.at("kind").get<std::string>());
  p.quantizer.num_samples = q.at("num_samples").get<int>();
  p.quantizer.num_candidates = q.at("num_candidates").get<int>();
  p.quantizer.noise_std = q.at("noise_std").get<double>();
  p.quantizer.max_rounds = q.at("max_rounds").get<int>();
  p.quantizer.keep_noise_free = q.at("keep_noise_free").get<bool>();
  return p;
}

void save_policy(const PlacementPolicy& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << policy_to_json(p) << '\n';
}

PlacementPolicy load_policy(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return policy_from_json(ss.str());
}

PolicyResult infer(const PlacementPolicy& p, const Scenario& s, Rng& rng,
                   const SolveOptions& opts) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto cands = quantize(p.logits(s), CapacityModel::of(s), p.quantizer, rng);
  const auto lab = label_step(s, cands, opts);
  PolicyResult r;
  r.policy = "dl";
  if (lab) {
    r.decision = lab->decision;
    r.solve = lab->solve;
    r.solver_calls = lab->evaluated;
  } else {
    r.decision = CachingDecision(s.num_services());
    r.solve.status = SolveStatus::infeasible;
    r.solve.objective = std::numeric_limits<double>::quiet_NaN();
    r.solver_calls = static_cast<int>(cands.size());
  }
  r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count();
  return r;
}

ReplayBuffer::ReplayBuffer(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw std::invalid_argument("buffer capacity must be >= 1");
}

void ReplayBuffer::push(Eigen::VectorXd features, Eigen::VectorXd label) {
  if (size() == capacity_) {
    features_.pop_front();
    labels_.pop_front();
  }
  features_.push_back(std::move(features));
  labels_.push_back(std::move(label));
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> ReplayBuffer::batch(
    const std::vector<int>& idx) const {
  const int n = static_cast<int>(idx.size());
  Eigen::MatrixXd X(features_.front().size(), n);
  Eigen::MatrixXd Y(labels_.front().size(), n);
  for (int i = 0; i < n; ++i) {
    X.col(i) = features_[idx[i]];
    Y.col(i) = labels_[idx[i]];
  }
  return {std::move(X), std::move(Y)};
}

FeatureScaler fit_scaler(const ScenarioConfig& cfg,
                         const PreferenceProfile& prefs, int samples,
                         std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Eigen::VectorXd> xs;
  xs.reserve(samples);
  for (int i = 0; i < samples; ++i) {
    xs.push_back(raw_features(sample_scenario(cfg, prefs, rng)));
  }
  return FeatureScaler::fit(xs);
}

TestSet make_test_set(const ScenarioConfig& cfg, const PreferenceProfile& prefs,
                      const FeatureScaler& scaler, int size,
                      std::uint64_t seed, const SolveOptions& opts) {
  Rng rng(seed);
  OptimalOptions oo;
  oo.maximal_only = true;
  std::vector<Eigen::VectorXd> xs;
  std::vector<Eigen::VectorXd> ys;
  TestSet ts;
  ts.scaler = scaler;
  // Bounded so that a config with no feasible draws terminates.
  for (int draws = 0; static_cast<int>(xs.size()) < size && draws < 100 * size;
       ++draws) {
    Scenario s = sample_scenario(cfg, prefs, rng);
    const PolicyResult opt = optimal_caching(s, opts, oo);
    if (!opt.ok()) continue;
    xs.push_back(scaler.apply(raw_features(s)));
    ys.push_back(as_vector(opt.decision));
    ts.scenarios.push_back(std::move(s));
  }
  const int n = static_cast<int>(xs.size());
  ts.features.resize(scaler.mean.size(), n);
  ts.labels.resize(cfg.num_services, n);
  for (int i = 0; i < n; ++i) {
    ts.features.col(i) = xs[i];
    ts.labels.col(i) = ys[i];
  }
  return ts;
}

TrainResult train(const ScenarioConfig& cfg, const TrainConfig& tc,
                  std::uint64_t seed, const SolveOptions& opts,
                  const TestSet* test) {
  if (tc.iterations < 0 || tc.batch_size < 1 || tc.train_interval < 1 ||
      tc.warmup < 1 || tc.buffer_capacity < tc.batch_size) {
    throw std::invalid_argument("invalid training configuration");
  }
  const PreferenceProfile prefs = make_preferences(cfg);
  TestSet own;
  if (!test) {
    const FeatureScaler sc =
        fit_scaler(cfg, prefs, tc.scaler_samples, derive_seed(seed, "scaler"));
    own = make_test_set(cfg, prefs, sc, tc.test_size, derive_seed(seed, "test"),
                        opts);
    test = &own;
  }

  TrainResult res;
  std::vector<int> dims{2 * cfg.num_locations + 2 * cfg.num_services};
  dims.insert(dims.end(), tc.hidden.begin(), tc.hidden.end());
  dims.push_back(cfg.num_services);
  Rng init_rng(derive_seed(seed, "init"));
  res.policy.net = Network::glorot(dims, init_rng);
  res.policy.scaler = test->scaler;
  res.policy.quantizer = tc.quantizer;

  Rng scenario_rng(derive_seed(seed, "scenarios"));
  Rng quant_rng(derive_seed(seed, "quantizer"));
  Rng batch_rng(derive_seed(seed, "batches"));
  ReplayBuffer buffer(tc.buffer_capacity);
  auto velocity = res.policy.net.zero_gradient();
  const MomentumConfig mc{tc.learning_rate, tc.momentum};
  const bool has_test = test->features.cols() > 0;

  for (int t = 1; t <= tc.iterations; ++t) {
    const Scenario s = sample_scenario(cfg, prefs, scenario_rng);
    Eigen::VectorXd x = res.policy.scaler.apply(raw_features(s));
    const Eigen::VectorXd z = res.policy.net.logits(x);
    const auto cands = quantize(z, CapacityModel::of(s), tc.quantizer, quant_rng);
    if (const auto lab = label_step(s, cands, opts)) {
      buffer.push(std::move(x), as_vector(lab->decision));
      ++res.labelled;
    } else {
      ++res.unlabelled;
    }
    if (buffer.size() < tc.warmup || t % tc.train_interval != 0) continue;
    const int n = std::min(tc.batch_size, buffer.size());
    const auto [X, Y] =
        buffer.batch(sample_without_replacement(buffer.size(), n, batch_rng));
    const auto grad = res.policy.net.backward(X, Y);
    LossPoint lp;
    lp.iteration = t;
    lp.train_loss = grad.loss;
    lp.test_loss = has_test ? res.policy.net.loss(test->features, test->labels)
                            : std::numeric_limits<double>::quiet_NaN();
    res.trace.push_back(lp);
    sgd_momentum_step(res.policy.net, grad, velocity, mc);
  }
  return res;
}

}  // namespace mecache
