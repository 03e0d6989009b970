#pragma once

// Learned cache placement: an MLP scores services from channel gains and task
// sizes, a quantizer turns scores into candidate decisions, and the convex
// solver picks the best candidate, which becomes the training label.

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "mecache/baselines.hpp"
#include "mecache/energy.hpp"
#include "mecache/mlp.hpp"
#include "mecache/scenario.hpp"
#include "mecache/solver.hpp"

namespace mecache {

using Network = Mlp<double>;

// (u, v, Q, R): uplink and downlink gains in internal location order, then
// input and output sizes per service. Width 2K + 2L.
Eigen::VectorXd raw_features(const Scenario& s);

struct FeatureScaler {
  Eigen::VectorXd mean;
  Eigen::VectorXd scale;  // standard deviation, 1 where degenerate

  static FeatureScaler fit(const std::vector<Eigen::VectorXd>& samples);
  Eigen::VectorXd apply(const Eigen::VectorXd& raw) const;
};

enum class QuantizerKind { stochastic, order_preserving };

std::string to_string(QuantizerKind k);
QuantizerKind quantizer_from_string(const std::string& name);

struct QuantizerConfig {
  QuantizerKind kind = QuantizerKind::stochastic;
  int num_samples = 100;  // M
  int num_candidates = 10;  // J
  double noise_std = 1.0;
  int max_rounds = 10;  // resampling rounds before filling with all-zeros
  // Reserve one of the J slots for the noise-free draw when it fits.
  bool keep_noise_free = true;
};

// Sizes and capacity that candidate decisions must respect.
struct CapacityModel {
  Eigen::VectorXd sizes;
  double capacity = 0.0;

  static CapacityModel of(const Scenario& s);
  bool fits(const CachingDecision& I) const;
};

// Flips zero entries to one in descending score order (ties by lower index),
// skipping any entry that would exceed the capacity.
CachingDecision repair(const CachingDecision& I, const Eigen::VectorXd& scores,
                       const CapacityModel& cap);

// Distinct capacity-feasible candidates drawn from Bernoulli(sigmoid(logit +
// noise)), one noise vector per call, plus one noise-free draw; J of them are
// chosen uniformly without replacement and repaired. With keep_noise_free the
// noise-free draw always takes the first slot. Slots left empty after
// max_rounds rounds hold the all-zeros decision.
std::vector<CachingDecision> stochastic_quantize(const Eigen::VectorXd& logits,
                                                 const CapacityModel& cap,
                                                 const QuantizerConfig& q,
                                                 Rng& rng);

// Candidate k caches the k highest-scoring services, k = 0..J-1, ties by lower
// index; prefixes that exceed the capacity are dropped.
std::vector<CachingDecision> order_preserving_quantize(
    const Eigen::VectorXd& scores, const CapacityModel& cap, int num_candidates);

std::vector<CachingDecision> quantize(const Eigen::VectorXd& logits,
                                      const CapacityModel& cap,
                                      const QuantizerConfig& q, Rng& rng);

struct LabelResult {
  CachingDecision decision;
  SolveResult solve;
  int evaluated = 0;  // distinct candidates solved
};

// Argmin of the weighted energy over the distinct candidates, ties to the
// earliest. Falls back to the all-zeros decision; empty when nothing solves.
std::optional<LabelResult> label_step(const Scenario& s,
                                      const std::vector<CachingDecision>& cands,
                                      const SolveOptions& opts = {});

struct PlacementPolicy {
  Network net;
  FeatureScaler scaler;
  QuantizerConfig quantizer;

  Eigen::VectorXd logits(const Scenario& s) const;
  Eigen::VectorXd scores(const Scenario& s) const;
};

inline constexpr int kCheckpointVersion = 1;

void save_policy(const PlacementPolicy& p, const std::string& path);
PlacementPolicy load_policy(const std::string& path);
std::string policy_to_json(const PlacementPolicy& p);
PlacementPolicy policy_from_json(const std::string& text);

// Forward pass, quantization and labelling of one scenario.
PolicyResult infer(const PlacementPolicy& p, const Scenario& s, Rng& rng,
                   const SolveOptions& opts = {});

struct TrainConfig {
  int iterations = 3000;
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 128;
  int train_interval = 10;  // tau
  int buffer_capacity = 1024;
  int warmup = 128;  // labelled pairs required before the first update
  std::vector<int> hidden = {160, 120, 80};
  int test_size = 256;
  int scaler_samples = 1024;
  QuantizerConfig quantizer;
};

// FIFO store of (features, label) pairs.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int capacity);

  void push(Eigen::VectorXd features, Eigen::VectorXd label);
  int size() const { return static_cast<int>(features_.size()); }
  int capacity() const { return capacity_; }
  const Eigen::VectorXd& features(int i) const { return features_[i]; }
  const Eigen::VectorXd& label(int i) const { return labels_[i]; }

  // Column batches from the given entry indices.
  std::pair<Eigen::MatrixXd, Eigen::MatrixXd> batch(
      const std::vector<int>& idx) const;

 private:
  int capacity_;
  std::deque<Eigen::VectorXd> features_;
  std::deque<Eigen::VectorXd> labels_;
};

// Held-out scenarios with exhaustive-optimal labels.
struct TestSet {
  FeatureScaler scaler;
  Eigen::MatrixXd features;  // standardized, one column per scenario
  Eigen::MatrixXd labels;
  std::vector<Scenario> scenarios;
};

// Draws until `size` scenarios have a feasible exhaustive optimum.
TestSet make_test_set(const ScenarioConfig& cfg, const PreferenceProfile& prefs,
                      const FeatureScaler& scaler, int size,
                      std::uint64_t seed, const SolveOptions& opts = {});

struct LossPoint {
  int iteration = 0;
  double train_loss = 0.0;  // batch MSE before the update
  double test_loss = 0.0;
};

struct TrainResult {
  PlacementPolicy policy;
  std::vector<LossPoint> trace;
  int labelled = 0;    // scenarios that produced a label
  int unlabelled = 0;  // scenarios where no candidate solved
};

FeatureScaler fit_scaler(const ScenarioConfig& cfg,
                         const PreferenceProfile& prefs, int samples,
                         std::uint64_t seed);

// Trains from a seeded scenario stream. A shared test set also supplies the
// feature scaler; both are built from the seed when absent.
TrainResult train(const ScenarioConfig& cfg, const TrainConfig& tc,
                  std::uint64_t seed, const SolveOptions& opts = {},
                  const TestSet* test = nullptr);

}  // namespace mecache
