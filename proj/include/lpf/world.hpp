#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "lpf/prob.hpp"
#include "lpf/rng.hpp"

namespace lpf {

/// Knobs for the controlled generative environment. Defaults target
/// the regime the verification experiments assume: mean posterior
/// covariance norm near 0.87 and mean pairwise evidence correlation
/// near 0.12.
struct WorldConfig {
  int d = 8;
  int num_labels = 3;
  std::vector<std::vector<double>> prototypes;  // empty: default layout
  double prototype_scale = 3.0;
  double evidence_noise = 1.0;
  double var_low = 0.2;
  double var_high = 0.4;
  double conflict_rate = 0.15;
  double correlation = 0.12;
  std::vector<double> label_prior;  // empty: uniform
  std::uint64_t seed = 42;
  int k_max = 5;
  double sigma_max = 2.5;
};

/// Entity with its ground-truth label and evidence posteriors.
struct Entity {
  int label = 0;
  std::vector<GaussianPosterior> evidence;

  int k() const { return static_cast<int>(evidence.size()); }
};

struct AggDataset {
  std::vector<Entity> train;
  std::vector<Entity> test;
  int k = 0;
};

/// Immutable world: validated config with materialized prototypes.
/// All sampling goes through explicit streams derived from the world
/// seed, so parallel callers stay reproducible.
class World {
 public:
  explicit World(WorldConfig config);

  const WorldConfig& config() const { return cfg_; }
  const std::vector<std::vector<double>>& prototypes() const {
    return cfg_.prototypes;
  }

  /// Deterministic stream for a named purpose.
  RngStream stream(std::uint64_t purpose) const {
    return RngStream(derive_seed(cfg_.seed, purpose));
  }

 private:
  WorldConfig cfg_;
};

World build_world(WorldConfig config);

Entity sample_entity(const World& world, int k, RngStream& stream);

/// Like sample_entity, also reporting which prototype generated each
/// evidence item (differs from the entity label on conflict flips).
Entity sample_entity_traced(const World& world, int k, RngStream& stream,
                            std::vector<int>* generating_labels);

/// Replace the means of floor(fraction * K) uniformly chosen items
/// with a wrong-label prototype. Label and remaining items untouched.
Entity corrupt_entity(const Entity& entity, double fraction,
                      const World& world, RngStream& stream);

/// Mean over entities of the mean pairwise Pearson correlation between
/// evidence-mean jitter vectors (jitter relative to the generating
/// prototype). Entities with fewer than two items are skipped.
double measure_correlation(const World& world, int n_entities);

AggDataset make_agg_dataset(const World& world, int n_train, int n_test,
                            int k);

void export_jsonl(const std::vector<Entity>& entities, std::ostream& out);
std::vector<Entity> import_jsonl(std::istream& in);

namespace streams {
// Purpose tags for deriving world streams.
constexpr std::uint64_t kEntity = 0x01;
constexpr std::uint64_t kTrain = 0x02;
constexpr std::uint64_t kTest = 0x03;
constexpr std::uint64_t kCorrelation = 0x04;
constexpr std::uint64_t kCorruption = 0x05;
constexpr std::uint64_t kFactor = 0x06;
constexpr std::uint64_t kValidate = 0x07;
}  // namespace streams

}  // namespace lpf
