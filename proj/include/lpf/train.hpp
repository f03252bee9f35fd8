#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "lpf/aggregate.hpp"
#include "lpf/world.hpp"

namespace lpf {

struct TrainConfig {
  double learning_rate = 0.2;
  int epochs = 80;
  double l2_lambda = 1e-4;
  int batch_size = 128;  // 0 = full batch
  std::uint64_t seed = 42;
  double delta = 0.05;           // confidence level for the report bound
  double d_eff_threshold = 1e-3;
};

struct TrainReport {
  double train_loss = 0.0;  // mean cross-entropy, no regularizer
  double test_loss = 0.0;
  double gap = 0.0;  // test_loss - train_loss
  int d_eff = 0;
  double bound = 0.0;  // pac_bayes_bound at measured d_eff
  double test_accuracy = 0.0;
};

/// Flattened parameter order: w1 row-major, b1, w2, b2.
std::vector<double> flatten_params(const AttentionAggregator& agg);
void set_params(AttentionAggregator& agg, std::span<const double> params);

/// Mean cross-entropy of decode(sum alpha_i mu_i) against entity
/// labels, plus l2 * ||theta||^2.
double batch_loss(const AttentionAggregator& agg,
                  std::span<const Entity> entities, double l2);

/// Hand-derived gradient of batch_loss through the scorer, the softmax
/// attention, the convex combination, and the decoder softmax.
/// Layout matches flatten_params.
std::vector<double> batch_gradient(const AttentionAggregator& agg,
                                   std::span<const Entity> entities,
                                   double l2);

/// Gradient-descent training of the attention scorer (decoder fixed).
/// Throws TrainingDivergedError if the loss leaves the finite range.
std::pair<AttentionAggregator, TrainReport> train(
    const AggDataset& dataset, const AttentionAggregator& arch,
    const TrainConfig& config);

/// Number of parameters with |theta_j| > threshold.
int effective_dimension(const AttentionAggregator& agg, double threshold);

/// sqrt(2 (L + 1/N) (d_eff ln(eN/d_eff) + ln(2/delta)) / N),
/// natural logarithms.
double pac_bayes_bound(double train_loss, long long n, int d_eff,
                       double delta);

/// Uniform-stability envelope 2L / (lambda N).
double stability_bound(double lipschitz, double lambda, long long n);

}  // namespace lpf
