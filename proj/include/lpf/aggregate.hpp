#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lpf/factor.hpp"
#include "lpf/prob.hpp"

namespace lpf {

enum class AggMethod { kSpn, kLearned, kUniform };

const char* agg_method_name(AggMethod m);

struct AggregationResult {
  LabelDist dist;
  double k_eff = 1.0;
  WeightVector weights_used;
  AggMethod method = AggMethod::kSpn;
};

/// Weighted log-linear (geometric) pooling: P(y) proportional to
/// exp(sum_i w_i log Phi_i(y)), computed in log space. Output is
/// bitwise invariant to the order of the factors.
AggregationResult spn_aggregate(const std::vector<SoftFactor>& factors);

/// Arithmetic mean of the factor distributions (equal weights).
AggregationResult uniform_aggregate(const std::vector<SoftFactor>& factors);

/// Attention aggregator: an itemwise two-layer scorer (tanh hidden)
/// over posterior moment features, softmax over scores, convex
/// combination of the means, then decode. Scoring is itemwise plus
/// symmetric set context, so the architecture is permutation
/// equivariant.
struct AttentionAggregator {
  int latent_dim = 0;
  int hidden = 16;
  std::vector<double> w1;  // hidden x feature_dim, row major
  std::vector<double> b1;  // hidden
  std::vector<double> w2;  // hidden
  double b2 = 0.0;
  double l2_lambda = 1e-4;
  Decoder decoder;

  int feature_dim() const { return feature_dim_for(latent_dim); }
  int parameter_count() const;

  /// Features per item: first and second posterior moments (means,
  /// variances, their pairwise products) plus evidence-set summary
  /// statistics. 8d + d(d+1) + 6 entries.
  static int feature_dim_for(int d) { return 8 * d + d * (d + 1) + 6; }
};

/// Zero-mean uniform init scaled by 1/sqrt(fan_in).
AttentionAggregator init_aggregator(const Decoder& decoder, int latent_dim,
                                    int hidden, double l2_lambda,
                                    std::uint64_t seed);

/// Per-item feature vectors for an evidence set (row per item).
std::vector<std::vector<double>> scorer_features(
    const std::vector<GaussianPosterior>& evidence);

/// Softmax attention over itemwise scores; sums to 1.
std::vector<double> attention_weights(
    const AttentionAggregator& agg,
    const std::vector<GaussianPosterior>& evidence);

/// decode(sum_i alpha_i mu_i).
AggregationResult learned_aggregate(
    const AttentionAggregator& agg,
    const std::vector<GaussianPosterior>& evidence);

/// Corruption envelope C * eps * delta_item * sqrt(K) used by the t5 check.
double robustness_bound(double epsilon, double delta_item, int k, double c);

std::string aggregator_to_json(const AttentionAggregator& agg);
AttentionAggregator aggregator_from_json(const std::string& text,
                                         const Decoder& decoder);

/// Sum of terms in a canonical (sorted) order, making the reduction
/// independent of input order.
double stable_sum(std::vector<double>& terms);

}  // namespace lpf
