#pragma once

#include <cstddef>
#include <vector>

namespace lpf {

/// Probability vector over a finite label space. Entries are
/// nonnegative and sum to 1 within kSumTolerance.
struct LabelDist {
  std::vector<double> probs;

  std::size_t size() const { return probs.size(); }
  double operator[](std::size_t i) const { return probs[i]; }

  static constexpr double kSumTolerance = 1e-9;
};

/// Diagonal-covariance Gaussian over the latent space, one per
/// evidence item. var holds the diagonal of the covariance.
struct GaussianPosterior {
  std::vector<double> mean;
  std::vector<double> var;
  int source_id = 0;

  std::size_t dim() const { return mean.size(); }

  /// Frobenius norm of the diagonal covariance: sqrt(sum var_j^2).
  double cov_frobenius() const;
};

/// Per-item confidence weights, each in [0, 1].
struct WeightVector {
  std::vector<double> weights;

  std::size_t size() const { return weights.size(); }
};

bool is_valid_dist(const LabelDist& p, double tol = LabelDist::kSumTolerance);

/// Scale a nonnegative vector to sum to 1. Throws NormalizationError
/// on all-zero or non-finite input.
LabelDist normalize(const std::vector<double>& raw);

/// Shannon entropy in bits, with 0*log(0) := 0.
double entropy_bits(const LabelDist& p);

/// KL divergence in bits. Throws SupportError if q lacks support
/// where p has mass.
double kl_bits(const LabelDist& p, const LabelDist& q);

/// Total variation-style L1 distance, in [0, 2].
double l1_distance(const LabelDist& p, const LabelDist& q);

/// Kish effective sample size (sum w)^2 / sum w^2, in [1, K].
double effective_sample_size(const WeightVector& w);

/// Index of the maximal entry; ties break toward the lowest index.
int argmax_label(const LabelDist& p);

}  // namespace lpf
