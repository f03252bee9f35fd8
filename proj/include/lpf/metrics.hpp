#pragma once

#include <iosfwd>
#include <vector>

#include "lpf/factor.hpp"
#include "lpf/prob.hpp"
#include "lpf/rng.hpp"

namespace lpf {

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  double mean_confidence = 0.0;
  double accuracy = 0.0;
  std::size_t count = 0;
};

/// Guo-style reliability table: equal-width right-inclusive confidence
/// bins ([0, 0.1], (0.1, 0.2], ...) over max-probability confidence.
struct ReliabilityTable {
  std::vector<ReliabilityBin> bins;
  double ece = 0.0;
  std::size_t total = 0;
};

ReliabilityTable ece(const std::vector<LabelDist>& predictions,
                     const std::vector<int>& labels, int bins = 10);

/// Calibration envelope eps + C / sqrt(k_eff) used by the t1 check.
double calibration_bound(double epsilon_individual, double k_eff, double c);

struct UncertaintyBreakdown {
  double total = 0.0;
  double epistemic = 0.0;
  double aleatoric = 0.0;
  double decomposition_error = 0.0;
};

/// Law-of-total-variance split over latent draws from a weighted
/// posterior mixture. Population-variance convention, so
/// total = epistemic + aleatoric holds to floating point.
UncertaintyBreakdown uncertainty_decomposition(
    const Decoder& decoder, const std::vector<GaussianPosterior>& mixture,
    const std::vector<double>& mixture_weights, int m, RngStream& stream);

struct InfoBoundReport {
  double h_y = 0.0;            // bits
  double h_y_given_e = 0.0;    // bits, mean factor entropy
  double noise = 0.0;          // bits, mean pairwise KL
  double lower_bound = 0.0;
  double achievable_bound = 0.0;
  double empirical_ece = 0.0;
  double ratio = 0.0;
};

/// Information components and the derived calibration bounds:
/// lower = max(mean factor entropy, 0.5 * noise),
/// achievable = lower + 0.5 / sqrt(k_avg).
InfoBoundReport info_bound_report(
    const std::vector<std::vector<SoftFactor>>& factors_per_entity,
    const std::vector<LabelDist>& predictions, const std::vector<int>& labels,
    double k_avg);

struct InverseSqrtFit {
  double a = 0.0;
  double b = 0.0;
  double r2 = 0.0;
};

/// Ordinary least squares of y on [1/sqrt(K), 1].
InverseSqrtFit fit_inverse_sqrt(const std::vector<double>& k_values,
                                const std::vector<double>& ece_values);

/// Minimal evidence count ceil(C^2 / eps^2) for a target ECE.
long long sample_complexity(double epsilon_target, double c);

void write_reliability_csv(const ReliabilityTable& table, std::ostream& out);

}  // namespace lpf
