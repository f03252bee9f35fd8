#include "lpf/prob.hpp"

#include <algorithm>
#include <cmath>

#include "lpf/errors.hpp"

namespace lpf {

double GaussianPosterior::cov_frobenius() const {
  double s = 0.0;
  for (double v : var) s += v * v;
  return std::sqrt(s);
}

bool is_valid_dist(const LabelDist& p, double tol) {
  if (p.probs.empty()) return false;
  double sum = 0.0;
  for (double x : p.probs) {
    if (!(x >= 0.0) || !std::isfinite(x)) return false;
    sum += x;
  }
  return std::fabs(sum - 1.0) <= tol;
}

namespace {

/// Rewrite the largest entry as 1 minus the sum of the others. The
/// replacement depends only on entries the correction never touches,
/// so it is a floating-point fixed point and normalize stays
/// idempotent to the bit.
void pin_unit_sum(std::vector<double>& probs) {
  for (int iter = 0; iter < 4; ++iter) {
    std::size_t k = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
      if (probs[i] > probs[k]) k = i;
    double others = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i)
      if (i != k) others += probs[i];
    const double corrected = 1.0 - others;
    if (corrected == probs[k] || !(corrected >= 0.0)) return;
    probs[k] = corrected;
  }
}

}  // namespace

LabelDist normalize(const std::vector<double>& raw) {
  if (raw.empty()) throw NormalizationError("normalize: empty input");
  double sum = 0.0;
  for (double x : raw) {
    if (!std::isfinite(x) || x < 0.0)
      throw NormalizationError("normalize: entries must be finite and >= 0");
    sum += x;
  }
  if (sum <= 0.0) throw NormalizationError("normalize: all entries are zero");
  LabelDist out;
  out.probs = raw;
  if (std::fabs(sum - 1.0) > LabelDist::kSumTolerance) {
    for (double& x : out.probs) x /= sum;
  }
  pin_unit_sum(out.probs);
  return out;
}

double entropy_bits(const LabelDist& p) {
  double h = 0.0;
  for (double x : p.probs) {
    if (x > 0.0) h -= x * std::log2(x);
  }
  return h < 0.0 ? 0.0 : h;
}

double kl_bits(const LabelDist& p, const LabelDist& q) {
  if (p.size() != q.size())
    throw DimensionError("kl_bits: length mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) {
      if (q[i] <= 0.0)
        throw SupportError("kl_bits: q has zero mass where p > 0");
      d += p[i] * std::log2(p[i] / q[i]);
    }
  }
  return d < 0.0 ? 0.0 : d;
}

double l1_distance(const LabelDist& p, const LabelDist& q) {
  if (p.size() != q.size())
    throw DimensionError("l1_distance: length mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) d += std::fabs(p[i] - q[i]);
  return d;
}

double effective_sample_size(const WeightVector& w) {
  // Accumulate in sorted order so the value does not depend on how the
  // caller ordered the weights.
  std::vector<double> sorted = w.weights;
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0, sum_sq = 0.0;
  for (double x : sorted) {
    sum += x;
    sum_sq += x * x;
  }
  if (sum_sq <= 0.0)
    throw DegenerateWeightsError("effective_sample_size: all weights are zero");
  return sum * sum / sum_sq;
}

int argmax_label(const LabelDist& p) {
  int best = 0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    if (p[i] > p[best]) best = static_cast<int>(i);
  }
  return best;
}

}  // namespace lpf
