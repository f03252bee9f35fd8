#include "lpf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "lpf/errors.hpp"

namespace lpf {

ReliabilityTable ece(const std::vector<LabelDist>& predictions,
                     const std::vector<int>& labels, int bins) {
  if (predictions.size() != labels.size())
    throw DimensionError("ece: predictions and labels differ in length");
  if (predictions.empty()) throw RangeError("ece: need at least one prediction");
  if (bins < 1) throw RangeError("ece: bins must be >= 1");

  ReliabilityTable table;
  table.total = predictions.size();
  table.bins.resize(bins);
  std::vector<double> conf_sum(bins, 0.0);
  std::vector<std::size_t> correct(bins, 0);

  for (int b = 0; b < bins; ++b) {
    table.bins[b].lo = static_cast<double>(b) / bins;
    table.bins[b].hi = static_cast<double>(b + 1) / bins;
  }

  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const LabelDist& p = predictions[i];
    const int pred = argmax_label(p);
    const double conf = p[pred];
    // Right-inclusive bins; confidence 0 lands in the first bin.
    int b = static_cast<int>(std::ceil(conf * bins)) - 1;
    b = std::clamp(b, 0, bins - 1);
    table.bins[b].count += 1;
    conf_sum[b] += conf;
    if (pred == labels[i]) correct[b] += 1;
  }

  double e = 0.0;
  for (int b = 0; b < bins; ++b) {
    ReliabilityBin& bin = table.bins[b];
    if (bin.count == 0) continue;
    bin.mean_confidence = conf_sum[b] / static_cast<double>(bin.count);
    bin.accuracy = static_cast<double>(correct[b]) / static_cast<double>(bin.count);
    e += (static_cast<double>(bin.count) / static_cast<double>(table.total)) *
         std::fabs(bin.accuracy - bin.mean_confidence);
  }
  table.ece = e;
  return table;
}

double calibration_bound(double epsilon_individual, double k_eff, double c) {
  if (!(k_eff >= 1.0)) throw RangeError("calibration_bound: k_eff must be >= 1");
  return epsilon_individual + c / std::sqrt(k_eff);
}

UncertaintyBreakdown uncertainty_decomposition(
    const Decoder& decoder, const std::vector<GaussianPosterior>& mixture,
    const std::vector<double>& mixture_weights, int m, RngStream& stream) {
  if (m < 2) throw RangeError("uncertainty_decomposition: m must be >= 2");
  if (mixture.empty())
    throw RangeError("uncertainty_decomposition: empty mixture");
  if (mixture.size() != mixture_weights.size())
    throw DimensionError("uncertainty_decomposition: weight length mismatch");

  const LabelDist weights = normalize(mixture_weights);
  const int y_count = decoder.num_labels();

  std::vector<std::vector<double>> samples;
  samples.reserve(m);
  std::vector<double> z(decoder.latent_dim());
  double aleatoric = 0.0;
  std::vector<double> mean_p(y_count, 0.0);
  std::vector<std::vector<double>> all_p(m);

  for (int s = 0; s < m; ++s) {
    // Component by weight, then a reparameterized Gaussian draw.
    const double u = stream.next_unit();
    double acc = 0.0;
    std::size_t comp = mixture.size() - 1;
    for (std::size_t i = 0; i < mixture.size(); ++i) {
      acc += weights[i];
      if (u < acc) {
        comp = i;
        break;
      }
    }
    const GaussianPosterior& post = mixture[comp];
    for (std::size_t j = 0; j < post.dim(); ++j)
      z[j] = post.mean[j] + std::sqrt(post.var[j]) * stream.normal();

    const LabelDist p = decode(decoder, z);
    all_p[s] = p.probs;
    for (int y = 0; y < y_count; ++y) {
      aleatoric += p[y] * (1.0 - p[y]);
      mean_p[y] += p[y];
    }
  }
  aleatoric /= static_cast<double>(m);
  for (double& v : mean_p) v /= static_cast<double>(m);

  double epistemic = 0.0;
  for (int y = 0; y < y_count; ++y) {
    double var = 0.0;
    for (int s = 0; s < m; ++s) {
      const double dev = all_p[s][y] - mean_p[y];
      var += dev * dev;
    }
    epistemic += var / static_cast<double>(m);
  }

  // Generalized Bernoulli variance of the mean prediction; algebra
  // makes it equal epistemic + aleatoric under the 1/M convention.
  double total = 0.0;
  for (int y = 0; y < y_count; ++y) total += mean_p[y] * (1.0 - mean_p[y]);

  UncertaintyBreakdown out;
  out.total = total;
  out.epistemic = epistemic;
  out.aleatoric = aleatoric;
  out.decomposition_error =
      std::fabs(total - (epistemic + aleatoric)) / std::max(total, 1e-12);
  return out;
}

InfoBoundReport info_bound_report(
    const std::vector<std::vector<SoftFactor>>& factors_per_entity,
    const std::vector<LabelDist>& predictions, const std::vector<int>& labels,
    double k_avg) {
  if (factors_per_entity.size() < 2)
    throw RangeError("info_bound_report: need at least two entities");
  if (predictions.size() != labels.size())
    throw DimensionError("info_bound_report: predictions/labels mismatch");
  if (!(k_avg >= 1.0)) throw RangeError("info_bound_report: k_avg must be >= 1");

  // Label entropy from empirical frequencies.
  int max_label = 0;
  for (int y : labels) max_label = std::max(max_label, y);
  std::vector<double> freq(max_label + 1, 0.0);
  for (int y : labels) freq[y] += 1.0;
  const LabelDist label_dist = normalize(freq);

  InfoBoundReport report;
  report.h_y = entropy_bits(label_dist);

  // Pool every factor; mean entropy and mean pairwise KL (ordered pairs).
  std::vector<const SoftFactor*> pool;
  for (const auto& factors : factors_per_entity)
    for (const SoftFactor& f : factors) pool.push_back(&f);
  if (pool.empty()) throw RangeError("info_bound_report: no factors");

  double entropy_sum = 0.0;
  for (const SoftFactor* f : pool) entropy_sum += entropy_bits(f->dist);
  report.h_y_given_e = entropy_sum / static_cast<double>(pool.size());

  double kl_sum = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    for (std::size_t j = i + 1; j < pool.size(); ++j) {
      kl_sum += kl_bits(pool[i]->dist, pool[j]->dist);
      kl_sum += kl_bits(pool[j]->dist, pool[i]->dist);
      pairs += 2;
    }
  }
  report.noise = pairs == 0 ? 0.0 : kl_sum / static_cast<double>(pairs);

  report.lower_bound = std::max(report.h_y_given_e, 0.5 * report.noise);
  report.achievable_bound = report.lower_bound + 0.5 / std::sqrt(k_avg);
  report.empirical_ece = ece(predictions, labels).ece;
  report.ratio = report.empirical_ece / report.achievable_bound;
  return report;
}

InverseSqrtFit fit_inverse_sqrt(const std::vector<double>& k_values,
                                const std::vector<double>& ece_values) {
  if (k_values.size() != ece_values.size())
    throw DimensionError("fit_inverse_sqrt: length mismatch");
  const std::size_t n = k_values.size();
  if (n < 3) throw RangeError("fit_inverse_sqrt: need at least 3 points");

  double sxx = 0.0, sx = 0.0, sxy = 0.0, sy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(k_values[i] > 0.0))
      throw RangeError("fit_inverse_sqrt: k values must be > 0");
    const double x = 1.0 / std::sqrt(k_values[i]);
    sxx += x * x;
    sx += x;
    sxy += x * ece_values[i];
    sy += ece_values[i];
  }
  const double det = sxx * n - sx * sx;
  if (std::fabs(det) < 1e-12)
    throw SingularFitError("fit_inverse_sqrt: all K values identical");

  InverseSqrtFit fit;
  fit.a = (n * sxy - sx * sy) / det;
  fit.b = (sxx * sy - sx * sxy) / det;

  const double mean_y = sy / static_cast<double>(n);
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double pred = fit.a / std::sqrt(k_values[i]) + fit.b;
    ss_res += (ece_values[i] - pred) * (ece_values[i] - pred);
    ss_tot += (ece_values[i] - mean_y) * (ece_values[i] - mean_y);
  }
  if (ss_tot == 0.0) {
    // Constant response: a perfect flat fit counts as R^2 = 1, allowing
    // for roundoff in the recovered coefficients.
    fit.r2 = ss_res <= 1e-24 * static_cast<double>(n) ? 1.0 : 0.0;
  } else {
    fit.r2 = 1.0 - ss_res / ss_tot;
  }
  return fit;
}

long long sample_complexity(double epsilon_target, double c) {
  if (!(epsilon_target > 0.0))
    throw RangeError("sample_complexity: epsilon_target must be > 0");
  return static_cast<long long>(
      std::ceil((c * c) / (epsilon_target * epsilon_target)));
}

void write_reliability_csv(const ReliabilityTable& table, std::ostream& out) {
  out << "bin_lo,bin_hi,mean_conf,accuracy,count\n";
  char buf[160];
  for (const ReliabilityBin& bin : table.bins) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%zu\n", bin.lo,
                  bin.hi, bin.mean_confidence, bin.accuracy, bin.count);
    out << buf;
  }
}

}  // namespace lpf
