#include "lpf/aggregate.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "lpf/errors.hpp"

namespace lpf {

const char* agg_method_name(AggMethod m) {
  switch (m) {
    case AggMethod::kSpn:
      return "spn";
    case AggMethod::kLearned:
      return "learned";
    case AggMethod::kUniform:
      return "uniform";
  }
  return "unknown";
}

double stable_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += t;
  return acc;
}

namespace {

void check_factors(const std::vector<SoftFactor>& factors) {
  if (factors.empty()) throw RangeError("aggregate: need at least one factor");
  const std::size_t y_count = factors.front().dist.size();
  for (const SoftFactor& f : factors) {
    if (f.dist.size() != y_count)
      throw DimensionError("aggregate: factor length mismatch");
  }
}

}  // namespace

AggregationResult spn_aggregate(const std::vector<SoftFactor>& factors) {
  check_factors(factors);
  const std::size_t y_count = factors.front().dist.size();
  const std::size_t k = factors.size();

  WeightVector weights;
  weights.weights.reserve(k);
  for (const SoftFactor& f : factors) weights.weights.push_back(f.weight);

  std::vector<double> log_scores(y_count);
  std::vector<double> terms(k);
  for (std::size_t y = 0; y < y_count; ++y) {
    for (std::size_t i = 0; i < k; ++i) {
      const double p = factors[i].dist[y];
      if (p <= 0.0)
        throw SupportError("spn_aggregate: factor entry with zero support");
      terms[i] = factors[i].weight * std::log(p);
    }
    log_scores[y] = stable_sum(terms);
  }

  const double max_score = *std::max_element(log_scores.begin(), log_scores.end());
  std::vector<double> scores(y_count);
  for (std::size_t y = 0; y < y_count; ++y)
    scores[y] = std::exp(log_scores[y] - max_score);

  AggregationResult out;
  out.dist = normalize(scores);
  out.k_eff = effective_sample_size(weights);
  out.weights_used = std::move(weights);
  out.method = AggMethod::kSpn;
  return out;
}

AggregationResult uniform_aggregate(const std::vector<SoftFactor>& factors) {
  check_factors(factors);
  const std::size_t y_count = factors.front().dist.size();
  const std::size_t k = factors.size();

  std::vector<double> mean(y_count);
  std::vector<double> terms(k);
  for (std::size_t y = 0; y < y_count; ++y) {
    for (std::size_t i = 0; i < k; ++i) terms[i] = factors[i].dist[y];
    mean[y] = stable_sum(terms) / static_cast<double>(k);
  }

  AggregationResult out;
  out.dist = normalize(mean);
  out.k_eff = static_cast<double>(k);
  out.weights_used.weights.assign(k, 1.0 / static_cast<double>(k));
  out.method = AggMethod::kUniform;
  return out;
}

int AttentionAggregator::parameter_count() const {
  return hidden * feature_dim() + hidden + hidden + 1;
}

AttentionAggregator init_aggregator(const Decoder& decoder, int latent_dim,
                                    int hidden, double l2_lambda,
                                    std::uint64_t seed) {
  if (latent_dim < 1) throw ConfigError("aggregator: latent_dim must be >= 1");
  if (hidden < 1) throw ConfigError("aggregator: hidden must be >= 1");
  AttentionAggregator agg;
  agg.latent_dim = latent_dim;
  agg.hidden = hidden;
  agg.l2_lambda = l2_lambda;
  agg.decoder = decoder;

  const int feat = agg.feature_dim();
  RngStream stream(derive_seed(seed, 0xa77e));
  const double r1 = 1.0 / std::sqrt(static_cast<double>(feat));
  const double r2 = 1.0 / std::sqrt(static_cast<double>(hidden));
  agg.w1.resize(static_cast<std::size_t>(hidden) * feat);
  for (double& w : agg.w1) w = stream.uniform(-r1, r1);
  agg.b1.assign(hidden, 0.0);
  agg.w2.resize(hidden);
  for (double& w : agg.w2) w = stream.uniform(-r2, r2);
  agg.b2 = 0.0;
  return agg;
}

std::vector<std::vector<double>> scorer_features(
    const std::vector<GaussianPosterior>& evidence) {
  if (evidence.empty())
    throw RangeError("scorer_features: need at least one item");
  const std::size_t k = evidence.size();
  const std::size_t d = evidence.front().dim();
  for (const auto& p : evidence) {
    if (p.dim() != d || p.var.size() != d)
      throw DimensionError("scorer_features: evidence dimension mismatch");
  }

  // Symmetric set context: per-coordinate mean/std of the means and
  // mean of the variances.
  std::vector<double> mean_of_means(d, 0.0), std_of_means(d, 0.0),
      mean_of_vars(d, 0.0);
  {
    std::vector<double> terms(k);
    for (std::size_t j = 0; j < d; ++j) {
      for (std::size_t i = 0; i < k; ++i) terms[i] = evidence[i].mean[j];
      mean_of_means[j] = stable_sum(terms) / static_cast<double>(k);
      for (std::size_t i = 0; i < k; ++i) {
        const double dev = evidence[i].mean[j] - mean_of_means[j];
        terms[i] = dev * dev;
      }
      std_of_means[j] = std::sqrt(stable_sum(terms) / static_cast<double>(k));
      for (std::size_t i = 0; i < k; ++i) terms[i] = evidence[i].var[j];
      mean_of_vars[j] = stable_sum(terms) / static_cast<double>(k);
    }
  }

  // Quadratic terms are scaled down to keep all features of comparable
  // magnitude for gradient descent.
  constexpr double kQuadScale = 0.1;

  std::vector<std::vector<double>> features(k);
  for (std::size_t i = 0; i < k; ++i) {
    const auto& mu = evidence[i].mean;
    const auto& var = evidence[i].var;
    std::vector<double>& f = features[i];
    f.reserve(AttentionAggregator::feature_dim_for(static_cast<int>(d)));

    for (double m : mu) f.push_back(m);
    for (double v : var) f.push_back(v);
    for (double v : var) f.push_back(std::sqrt(v));
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b)
        f.push_back(kQuadScale * mu[a] * mu[b]);
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = a; b < d; ++b)
        f.push_back(kQuadScale * var[a] * var[b]);
    for (std::size_t j = 0; j < d; ++j)
      f.push_back(kQuadScale * mu[j] * var[j]);
    for (double m : mean_of_means) f.push_back(m);
    for (double s : std_of_means) f.push_back(s);
    for (double v : mean_of_vars) f.push_back(v);
    for (std::size_t j = 0; j < d; ++j)
      f.push_back(mu[j] - mean_of_means[j]);

    double norm_mu = 0.0, sum_var = 0.0, dot_mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      norm_mu += mu[j] * mu[j];
      sum_var += var[j];
      dot_mean += mu[j] * mean_of_means[j];
    }
    f.push_back(evidence[i].cov_frobenius());
    f.push_back(std::sqrt(norm_mu));
    f.push_back(sum_var);
    f.push_back(kQuadScale * dot_mean);
    f.push_back(static_cast<double>(k));
    f.push_back(1.0 / std::sqrt(static_cast<double>(k)));
  }
  return features;
}

namespace {

double score_item(const AttentionAggregator& agg,
                  const std::vector<double>& feat) {
  const int feat_dim = agg.feature_dim();
  double score = agg.b2;
  for (int h = 0; h < agg.hidden; ++h) {
    double pre = agg.b1[h];
    const double* row = agg.w1.data() + static_cast<std::size_t>(h) * feat_dim;
    for (int j = 0; j < feat_dim; ++j) pre += row[j] * feat[j];
    score += agg.w2[h] * std::tanh(pre);
  }
  return score;
}

}  // namespace

std::vector<double> attention_weights(
    const AttentionAggregator& agg,
    const std::vector<GaussianPosterior>& evidence) {
  const auto features = scorer_features(evidence);
  const std::size_t k = evidence.size();
  std::vector<double> scores(k);
  for (std::size_t i = 0; i < k; ++i) scores[i] = score_item(agg, features[i]);

  const double max_score = *std::max_element(scores.begin(), scores.end());
  std::vector<double> expd(k);
  std::vector<double> terms(k);
  for (std::size_t i = 0; i < k; ++i) {
    expd[i] = std::exp(scores[i] - max_score);
    terms[i] = expd[i];
  }
  const double z = stable_sum(terms);
  for (double& e : expd) e /= z;
  return expd;
}

AggregationResult learned_aggregate(
    const AttentionAggregator& agg,
    const std::vector<GaussianPosterior>& evidence) {
  const std::vector<double> alpha = attention_weights(agg, evidence);
  const std::size_t d = evidence.front().dim();
  const std::size_t k = evidence.size();

  std::vector<double> z_agg(d);
  std::vector<double> terms(k);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < k; ++i)
      terms[i] = alpha[i] * evidence[i].mean[j];
    z_agg[j] = stable_sum(terms);
  }

  AggregationResult out;
  out.dist = decode(agg.decoder, z_agg);
  WeightVector wv;
  wv.weights = alpha;
  out.k_eff = effective_sample_size(wv);
  out.weights_used = std::move(wv);
  out.method = AggMethod::kLearned;
  return out;
}

double robustness_bound(double epsilon, double delta_item, int k, double c) {
  if (epsilon < 0.0 || epsilon > 1.0)
    throw RangeError("robustness_bound: epsilon must be in [0, 1]");
  if (delta_item < 0.0)
    throw RangeError("robustness_bound: delta_item must be >= 0");
  if (k < 1) throw RangeError("robustness_bound: k must be >= 1");
  return c * epsilon * delta_item * std::sqrt(static_cast<double>(k));
}

std::string aggregator_to_json(const AttentionAggregator& agg) {
  nlohmann::json j;
  j["latent_dim"] = agg.latent_dim;
  j["hidden"] = agg.hidden;
  j["feature_dim"] = agg.feature_dim();
  j["w1"] = agg.w1;
  j["b1"] = agg.b1;
  j["w2"] = agg.w2;
  j["b2"] = agg.b2;
  j["l2_lambda"] = agg.l2_lambda;
  return j.dump(2);
}

AttentionAggregator aggregator_from_json(const std::string& text,
                                         const Decoder& decoder) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("aggregator: bad JSON: ") + e.what());
  }
  AttentionAggregator agg;
  agg.decoder = decoder;
  try {
    agg.latent_dim = j.at("latent_dim").get<int>();
    agg.hidden = j.at("hidden").get<int>();
    agg.w1 = j.at("w1").get<std::vector<double>>();
    agg.b1 = j.at("b1").get<std::vector<double>>();
    agg.w2 = j.at("w2").get<std::vector<double>>();
    agg.b2 = j.at("b2").get<double>();
    agg.l2_lambda = j.at("l2_lambda").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("aggregator: bad field: ") + e.what());
  }
  const int feat = agg.feature_dim();
  if (j.contains("feature_dim") && j["feature_dim"].get<int>() != feat)
    throw ConfigError("aggregator: feature_dim mismatch with latent_dim");
  if (agg.w1.size() != static_cast<std::size_t>(agg.hidden) * feat ||
      agg.b1.size() != static_cast<std::size_t>(agg.hidden) ||
      agg.w2.size() != static_cast<std::size_t>(agg.hidden))
    throw ConfigError("aggregator: parameter shape mismatch");
  return agg;
}

}  // namespace lpf
