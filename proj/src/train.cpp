#include "lpf/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lpf/errors.hpp"

namespace lpf {

namespace {

struct EntityContext {
  int label = 0;
  std::vector<std::vector<double>> features;  // per item
  std::vector<std::vector<double>> means;     // per item
};

EntityContext make_context(const Entity& entity) {
  EntityContext ctx;
  ctx.label = entity.label;
  ctx.features = scorer_features(entity.evidence);
  ctx.means.reserve(entity.evidence.size());
  for (const GaussianPosterior& p : entity.evidence) ctx.means.push_back(p.mean);
  return ctx;
}

struct Forward {
  std::vector<std::vector<double>> hidden;  // per item, tanh activations
  std::vector<double> scores;
  std::vector<double> alpha;
  std::vector<double> z;
  std::vector<double> soft;   // pre-floor softmax
  std::vector<double> probs;  // floored output
  double loss = 0.0;          // cross-entropy only
};

Forward forward_entity(const AttentionAggregator& agg,
                       const EntityContext& ctx) {
  const std::size_t k = ctx.features.size();
  const int feat_dim = agg.feature_dim();
  const Decoder& dec = agg.decoder;
  const int y_count = dec.num_labels();
  const int d = dec.latent_dim();

  Forward fw;
  fw.hidden.assign(k, std::vector<double>(agg.hidden));
  fw.scores.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    double score = agg.b2;
    for (int h = 0; h < agg.hidden; ++h) {
      double pre = agg.b1[h];
      const double* row = agg.w1.data() + static_cast<std::size_t>(h) * feat_dim;
      const double* x = ctx.features[i].data();
      for (int j = 0; j < feat_dim; ++j) pre += row[j] * x[j];
      fw.hidden[i][h] = std::tanh(pre);
      score += agg.w2[h] * fw.hidden[i][h];
    }
    fw.scores[i] = score;
  }

  const double max_score = *std::max_element(fw.scores.begin(), fw.scores.end());
  fw.alpha.resize(k);
  double z_sum = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    fw.alpha[i] = std::exp(fw.scores[i] - max_score);
    z_sum += fw.alpha[i];
  }
  for (double& a : fw.alpha) a /= z_sum;

  fw.z.assign(d, 0.0);
  for (std::size_t i = 0; i < k; ++i)
    for (int j = 0; j < d; ++j) fw.z[j] += fw.alpha[i] * ctx.means[i][j];

  std::vector<double> logits(y_count);
  double max_logit = -1e300;
  for (int y = 0; y < y_count; ++y) {
    double acc = dec.bias[y];
    for (int j = 0; j < d; ++j) acc += dec.weight[y][j] * fw.z[j];
    logits[y] = acc / dec.temperature;
    max_logit = std::max(max_logit, logits[y]);
  }
  double soft_sum = 0.0;
  fw.soft.resize(y_count);
  for (int y = 0; y < y_count; ++y) {
    fw.soft[y] = std::exp(logits[y] - max_logit);
    soft_sum += fw.soft[y];
  }
  fw.probs.resize(y_count);
  const double mix = dec.floor / static_cast<double>(y_count);
  for (int y = 0; y < y_count; ++y) {
    fw.soft[y] /= soft_sum;
    fw.probs[y] = (1.0 - dec.floor) * fw.soft[y] + mix;
  }
  fw.loss = -std::log(fw.probs[ctx.label]);
  return fw;
}

/// Accumulate dLoss/dtheta for one entity into grad (flatten order).
void backward_entity(const AttentionAggregator& agg, const EntityContext& ctx,
                     const Forward& fw, double scale, std::vector<double>& grad) {
  const std::size_t k = ctx.features.size();
  const int feat_dim = agg.feature_dim();
  const Decoder& dec = agg.decoder;
  const int y_count = dec.num_labels();
  const int d = dec.latent_dim();
  const int y_star = ctx.label;

  // d loss / d logits through the floor mix and the softmax.
  const double g_soft = -(1.0 - dec.floor) / fw.probs[y_star];
  std::vector<double> g_logit(y_count);
  for (int c = 0; c < y_count; ++c) {
    const double indicator = (c == y_star) ? 1.0 : 0.0;
    g_logit[c] = g_soft * fw.soft[y_star] * (indicator - fw.soft[c]);
  }

  std::vector<double> g_z(d, 0.0);
  for (int c = 0; c < y_count; ++c) {
    const double gl = g_logit[c] / dec.temperature;
    for (int j = 0; j < d; ++j) g_z[j] += gl * dec.weight[c][j];
  }

  std::vector<double> g_alpha(k, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    double acc = 0.0;
    for (int j = 0; j < d; ++j) acc += g_z[j] * ctx.means[i][j];
    g_alpha[i] = acc;
  }

  double weighted = 0.0;
  for (std::size_t i = 0; i < k; ++i) weighted += fw.alpha[i] * g_alpha[i];
  std::vector<double> g_score(k);
  for (std::size_t i = 0; i < k; ++i)
    g_score[i] = fw.alpha[i] * (g_alpha[i] - weighted);

  const std::size_t w1_size = static_cast<std::size_t>(agg.hidden) * feat_dim;
  double* g_w1 = grad.data();
  double* g_b1 = grad.data() + w1_size;
  double* g_w2 = g_b1 + agg.hidden;
  double* g_b2 = g_w2 + agg.hidden;

  for (std::size_t i = 0; i < k; ++i) {
    const double gs = scale * g_score[i];
    *g_b2 += gs;
    const double* x = ctx.features[i].data();
    for (int h = 0; h < agg.hidden; ++h) {
      const double hid = fw.hidden[i][h];
      g_w2[h] += gs * hid;
      const double g_pre = gs * agg.w2[h] * (1.0 - hid * hid);
      g_b1[h] += g_pre;
      double* row = g_w1 + static_cast<std::size_t>(h) * feat_dim;
      for (int j = 0; j < feat_dim; ++j) row[j] += g_pre * x[j];
    }
  }
}

double context_batch_loss(const AttentionAggregator& agg,
                          const std::vector<EntityContext>& contexts,
                          std::span<const std::size_t> idx, double l2) {
  double loss = 0.0;
  for (std::size_t i : idx) loss += forward_entity(agg, contexts[i]).loss;
  loss /= static_cast<double>(idx.size());
  if (l2 > 0.0) {
    const std::vector<double> params = flatten_params(agg);
    double sq = 0.0;
    for (double p : params) sq += p * p;
    loss += l2 * sq;
  }
  return loss;
}

std::vector<double> context_batch_gradient(
    const AttentionAggregator& agg, const std::vector<EntityContext>& contexts,
    std::span<const std::size_t> idx, double l2) {
  const std::vector<double> params = flatten_params(agg);
  std::vector<double> grad(params.size(), 0.0);
  const double scale = 1.0 / static_cast<double>(idx.size());
  for (std::size_t i : idx)
    backward_entity(agg, contexts[i], forward_entity(agg, contexts[i]), scale,
                    grad);
  if (l2 > 0.0) {
    for (std::size_t j = 0; j < grad.size(); ++j)
      grad[j] += 2.0 * l2 * params[j];
  }
  return grad;
}

}  // namespace

std::vector<double> flatten_params(const AttentionAggregator& agg) {
  std::vector<double> out;
  out.reserve(agg.parameter_count());
  out.insert(out.end(), agg.w1.begin(), agg.w1.end());
  out.insert(out.end(), agg.b1.begin(), agg.b1.end());
  out.insert(out.end(), agg.w2.begin(), agg.w2.end());
  out.push_back(agg.b2);
  return out;
}

void set_params(AttentionAggregator& agg, std::span<const double> params) {
  if (params.size() != static_cast<std::size_t>(agg.parameter_count()))
    throw DimensionError("set_params: parameter count mismatch");
  std::size_t off = 0;
  std::copy_n(params.begin(), agg.w1.size(), agg.w1.begin());
  off += agg.w1.size();
  std::copy_n(params.begin() + off, agg.b1.size(), agg.b1.begin());
  off += agg.b1.size();
  std::copy_n(params.begin() + off, agg.w2.size(), agg.w2.begin());
  off += agg.w2.size();
  agg.b2 = params[off];
}

double batch_loss(const AttentionAggregator& agg,
                  std::span<const Entity> entities, double l2) {
  if (entities.empty()) throw RangeError("batch_loss: empty batch");
  std::vector<EntityContext> contexts;
  contexts.reserve(entities.size());
  for (const Entity& e : entities) contexts.push_back(make_context(e));
  std::vector<std::size_t> idx(entities.size());
  std::iota(idx.begin(), idx.end(), 0);
  return context_batch_loss(agg, contexts, idx, l2);
}

std::vector<double> batch_gradient(const AttentionAggregator& agg,
                                   std::span<const Entity> entities,
                                   double l2) {
  if (entities.empty()) throw RangeError("batch_gradient: empty batch");
  std::vector<EntityContext> contexts;
  contexts.reserve(entities.size());
  for (const Entity& e : entities) contexts.push_back(make_context(e));
  std::vector<std::size_t> idx(entities.size());
  std::iota(idx.begin(), idx.end(), 0);
  return context_batch_gradient(agg, contexts, idx, l2);
}

std::pair<AttentionAggregator, TrainReport> train(
    const AggDataset& dataset, const AttentionAggregator& arch,
    const TrainConfig& config) {
  if (dataset.train.empty()) throw RangeError("train: empty train split");

  AttentionAggregator agg = arch;
  agg.l2_lambda = config.l2_lambda;

  std::vector<EntityContext> train_ctx;
  train_ctx.reserve(dataset.train.size());
  for (const Entity& e : dataset.train) train_ctx.push_back(make_context(e));

  const std::size_t n = train_ctx.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  RngStream shuffle_stream(derive_seed(config.seed, 0x5f1e));

  const std::size_t batch =
      config.batch_size <= 0
          ? n
          : std::min<std::size_t>(n, static_cast<std::size_t>(config.batch_size));

  std::vector<double> params = flatten_params(agg);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (batch < n) {
      for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = shuffle_stream.pick_index(i);
        std::swap(order[i - 1], order[j]);
      }
    }
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t stop = std::min(n, start + batch);
      std::span<const std::size_t> idx(order.data() + start, stop - start);
      const std::vector<double> grad =
          context_batch_gradient(agg, train_ctx, idx, config.l2_lambda);
      for (std::size_t j = 0; j < params.size(); ++j)
        params[j] -= config.learning_rate * grad[j];
      set_params(agg, params);
    }
    const double probe = forward_entity(agg, train_ctx.front()).loss;
    if (!std::isfinite(probe))
      throw TrainingDivergedError("train: loss became non-finite");
  }

  TrainReport report;
  {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    report.train_loss = context_batch_loss(agg, train_ctx, idx, 0.0);
  }
  if (!std::isfinite(report.train_loss))
    throw TrainingDivergedError("train: final loss non-finite");

  if (!dataset.test.empty()) {
    double loss = 0.0;
    std::size_t correct = 0;
    for (const Entity& e : dataset.test) {
      const EntityContext ctx = make_context(e);
      const Forward fw = forward_entity(agg, ctx);
      loss += fw.loss;
      int best = 0;
      for (std::size_t y = 1; y < fw.probs.size(); ++y)
        if (fw.probs[y] > fw.probs[best]) best = static_cast<int>(y);
      if (best == e.label) ++correct;
    }
    report.test_loss = loss / static_cast<double>(dataset.test.size());
    report.test_accuracy =
        static_cast<double>(correct) / static_cast<double>(dataset.test.size());
  }
  report.gap = report.test_loss - report.train_loss;
  report.d_eff = effective_dimension(agg, config.d_eff_threshold);
  try {
    report.bound = pac_bayes_bound(report.train_loss,
                                   static_cast<long long>(n),
                                   std::max(report.d_eff, 1), config.delta);
  } catch (const RangeError&) {
    // d_eff >= eN: the complexity term leaves the formula's domain and
    // the bound carries no information.
    report.bound = std::numeric_limits<double>::infinity();
  }
  return {std::move(agg), report};
}

int effective_dimension(const AttentionAggregator& agg, double threshold) {
  const std::vector<double> params = flatten_params(agg);
  int count = 0;
  for (double p : params)
    if (std::fabs(p) > threshold) ++count;
  return count;
}

double pac_bayes_bound(double train_loss, long long n, int d_eff,
                       double delta) {
  if (n <= 0) throw RangeError("pac_bayes_bound: n must be > 0");
  if (d_eff < 1) throw RangeError("pac_bayes_bound: d_eff must be >= 1");
  if (!(delta > 0.0 && delta < 1.0))
    throw RangeError("pac_bayes_bound: delta must be in (0, 1)");
  const double nn = static_cast<double>(n);
  const double complexity =
      d_eff * std::log(M_E * nn / d_eff) + std::log(2.0 / delta);
  if (complexity <= 0.0)
    throw RangeError("pac_bayes_bound: d_eff too large for n");
  return std::sqrt(2.0 * (train_loss + 1.0 / nn) * complexity / nn);
}

double stability_bound(double lipschitz, double lambda, long long n) {
  if (!(lambda > 0.0)) throw RangeError("stability_bound: lambda must be > 0");
  if (n < 1) throw RangeError("stability_bound: n must be >= 1");
  return 2.0 * lipschitz / (lambda * static_cast<double>(n));
}

}  // namespace lpf
