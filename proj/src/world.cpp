#include "lpf/world.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "lpf/errors.hpp"

namespace lpf {

namespace {

std::vector<std::vector<double>> default_prototypes(int num_labels, int d,
                                                    double scale) {
  std::vector<std::vector<double>> protos(num_labels,
                                          std::vector<double>(d, 0.0));
  if (d >= num_labels) {
    for (int y = 0; y < num_labels; ++y) protos[y][y] = scale;
  } else {
    // Not enough axes for one-hot placement; spread the classes on a
    // circle of radius `scale` in the first two dimensions.
    if (d < 2)
      throw ConfigError("world: need d >= 2 when d < num_labels");
    for (int y = 0; y < num_labels; ++y) {
      const double angle = 2.0 * M_PI * y / num_labels;
      protos[y][0] = scale * std::cos(angle);
      protos[y][1] = scale * std::sin(angle);
    }
  }
  return protos;
}

double sq_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    s += diff * diff;
  }
  return s;
}

int sample_label(const std::vector<double>& prior, RngStream& stream) {
  const double u = stream.next_unit();
  double acc = 0.0;
  for (std::size_t y = 0; y < prior.size(); ++y) {
    acc += prior[y];
    if (u < acc) return static_cast<int>(y);
  }
  return static_cast<int>(prior.size()) - 1;
}

/// Pearson correlation across coordinates of two vectors.
double pearson(const std::vector<double>& u, const std::vector<double>& v) {
  const std::size_t n = u.size();
  double mu = 0.0, mv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mu += u[i];
    mv += v[i];
  }
  mu /= n;
  mv /= n;
  double suv = 0.0, suu = 0.0, svv = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    suv += (u[i] - mu) * (v[i] - mv);
    suu += (u[i] - mu) * (u[i] - mu);
    svv += (v[i] - mv) * (v[i] - mv);
  }
  if (suu <= 0.0 || svv <= 0.0) return 0.0;
  return suv / std::sqrt(suu * svv);
}

}  // namespace

World::World(WorldConfig config) : cfg_(std::move(config)) {}

World build_world(WorldConfig config) {
  if (config.d < 1) throw ConfigError("world: d must be >= 1");
  if (config.num_labels < 2)
    throw ConfigError("world: num_labels must be >= 2");
  if (!(config.var_low > 0.0) || !(config.var_high >= config.var_low))
    throw ConfigError("world: need 0 < var_low <= var_high");
  if (!(config.evidence_noise >= 0.0))
    throw ConfigError("world: evidence_noise must be >= 0");
  if (config.conflict_rate < 0.0 || config.conflict_rate > 1.0)
    throw ConfigError("world: conflict_rate must be in [0, 1]");
  if (config.correlation < 0.0 || config.correlation > 1.0)
    throw ConfigError("world: correlation must be in [0, 1]");
  if (config.k_max < 1) throw ConfigError("world: k_max must be >= 1");

  if (config.prototypes.empty()) {
    config.prototypes =
        default_prototypes(config.num_labels, config.d, config.prototype_scale);
  }
  if (static_cast<int>(config.prototypes.size()) != config.num_labels)
    throw ConfigError("world: prototype count must equal num_labels");
  for (const auto& p : config.prototypes) {
    if (static_cast<int>(p.size()) != config.d)
      throw ConfigError("world: prototype dimension mismatch");
  }
  for (std::size_t a = 0; a < config.prototypes.size(); ++a) {
    for (std::size_t b = a + 1; b < config.prototypes.size(); ++b) {
      if (sq_distance(config.prototypes[a], config.prototypes[b]) <= 0.0)
        throw ConfigError("world: prototypes must be pairwise distinct");
    }
  }

  if (config.label_prior.empty()) {
    config.label_prior.assign(config.num_labels,
                              1.0 / static_cast<double>(config.num_labels));
  } else {
    if (static_cast<int>(config.label_prior.size()) != config.num_labels)
      throw ConfigError("world: label_prior length mismatch");
    const LabelDist prior = normalize(config.label_prior);
    config.label_prior = prior.probs;
  }

  return World(std::move(config));
}

Entity sample_entity_traced(const World& world, int k, RngStream& stream,
                            std::vector<int>* generating_labels) {
  const WorldConfig& cfg = world.config();
  if (k < 1 || k > cfg.k_max)
    throw RangeError("sample_entity: K out of [1, k_max]");

  Entity entity;
  entity.label = sample_label(cfg.label_prior, stream);
  if (generating_labels) generating_labels->clear();

  // Shared per-entity jitter mixes with per-item jitter via the
  // sqrt(c) / sqrt(1-c) split, inducing pairwise correlation ~ c.
  const double c = cfg.correlation;
  std::vector<double> shared(cfg.d);
  for (int j = 0; j < cfg.d; ++j) shared[j] = stream.normal();

  entity.evidence.reserve(k);
  for (int i = 0; i < k; ++i) {
    int gen_label = entity.label;
    if (cfg.conflict_rate > 0.0 && stream.next_unit() < cfg.conflict_rate) {
      const int offset =
          1 + static_cast<int>(stream.pick_index(cfg.num_labels - 1));
      gen_label = (entity.label + offset) % cfg.num_labels;
    }
    if (generating_labels) generating_labels->push_back(gen_label);

    GaussianPosterior post;
    post.source_id = i;
    post.mean.resize(cfg.d);
    post.var.resize(cfg.d);
    const auto& proto = cfg.prototypes[gen_label];
    for (int j = 0; j < cfg.d; ++j) {
      const double jitter =
          std::sqrt(c) * shared[j] + std::sqrt(1.0 - c) * stream.normal();
      post.mean[j] = proto[j] + cfg.evidence_noise * jitter;
      post.var[j] = stream.uniform(cfg.var_low, cfg.var_high);
    }
    entity.evidence.push_back(std::move(post));
  }
  return entity;
}

Entity sample_entity(const World& world, int k, RngStream& stream) {
  return sample_entity_traced(world, k, stream, nullptr);
}

Entity corrupt_entity(const Entity& entity, double fraction,
                      const World& world, RngStream& stream) {
  if (fraction < 0.0 || fraction > 1.0)
    throw RangeError("corrupt_entity: fraction must be in [0, 1]");
  Entity out = entity;
  const int k = entity.k();
  const int n_corrupt = static_cast<int>(std::floor(fraction * k));
  if (n_corrupt == 0) return out;

  // Uniform choice without replacement: partial Fisher-Yates.
  std::vector<int> order(k);
  for (int i = 0; i < k; ++i) order[i] = i;
  for (int i = 0; i < n_corrupt; ++i) {
    const int j = i + static_cast<int>(stream.pick_index(k - i));
    std::swap(order[i], order[j]);
  }

  const WorldConfig& cfg = world.config();
  for (int i = 0; i < n_corrupt; ++i) {
    const int offset =
        1 + static_cast<int>(stream.pick_index(cfg.num_labels - 1));
    const int wrong = (entity.label + offset) % cfg.num_labels;
    out.evidence[order[i]].mean = cfg.prototypes[wrong];
  }
  return out;
}

double measure_correlation(const World& world, int n_entities) {
  if (n_entities < 30)
    throw RangeError("measure_correlation: need at least 30 entities");
  const WorldConfig& cfg = world.config();
  const int k = cfg.k_max;
  RngStream stream = world.stream(streams::kCorrelation);

  double total = 0.0;
  int used = 0;
  std::vector<int> gen_labels;
  for (int e = 0; e < n_entities; ++e) {
    RngStream entity_stream = stream.child(e);
    const Entity entity =
        sample_entity_traced(world, k, entity_stream, &gen_labels);
    if (entity.k() < 2) continue;

    std::vector<std::vector<double>> jitters(entity.k());
    for (int i = 0; i < entity.k(); ++i) {
      const auto& proto = cfg.prototypes[gen_labels[i]];
      jitters[i].resize(cfg.d);
      for (int j = 0; j < cfg.d; ++j)
        jitters[i][j] = entity.evidence[i].mean[j] - proto[j];
    }

    double acc = 0.0;
    int pairs = 0;
    for (int a = 0; a < entity.k(); ++a) {
      for (int b = a + 1; b < entity.k(); ++b) {
        acc += pearson(jitters[a], jitters[b]);
        ++pairs;
      }
    }
    total += acc / pairs;
    ++used;
  }
  if (used == 0)
    throw InsufficientDataError("measure_correlation: all entities skipped");
  return total / used;
}

AggDataset make_agg_dataset(const World& world, int n_train, int n_test,
                            int k) {
  if (n_train < 1 || n_test < 1)
    throw RangeError("make_agg_dataset: counts must be >= 1");
  AggDataset ds;
  ds.k = k;
  RngStream train_stream = world.stream(streams::kTrain);
  RngStream test_stream = world.stream(streams::kTest);
  ds.train.reserve(n_train);
  ds.test.reserve(n_test);
  for (int i = 0; i < n_train; ++i) {
    RngStream s = train_stream.child(i);
    ds.train.push_back(sample_entity(world, k, s));
  }
  for (int i = 0; i < n_test; ++i) {
    RngStream s = test_stream.child(i);
    ds.test.push_back(sample_entity(world, k, s));
  }
  return ds;
}

void export_jsonl(const std::vector<Entity>& entities, std::ostream& out) {
  for (const Entity& e : entities) {
    nlohmann::json j;
    j["label"] = e.label;
    nlohmann::json evidence = nlohmann::json::array();
    for (const GaussianPosterior& p : e.evidence) {
      evidence.push_back({{"mean", p.mean}, {"var", p.var}});
    }
    j["evidence"] = std::move(evidence);
    out << j.dump() << "\n";
  }
}

std::vector<Entity> import_jsonl(std::istream& in) {
  std::vector<Entity> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("jsonl line " + std::to_string(line_no) + ": " +
                        e.what());
    }
    Entity entity;
    entity.label = j.at("label").get<int>();
    int idx = 0;
    for (const auto& item : j.at("evidence")) {
      GaussianPosterior p;
      p.mean = item.at("mean").get<std::vector<double>>();
      p.var = item.at("var").get<std::vector<double>>();
      p.source_id = idx++;
      entity.evidence.push_back(std::move(p));
    }
    out.push_back(std::move(entity));
  }
  return out;
}

}  // namespace lpf
