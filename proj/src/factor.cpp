#include "lpf/factor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lpf/errors.hpp"

namespace lpf {

Decoder Decoder::aligned(const std::vector<std::vector<double>>& prototypes,
                         double temperature, double floor) {
  Decoder dec;
  dec.weight = prototypes;
  dec.bias.assign(prototypes.size(), 0.0);
  dec.temperature = temperature;
  dec.floor = floor;
  validate_decoder(dec);
  return dec;
}

void validate_decoder(const Decoder& dec) {
  if (dec.weight.empty() || dec.weight.size() < 2)
    throw ConfigError("decoder: needs at least two labels");
  const std::size_t d = dec.weight.front().size();
  if (d == 0) throw ConfigError("decoder: zero latent dimension");
  for (const auto& row : dec.weight) {
    if (row.size() != d) throw ConfigError("decoder: ragged weight matrix");
    for (double w : row) {
      if (!std::isfinite(w)) throw ConfigError("decoder: non-finite weight");
    }
  }
  if (dec.bias.size() != dec.weight.size())
    throw ConfigError("decoder: bias length mismatch");
  if (!(dec.temperature > 0.0))
    throw ConfigError("decoder: temperature must be > 0");
  if (!(dec.floor >= 0.0 && dec.floor <= 1.0))
    throw ConfigError("decoder: floor must be in [0, 1]");
}

LabelDist decode(const Decoder& dec, const std::vector<double>& z) {
  const int y_count = dec.num_labels();
  const int d = dec.latent_dim();
  if (static_cast<int>(z.size()) != d)
    throw DimensionError("decode: latent length mismatch");
  for (double v : z) {
    if (!std::isfinite(v)) throw NumericError("decode: non-finite latent");
  }

  std::vector<double> logits(y_count);
  double max_logit = -1e300;
  for (int y = 0; y < y_count; ++y) {
    double acc = dec.bias[y];
    const auto& row = dec.weight[y];
    for (int j = 0; j < d; ++j) acc += row[j] * z[j];
    logits[y] = acc / dec.temperature;
    max_logit = std::max(max_logit, logits[y]);
  }

  double sum = 0.0;
  for (int y = 0; y < y_count; ++y) {
    logits[y] = std::exp(logits[y] - max_logit);
    sum += logits[y];
  }

  LabelDist out;
  out.probs.resize(y_count);
  const double mix = dec.floor / static_cast<double>(y_count);
  for (int y = 0; y < y_count; ++y)
    out.probs[y] = (1.0 - dec.floor) * (logits[y] / sum) + mix;
  return out;
}

std::vector<std::vector<double>> sample_latents(const GaussianPosterior& post,
                                                int m, RngStream& stream) {
  if (m < 1) throw RangeError("sample_latents: m must be >= 1");
  const std::size_t d = post.dim();
  std::vector<std::vector<double>> out(m, std::vector<double>(d));
  for (int k = 0; k < m; ++k) {
    for (std::size_t j = 0; j < d; ++j)
      out[k][j] = post.mean[j] + std::sqrt(post.var[j]) * stream.normal();
  }
  return out;
}

SoftFactor estimate_factor(const Decoder& dec, const GaussianPosterior& post,
                           int m, RngStream& stream) {
  if (m < 1) throw RangeError("estimate_factor: m must be >= 1");
  const int y_count = dec.num_labels();
  std::vector<double> acc(y_count, 0.0);
  std::vector<double> z(post.dim());
  for (int k = 0; k < m; ++k) {
    for (std::size_t j = 0; j < post.dim(); ++j)
      z[j] = post.mean[j] + std::sqrt(post.var[j]) * stream.normal();
    const LabelDist p = decode(dec, z);
    for (int y = 0; y < y_count; ++y) acc[y] += p[y];
  }
  SoftFactor f;
  f.dist = normalize(acc);
  f.weight = confidence_weight(post);
  f.source_id = post.source_id;
  f.m_used = m;
  return f;
}

LabelDist oracle_factor(const Decoder& dec, const GaussianPosterior& post,
                        int order) {
  const int d = static_cast<int>(post.dim());
  if (d > 3)
    throw UnsupportedDimensionError(
        "oracle_factor: tensor-grid quadrature supports d <= 3");
  if (order < 2) throw RangeError("oracle_factor: order must be >= 2");

  std::vector<double> nodes, weights;
  gauss_hermite(order, nodes, weights);

  const int y_count = dec.num_labels();
  std::vector<double> acc(y_count, 0.0);
  std::vector<double> z(d);
  std::vector<int> idx(d, 0);
  const double inv_sqrt_pi_d = std::pow(M_PI, -0.5 * d);

  // Walk the full tensor grid; E[f(z)] = pi^{-d/2} sum_k w_k f(mu + sqrt(2) sigma x_k).
  for (;;) {
    double w = inv_sqrt_pi_d;
    for (int j = 0; j < d; ++j) {
      w *= weights[idx[j]];
      z[j] = post.mean[j] + std::sqrt(2.0 * post.var[j]) * nodes[idx[j]];
    }
    const LabelDist p = decode(dec, z);
    for (int y = 0; y < y_count; ++y) acc[y] += w * p[y];

    int j = 0;
    while (j < d && ++idx[j] == order) idx[j++] = 0;
    if (j == d) break;
  }
  return normalize(acc);
}

double confidence_weight(const GaussianPosterior& post) {
  return 1.0 / (1.0 + post.cov_frobenius());
}

double mc_error_bound(int m, int num_labels, double delta) {
  if (m < 1) throw RangeError("mc_error_bound: m must be >= 1");
  if (!(delta > 0.0 && delta < 1.0))
    throw RangeError("mc_error_bound: delta must be in (0, 1)");
  return std::sqrt(std::log(2.0 * num_labels / delta) / (2.0 * m));
}

void gauss_hermite(int n, std::vector<double>& nodes,
                   std::vector<double>& weights) {
  if (n < 2) throw RangeError("gauss_hermite: order must be >= 2");
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);

  // Newton iteration on the Hermite recurrence (Golub-Welsch values
  // without the eigen solve). pim4 = pi^{-1/4}.
  constexpr double kEps = 1e-14;
  constexpr double kPim4 = 0.7511255444649425;
  constexpr int kMaxIter = 100;

  const int half = (n + 1) / 2;
  double z = 0.0;
  for (int i = 0; i < half; ++i) {
    if (i == 0) {
      z = std::sqrt(2.0 * n + 1.0) -
          1.85575 * std::pow(2.0 * n + 1.0, -0.16667);
    } else if (i == 1) {
      z -= 1.14 * std::pow(static_cast<double>(n), 0.426) / z;
    } else if (i == 2) {
      z = 1.86 * z - 0.86 * nodes[0];
    } else if (i == 3) {
      z = 1.91 * z - 0.91 * nodes[1];
    } else {
      z = 2.0 * z - nodes[i - 2];
    }
    double pp = 0.0;
    for (int it = 0; it < kMaxIter; ++it) {
      double p1 = kPim4;
      double p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = z * std::sqrt(2.0 / (j + 1)) * p2 -
             std::sqrt(static_cast<double>(j) / (j + 1)) * p3;
      }
      pp = std::sqrt(2.0 * n) * p2;
      const double z1 = z;
      z = z1 - p1 / pp;
      if (std::fabs(z - z1) <= kEps) break;
    }
    nodes[i] = z;
    nodes[n - 1 - i] = -z;
    weights[i] = 2.0 / (pp * pp);
    weights[n - 1 - i] = weights[i];
  }
  // Nodes come out descending on the first half; order them ascending.
  std::reverse(nodes.begin(), nodes.end());
  std::reverse(weights.begin(), weights.end());
}

Decoder decoder_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("decoder: bad JSON: ") + e.what());
  }
  Decoder dec;
  try {
    dec.weight = j.at("weight").get<std::vector<std::vector<double>>>();
    dec.bias = j.at("bias").get<std::vector<double>>();
    dec.temperature = j.at("temperature").get<double>();
    dec.floor = j.at("floor").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("decoder: bad field: ") + e.what());
  }
  validate_decoder(dec);
  return dec;
}

std::string decoder_to_json(const Decoder& dec) {
  nlohmann::json j;
  j["weight"] = dec.weight;
  j["bias"] = dec.bias;
  j["temperature"] = dec.temperature;
  j["floor"] = dec.floor;
  return j.dump(2);
}

Decoder load_decoder(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("decoder: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return decoder_from_json(ss.str());
}

void save_decoder(const Decoder& dec, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("decoder: cannot write " + path);
  out << decoder_to_json(dec) << "\n";
}

}  // namespace lpf
