#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "lpf/errors.hpp"
#include "lpf/factor.hpp"
#include "lpf/prob.hpp"
#include "lpf/rng.hpp"

using namespace lpf;

namespace {

Decoder test_decoder(double temperature = 1.0, double floor = 0.5) {
  Decoder dec;
  dec.weight = {{2.0, 0.0}, {0.0, 2.0}, {-2.0, -2.0}};
  dec.bias = {0.0, 0.0, 0.0};
  dec.temperature = temperature;
  dec.floor = floor;
  return dec;
}

GaussianPosterior posterior(std::vector<double> mean, std::vector<double> var,
                            int id = 0) {
  GaussianPosterior p;
  p.mean = std::move(mean);
  p.var = std::move(var);
  p.source_id = id;
  return p;
}

double linf(const LabelDist& a, const LabelDist& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("decode: zero weights give the uniform distribution") {
  Decoder dec;
  dec.weight = {{0, 0}, {0, 0}, {0, 0}};
  dec.bias = {0, 0, 0};
  dec.floor = 0.0;
  const LabelDist p = decode(dec, {1.7, -0.3});
  for (double x : p.probs) CHECK(x == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("decode: bias-only softmax arithmetic") {
  Decoder dec;
  dec.weight = {{0, 0}, {0, 0}, {0, 0}};
  dec.bias = {10, 0, 0};
  dec.temperature = 1.0;
  dec.floor = 0.0;
  const LabelDist p = decode(dec, {0.0, 0.0});
  const double expected = std::exp(10.0) / (std::exp(10.0) + 2.0);
  CHECK(p[0] == doctest::Approx(expected).epsilon(1e-12));
  CHECK(p[0] > 0.9999);
}

TEST_CASE("decode: floor guarantees minimum class probability") {
  const Decoder dec = test_decoder(1.0, 0.5);
  RngStream s(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const LabelDist p = decode(dec, {s.uniform(-10, 10), s.uniform(-10, 10)});
    for (double x : p.probs) CHECK(x >= 0.5 / 3 - 1e-15);
    CHECK(is_valid_dist(p));
  }
}

TEST_CASE("decode rejects non-finite latents") {
  const Decoder dec = test_decoder();
  CHECK_THROWS_AS(decode(dec, {std::nan(""), 0.0}), NumericError);
  CHECK_THROWS_AS(decode(dec, {0.0}), DimensionError);
}

TEST_CASE("sample_latents: degenerate variance collapses to the mean") {
  RngStream s(8);
  const auto samples = sample_latents(posterior({1.5, -2.0}, {1e-30, 1e-30}), 32, s);
  for (const auto& z : samples) {
    CHECK(z[0] == doctest::Approx(1.5).epsilon(1e-9));
    CHECK(z[1] == doctest::Approx(-2.0).epsilon(1e-9));
  }
}

TEST_CASE("sample_latents: law of large numbers at d=1") {
  RngStream s(15);
  const auto samples = sample_latents(posterior({0.0}, {1.0}), 100000, s);
  double sum = 0.0, sum_sq = 0.0;
  for (const auto& z : samples) {
    sum += z[0];
    sum_sq += z[0] * z[0];
  }
  const double mean = sum / samples.size();
  const double var = sum_sq / samples.size() - mean * mean;
  CHECK(std::fabs(mean) < 0.02);
  CHECK(std::fabs(var - 1.0) < 0.05);
}

TEST_CASE("sample_latents: identical streams give identical draws") {
  RngStream a(99), b(99);
  const auto za = sample_latents(posterior({0.5, 1.0}, {0.3, 0.7}), 16, a);
  const auto zb = sample_latents(posterior({0.5, 1.0}, {0.3, 0.7}), 16, b);
  CHECK(za == zb);
}

TEST_CASE("estimate_factor: degenerate posterior reproduces decode(mean)") {
  const Decoder dec = test_decoder();
  RngStream s(3);
  const GaussianPosterior post = posterior({0.8, -0.1}, {1e-30, 1e-30});
  const SoftFactor f = estimate_factor(dec, post, 64, s);
  CHECK(linf(f.dist, decode(dec, post.mean)) < 1e-12);
  CHECK(f.m_used == 64);
  CHECK(f.source_id == post.source_id);
}

TEST_CASE("estimate_factor is deterministic given the stream") {
  const Decoder dec = test_decoder();
  const GaussianPosterior post = posterior({0.2, 0.4}, {0.5, 0.25});
  RngStream a(31), b(31);
  const SoftFactor fa = estimate_factor(dec, post, 16, a);
  const SoftFactor fb = estimate_factor(dec, post, 16, b);
  CHECK(fa.dist.probs == fb.dist.probs);
}

TEST_CASE("oracle_factor: degenerate posterior and constant integrand") {
  const Decoder dec = test_decoder();
  const GaussianPosterior post = posterior({0.8, -0.1}, {1e-30, 1e-30});
  CHECK(linf(oracle_factor(dec, post, 30), decode(dec, post.mean)) < 1e-9);

  Decoder flat;
  flat.weight = {{0, 0}, {0, 0}, {0, 0}};
  flat.bias = {0, 0, 0};
  flat.floor = 0.0;
  const LabelDist p = oracle_factor(flat, posterior({1.0, 2.0}, {0.5, 0.5}), 30);
  for (double x : p.probs) CHECK(x == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("oracle_factor: order 20 and order 40 agree") {
  // Variance range matches the generative regime the oracle serves.
  const Decoder dec = test_decoder();
  RngStream s(17);
  for (int trial = 0; trial < 20; ++trial) {
    const GaussianPosterior post = posterior(
        {s.uniform(-3, 3), s.uniform(-3, 3)},
        {s.uniform(0.05, 0.5), s.uniform(0.05, 0.5)});
    const LabelDist a = oracle_factor(dec, post, 20);
    const LabelDist b = oracle_factor(dec, post, 40);
    CHECK(linf(a, b) < 1e-6);
  }
}

TEST_CASE("oracle_factor rejects high dimensions") {
  const Decoder dec = test_decoder();
  CHECK_THROWS_AS(
      oracle_factor(dec, posterior({0, 0, 0, 0}, {1, 1, 1, 1}), 20),
      UnsupportedDimensionError);
}

TEST_CASE("gauss_hermite integrates low moments exactly") {
  std::vector<double> x, w;
  gauss_hermite(20, x, w);
  double m0 = 0.0, m1 = 0.0, m2 = 0.0;
  for (int i = 0; i < 20; ++i) {
    m0 += w[i];
    m1 += w[i] * x[i];
    m2 += w[i] * x[i] * x[i];
  }
  const double sqrt_pi = std::sqrt(M_PI);
  CHECK(m0 == doctest::Approx(sqrt_pi).epsilon(1e-12));
  CHECK(std::fabs(m1) < 1e-12);
  CHECK(m2 == doctest::Approx(sqrt_pi / 2).epsilon(1e-12));
}

TEST_CASE("confidence_weight formula and monotonicity") {
  CHECK(confidence_weight(posterior({0}, {1e-12})) == doctest::Approx(1.0));
  // ||Sigma||_F = 1 from a single variance of 1.
  CHECK(confidence_weight(posterior({0}, {1.0})) == doctest::Approx(0.5));
  double prev = 2.0;
  for (double v : {0.1, 0.5, 1.0, 2.0, 4.0}) {
    const double w = confidence_weight(posterior({0, 0}, {v, v}));
    CHECK(w < prev);
    CHECK(w > 0.0);
    CHECK(w <= 1.0);
    prev = w;
  }
}

TEST_CASE("mc_error_bound reproduces the reference column") {
  CHECK(mc_error_bound(4, 3, 0.05) == doctest::Approx(0.774).epsilon(0.0013));
  CHECK(mc_error_bound(8, 3, 0.05) == doctest::Approx(0.547).epsilon(0.0019));
  CHECK(mc_error_bound(16, 3, 0.05) == doctest::Approx(0.387).epsilon(0.0026));
  CHECK(mc_error_bound(32, 3, 0.05) == doctest::Approx(0.274).epsilon(0.0037));
  CHECK(mc_error_bound(64, 3, 0.05) == doctest::Approx(0.193).epsilon(0.0052));
}

TEST_CASE("monte carlo estimates are unbiased against the quadrature oracle") {
  const Decoder dec = test_decoder();
  const GaussianPosterior post = posterior({0.3, -0.2}, {0.5, 0.8});
  const LabelDist truth = oracle_factor(dec, post, 40);

  const int trials = 1000;
  RngStream root(2024);
  std::vector<std::vector<double>> estimates(trials);
  for (int t = 0; t < trials; ++t) {
    RngStream s = root.child(t);
    estimates[t] = estimate_factor(dec, post, 8, s).dist.probs;
  }
  for (int y = 0; y < 3; ++y) {
    double mean = 0.0, var = 0.0;
    for (const auto& e : estimates) mean += e[y];
    mean /= trials;
    for (const auto& e : estimates) var += (e[y] - mean) * (e[y] - mean);
    var /= trials - 1;
    const double se = std::sqrt(var / trials);
    CHECK(std::fabs(mean - truth[y]) < 3.0 * se + 1e-12);
  }
}

TEST_CASE("decoder JSON round trip") {
  const Decoder dec = test_decoder(2.0, 0.25);
  const Decoder back = decoder_from_json(decoder_to_json(dec));
  CHECK(back.weight == dec.weight);
  CHECK(back.bias == dec.bias);
  CHECK(back.temperature == dec.temperature);
  CHECK(back.floor == dec.floor);
  CHECK_THROWS_AS(decoder_from_json("{not json"), ConfigError);
  CHECK_THROWS_AS(decoder_from_json("{\"weight\": [[1,0]]}"), ConfigError);
}
