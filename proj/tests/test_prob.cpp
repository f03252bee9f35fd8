#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lpf/errors.hpp"
#include "lpf/prob.hpp"
#include "lpf/rng.hpp"

using namespace lpf;

namespace {

LabelDist dist(std::initializer_list<double> values) {
  return LabelDist{std::vector<double>(values)};
}

LabelDist random_dist(RngStream& s, int n) {
  std::vector<double> raw(n);
  for (double& x : raw) x = s.next_unit() + 1e-6;
  return normalize(raw);
}

}  // namespace

TEST_CASE("normalize basic examples") {
  const LabelDist a = normalize({2, 2, 2});
  for (double p : a.probs) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-12));

  const LabelDist b = normalize({1, 0, 0});
  CHECK(b[0] == 1.0);
  CHECK(b[1] == 0.0);

  const LabelDist c = normalize({0.3, 0.9, 0.6});
  CHECK(c[0] == doctest::Approx(1.0 / 6).epsilon(1e-12));
  CHECK(c[1] == doctest::Approx(1.0 / 2).epsilon(1e-12));
  CHECK(c[2] == doctest::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("normalize rejects bad input") {
  CHECK_THROWS_AS(normalize({0, 0, 0}), NormalizationError);
  CHECK_THROWS_AS(normalize({1, -0.5, 0}), NormalizationError);
  CHECK_THROWS_AS(normalize({1, std::nan(""), 0}), NormalizationError);
  CHECK_THROWS_AS(normalize({}), NormalizationError);
}

TEST_CASE("normalize is idempotent, exactly") {
  RngStream s(11);
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<double> raw(3);
    for (double& x : raw) x = s.next_unit() * 10.0;
    if (raw[0] + raw[1] + raw[2] == 0.0) continue;
    const LabelDist once = normalize(raw);
    const LabelDist twice = normalize(once.probs);
    for (int i = 0; i < 3; ++i) CHECK(once[i] == twice[i]);
  }
}

TEST_CASE("entropy_bits examples") {
  CHECK(entropy_bits(dist({1.0 / 3, 1.0 / 3, 1.0 / 3})) ==
        doctest::Approx(std::log2(3.0)).epsilon(1e-12));
  CHECK(entropy_bits(dist({1, 0, 0})) == 0.0);
  CHECK(entropy_bits(dist({0.5, 0.25, 0.25})) == doctest::Approx(1.5));
}

TEST_CASE("entropy stays within [0, log2 |Y|]") {
  RngStream s(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const LabelDist p = random_dist(s, 4);
    const double h = entropy_bits(p);
    CHECK(h >= 0.0);
    CHECK(h <= std::log2(4.0) + 1e-12);
  }
}

TEST_CASE("kl_bits examples") {
  const LabelDist p = dist({0.2, 0.5, 0.3});
  CHECK(kl_bits(p, p) == 0.0);
  CHECK(kl_bits(dist({1, 0, 0}), dist({1.0 / 3, 1.0 / 3, 1.0 / 3})) ==
        doctest::Approx(std::log2(3.0)).epsilon(1e-12));
  CHECK(kl_bits(dist({0.5, 0.5, 0}), dist({0.25, 0.25, 0.5})) ==
        doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("kl_bits support and shape errors") {
  CHECK_THROWS_AS(kl_bits(dist({0.5, 0.5}), dist({1.0, 0.0})), SupportError);
  CHECK_THROWS_AS(kl_bits(dist({0.5, 0.5}), dist({0.5, 0.25, 0.25})),
                  DimensionError);
}

TEST_CASE("kl_bits is nonnegative over random pairs") {
  RngStream s(77);
  for (int trial = 0; trial < 10000; ++trial) {
    const LabelDist p = random_dist(s, 3);
    const LabelDist q = random_dist(s, 3);
    CHECK(kl_bits(p, q) >= 0.0);
  }
}

TEST_CASE("l1_distance examples") {
  const LabelDist p = dist({0.6, 0.3, 0.1});
  CHECK(l1_distance(p, p) == 0.0);
  CHECK(l1_distance(dist({1, 0, 0}), dist({0, 1, 0})) == 2.0);
  CHECK(l1_distance(p, dist({0.5, 0.4, 0.1})) ==
        doctest::Approx(0.2).epsilon(1e-12));
  CHECK_THROWS_AS(l1_distance(p, dist({0.5, 0.5})), DimensionError);
}

TEST_CASE("effective_sample_size examples") {
  CHECK(effective_sample_size({{1, 1, 1, 1, 1}}) == doctest::Approx(5.0));
  CHECK(effective_sample_size({{1, 0, 0, 0, 0}}) == doctest::Approx(1.0));
  CHECK(effective_sample_size({{1, 1, 0.5}}) ==
        doctest::Approx(2.5 * 2.5 / 2.25).epsilon(1e-12));
  CHECK_THROWS_AS(effective_sample_size({{0, 0, 0}}), DegenerateWeightsError);
}

TEST_CASE("effective_sample_size is scale invariant and bounded") {
  RngStream s(21);
  for (int trial = 0; trial < 2000; ++trial) {
    const int k = 1 + static_cast<int>(s.pick_index(8));
    WeightVector w;
    w.weights.resize(k);
    for (double& x : w.weights) x = s.next_unit();
    double sum = 0.0;
    for (double x : w.weights) sum += x;
    if (sum == 0.0) continue;

    const double ess = effective_sample_size(w);
    CHECK(ess >= 1.0 - 1e-12);
    CHECK(ess <= k + 1e-12);

    const double c = 0.1 + 10.0 * s.next_unit();
    WeightVector scaled = w;
    for (double& x : scaled.weights) x *= c;
    CHECK(effective_sample_size(scaled) == doctest::Approx(ess).epsilon(1e-9));
  }
}

TEST_CASE("effective_sample_size hits K only for equal positive weights") {
  CHECK(effective_sample_size({{0.4, 0.4, 0.4}}) == doctest::Approx(3.0));
  CHECK(effective_sample_size({{0.4, 0.4, 0.399}}) < 3.0);
}

TEST_CASE("argmax_label breaks ties toward the lowest index") {
  CHECK(argmax_label(dist({0.2, 0.7, 0.1})) == 1);
  CHECK(argmax_label(dist({0.5, 0.5, 0})) == 0);
  CHECK(argmax_label(dist({1.0 / 3, 1.0 / 3, 1.0 / 3})) == 0);
}

TEST_CASE("is_valid_dist checks sum and signs") {
  CHECK(is_valid_dist(dist({0.5, 0.5})));
  CHECK_FALSE(is_valid_dist(dist({0.6, 0.5})));
  CHECK_FALSE(is_valid_dist(dist({1.5, -0.5})));
  CHECK_FALSE(is_valid_dist(LabelDist{}));
}
