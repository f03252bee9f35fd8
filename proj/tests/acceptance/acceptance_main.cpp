// Acceptance suite: one checked criterion per section, one pass/fail
// line each. Exit status 0 iff every criterion holds.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "lpf/aggregate.hpp"
#include "lpf/factor.hpp"
#include "lpf/harness.hpp"
#include "lpf/metrics.hpp"
#include "lpf/train.hpp"
#include "lpf/world.hpp"

namespace fs = std::filesystem;
using namespace lpf;
using Clock = std::chrono::steady_clock;

namespace {

struct Checker {
  bool all_ok = true;
  std::vector<std::string> failures;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      all_ok = false;
      failures.push_back(what);
    }
  }
  void require_close(double actual, double expected, double tol,
                     const std::string& what) {
    require(std::fabs(actual - expected) <= tol,
            what + ": got " + std::to_string(actual) + ", want " +
                std::to_string(expected) + " +- " + std::to_string(tol));
  }
};

int run_criterion(int id, const std::string& name,
                  const std::function<void(Checker&)>& body) {
  Checker check;
  const auto start = Clock::now();
  try {
    body(check);
  } catch (const std::exception& e) {
    check.require(false, std::string("exception: ") + e.what());
  }
  const double secs =
      std::chrono::duration<double>(Clock::now() - start).count();
  std::printf("[%s] C%02d %s (%.1fs)\n", check.all_ok ? "PASS" : "FAIL", id,
              name.c_str(), secs);
  for (const auto& f : check.failures)
    std::printf("       -> %s\n", f.c_str());
  std::fflush(stdout);
  return check.all_ok ? 0 : 1;
}

double elapsed_since(const Clock::time_point& t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

int main() {
  int failures = 0;
  const fs::path work = fs::temp_directory_path() / "lpf_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  // ---- deterministic bound arithmetic ------------------------------------

  failures += run_criterion(1, "MC error bound column", [](Checker& c) {
    const std::vector<int> ms{4, 8, 16, 32, 64};
    const std::vector<double> expected{0.774, 0.547, 0.387, 0.274, 0.193};
    const auto t0 = Clock::now();
    std::vector<double> values;
    for (int m : ms) values.push_back(mc_error_bound(m, 3, 0.05));
    const double secs = elapsed_since(t0);
    for (std::size_t i = 0; i < ms.size(); ++i)
      c.require_close(values[i], expected[i], 0.001,
                      "bound at M=" + std::to_string(ms[i]));
    c.require(secs < 0.001, "runtime under 1 ms");
  });

  failures += run_criterion(2, "calibration bound arithmetic", [](Checker& c) {
    c.require_close(calibration_bound(0.140, 5.0, 2.0), 1.034, 0.001,
                    "calibration_bound(0.140, 5, 2.0)");
  });

  failures += run_criterion(3, "robustness bound column", [](Checker& c) {
    const std::vector<double> eps{0.05, 0.1, 0.2, 0.3, 0.5};
    const std::vector<double> expected{0.316, 0.632, 1.265, 1.897, 3.162};
    for (std::size_t i = 0; i < eps.size(); ++i)
      c.require_close(robustness_bound(eps[i], 1.0, 10, 2.0), expected[i],
                      0.002, "bound at eps=" + std::to_string(eps[i]));
  });

  failures += run_criterion(4, "PAC-Bayes bound values", [](Checker& c) {
    c.require_close(pac_bayes_bound(0.0379, 4200, 1335, 0.05), 0.228, 0.003,
                    "bound at N=4200");
    c.require_close(pac_bayes_bound(0.0407, 2002, 1335, 0.05), 0.278, 0.005,
                    "bound at N=2002");
  });

  failures += run_criterion(5, "sample-complexity bound curve", [](Checker& c) {
    const std::vector<double> ks{1, 2, 3, 5, 7, 10, 15, 20};
    const std::vector<double> expected{24.28, 17.17, 14.02, 10.86,
                                       9.18,  7.68,  6.27,  5.43};
    for (std::size_t i = 0; i < ks.size(); ++i)
      c.require_close(24.28 / std::sqrt(ks[i]), expected[i], 0.01,
                      "bound at K=" + std::to_string(int(ks[i])));
  });

  failures += run_criterion(6, "inverse-sqrt fit, offline check mode",
                            [](Checker& c) {
    const std::vector<double> k{1, 2, 3, 5, 7, 10, 15, 20};
    const std::vector<double> ece{0.347, 0.334, 0.284, 0.186,
                                  0.192, 0.192, 0.192, 0.192};
    const InverseSqrtFit fit = fit_inverse_sqrt(k, ece);
    c.require_close(fit.a, 0.245, 0.02, "coefficient a");
    c.require_close(fit.b, 0.120, 0.02, "intercept b");
    c.require_close(fit.r2, 0.849, 0.05, "R^2");
  });

  // ---- property-based acceptance ------------------------------------------

  failures += run_criterion(7, "MC scaling against the quadrature oracle",
                            [](Checker& c) {
    const auto t0 = Clock::now();
    const ExperimentConfig cfg;  // defaults: d=2 panel, 50 trials, 20 posteriors
    const ExperimentReport r = run_t2(cfg);
    const double secs = elapsed_since(t0);

    const auto means = r.detail["mean_error"].get<std::vector<double>>();
    for (std::size_t i = 1; i < means.size(); ++i)
      c.require(means[i] < means[i - 1],
                "mean error strictly decreasing at step " + std::to_string(i));
    const double slope = r.detail["loglog_slope"].get<double>();
    c.require(slope >= -0.65 && slope <= -0.35,
              "log-log slope in [-0.65, -0.35], got " + std::to_string(slope));
    for (double frac :
         r.detail["trial_p95_within_bound"].get<std::vector<double>>())
      c.require(frac >= 0.95, "per-M trial p95 fraction >= 0.95");
    c.require(r.detail["trial_p95_within_bound_all_m"].get<double>() >= 0.95,
              "joint trial p95 fraction >= 0.95");
    c.require(secs < 30.0, "runtime under 30 s");
  });

  failures += run_criterion(8, "high-M estimates match the oracle",
                            [](Checker& c) {
    const auto t0 = Clock::now();
    ExperimentConfig cfg;
    cfg.world.d = 2;
    cfg.world.evidence_noise = 2.0;
    cfg.world.prototypes.clear();
    cfg.world.seed = derive_seed(cfg.seed, 0x08);
    const World world = build_world(cfg.world);
    const Decoder dec = Decoder::aligned(world.prototypes(),
                                         cfg.decoder.temperature,
                                         cfg.decoder.floor);
    RngStream entities = world.stream(streams::kEntity);
    RngStream mc = world.stream(streams::kFactor);
    for (int p = 0; p < 20; ++p) {
      RngStream es = entities.child(p);
      const GaussianPosterior post = sample_entity(world, 1, es).evidence[0];
      const LabelDist oracle = oracle_factor(dec, post, 40);
      RngStream s = mc.child(p);
      const SoftFactor estimate = estimate_factor(dec, post, 200000, s);
      double err = 0.0;
      for (std::size_t y = 0; y < oracle.size(); ++y)
        err = std::max(err, std::fabs(estimate.dist[y] - oracle[y]));
      c.require(err <= 0.005,
                "posterior " + std::to_string(p) + " L_inf " +
                    std::to_string(err) + " <= 0.005");
    }
    c.require(elapsed_since(t0) < 60.0, "runtime under 60 s");
  });

  failures += run_criterion(9, "aggregation closure and permutation invariance",
                            [](Checker& c) {
    RngStream s(0x909);
    int checked_products = 0;
    for (int trial = 0; trial < 10000; ++trial) {
      const int k = 1 + static_cast<int>(s.pick_index(8));
      std::vector<SoftFactor> factors(k);
      for (int i = 0; i < k; ++i) {
        std::vector<double> raw(3);
        for (double& x : raw) x = s.next_unit() + 1e-3;
        factors[i].dist = normalize(raw);
        factors[i].weight = s.next_unit();
        factors[i].source_id = i;
      }
      const AggregationResult spn = spn_aggregate(factors);
      const AggregationResult uni = uniform_aggregate(factors);
      if (!is_valid_dist(spn.dist) || !is_valid_dist(uni.dist)) {
        c.require(false, "closure violated at trial " + std::to_string(trial));
        return;
      }

      auto shuffled = factors;
      for (int i = k - 1; i > 0; --i)
        std::swap(shuffled[i], shuffled[s.pick_index(i + 1)]);
      if (spn_aggregate(shuffled).dist.probs != spn.dist.probs ||
          uniform_aggregate(shuffled).dist.probs != uni.dist.probs) {
        c.require(false,
                  "permutation variance at trial " + std::to_string(trial));
        return;
      }

      if (k <= 5) {
        auto unit = factors;
        for (auto& f : unit) f.weight = 1.0;
        std::vector<double> product(3, 1.0);
        for (const auto& f : unit)
          for (int y = 0; y < 3; ++y) product[y] *= f.dist[y];
        const double total = product[0] + product[1] + product[2];
        const AggregationResult pooled = spn_aggregate(unit);
        for (int y = 0; y < 3; ++y) {
          if (std::fabs(pooled.dist[y] - product[y] / total) > 1e-9) {
            c.require(false,
                      "unit-weight product mismatch at trial " +
                          std::to_string(trial));
            return;
          }
        }
        ++checked_products;
      }
    }
    c.require(checked_products > 1000, "product oracle exercised");
  });

  failures += run_criterion(10, "corruption response (T5)", [](Checker& c) {
    const auto t0 = Clock::now();
    const ExperimentConfig cfg;
    const ExperimentReport r = run_t5(cfg);
    const double secs = elapsed_since(t0);

    const auto means = r.detail["mean_l1"].get<std::vector<double>>();
    const auto bounds = r.detail["bound"].get<std::vector<double>>();
    c.require(means.front() == 0.0, "mean L1 at eps=0 is exactly 0");
    for (std::size_t i = 0; i < means.size(); ++i)
      c.require(means[i] <= bounds[i],
                "mean L1 within bound at sweep point " + std::to_string(i));
    for (std::size_t i = 1; i < means.size(); ++i)
      c.require(means[i] + 1e-3 >= means[i - 1],
                "mean L1 non-decreasing at sweep point " + std::to_string(i));
    c.require(secs < 60.0, "runtime under 60 s");
  });

  failures += run_criterion(11, "ECE scaling in evidence count (T6)",
                            [](Checker& c) {
    const auto t0 = Clock::now();
    const ExperimentConfig cfg;
    const ExperimentReport r = run_t6(cfg);
    const double secs = elapsed_since(t0);
    c.require(r.detail["fit"]["r2"].get<double>() >= 0.8,
              "R^2 >= 0.8, got " +
                  std::to_string(r.detail["fit"]["r2"].get<double>()));
    const auto eces = r.detail["spn_ece_mean"].get<std::vector<double>>();
    c.require(eces.back() <= eces.front(), "ECE(K=20) <= ECE(K=1)");
    c.require(secs < 120.0, "runtime under 2 min");
  });

  failures += run_criterion(12, "uncertainty decomposition (T7)",
                            [](Checker& c) {
    const auto t0 = Clock::now();
    const ExperimentConfig cfg;
    const ExperimentReport r = run_t7(cfg);
    const double secs = elapsed_since(t0);
    for (double err :
         r.detail["max_decomposition_error"].get<std::vector<double>>())
      c.require(err < 1e-6, "decomposition error < 1e-6 for every entity");
    c.require(r.detail["aleatoric_cov"].get<double>() < 0.5,
              "aleatoric coefficient of variation < 0.5");
    c.require(secs < 60.0, "runtime under 60 s");
  });

  failures += run_criterion(13, "trainer gradients and generalization (T3)",
                            [](Checker& c) {
    const auto t0 = Clock::now();

    // Gradient check: 5 parameter points x 10 coordinates.
    const World world = build_world(WorldConfig{});
    const Decoder dec = Decoder::aligned(world.prototypes(), 1.0, 0.5);
    const AggDataset ds = make_agg_dataset(world, 8, 1, 5);
    RngStream coords(0xacc3);
    for (int point = 0; point < 5; ++point) {
      AttentionAggregator agg =
          init_aggregator(dec, world.config().d, 8, 1e-4, 4000 + point);
      std::vector<double> params = flatten_params(agg);
      for (double& p : params) p += 0.05 * (coords.next_unit() - 0.5);
      set_params(agg, params);
      const std::vector<double> grad =
          batch_gradient(agg, std::span<const Entity>(ds.train), 1e-4);
      for (int probe = 0; probe < 10; ++probe) {
        const std::size_t j = coords.pick_index(params.size());
        const double h = 1e-5;
        std::vector<double> plus = params, minus = params;
        plus[j] += h;
        minus[j] -= h;
        AttentionAggregator tmp = agg;
        set_params(tmp, plus);
        const double lp =
            batch_loss(tmp, std::span<const Entity>(ds.train), 1e-4);
        set_params(tmp, minus);
        const double lm =
            batch_loss(tmp, std::span<const Entity>(ds.train), 1e-4);
        const double numeric = (lp - lm) / (2.0 * h);
        const double rel =
            std::fabs(grad[j] - numeric) /
            std::max({std::fabs(grad[j]), std::fabs(numeric), 1e-4});
        if (rel >= 1e-4) {
          c.require(false, "gradient coordinate " + std::to_string(j) +
                               " relative error " + std::to_string(rel));
        }
      }
    }

    // Full T3 run: 3 dataset sizes x 5 seeds.
    const ExperimentConfig cfg;
    const ExperimentReport r = run_t3(cfg);
    for (const auto& row : r.detail["per_n"]) {
      const int n = row["n"].get<int>();
      c.require(row["gap_mean"].get<double>() <=
                    row["bound_mean"].get<double>(),
                "gap <= bound at N=" + std::to_string(n));
      c.require(row["bound_mean"].get<double>() < 1.0,
                "bound < 1 at N=" + std::to_string(n));
    }
    const auto& last = r.detail["per_n"].back();
    c.require(last["n"].get<int>() == 4200, "largest N is 4200");
    c.require(last["test_accuracy_mean"].get<double>() >= 0.90,
              "test accuracy >= 0.90 at N=4200");
    c.require(elapsed_since(t0) < 300.0, "runtime under 5 min");
  });

  failures += run_criterion(14, "assumption validator and adversarial flags",
                            [](Checker& c) {
    const ExperimentConfig base;
    const ExperimentReport ok = validate_assumptions(base);
    c.require(ok.pass, "all six assumptions pass on the default world");

    struct Adversarial {
      const char* target;
      ExperimentConfig cfg;
    };
    std::vector<Adversarial> cases;
    {
      Adversarial a{"A1", base};
      a.cfg.world.correlation = 1.0;
      cases.push_back(a);
    }
    {
      Adversarial a{"A6", base};
      a.cfg.decoder.floor = 0.0;
      cases.push_back(a);
    }
    {
      Adversarial a{"A2", base};
      a.cfg.world.var_low = 1.0;
      a.cfg.world.var_high = 1.2;
      cases.push_back(a);
    }
    for (const auto& adversarial : cases) {
      const ExperimentReport r = validate_assumptions(adversarial.cfg);
      for (const auto& check : r.detail["checks"]) {
        const std::string id = check["id"].get<std::string>();
        const bool pass = check["pass"].get<bool>();
        if (id == adversarial.target) {
          c.require(!pass, std::string(adversarial.target) + " flagged");
        } else {
          c.require(pass, id + " unaffected when targeting " +
                              adversarial.target);
        }
      }
    }
  });

  failures += run_criterion(15, "end-to-end verify all determinism",
                            [&work](Checker& c) {
    const auto t0 = Clock::now();
    const std::string binary = LPF_CLI_BINARY;
    const fs::path out_a = work / "all_a";
    const fs::path out_b = work / "all_b";

    const std::string cmd_a = binary + " verify all --seed 42 --out " +
                              out_a.string() + " > " +
                              (work / "log_a.txt").string() + " 2>&1";
    const int code_a = std::system(cmd_a.c_str());
    const double first_secs = elapsed_since(t0);
    c.require(code_a == 0, "first run exits 0");
    c.require(first_secs < 600.0, "first run under 10 min");

    const std::string cmd_b = binary + " verify all --seed 42 --out " +
                              out_b.string() + " > " +
                              (work / "log_b.txt").string() + " 2>&1";
    c.require(std::system(cmd_b.c_str()) == 0, "second run exits 0");

    int compared = 0;
    for (const auto& entry : fs::directory_iterator(out_a)) {
      const fs::path twin = out_b / entry.path().filename();
      if (!fs::exists(twin)) {
        c.require(false, "missing rerun file " + twin.string());
        continue;
      }
      if (slurp(entry.path()) != slurp(twin))
        c.require(false, "rerun differs: " + entry.path().filename().string());
      ++compared;
    }
    c.require(compared >= 18, "full report set emitted");
  });

  std::printf("%d/15 criteria passed\n", 15 - failures);
  return failures == 0 ? 0 : 1;
}
