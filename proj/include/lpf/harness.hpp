#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lpf/train.hpp"
#include "lpf/world.hpp"

namespace lpf {

/// Bound constants shared by the verification experiments. They are
/// echoed into every report so each pass/fail line can be recomputed
/// from the emitted data alone.
struct BoundConstants {
  double c_calibration = 2.0;
  double c_robustness = 2.0;
  double c_t6 = 24.28;
  double delta = 0.05;
  double sigma_max = 2.5;
};

struct DecoderConfig {
  double temperature = 1.0;
  double floor = 0.5;
};

struct ExperimentConfig {
  WorldConfig world;
  DecoderConfig decoder;
  BoundConstants constants;
  std::uint64_t seed = 42;
  std::string out_dir = "lpf-out";
  int jobs = 0;        // 0 = use available parallelism
  int mc_samples = 16; // production M for factor estimation

  struct T1 {
    int test_entities = 300;
    int train_entities = 1000;
    int k = 10;
    TrainConfig train{.learning_rate = 0.2, .epochs = 40, .batch_size = 128};
  } t1;

  struct T2 {
    std::vector<int> m_values{4, 8, 16, 32, 64};
    int trials = 50;
    int posteriors = 20;
    int quad_order = 40;
    int latent_dim = 2;  // world override so the oracle stays exact
    // Spread of the posterior panel. Wider than the base world so the
    // panel covers the non-saturated decoder regime where MC noise is
    // visible at every M.
    double evidence_noise = 2.0;
  } t2;

  struct T3 {
    std::vector<int> n_values{2002, 3003, 4200};
    int seeds = 5;
    int test_entities = 900;
    int k = 5;
    int hidden = 16;
    int d_eff_fixed = 1335;
    TrainConfig train{.learning_rate = 0.25, .epochs = 30, .batch_size = 256};
  } t3;

  struct T4 {
    int entities = 100;
    int k = 10;
    double ratio_limit = 1.5;
  } t4;

  struct T5 {
    std::vector<double> epsilons{0.0, 0.05, 0.1, 0.2, 0.3, 0.5};
    int trials = 10;
    int entities = 100;
    int k = 10;
    double delta_item = 1.0;
  } t5;

  struct T6 {
    std::vector<int> k_values{1, 2, 3, 5, 7, 10, 15, 20};
    int trials = 20;
    int entities = 100;
    double r2_min = 0.8;
  } t6;

  struct T7 {
    std::vector<int> k_values{1, 2, 3, 5};
    int entities = 50;
    int mc_samples = 100;
    double decomp_error_max = 1e-4;
    double aleatoric_cov_max = 0.5;
  } t7;

  struct Assumptions {
    int correlation_entities = 1000;
    int variance_entities = 1000;
    int ece_entities = 300;
    int closure_cases = 1000;
    int decode_latents = 1000;
    double rho_max = 0.3;
    double individual_ece_max = 0.25;
  } assumptions;
};

struct ExperimentReport {
  std::string id;
  bool pass = false;
  double margin = 0.0;
  nlohmann::json detail;
  std::vector<std::string> table_header;
  std::vector<std::vector<double>> table_rows;
  // Extra CSV artifacts (filename -> content), e.g. reliability tables.
  std::vector<std::pair<std::string, std::string>> attachments;
  // Headline pair for the summary table.
  double headline_empirical = 0.0;
  double headline_bound = 0.0;
};

ExperimentReport run_t1(const ExperimentConfig& config);
ExperimentReport run_t2(const ExperimentConfig& config);
ExperimentReport run_t3(const ExperimentConfig& config);
ExperimentReport run_t4(const ExperimentConfig& config);
ExperimentReport run_t5(const ExperimentConfig& config);
ExperimentReport run_t6(const ExperimentConfig& config);
ExperimentReport run_t7(const ExperimentConfig& config);
ExperimentReport validate_assumptions(const ExperimentConfig& config);

struct Summary {
  std::vector<ExperimentReport> reports;
  bool all_pass = true;
};

/// Runs T1..T7 plus the assumption validator, in order.
Summary run_all(const ExperimentConfig& config);

ExperimentReport run_experiment(const std::string& id,
                                const ExperimentConfig& config);

enum class OutputFormat { kJson, kCsv, kBoth };

/// Full report JSON (id, verdict, constants echo, detail, table).
nlohmann::json report_to_json(const ExperimentReport& report,
                              const ExperimentConfig& config);

std::string report_table_csv(const ExperimentReport& report);

/// Writes <out>/<id>_report.json and/or <out>/<id>_table.csv plus any
/// attachments. Creates the directory if needed.
void write_report_files(const ExperimentReport& report,
                        const ExperimentConfig& config, OutputFormat format);

void write_summary_csv(const Summary& summary, const std::string& out_dir);

/// Canonical double formatting for CSV cells (round-trip exact).
std::string format_double(double v);

}  // namespace lpf
