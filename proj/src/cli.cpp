#include "lpf/cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "lpf/aggregate.hpp"
#include "lpf/config.hpp"
#include "lpf/errors.hpp"
#include "lpf/factor.hpp"
#include "lpf/harness.hpp"
#include "lpf/metrics.hpp"
#include "lpf/train.hpp"
#include "lpf/world.hpp"

namespace lpf {

namespace {

constexpr int kExitPass = 0;
constexpr int kExitFail = 1;
constexpr int kExitUsage = 2;

OutputFormat parse_format(const std::string& name) {
  if (name == "json") return OutputFormat::kJson;
  if (name == "csv") return OutputFormat::kCsv;
  if (name == "both") return OutputFormat::kBoth;
  throw ConfigError("unknown format: " + name);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

GaussianPosterior posterior_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("posterior: bad JSON: ") + e.what());
  }
  GaussianPosterior p;
  p.mean = j.at("mean").get<std::vector<double>>();
  p.var = j.at("var").get<std::vector<double>>();
  p.source_id = j.value("source_id", 0);
  if (p.mean.size() != p.var.size())
    throw ConfigError("posterior: mean/var length mismatch");
  for (double v : p.var)
    if (!(v > 0.0)) throw ConfigError("posterior: variances must be > 0");
  return p;
}

std::vector<SoftFactor> factors_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("factors: bad JSON: ") + e.what());
  }
  if (!j.is_array() || j.empty())
    throw ConfigError("factors: expected a non-empty JSON array");
  std::vector<SoftFactor> out;
  int idx = 0;
  for (const auto& item : j) {
    SoftFactor f;
    f.dist = normalize(item.at("dist").get<std::vector<double>>());
    f.weight = item.value("weight", 1.0);
    f.source_id = item.value("source_id", idx);
    f.m_used = item.value("m_used", 0);
    ++idx;
    out.push_back(std::move(f));
  }
  return out;
}

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text << "\n";
    return;
  }
  std::ofstream file(path);
  if (!file) throw ConfigError("cannot write file: " + path);
  file << text << "\n";
}

struct CommonOpts {
  std::string config_path;
  std::string out_dir = "lpf-out";
  std::string format = "both";
  std::optional<std::uint64_t> seed;
  int jobs = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
  cmd->add_option("--config", opts.config_path, "config file (key = value)");
  cmd->add_option("--out", opts.out_dir, "output directory");
  cmd->add_option("--seed", opts.seed, "root seed (fallback: LPF_SEED, 42)");
  cmd->add_option("--format", opts.format, "json|csv|both")
      ->check(CLI::IsMember({"json", "csv", "both"}));
  cmd->add_option("--jobs", opts.jobs, "max concurrent trial workers");
}

ExperimentConfig resolve_config(const CommonOpts& opts, std::ostream& err) {
  ExperimentConfig cfg;
  if (!opts.config_path.empty())
    cfg = load_config(opts.config_path, cfg, err);
  if (opts.seed.has_value()) {
    cfg.seed = *opts.seed;
  } else if (const char* env = std::getenv("LPF_SEED")) {
    try {
      cfg.seed = std::stoull(env);
    } catch (const std::exception&) {
      throw ConfigError("LPF_SEED is not a valid integer: " +
                        std::string(env));
    }
  }
  cfg.out_dir = opts.out_dir;
  if (opts.jobs > 0) cfg.jobs = opts.jobs;
  return cfg;
}

int cmd_verify(const std::string& target, const CommonOpts& opts,
               std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = resolve_config(opts, err);
  const OutputFormat format = parse_format(opts.format);

  if (target == "all") {
    const Summary summary = run_all(cfg);
    for (const auto& report : summary.reports) {
      write_report_files(report, cfg, format);
      out << (report.pass ? "[pass] " : "[FAIL] ") << report.id
          << "  margin=" << format_double(report.margin) << "\n";
    }
    write_summary_csv(summary, cfg.out_dir);
    out << (summary.all_pass ? "all experiments passed"
                             : "at least one experiment failed")
        << "\n";
    return summary.all_pass ? kExitPass : kExitFail;
  }

  const ExperimentReport report = run_experiment(target, cfg);
  write_report_files(report, cfg, format);
  out << (report.pass ? "[pass] " : "[FAIL] ") << report.id
      << "  margin=" << format_double(report.margin) << "\n";
  return report.pass ? kExitPass : kExitFail;
}

int cmd_factor(const std::string& decoder_path, const std::string& post_path,
               int samples, int order, const std::string& method,
               const CommonOpts& opts, const std::string& out_path,
               std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = resolve_config(opts, err);
  const Decoder dec = load_decoder(decoder_path);
  const GaussianPosterior post = posterior_from_json(read_file(post_path));

  nlohmann::json j;
  if (method == "quadrature") {
    const LabelDist dist = oracle_factor(dec, post, order);
    j = {{"dist", dist.probs},
         {"weight", confidence_weight(post)},
         {"source_id", post.source_id},
         {"method", "quadrature"},
         {"order", order}};
  } else {
    RngStream stream(derive_seed(cfg.seed, 0xfac7));
    const SoftFactor f = estimate_factor(dec, post, samples, stream);
    j = {{"dist", f.dist.probs},
         {"weight", f.weight},
         {"source_id", f.source_id},
         {"m_used", f.m_used},
         {"method", "mc"}};
  }
  emit(j.dump(2), out_path, out);
  return kExitPass;
}

int cmd_aggregate(const std::string& factors_path, const std::string& method,
                  const std::string& out_path, std::ostream& out) {
  const std::vector<SoftFactor> factors =
      factors_from_json(read_file(factors_path));
  const AggregationResult result = method == "uniform"
                                       ? uniform_aggregate(factors)
                                       : spn_aggregate(factors);
  const nlohmann::json j = {{"dist", result.dist.probs},
                            {"k_eff", result.k_eff},
                            {"weights_used", result.weights_used.weights},
                            {"method", agg_method_name(result.method)}};
  emit(j.dump(2), out_path, out);
  return kExitPass;
}

int cmd_train(int n_train, int n_test, int k, int hidden,
              const TrainConfig& tc_in, const CommonOpts& opts,
              std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = resolve_config(opts, err);

  WorldConfig wc = cfg.world;
  wc.seed = derive_seed(cfg.seed, 0x7a11);
  wc.k_max = std::max(wc.k_max, k);
  const World world = build_world(wc);
  const Decoder dec = Decoder::aligned(
      world.prototypes(), cfg.decoder.temperature, cfg.decoder.floor);
  const AggDataset ds = make_agg_dataset(world, n_train, n_test, k);

  TrainConfig tc = tc_in;
  tc.seed = derive_seed(cfg.seed, 0x7a12);
  const AttentionAggregator arch = init_aggregator(
      dec, wc.d, hidden, tc.l2_lambda, derive_seed(cfg.seed, 0x7a13));
  const auto [agg, report] = train(ds, arch, tc);

  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  const nlohmann::json j = {
      {"train_loss", report.train_loss},
      {"test_loss", report.test_loss},
      {"gap", report.gap},
      {"d_eff", report.d_eff},
      {"bound", report.bound},
      {"test_accuracy", report.test_accuracy},
      {"config",
       {{"n_train", n_train},
        {"n_test", n_test},
        {"k", k},
        {"hidden", hidden},
        {"learning_rate", tc.learning_rate},
        {"epochs", tc.epochs},
        {"l2_lambda", tc.l2_lambda},
        {"batch_size", tc.batch_size},
        {"seed", cfg.seed}}}};
  {
    std::ofstream f(fs::path(cfg.out_dir) / "train_report.json");
    f << j.dump(2) << "\n";
  }
  {
    std::ofstream f(fs::path(cfg.out_dir) / "aggregator.json");
    f << aggregator_to_json(agg) << "\n";
  }
  save_decoder(dec, (fs::path(cfg.out_dir) / "decoder.json").string());
  out << "train_loss=" << format_double(report.train_loss)
      << " test_loss=" << format_double(report.test_loss)
      << " accuracy=" << format_double(report.test_accuracy)
      << " bound=" << format_double(report.bound) << "\n";
  return kExitPass;
}

int cmd_world_export(int n, int k, const std::string& split,
                     const std::string& out_path, const CommonOpts& opts,
                     std::ostream& out, std::ostream& err) {
  const ExperimentConfig cfg = resolve_config(opts, err);
  WorldConfig wc = cfg.world;
  wc.seed = derive_seed(cfg.seed, 0x3017);
  wc.k_max = std::max(wc.k_max, k);
  const World world = build_world(wc);

  RngStream root =
      world.stream(split == "test" ? streams::kTest : streams::kTrain);
  std::vector<Entity> entities;
  entities.reserve(n);
  for (int e = 0; e < n; ++e) {
    RngStream es = root.child(e);
    entities.push_back(sample_entity(world, k, es));
  }

  if (out_path.empty() || out_path == "-") {
    export_jsonl(entities, out);
  } else {
    std::ofstream file(out_path);
    if (!file) throw ConfigError("cannot write file: " + out_path);
    export_jsonl(entities, file);
    out << "wrote " << n << " entities to " << out_path << "\n";
  }
  return kExitPass;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"latent posterior factors: aggregation library and "
               "verification harness"};
  app.require_subcommand(1);

  // verify
  CommonOpts verify_opts;
  std::string verify_target;
  CLI::App* verify = app.add_subcommand(
      "verify", "run a verification experiment (t1..t7, assumptions, all)");
  verify
      ->add_option("target", verify_target, "t1..t7 | assumptions | all")
      ->required()
      ->check(CLI::IsMember({"t1", "t2", "t3", "t4", "t5", "t6", "t7",
                             "assumptions", "all"}));
  add_common(verify, verify_opts);

  // factor
  CommonOpts factor_opts;
  std::string factor_decoder, factor_posterior, factor_method = "mc",
              factor_out = "-";
  int factor_samples = 16, factor_order = 40;
  CLI::App* factor = app.add_subcommand(
      "factor", "marginalize one posterior into a soft factor");
  factor->add_option("--decoder", factor_decoder, "decoder JSON file")
      ->required();
  factor->add_option("--posterior", factor_posterior, "posterior JSON file")
      ->required();
  factor->add_option("--samples", factor_samples, "MC sample count");
  factor->add_option("--order", factor_order, "quadrature order");
  factor->add_option("--method", factor_method, "mc|quadrature")
      ->check(CLI::IsMember({"mc", "quadrature"}));
  factor->add_option("--out-file", factor_out, "output path or - for stdout");
  add_common(factor, factor_opts);

  // aggregate
  std::string agg_factors, agg_method = "spn", agg_out = "-";
  CLI::App* aggregate =
      app.add_subcommand("aggregate", "pool soft factors into a prediction");
  aggregate->add_option("--factors", agg_factors, "JSON array of factors")
      ->required();
  aggregate->add_option("--method", agg_method, "spn|uniform")
      ->check(CLI::IsMember({"spn", "uniform"}));
  aggregate->add_option("--out-file", agg_out, "output path or - for stdout");

  // train
  CommonOpts train_opts;
  int train_n = 4200, train_test = 900, train_k = 5, train_hidden = 16;
  TrainConfig train_tc;
  train_tc.learning_rate = 0.25;
  train_tc.epochs = 30;
  train_tc.batch_size = 256;
  CLI::App* train_cmd =
      app.add_subcommand("train", "train the attention aggregator");
  train_cmd->add_option("--n-train", train_n, "training entities");
  train_cmd->add_option("--n-test", train_test, "test entities");
  train_cmd->add_option("--k", train_k, "evidence items per entity");
  train_cmd->add_option("--hidden", train_hidden, "scorer hidden width");
  train_cmd->add_option("--epochs", train_tc.epochs, "training epochs");
  train_cmd->add_option("--learning-rate", train_tc.learning_rate,
                        "constant step size");
  train_cmd->add_option("--l2", train_tc.l2_lambda, "L2 penalty");
  train_cmd->add_option("--batch", train_tc.batch_size,
                        "mini-batch size (0 = full batch)");
  add_common(train_cmd, train_opts);

  // world export
  CommonOpts world_opts;
  int world_n = 100, world_k = 5;
  std::string world_split = "train", world_out;
  CLI::App* world_cmd = app.add_subcommand("world", "synthetic world tools");
  world_cmd->require_subcommand(1);
  CLI::App* world_export =
      world_cmd->add_subcommand("export", "write entities as JSON lines");
  world_export->add_option("--n", world_n, "entity count");
  world_export->add_option("--k", world_k, "evidence items per entity");
  world_export->add_option("--split", world_split, "train|test stream")
      ->check(CLI::IsMember({"train", "test"}));
  world_export->add_option("--out-file", world_out,
                           "output path or - for stdout");
  add_common(world_export, world_opts);

  std::vector<const char*> argv;
  argv.push_back("lpf");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitPass;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    if (verify->parsed()) return cmd_verify(verify_target, verify_opts, out, err);
    if (factor->parsed())
      return cmd_factor(factor_decoder, factor_posterior, factor_samples,
                        factor_order, factor_method, factor_opts, factor_out,
                        out, err);
    if (aggregate->parsed())
      return cmd_aggregate(agg_factors, agg_method, agg_out, out);
    if (train_cmd->parsed())
      return cmd_train(train_n, train_test, train_k, train_hidden, train_tc,
                       train_opts, out, err);
    if (world_cmd->parsed() && world_export->parsed())
      return cmd_world_export(world_n, world_k, world_split, world_out,
                              world_opts, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFail;
  }
  err << "usage error: no command\n";
  return kExitUsage;
}

}  // namespace lpf
