#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "lpf/aggregate.hpp"
#include "lpf/cli.hpp"
#include "lpf/factor.hpp"
#include "lpf/harness.hpp"
#include "lpf/metrics.hpp"
#include "lpf/prob.hpp"
#include "lpf/rng.hpp"
#include "lpf/train.hpp"
#include "lpf/world.hpp"

namespace py = pybind11;
using namespace lpf;

namespace {

LabelDist as_dist(const std::vector<double>& probs) {
  return normalize(probs);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Latent posterior factors: probabilistic multi-evidence "
            "aggregation and its verification harness.";

  // -- probability core -------------------------------------------------
  m.def(
      "normalize",
      [](const std::vector<double>& raw) { return normalize(raw).probs; },
      py::arg("raw"));
  m.def(
      "entropy_bits",
      [](const std::vector<double>& p) { return entropy_bits(as_dist(p)); },
      py::arg("p"));
  m.def(
      "kl_bits",
      [](const std::vector<double>& p, const std::vector<double>& q) {
        return kl_bits(as_dist(p), as_dist(q));
      },
      py::arg("p"), py::arg("q"));
  m.def(
      "l1_distance",
      [](const std::vector<double>& p, const std::vector<double>& q) {
        return l1_distance(LabelDist{p}, LabelDist{q});
      },
      py::arg("p"), py::arg("q"));
  m.def(
      "effective_sample_size",
      [](const std::vector<double>& w) {
        return effective_sample_size(WeightVector{w});
      },
      py::arg("weights"));
  m.def(
      "argmax_label",
      [](const std::vector<double>& p) { return argmax_label(LabelDist{p}); },
      py::arg("p"));

  py::class_<GaussianPosterior>(m, "GaussianPosterior")
      .def(py::init([](std::vector<double> mean, std::vector<double> var,
                       int source_id) {
             GaussianPosterior p;
             p.mean = std::move(mean);
             p.var = std::move(var);
             p.source_id = source_id;
             return p;
           }),
           py::arg("mean"), py::arg("var"), py::arg("source_id") = 0)
      .def_readwrite("mean", &GaussianPosterior::mean)
      .def_readwrite("var", &GaussianPosterior::var)
      .def_readwrite("source_id", &GaussianPosterior::source_id)
      .def("cov_frobenius", &GaussianPosterior::cov_frobenius);

  // -- decoder / factorization ------------------------------------------
  py::class_<Decoder>(m, "Decoder")
      .def(py::init([](std::vector<std::vector<double>> weight,
                       std::vector<double> bias, double temperature,
                       double floor) {
             Decoder d;
             d.weight = std::move(weight);
             d.bias = std::move(bias);
             d.temperature = temperature;
             d.floor = floor;
             validate_decoder(d);
             return d;
           }),
           py::arg("weight"), py::arg("bias"), py::arg("temperature") = 1.0,
           py::arg("floor") = 0.5)
      .def_static("aligned", &Decoder::aligned, py::arg("prototypes"),
                  py::arg("temperature") = 1.0, py::arg("floor") = 0.5)
      .def_readonly("weight", &Decoder::weight)
      .def_readonly("bias", &Decoder::bias)
      .def_readonly("temperature", &Decoder::temperature)
      .def_readonly("floor", &Decoder::floor)
      .def("num_labels", &Decoder::num_labels)
      .def("latent_dim", &Decoder::latent_dim)
      .def("to_json", &decoder_to_json)
      .def_static("from_json", &decoder_from_json, py::arg("text"));

  m.def(
      "decode",
      [](const Decoder& dec, const std::vector<double>& z) {
        return decode(dec, z).probs;
      },
      py::arg("decoder"), py::arg("z"));

  py::class_<SoftFactor>(m, "SoftFactor")
      .def(py::init([](std::vector<double> dist, double weight, int source_id,
                       int m_used) {
             SoftFactor f;
             f.dist = normalize(dist);
             f.weight = weight;
             f.source_id = source_id;
             f.m_used = m_used;
             return f;
           }),
           py::arg("dist"), py::arg("weight") = 1.0, py::arg("source_id") = 0,
           py::arg("m_used") = 0)
      .def_property_readonly(
          "dist", [](const SoftFactor& f) { return f.dist.probs; })
      .def_readonly("weight", &SoftFactor::weight)
      .def_readonly("source_id", &SoftFactor::source_id)
      .def_readonly("m_used", &SoftFactor::m_used);

  m.def(
      "estimate_factor",
      [](const Decoder& dec, const GaussianPosterior& post, int m,
         std::uint64_t seed) {
        RngStream stream(seed);
        return estimate_factor(dec, post, m, stream);
      },
      py::arg("decoder"), py::arg("posterior"), py::arg("m") = 16,
      py::arg("seed") = 42);
  m.def(
      "oracle_factor",
      [](const Decoder& dec, const GaussianPosterior& post, int order) {
        return oracle_factor(dec, post, order).probs;
      },
      py::arg("decoder"), py::arg("posterior"), py::arg("order") = 40);
  m.def("confidence_weight", &confidence_weight, py::arg("posterior"));
  m.def("mc_error_bound", &mc_error_bound, py::arg("m"),
        py::arg("num_labels"), py::arg("delta"));

  // -- aggregation --------------------------------------------------------
  py::class_<AggregationResult>(m, "AggregationResult")
      .def_property_readonly(
          "dist", [](const AggregationResult& r) { return r.dist.probs; })
      .def_readonly("k_eff", &AggregationResult::k_eff)
      .def_property_readonly(
          "weights_used",
          [](const AggregationResult& r) { return r.weights_used.weights; })
      .def_property_readonly("method", [](const AggregationResult& r) {
        return std::string(agg_method_name(r.method));
      });

  m.def("spn_aggregate", &spn_aggregate, py::arg("factors"));
  m.def("uniform_aggregate", &uniform_aggregate, py::arg("factors"));
  m.def("robustness_bound", &robustness_bound, py::arg("epsilon"),
        py::arg("delta_item"), py::arg("k"), py::arg("c"));

  py::class_<AttentionAggregator>(m, "AttentionAggregator")
      .def_readonly("latent_dim", &AttentionAggregator::latent_dim)
      .def_readonly("hidden", &AttentionAggregator::hidden)
      .def("parameter_count", &AttentionAggregator::parameter_count)
      .def("feature_dim", &AttentionAggregator::feature_dim)
      .def("to_json", &aggregator_to_json);
  m.def("init_aggregator", &init_aggregator, py::arg("decoder"),
        py::arg("latent_dim"), py::arg("hidden") = 16,
        py::arg("l2_lambda") = 1e-4, py::arg("seed") = 42);
  m.def("attention_weights", &attention_weights, py::arg("aggregator"),
        py::arg("evidence"));
  m.def("learned_aggregate", &learned_aggregate, py::arg("aggregator"),
        py::arg("evidence"));

  // -- synthetic world ----------------------------------------------------
  py::class_<WorldConfig>(m, "WorldConfig")
      .def(py::init<>())
      .def_readwrite("d", &WorldConfig::d)
      .def_readwrite("num_labels", &WorldConfig::num_labels)
      .def_readwrite("prototypes", &WorldConfig::prototypes)
      .def_readwrite("prototype_scale", &WorldConfig::prototype_scale)
      .def_readwrite("evidence_noise", &WorldConfig::evidence_noise)
      .def_readwrite("var_low", &WorldConfig::var_low)
      .def_readwrite("var_high", &WorldConfig::var_high)
      .def_readwrite("conflict_rate", &WorldConfig::conflict_rate)
      .def_readwrite("correlation", &WorldConfig::correlation)
      .def_readwrite("label_prior", &WorldConfig::label_prior)
      .def_readwrite("seed", &WorldConfig::seed)
      .def_readwrite("k_max", &WorldConfig::k_max)
      .def_readwrite("sigma_max", &WorldConfig::sigma_max);

  py::class_<Entity>(m, "Entity")
      .def_readonly("label", &Entity::label)
      .def_readonly("evidence", &Entity::evidence)
      .def("k", &Entity::k);

  py::class_<AggDataset>(m, "AggDataset")
      .def_readonly("train", &AggDataset::train)
      .def_readonly("test", &AggDataset::test)
      .def_readonly("k", &AggDataset::k);

  py::class_<World>(m, "World")
      .def_property_readonly(
          "config", [](const World& w) { return w.config(); })
      .def_property_readonly(
          "prototypes", [](const World& w) { return w.prototypes(); });

  m.def("build_world", &build_world, py::arg("config"));
  m.def(
      "sample_entity",
      [](const World& world, int k, std::uint64_t stream_id) {
        RngStream s = world.stream(streams::kEntity).child(stream_id);
        return sample_entity(world, k, s);
      },
      py::arg("world"), py::arg("k"), py::arg("stream_id") = 0);
  m.def(
      "corrupt_entity",
      [](const Entity& entity, double fraction, const World& world,
         std::uint64_t stream_id) {
        RngStream s = world.stream(streams::kCorruption).child(stream_id);
        return corrupt_entity(entity, fraction, world, s);
      },
      py::arg("entity"), py::arg("fraction"), py::arg("world"),
      py::arg("stream_id") = 0);
  m.def("measure_correlation", &measure_correlation, py::arg("world"),
        py::arg("n_entities"));
  m.def("make_agg_dataset", &make_agg_dataset, py::arg("world"),
        py::arg("n_train"), py::arg("n_test"), py::arg("k"));
  m.def(
      "export_jsonl",
      [](const std::vector<Entity>& entities) {
        std::ostringstream out;
        export_jsonl(entities, out);
        return out.str();
      },
      py::arg("entities"));
  m.def(
      "import_jsonl",
      [](const std::string& text) {
        std::istringstream in(text);
        return import_jsonl(in);
      },
      py::arg("text"));

  // -- training -----------------------------------------------------------
  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &TrainConfig::learning_rate)
      .def_readwrite("epochs", &TrainConfig::epochs)
      .def_readwrite("l2_lambda", &TrainConfig::l2_lambda)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("delta", &TrainConfig::delta)
      .def_readwrite("d_eff_threshold", &TrainConfig::d_eff_threshold);

  py::class_<TrainReport>(m, "TrainReport")
      .def_readonly("train_loss", &TrainReport::train_loss)
      .def_readonly("test_loss", &TrainReport::test_loss)
      .def_readonly("gap", &TrainReport::gap)
      .def_readonly("d_eff", &TrainReport::d_eff)
      .def_readonly("bound", &TrainReport::bound)
      .def_readonly("test_accuracy", &TrainReport::test_accuracy);

  m.def("train", &train, py::arg("dataset"), py::arg("arch"),
        py::arg("config"));
  m.def("effective_dimension", &effective_dimension, py::arg("aggregator"),
        py::arg("threshold") = 1e-3);
  m.def("pac_bayes_bound", &pac_bayes_bound, py::arg("train_loss"),
        py::arg("n"), py::arg("d_eff"), py::arg("delta") = 0.05);
  m.def("stability_bound", &stability_bound, py::arg("lipschitz"),
        py::arg("lambda_"), py::arg("n"));

  // -- metrics --------------------------------------------------------------
  py::class_<ReliabilityBin>(m, "ReliabilityBin")
      .def_readonly("lo", &ReliabilityBin::lo)
      .def_readonly("hi", &ReliabilityBin::hi)
      .def_readonly("mean_confidence", &ReliabilityBin::mean_confidence)
      .def_readonly("accuracy", &ReliabilityBin::accuracy)
      .def_readonly("count", &ReliabilityBin::count);

  py::class_<ReliabilityTable>(m, "ReliabilityTable")
      .def_readonly("bins", &ReliabilityTable::bins)
      .def_readonly("ece", &ReliabilityTable::ece)
      .def_readonly("total", &ReliabilityTable::total);

  m.def(
      "ece",
      [](const std::vector<std::vector<double>>& preds,
         const std::vector<int>& labels, int bins) {
        std::vector<LabelDist> dists;
        dists.reserve(preds.size());
        for (const auto& p : preds) dists.push_back(LabelDist{p});
        return ece(dists, labels, bins);
      },
      py::arg("predictions"), py::arg("labels"), py::arg("bins") = 10);
  m.def("calibration_bound", &calibration_bound,
        py::arg("epsilon_individual"), py::arg("k_eff"), py::arg("c") = 2.0);

  py::class_<UncertaintyBreakdown>(m, "UncertaintyBreakdown")
      .def_readonly("total", &UncertaintyBreakdown::total)
      .def_readonly("epistemic", &UncertaintyBreakdown::epistemic)
      .def_readonly("aleatoric", &UncertaintyBreakdown::aleatoric)
      .def_readonly("decomposition_error",
                    &UncertaintyBreakdown::decomposition_error);
  m.def(
      "uncertainty_decomposition",
      [](const Decoder& dec, const std::vector<GaussianPosterior>& mixture,
         const std::vector<double>& weights, int m, std::uint64_t seed) {
        RngStream stream(seed);
        return uncertainty_decomposition(dec, mixture, weights, m, stream);
      },
      py::arg("decoder"), py::arg("mixture"), py::arg("weights"),
      py::arg("m") = 100, py::arg("seed") = 42);

  m.def(
      "fit_inverse_sqrt",
      [](const std::vector<double>& k, const std::vector<double>& y) {
        const InverseSqrtFit fit = fit_inverse_sqrt(k, y);
        return py::make_tuple(fit.a, fit.b, fit.r2);
      },
      py::arg("k_values"), py::arg("ece_values"));
  m.def("sample_complexity", &sample_complexity, py::arg("epsilon_target"),
        py::arg("c"));

  // -- harness ----------------------------------------------------------
  m.def(
      "run_experiment",
      [](const std::string& id, std::uint64_t seed,
         const std::string& out_dir) {
        ExperimentConfig cfg;
        cfg.seed = seed;
        cfg.out_dir = out_dir;
        const ExperimentReport report = run_experiment(id, cfg);
        if (!out_dir.empty())
          write_report_files(report, cfg, OutputFormat::kBoth);
        return py::make_tuple(report.pass,
                              report_to_json(report, cfg).dump());
      },
      py::arg("id"), py::arg("seed") = 42, py::arg("out_dir") = "");
  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::ostringstream out, err;
        const int code = run_cli(args, out, err);
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));

#ifdef LPF_VERSION
  m.attr("__version__") = LPF_VERSION;
#else
  m.attr("__version__") = "dev";
#endif
}
