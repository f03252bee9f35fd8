#include "lpf/config.hpp"

#include <charconv>
#include <fstream>
#include <ostream>
#include <sstream>

#include "lpf/errors.hpp"

namespace lpf {

namespace {

std::string trim(const std::string& s) {
  const std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_real(const std::string& value, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config line " + std::to_string(line) +
                      ": expected a number, got '" + value + "'");
  }
}

long long parse_int(const std::string& value, int line) {
  const double v = parse_real(value, line);
  const long long n = static_cast<long long>(v);
  if (static_cast<double>(n) != v)
    throw ConfigError("config line " + std::to_string(line) +
                      ": expected an integer, got '" + value + "'");
  return n;
}

std::vector<double> parse_real_list(const std::string& value, int line) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty())
      throw ConfigError("config line " + std::to_string(line) +
                        ": empty list element");
    out.push_back(parse_real(item, line));
  }
  if (out.empty())
    throw ConfigError("config line " + std::to_string(line) + ": empty list");
  return out;
}

std::vector<int> parse_int_list(const std::string& value, int line) {
  std::vector<int> out;
  for (double v : parse_real_list(value, line)) {
    const int n = static_cast<int>(v);
    if (static_cast<double>(n) != v)
      throw ConfigError("config line " + std::to_string(line) +
                        ": expected integers in list");
    out.push_back(n);
  }
  return out;
}

void apply_train_key(TrainConfig& tc, const std::string& key,
                     const std::string& value, int line, bool& known) {
  known = true;
  if (key == "learning_rate") tc.learning_rate = parse_real(value, line);
  else if (key == "epochs") tc.epochs = static_cast<int>(parse_int(value, line));
  else if (key == "l2_lambda") tc.l2_lambda = parse_real(value, line);
  else if (key == "batch_size") tc.batch_size = static_cast<int>(parse_int(value, line));
  else known = false;
}

}  // namespace

ExperimentConfig parse_config(std::istream& in, ExperimentConfig cfg,
                              std::ostream& warnings) {
  std::string line;
  std::string section;
  int line_no = 0;

  while (std::getline(in, line)) {
    ++line_no;
    const std::size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key or value");

    bool known = true;
    if (section.empty() || section == "run") {
      if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(value, line_no));
      else if (key == "out_dir") cfg.out_dir = value;
      else if (key == "jobs") cfg.jobs = static_cast<int>(parse_int(value, line_no));
      else if (key == "mc_samples") cfg.mc_samples = static_cast<int>(parse_int(value, line_no));
      else known = false;
    } else if (section == "world") {
      if (key == "d") cfg.world.d = static_cast<int>(parse_int(value, line_no));
      else if (key == "num_labels") cfg.world.num_labels = static_cast<int>(parse_int(value, line_no));
      else if (key == "prototype_scale") cfg.world.prototype_scale = parse_real(value, line_no);
      else if (key == "evidence_noise") cfg.world.evidence_noise = parse_real(value, line_no);
      else if (key == "var_low") cfg.world.var_low = parse_real(value, line_no);
      else if (key == "var_high") cfg.world.var_high = parse_real(value, line_no);
      else if (key == "conflict_rate") cfg.world.conflict_rate = parse_real(value, line_no);
      else if (key == "correlation") cfg.world.correlation = parse_real(value, line_no);
      else if (key == "label_prior") cfg.world.label_prior = parse_real_list(value, line_no);
      else if (key == "k_max") cfg.world.k_max = static_cast<int>(parse_int(value, line_no));
      else if (key == "sigma_max") cfg.world.sigma_max = parse_real(value, line_no);
      else known = false;
    } else if (section == "decoder") {
      if (key == "temperature") cfg.decoder.temperature = parse_real(value, line_no);
      else if (key == "floor") cfg.decoder.floor = parse_real(value, line_no);
      else known = false;
    } else if (section == "constants") {
      if (key == "c_calibration") cfg.constants.c_calibration = parse_real(value, line_no);
      else if (key == "c_robustness") cfg.constants.c_robustness = parse_real(value, line_no);
      else if (key == "c_t6") cfg.constants.c_t6 = parse_real(value, line_no);
      else if (key == "delta") cfg.constants.delta = parse_real(value, line_no);
      else if (key == "sigma_max") cfg.constants.sigma_max = parse_real(value, line_no);
      else known = false;
    } else if (section == "t1") {
      if (key == "test_entities") cfg.t1.test_entities = static_cast<int>(parse_int(value, line_no));
      else if (key == "train_entities") cfg.t1.train_entities = static_cast<int>(parse_int(value, line_no));
      else if (key == "k") cfg.t1.k = static_cast<int>(parse_int(value, line_no));
      else apply_train_key(cfg.t1.train, key, value, line_no, known);
    } else if (section == "t2") {
      if (key == "m_values") cfg.t2.m_values = parse_int_list(value, line_no);
      else if (key == "trials") cfg.t2.trials = static_cast<int>(parse_int(value, line_no));
      else if (key == "posteriors") cfg.t2.posteriors = static_cast<int>(parse_int(value, line_no));
      else if (key == "quad_order") cfg.t2.quad_order = static_cast<int>(parse_int(value, line_no));
      else if (key == "latent_dim") cfg.t2.latent_dim = static_cast<int>(parse_int(value, line_no));
      else if (key == "evidence_noise") cfg.t2.evidence_noise = parse_real(value, line_no);
      else known = false;
    } else if (section == "t3") {
      if (key == "n_values") cfg.t3.n_values = parse_int_list(value, line_no);
      else if (key == "seeds") cfg.t3.seeds = static_cast<int>(parse_int(value, line_no));
      else if (key == "test_entities") cfg.t3.test_entities = static_cast<int>(parse_int(value, line_no));
      else if (key == "k") cfg.t3.k = static_cast<int>(parse_int(value, line_no));
      else if (key == "hidden") cfg.t3.hidden = static_cast<int>(parse_int(value, line_no));
      else if (key == "d_eff_fixed") cfg.t3.d_eff_fixed = static_cast<int>(parse_int(value, line_no));
      else apply_train_key(cfg.t3.train, key, value, line_no, known);
    } else if (section == "t4") {
      if (key == "entities") cfg.t4.entities = static_cast<int>(parse_int(value, line_no));
      else if (key == "k") cfg.t4.k = static_cast<int>(parse_int(value, line_no));
      else if (key == "ratio_limit") cfg.t4.ratio_limit = parse_real(value, line_no);
      else known = false;
    } else if (section == "t5") {
      if (key == "epsilons") cfg.t5.epsilons = parse_real_list(value, line_no);
      else if (key == "trials") cfg.t5.trials = static_cast<int>(parse_int(value, line_no));
      else if (key == "entities") cfg.t5.entities = static_cast<int>(parse_int(value, line_no));
      else if (key == "k") cfg.t5.k = static_cast<int>(parse_int(value, line_no));
      else if (key == "delta_item") cfg.t5.delta_item = parse_real(value, line_no);
      else known = false;
    } else if (section == "t6") {
      if (key == "k_values") cfg.t6.k_values = parse_int_list(value, line_no);
      else if (key == "trials") cfg.t6.trials = static_cast<int>(parse_int(value, line_no));
      else if (key == "entities") cfg.t6.entities = static_cast<int>(parse_int(value, line_no));
      else if (key == "r2_min") cfg.t6.r2_min = parse_real(value, line_no);
      else known = false;
    } else if (section == "t7") {
      if (key == "k_values") cfg.t7.k_values = parse_int_list(value, line_no);
      else if (key == "entities") cfg.t7.entities = static_cast<int>(parse_int(value, line_no));
      else if (key == "mc_samples") cfg.t7.mc_samples = static_cast<int>(parse_int(value, line_no));
      else if (key == "decomp_error_max") cfg.t7.decomp_error_max = parse_real(value, line_no);
      else if (key == "aleatoric_cov_max") cfg.t7.aleatoric_cov_max = parse_real(value, line_no);
      else known = false;
    } else if (section == "assumptions") {
      if (key == "correlation_entities") cfg.assumptions.correlation_entities = static_cast<int>(parse_int(value, line_no));
      else if (key == "variance_entities") cfg.assumptions.variance_entities = static_cast<int>(parse_int(value, line_no));
      else if (key == "ece_entities") cfg.assumptions.ece_entities = static_cast<int>(parse_int(value, line_no));
      else if (key == "closure_cases") cfg.assumptions.closure_cases = static_cast<int>(parse_int(value, line_no));
      else if (key == "decode_latents") cfg.assumptions.decode_latents = static_cast<int>(parse_int(value, line_no));
      else if (key == "rho_max") cfg.assumptions.rho_max = parse_real(value, line_no);
      else if (key == "individual_ece_max") cfg.assumptions.individual_ece_max = parse_real(value, line_no);
      else known = false;
    } else {
      warnings << "config line " << line_no << ": unknown section ["
               << section << "], ignoring '" << key << "'\n";
      continue;
    }

    if (!known) {
      warnings << "config line " << line_no << ": unknown key '" << key
               << "' in section [" << (section.empty() ? "run" : section)
               << "], ignoring\n";
    }
  }
  return cfg;
}

ExperimentConfig load_config(const std::string& path, ExperimentConfig defaults,
                             std::ostream& warnings) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path);
  return parse_config(in, std::move(defaults), warnings);
}

}  // namespace lpf
