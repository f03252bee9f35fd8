#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "lpf/prob.hpp"
#include "lpf/rng.hpp"

namespace lpf {

/// Linear-softmax decoder from latent points to label distributions,
/// with uniform mixing so every class keeps probability at least
/// floor / |Y| for any input.
struct Decoder {
  std::vector<std::vector<double>> weight;  // |Y| x d
  std::vector<double> bias;                 // |Y|
  double temperature = 1.0;
  double floor = 0.5;

  int num_labels() const { return static_cast<int>(weight.size()); }
  int latent_dim() const {
    return weight.empty() ? 0 : static_cast<int>(weight.front().size());
  }

  /// Decoder whose rows are the given class prototypes (zero bias).
  static Decoder aligned(const std::vector<std::vector<double>>& prototypes,
                         double temperature, double floor);
};

void validate_decoder(const Decoder& dec);

/// Marginalized label distribution with its confidence weight.
struct SoftFactor {
  LabelDist dist;
  double weight = 1.0;
  int source_id = 0;
  int m_used = 0;
};

LabelDist decode(const Decoder& dec, const std::vector<double>& z);

/// Reparameterized draws z = mean + sqrt(var) * eps.
std::vector<std::vector<double>> sample_latents(const GaussianPosterior& post,
                                                int m, RngStream& stream);

/// Monte Carlo estimate of E_z[decode(z)] over the posterior.
SoftFactor estimate_factor(const Decoder& dec, const GaussianPosterior& post,
                           int m, RngStream& stream);

/// Gauss-Hermite tensor-grid evaluation of E_z[decode(z)]; exact
/// reference for low-dimensional posteriors (d <= 3).
LabelDist oracle_factor(const Decoder& dec, const GaussianPosterior& post,
                        int order);

/// w = 1 / (1 + ||Sigma||_F): strictly decreasing in posterior
/// uncertainty, in (0, 1].
double confidence_weight(const GaussianPosterior& post);

/// Hoeffding bound sqrt(ln(2|Y|/delta) / (2M)) on the max-class MC
/// error, natural log.
double mc_error_bound(int m, int num_labels, double delta);

/// Nodes and weights for n-point Gauss-Hermite quadrature
/// (weight function exp(-x^2)).
void gauss_hermite(int n, std::vector<double>& nodes,
                   std::vector<double>& weights);

Decoder decoder_from_json(const std::string& text);
std::string decoder_to_json(const Decoder& dec);
Decoder load_decoder(const std::string& path);
void save_decoder(const Decoder& dec, const std::string& path);

}  // namespace lpf
