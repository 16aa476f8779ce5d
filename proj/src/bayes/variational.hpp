#pragma once

#include "common/random.hpp"
#include "diffcore/array.hpp"
#include "diffcore/tape.hpp"

namespace pbcnn::bayes {

using diffcore::Array;

/// Mean-field Gaussian posterior over one weight array. The scale is
/// parameterized as sigma = softplus(rho) so rho is unconstrained.
struct GaussianVariational {
  Array mu;
  Array rho;

  Array sigma() const;
  std::size_t size() const { return mu.size(); }
};

struct PriorSpec {
  double mean = 0.0;
  double std = 1.0;
};

/// sigma = ln(1 + e^rho), overflow-safe.
Array softplus_sigma(const Array& rho);

/// Inverse of softplus; the rho giving a requested sigma > 0.
double rho_for_sigma(double sigma);

/// Closed-form sum over all weights of KL(N(mu, sigma^2) || N(prior.mean, prior.std^2)).
double kl_mean_field(const GaussianVariational& posterior, const PriorSpec& prior);

/// -sum_rows sum_i y_i ln(max(p_i, 1e-12)). Throws ContractError for a
/// label row that is not one-hot.
double nll_one_hot(const Array& probabilities, const Array& labels);

enum class KernelKind { dense, conv };

/// Random quantities of one Flipout evaluation. The Gaussian noise is
/// shared across the mini-batch; the sign vectors are per example.
struct FlipoutDraw {
  Array kernel_noise;   // extents of the kernel
  Array bias_noise;     // extents of the bias
  Array input_signs;    // [n, input features or channels]
  Array output_signs;   // [n, output features or channels]

  static FlipoutDraw sample(KernelKind kind, const diffcore::Extents& kernel_extents,
                            std::size_t batch, Rng& rng);
};

/// Tape nodes of one variational layer's kernel and bias posteriors.
struct LayerNodes {
  diffcore::NodeId kernel_mu, kernel_rho, bias_mu, bias_rho;
};

/// Flipout forward on a tape:
///   out = base(x, mu_k, mu_b + sigma_b*eps_b) + base(x * s, sigma_k * eps_k, 0) * r
diffcore::NodeId flipout_node(diffcore::Tape& tape, KernelKind kind, const LayerNodes& layer,
                              diffcore::NodeId input, const FlipoutDraw& draw);

/// One Flipout forward of a standalone layer, drawing noise and signs from `rng`.
Array flipout_forward(KernelKind kind, const GaussianVariational& kernel,
                      const GaussianVariational& bias, const Array& input, Rng& rng,
                      FlipoutDraw* draw_out = nullptr);

/// Deterministic forward with the posterior means only.
Array mean_forward(KernelKind kind, const GaussianVariational& kernel,
                   const GaussianVariational& bias, const Array& input);

/// Analytic KL of one posterior as a tape expression.
diffcore::NodeId kl_analytic_node(diffcore::Tape& tape, diffcore::NodeId mu, diffcore::NodeId rho,
                                  const PriorSpec& prior);

/// Single-sample estimate log q(w|theta) - log p(w) at w = mu + sigma * noise.
diffcore::NodeId kl_sample_node(diffcore::Tape& tape, diffcore::NodeId mu, diffcore::NodeId rho,
                                const Array& noise, const PriorSpec& prior);

}  // namespace pbcnn::bayes
