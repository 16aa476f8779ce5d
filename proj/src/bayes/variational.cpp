#include "bayes/variational.hpp"

#include <algorithm>
#include <cmath>

#include "common/errors.hpp"
#include "diffcore/kernels.hpp"

namespace pbcnn::bayes {

using diffcore::Extents;
using diffcore::NodeId;
using diffcore::Tape;

Array GaussianVariational::sigma() const { return softplus_sigma(rho); }

Array softplus_sigma(const Array& rho) {
  Array sigma = rho;
  for (double& v : sigma.values()) v = diffcore::softplus(v);
  return sigma;
}

double rho_for_sigma(double sigma) {
  if (!(sigma > 0.0)) throw ContractError("rho_for_sigma: sigma must be positive");
  // ln(e^sigma - 1), stable for small sigma
  return sigma > 30.0 ? sigma + std::log1p(-std::exp(-sigma)) : std::log(std::expm1(sigma));
}

double kl_mean_field(const GaussianVariational& posterior, const PriorSpec& prior) {
  if (!(prior.std > 0.0)) throw ContractError("kl_mean_field: prior std must be positive");
  diffcore::require_same_extents(posterior.mu, posterior.rho, "kl_mean_field");
  const double prior_var = prior.std * prior.std;
  const double log_prior_std = std::log(prior.std);
  double total = 0.0;
  for (std::size_t i = 0; i < posterior.mu.size(); ++i) {
    const double sigma = diffcore::softplus(posterior.rho[i]);
    if (!(sigma > 0.0)) throw NumericError("kl_mean_field: nonpositive sigma");
    const double dm = posterior.mu[i] - prior.mean;
    total += log_prior_std - std::log(sigma) + (sigma * sigma + dm * dm) / (2.0 * prior_var) - 0.5;
  }
  return total;
}

double nll_one_hot(const Array& probabilities, const Array& labels) {
  Tape tape;
  return tape.value(tape.nll_one_hot(tape.constant(probabilities), labels)).item();
}

FlipoutDraw FlipoutDraw::sample(KernelKind kind, const Extents& kernel_extents, std::size_t batch,
                                Rng& rng) {
  FlipoutDraw d;
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  if (kind == KernelKind::dense) {
    if (kernel_extents.size() != 2) throw ShapeError("dense flipout kernel must be rank 2");
    in_features = kernel_extents[0];
    out_features = kernel_extents[1];
  } else {
    if (kernel_extents.size() != 4) throw ShapeError("conv flipout kernel must be rank 4");
    in_features = kernel_extents[2];
    out_features = kernel_extents[3];
  }
  d.kernel_noise = Array(kernel_extents);
  for (double& v : d.kernel_noise.values()) v = rng.normal();
  d.bias_noise = Array({out_features});
  for (double& v : d.bias_noise.values()) v = rng.normal();
  d.input_signs = Array({batch, in_features});
  for (double& v : d.input_signs.values()) v = rng.rademacher();
  d.output_signs = Array({batch, out_features});
  for (double& v : d.output_signs.values()) v = rng.rademacher();
  return d;
}

namespace {

// Broadcast per-example feature signs [n, c] over an activation of extents
// [n, c] or [n, h, w, c].
Array expand_signs(const Array& signs, const Extents& like) {
  Array out(like);
  const std::size_t n = signs.extent(0);
  const std::size_t c = signs.extent(1);
  if (like.front() != n || like.back() != c) {
    throw ShapeError("flipout signs " + diffcore::describe(signs.extents()) +
                     " do not match activation " + diffcore::describe(like));
  }
  const std::size_t per_example = out.size() / n;
  for (std::size_t e = 0; e < n; ++e) {
    const double* s = signs.data() + e * c;
    double* dst = out.data() + e * per_example;
    for (std::size_t i = 0; i < per_example; i += c) std::copy(s, s + c, dst + i);
  }
  return out;
}

NodeId base_op(Tape& tape, KernelKind kind, NodeId input, NodeId kernel, NodeId bias) {
  return kind == KernelKind::dense ? tape.dense_affine(input, kernel, bias)
                                   : tape.conv2d(input, kernel, bias);
}

}  // namespace

NodeId flipout_node(Tape& tape, KernelKind kind, const LayerNodes& layer, NodeId input,
                    const FlipoutDraw& draw) {
  const Extents in_extents = tape.value(input).extents();
  if (in_extents.size() != (kind == KernelKind::dense ? 2u : 4u)) {
    throw ShapeError("flipout input must be batched, got " + diffcore::describe(in_extents));
  }
  const NodeId bias_sigma = tape.softplus(layer.bias_rho);
  const NodeId bias = tape.add(layer.bias_mu, tape.mul(bias_sigma, tape.constant(draw.bias_noise)));
  const NodeId base = base_op(tape, kind, input, layer.kernel_mu, bias);

  const NodeId kernel_sigma = tape.softplus(layer.kernel_rho);
  const NodeId delta = tape.mul(kernel_sigma, tape.constant(draw.kernel_noise));
  const NodeId flipped_in = tape.mul(input, tape.constant(expand_signs(draw.input_signs, in_extents)));
  const std::size_t cout = tape.value(layer.kernel_mu).extents().back();
  const NodeId perturb = base_op(tape, kind, flipped_in, delta, tape.constant(Array({cout})));
  const Array out_signs = expand_signs(draw.output_signs, tape.value(perturb).extents());
  return tape.add(base, tape.mul(perturb, tape.constant(out_signs)));
}

Array flipout_forward(KernelKind kind, const GaussianVariational& kernel,
                      const GaussianVariational& bias, const Array& input, Rng& rng,
                      FlipoutDraw* draw_out) {
  Tape tape;
  const LayerNodes nodes{tape.constant(kernel.mu), tape.constant(kernel.rho),
                         tape.constant(bias.mu), tape.constant(bias.rho)};
  const NodeId x = tape.constant(input);
  FlipoutDraw draw = FlipoutDraw::sample(kind, kernel.mu.extents(), input.extent(0), rng);
  Array out = tape.value(flipout_node(tape, kind, nodes, x, draw));
  if (draw_out) *draw_out = std::move(draw);
  return out;
}

Array mean_forward(KernelKind kind, const GaussianVariational& kernel,
                   const GaussianVariational& bias, const Array& input) {
  return kind == KernelKind::dense ? diffcore::dense_affine(input, kernel.mu, bias.mu)
                                   : diffcore::conv2d(input, kernel.mu, bias.mu);
}

NodeId kl_analytic_node(Tape& tape, NodeId mu, NodeId rho, const PriorSpec& prior) {
  if (!(prior.std > 0.0)) throw ContractError("prior std must be positive");
  const double n = static_cast<double>(tape.value(mu).size());
  const NodeId sigma = tape.softplus(rho);
  const NodeId log_sigma = tape.sum(tape.log(sigma));
  const NodeId spread = tape.add(tape.square(sigma), tape.square(tape.add_scalar(mu, -prior.mean)));
  const NodeId quad = tape.scale(tape.sum(spread), 1.0 / (2.0 * prior.std * prior.std));
  return tape.add_scalar(tape.sub(quad, log_sigma), n * (std::log(prior.std) - 0.5));
}

NodeId kl_sample_node(Tape& tape, NodeId mu, NodeId rho, const Array& noise,
                      const PriorSpec& prior) {
  if (!(prior.std > 0.0)) throw ContractError("prior std must be positive");
  diffcore::require_same_extents(tape.value(mu), noise, "kl_sample_node");
  const double n = static_cast<double>(noise.size());
  double noise_energy = 0.0;
  for (double e : noise.values()) noise_energy += e * e;
  const NodeId sigma = tape.softplus(rho);
  const NodeId w = tape.add(mu, tape.mul(sigma, tape.constant(noise)));
  // log q(w) - log p(w); the 0.5 ln(2 pi) terms cancel
  const NodeId log_sigma = tape.sum(tape.log(sigma));
  const NodeId quad = tape.scale(tape.sum(tape.square(tape.add_scalar(w, -prior.mean))),
                                 1.0 / (2.0 * prior.std * prior.std));
  return tape.add_scalar(tape.sub(quad, log_sigma), n * std::log(prior.std) - 0.5 * noise_energy);
}

}  // namespace pbcnn::bayes
