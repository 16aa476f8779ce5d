#include "bayes/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "common/errors.hpp"
#include "diffcore/adam.hpp"

namespace pbcnn::bayes {

using diffcore::NodeId;
using diffcore::Tape;

void Dataset::validate() const {
  if (images.rank() != 4) throw ContractError("dataset images must be [n,h,w,c]");
  if (labels.rank() != 2 || labels.extent(0) != images.extent(0)) {
    throw ContractError("dataset labels must be [n,N] with one row per image");
  }
  for (double v : images.values()) {
    if (!(v >= -1.0 && v <= 1.0)) throw ContractError("dataset pixel outside [-1,1]");
  }
  const std::size_t n = labels.extent(0);
  const std::size_t k = labels.extent(1);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t ones = 0;
    for (std::size_t c = 0; c < k; ++c) {
      const double y = labels[r * k + c];
      if (y == 1.0) ++ones;
      else if (y != 0.0) ones = 2;
    }
    if (ones != 1) throw ContractError("label row " + std::to_string(r) + " is not one-hot");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  const std::size_t n = size();
  const std::size_t pixels = n ? images.size() / n : 0;
  const std::size_t k = num_classes();
  diffcore::Extents ie = images.extents();
  ie[0] = rows.size();
  Dataset out{Array(ie), Array({rows.size(), k})};
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= n) throw ContractError("dataset subset row out of range");
    std::copy_n(images.data() + rows[i] * pixels, pixels, out.images.data() + i * pixels);
    std::copy_n(labels.data() + rows[i] * k, k, out.labels.data() + i * k);
  }
  return out;
}

std::vector<std::size_t> Dataset::class_indices() const {
  const std::size_t k = num_classes();
  std::vector<std::size_t> out(size());
  for (std::size_t r = 0; r < out.size(); ++r) {
    const double* row = labels.data() + r * k;
    out[r] = static_cast<std::size_t>(std::max_element(row, row + k) - row);
  }
  return out;
}

Dataset Dataset::from_indices(Array images, std::span<const std::uint32_t> classes,
                              std::size_t num_classes) {
  Array labels({classes.size(), num_classes});
  for (std::size_t r = 0; r < classes.size(); ++r) {
    if (classes[r] >= num_classes) throw ContractError("class index out of range");
    labels[r * num_classes + classes[r]] = 1.0;
  }
  return Dataset{std::move(images), std::move(labels)};
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ContractError("epochs must be >= 1");
  if (batch_size < 1) throw ContractError("batch_size must be >= 1");
  if (kl_scale && !(*kl_scale > 0.0)) throw ContractError("kl_scale must be > 0");
  if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be > 0");
}

namespace {

struct TapeLoss {
  NodeId loss;
  TapeForward forward;
  double kl = 0.0;
  double nll = 0.0;
  double kl_scale = 1.0;
};

TapeLoss build_loss(Tape& tape, const PbcnnModel& model, const Dataset& batch,
                    const TrainConfig& config, std::size_t dataset_size, Rng& rng) {
  if (batch.size() == 0) throw ContractError("elbo_loss: empty batch");
  if (dataset_size < batch.size()) throw ContractError("elbo_loss: dataset smaller than batch");
  if (batch.num_classes() != model.spec().num_classes()) {
    throw ContractError("elbo_loss: label width does not match the model head");
  }
  TapeLoss t;
  t.forward = forward_on_tape(tape, model, batch.images, rng);
  std::vector<NodeId> terms;
  for (std::size_t p = 0; p < t.forward.layer_nodes.size(); ++p) {
    const LayerNodes& ln = t.forward.layer_nodes[p];
    if (config.kl_mode == KlMode::analytic) {
      terms.push_back(kl_analytic_node(tape, ln.kernel_mu, ln.kernel_rho, model.prior()));
      terms.push_back(kl_analytic_node(tape, ln.bias_mu, ln.bias_rho, model.prior()));
    } else {
      const FlipoutDraw& d = t.forward.draws[p];
      terms.push_back(kl_sample_node(tape, ln.kernel_mu, ln.kernel_rho, d.kernel_noise, model.prior()));
      terms.push_back(kl_sample_node(tape, ln.bias_mu, ln.bias_rho, d.bias_noise, model.prior()));
    }
  }
  NodeId kl = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) kl = tape.add(kl, terms[i]);
  const NodeId nll = tape.nll_one_hot(t.forward.probabilities, batch.labels);
  t.kl_scale = config.kl_scale.value_or(static_cast<double>(batch.size()) /
                                        static_cast<double>(dataset_size));
  t.loss = tape.add(tape.scale(kl, t.kl_scale), nll);
  t.kl = tape.value(kl).item();
  t.nll = tape.value(nll).item();
  return t;
}

ElboResult to_result(const Tape& tape, TapeLoss& t) {
  return ElboResult{tape.value(t.loss).item(), t.kl, t.nll, t.kl_scale,
                    tape.value(t.forward.probabilities), std::move(t.forward.draws)};
}

}  // namespace

ElboResult elbo_loss(const PbcnnModel& model, const Dataset& batch, const TrainConfig& config,
                     std::size_t dataset_size, Rng& rng) {
  Tape tape;
  TapeLoss t = build_loss(tape, model, batch, config, dataset_size, rng);
  return to_result(tape, t);
}

ElboGradient elbo_gradient(const PbcnnModel& model, const Dataset& batch,
                           const TrainConfig& config, std::size_t dataset_size, Rng& rng) {
  Tape tape;
  TapeLoss t = build_loss(tape, model, batch, config, dataset_size, rng);
  const diffcore::Gradients g = tape.gradient(t.loss);
  ElboGradient out;
  for (const LayerNodes& ln : t.forward.layer_nodes) {
    for (NodeId id : {ln.kernel_mu, ln.kernel_rho, ln.bias_mu, ln.bias_rho}) {
      out.gradients.push_back(g[id]);
    }
  }
  out.value = to_result(tape, t);
  return out;
}

double accuracy(const Array& probabilities, const Array& labels) {
  diffcore::require_same_extents(probabilities, labels, "accuracy");
  const std::size_t n = labels.extent(0);
  const std::size_t k = labels.extent(1);
  if (n == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* p = probabilities.data() + r * k;
    const double* y = labels.data() + r * k;
    if (std::max_element(p, p + k) - p == std::max_element(y, y + k) - y) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

TrainResult train(PbcnnModel model, const Dataset& train_data, const Dataset& val_data,
                  const TrainConfig& config) {
  config.validate();
  if (train_data.size() == 0 || val_data.size() == 0) {
    throw ContractError("train: datasets must be nonempty");
  }
  const std::size_t classes = model.spec().num_classes();
  if (train_data.num_classes() != classes || val_data.num_classes() != classes) {
    throw ContractError("train: dataset classes do not match the model head");
  }
  std::vector<diffcore::AdamState> states;
  const diffcore::AdamConfig adam{config.learning_rate};
  for (const auto& l : model.layers()) {
    for (const Array* a : {&l.kernel.mu, &l.kernel.rho, &l.bias.mu, &l.bias.rho}) {
      states.push_back(diffcore::AdamState::for_parameter(*a, adam));
    }
  }
  const std::size_t n = train_data.size();
  TrainResult result{model, {}};
  PbcnnModel& m = result.model;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const std::uint64_t epoch_seed = derive_seed(config.seed, epoch);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(epoch_seed);
    std::shuffle(order.begin(), order.end(), shuffle_rng.engine());

    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t first = 0; first < n; first += config.batch_size, ++batch_index) {
      const std::size_t count = std::min(config.batch_size, n - first);
      const Dataset batch =
          train_data.subset(std::span<const std::size_t>(order.data() + first, count));
      Rng rng(derive_seed(epoch_seed, batch_index + 1));
      ElboGradient eg;
      try {
        eg = elbo_gradient(m, batch, config, n, rng);
      } catch (const NumericError& e) {
        throw TrainingError(epoch, e.what());
      }
      if (!std::isfinite(eg.value.loss)) throw TrainingError(epoch, "non-finite loss");
      for (const Array& g : eg.gradients) {
        if (!diffcore::all_finite(g)) throw TrainingError(epoch, "non-finite gradient");
      }
      std::size_t s = 0;
      for (auto& l : m.mutable_layers()) {
        for (Array* a : {&l.kernel.mu, &l.kernel.rho, &l.bias.mu, &l.bias.rho}) {
          diffcore::adam_step(states[s], *a, eg.gradients[s]);
          ++s;
        }
      }
      epoch_loss += eg.value.loss;
    }
    const double val_acc = accuracy(predict_mean(m, val_data.images), val_data.labels);
    result.history.push_back({epoch, epoch_loss, val_acc});
    if (config.on_epoch) config.on_epoch(result.history.back());
  }
  m.set_trained(true);
  return result;
}

}  // namespace pbcnn::bayes
