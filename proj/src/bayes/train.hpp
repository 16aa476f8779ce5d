#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "bayes/network.hpp"

namespace pbcnn::bayes {

/// Images [n,h,w,c] in [-1,1] with one-hot labels [n,N].
struct Dataset {
  Array images;
  Array labels;

  std::size_t size() const { return images.rank() ? images.extent(0) : 0; }
  std::size_t num_classes() const { return labels.rank() == 2 ? labels.extent(1) : 0; }

  /// Throws ContractError on a non-one-hot row, out-of-range pixel or
  /// mismatched row counts.
  void validate() const;
  Dataset subset(std::span<const std::size_t> rows) const;
  std::vector<std::size_t> class_indices() const;

  static Dataset from_indices(Array images, std::span<const std::uint32_t> classes,
                              std::size_t num_classes);
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;  // sum of mini-batch losses over the epoch
  double validation_accuracy = 0.0;
};

enum class KlMode { analytic, monte_carlo };

struct TrainConfig {
  std::size_t epochs = 100;
  double learning_rate = 1e-3;
  std::size_t batch_size = 128;
  /// Weight of the KL term per mini-batch; unset means batch_size / dataset_size.
  std::optional<double> kl_scale;
  std::uint64_t seed = 0;
  KlMode kl_mode = KlMode::analytic;
  /// Progress hook, called after each epoch.
  std::function<void(const EpochRecord&)> on_epoch;

  void validate() const;
};

struct ElboResult {
  double loss = 0.0;
  double kl = 0.0;   // unscaled KL term (analytic or single-sample)
  double nll = 0.0;
  double kl_scale = 1.0;
  Array probabilities;
  std::vector<FlipoutDraw> draws;
};

/// kl_scale * KL + NLL(batch) for one stochastic forward pass. `dataset_size`
/// sets the default KL weight.
ElboResult elbo_loss(const PbcnnModel& model, const Dataset& batch, const TrainConfig& config,
                     std::size_t dataset_size, Rng& rng);

/// Loss value together with gradients in layer order:
/// kernel mu, kernel rho, bias mu, bias rho for each parametric layer.
struct ElboGradient {
  ElboResult value;
  std::vector<Array> gradients;
};

ElboGradient elbo_gradient(const PbcnnModel& model, const Dataset& batch,
                           const TrainConfig& config, std::size_t dataset_size, Rng& rng);

struct TrainResult {
  PbcnnModel model;
  std::vector<EpochRecord> history;
};

/// Adam on the ELBO. Throws TrainingError with the epoch index when the loss
/// or a gradient becomes non-finite.
TrainResult train(PbcnnModel model, const Dataset& train_data, const Dataset& val_data,
                  const TrainConfig& config);

/// Fraction of rows whose argmax probability matches the one-hot label.
double accuracy(const Array& probabilities, const Array& labels);

}  // namespace pbcnn::bayes
