#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bayes/variational.hpp"

namespace pbcnn::bayes {

enum class LayerKind : std::uint32_t { conv_flipout = 1, pool = 2, flatten = 3, dense_flipout = 4 };

struct LayerSpec {
  LayerKind kind;
  std::size_t units = 0;   // feature maps or output features
  std::size_t kernel = 0;  // square kernel side for convolutions

  bool parametric() const {
    return kind == LayerKind::conv_flipout || kind == LayerKind::dense_flipout;
  }
  bool operator==(const LayerSpec&) const = default;
};

struct NetworkSpec {
  std::size_t height = 33;
  std::size_t width = 33;
  std::size_t channels = 1;
  std::vector<LayerSpec> layers;

  /// conv(32) conv(32) pool conv(64) conv(64) pool flatten dense(100) dense(100) dense(classes)
  static NetworkSpec pbcnn(std::size_t num_classes);

  std::size_t num_classes() const;
  bool operator==(const NetworkSpec&) const = default;
};

/// Kernel and bias posteriors of one Flipout layer.
struct VariationalLayer {
  LayerSpec spec;
  GaussianVariational kernel;
  GaussianVariational bias;
};

struct ParameterCount {
  std::size_t frequentist = 0;  // one value per weight and bias
  std::size_t variational = 0;  // mu and rho per weight and bias
};

/// Probabilistic Bayesian CNN: every conv and dense layer is a mean-field
/// Gaussian Flipout layer.
class PbcnnModel {
public:
  PbcnnModel(NetworkSpec spec, PriorSpec prior, std::vector<VariationalLayer> layers,
             bool trained = false);

  const NetworkSpec& spec() const noexcept { return spec_; }
  const PriorSpec& prior() const noexcept { return prior_; }
  const std::vector<VariationalLayer>& layers() const noexcept { return layers_; }
  std::vector<VariationalLayer>& mutable_layers() noexcept { return layers_; }

  bool trained() const noexcept { return trained_; }
  void set_trained(bool trained) noexcept { trained_ = trained; }

  ParameterCount parameter_count() const;
  double kl_total() const;

private:
  NetworkSpec spec_;
  PriorSpec prior_;
  std::vector<VariationalLayer> layers_;  // parametric layers only, in spec order
  bool trained_;
};

struct InitConfig {
  double mu_std = 0.05;
  double initial_sigma = 0.01;
};

/// Builds the model and draws its initial posterior. Throws ShapeError when
/// a layer cannot consume its predecessor's output.
PbcnnModel build_pbcnn(const NetworkSpec& spec, const PriorSpec& prior, std::uint64_t seed,
                       const InitConfig& init = {});

/// Output extents of every layer for a single image, validated.
std::vector<diffcore::Extents> layer_extents(const NetworkSpec& spec);

/// Class probabilities [n, N] using posterior means only.
Array predict_mean(const PbcnnModel& model, const Array& images);

/// Draws one full weight set w = mu + sigma * eps per layer.
std::vector<std::pair<Array, Array>> sample_weights(const PbcnnModel& model, Rng& rng);

/// Class probabilities [n, N] for explicit per-layer (kernel, bias) weights.
Array predict_with_weights(const NetworkSpec& spec,
                           const std::vector<std::pair<Array, Array>>& weights,
                           const Array& images);

/// Forward pass recorded on a tape with Flipout perturbations.
struct TapeForward {
  diffcore::NodeId probabilities;
  std::vector<LayerNodes> layer_nodes;
  std::vector<FlipoutDraw> draws;
};

TapeForward forward_on_tape(diffcore::Tape& tape, const PbcnnModel& model, const Array& images,
                            Rng& rng);

}  // namespace pbcnn::bayes
