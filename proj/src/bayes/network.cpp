#include "bayes/network.hpp"

#include <algorithm>

#include "common/errors.hpp"
#include "diffcore/kernels.hpp"

namespace pbcnn::bayes {

using diffcore::Extents;
using diffcore::NodeId;
using diffcore::Tape;

namespace {

// Images per chunk for tape-free inference.
constexpr std::size_t kInferenceChunk = 64;

KernelKind kernel_kind(LayerKind k) {
  return k == LayerKind::dense_flipout ? KernelKind::dense : KernelKind::conv;
}

Array slice_rows(const Array& a, std::size_t first, std::size_t count) {
  Extents e = a.extents();
  const std::size_t row = a.size() / e[0];
  e[0] = count;
  std::vector<double> data(a.data() + first * row, a.data() + (first + count) * row);
  return Array(std::move(e), std::move(data));
}

}  // namespace

NetworkSpec NetworkSpec::pbcnn(std::size_t num_classes) {
  NetworkSpec s;
  s.layers = {
      {LayerKind::conv_flipout, 32, 3}, {LayerKind::conv_flipout, 32, 3}, {LayerKind::pool, 0, 0},
      {LayerKind::conv_flipout, 64, 3}, {LayerKind::conv_flipout, 64, 3}, {LayerKind::pool, 0, 0},
      {LayerKind::flatten, 0, 0},       {LayerKind::dense_flipout, 100, 0},
      {LayerKind::dense_flipout, 100, 0}, {LayerKind::dense_flipout, num_classes, 0},
  };
  return s;
}

std::size_t NetworkSpec::num_classes() const {
  if (layers.empty() || layers.back().kind != LayerKind::dense_flipout) {
    throw ShapeError("network must end in a dense layer");
  }
  return layers.back().units;
}

std::vector<Extents> layer_extents(const NetworkSpec& spec) {
  if (spec.height == 0 || spec.width == 0 || spec.channels == 0) {
    throw ShapeError("network input extents must be positive");
  }
  std::vector<Extents> out;
  Extents cur{spec.height, spec.width, spec.channels};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    const std::string where = "layer " + std::to_string(i) + ": ";
    switch (l.kind) {
      case LayerKind::conv_flipout:
        if (cur.size() != 3) throw ShapeError(where + "convolution after flatten");
        if (l.units == 0 || l.kernel == 0 || l.kernel % 2 == 0) {
          throw ShapeError(where + "convolution needs units > 0 and an odd kernel");
        }
        cur = {cur[0], cur[1], l.units};
        break;
      case LayerKind::pool:
        if (cur.size() != 3 || cur[0] < 2 || cur[1] < 2) {
          throw ShapeError(where + "pooling needs a spatial input of at least 2x2");
        }
        cur = {cur[0] / 2, cur[1] / 2, cur[2]};
        break;
      case LayerKind::flatten:
        if (cur.size() != 3) throw ShapeError(where + "flatten of a flat input");
        cur = {diffcore::element_count(cur)};
        break;
      case LayerKind::dense_flipout:
        if (cur.size() != 1) throw ShapeError(where + "dense layer needs a flattened input");
        if (l.units == 0) throw ShapeError(where + "dense layer needs units > 0");
        cur = {l.units};
        break;
      default:
        throw ShapeError(where + "unknown layer kind");
    }
    out.push_back(cur);
  }
  if (out.empty() || out.back().size() != 1 || spec.layers.back().kind != LayerKind::dense_flipout) {
    throw ShapeError("network must end in a dense layer");
  }
  return out;
}

PbcnnModel::PbcnnModel(NetworkSpec spec, PriorSpec prior, std::vector<VariationalLayer> layers,
                       bool trained)
    : spec_(std::move(spec)), prior_(prior), layers_(std::move(layers)), trained_(trained) {
  const auto extents = layer_extents(spec_);
  const std::size_t parametric = static_cast<std::size_t>(
      std::count_if(spec_.layers.begin(), spec_.layers.end(),
                    [](const LayerSpec& l) { return l.parametric(); }));
  if (layers_.size() != parametric) {
    throw ShapeError("model has " + std::to_string(layers_.size()) + " parametric layers, spec " +
                     std::to_string(parametric));
  }
  if (!(prior_.std > 0.0)) throw ContractError("prior std must be positive");
  std::size_t p = 0;
  Extents in{spec_.height, spec_.width, spec_.channels};
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const LayerSpec& l = spec_.layers[i];
    if (l.parametric()) {
      const VariationalLayer& v = layers_[p++];
      Extents k = l.kind == LayerKind::conv_flipout ? Extents{l.kernel, l.kernel, in.back(), l.units}
                                                    : Extents{in[0], l.units};
      if (!(v.spec == l) || v.kernel.mu.extents() != k || v.kernel.rho.extents() != k ||
          v.bias.mu.extents() != Extents{l.units} || v.bias.rho.extents() != Extents{l.units}) {
        throw ShapeError("layer " + std::to_string(i) + " posterior extents do not match spec");
      }
    }
    in = extents[i];
  }
}

ParameterCount PbcnnModel::parameter_count() const {
  ParameterCount c;
  for (const auto& l : layers_) c.frequentist += l.kernel.size() + l.bias.size();
  c.variational = 2 * c.frequentist;
  return c;
}

double PbcnnModel::kl_total() const {
  double total = 0.0;
  for (const auto& l : layers_) {
    total += kl_mean_field(l.kernel, prior_) + kl_mean_field(l.bias, prior_);
  }
  return total;
}

PbcnnModel build_pbcnn(const NetworkSpec& spec, const PriorSpec& prior, std::uint64_t seed,
                       const InitConfig& init) {
  const auto extents = layer_extents(spec);
  Rng rng(seed);
  const double rho0 = rho_for_sigma(init.initial_sigma);
  auto make = [&](Extents e) {
    GaussianVariational g{Array(e), Array(e, rho0)};
    for (double& v : g.mu.values()) v = rng.normal(0.0, init.mu_std);
    return g;
  };
  std::vector<VariationalLayer> layers;
  Extents in{spec.height, spec.width, spec.channels};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (l.kind == LayerKind::conv_flipout) {
      layers.push_back({l, make({l.kernel, l.kernel, in.back(), l.units}), make({l.units})});
    } else if (l.kind == LayerKind::dense_flipout) {
      layers.push_back({l, make({in[0], l.units}), make({l.units})});
    }
    in = extents[i];
  }
  return PbcnnModel(spec, prior, std::move(layers));
}

namespace {

void check_images(const NetworkSpec& spec, const Array& images) {
  if (images.rank() != 4 || images.extent(1) != spec.height || images.extent(2) != spec.width ||
      images.extent(3) != spec.channels) {
    throw ShapeError("images " + diffcore::describe(images.extents()) + " do not match network input [n," +
                     std::to_string(spec.height) + "," + std::to_string(spec.width) + "," +
                     std::to_string(spec.channels) + "]");
  }
}

Array forward_chunk(const NetworkSpec& spec, const std::vector<std::pair<Array, Array>>& weights,
                    Array x) {
  std::size_t p = 0;
  const std::size_t last = spec.layers.size() - 1;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::conv_flipout:
        x = diffcore::relu(diffcore::conv2d(x, weights[p].first, weights[p].second));
        ++p;
        break;
      case LayerKind::pool:
        x = diffcore::maxpool2d(x);
        break;
      case LayerKind::flatten: {
        const std::size_t n = x.extent(0);
        x = x.reshaped({n, x.size() / n});
        break;
      }
      case LayerKind::dense_flipout:
        x = diffcore::dense_affine(x, weights[p].first, weights[p].second);
        if (i != last) x = diffcore::relu(x);
        ++p;
        break;
    }
  }
  return diffcore::softmax(x);
}

}  // namespace

Array predict_with_weights(const NetworkSpec& spec,
                           const std::vector<std::pair<Array, Array>>& weights,
                           const Array& images) {
  check_images(spec, images);
  const std::size_t n = images.extent(0);
  const std::size_t classes = spec.num_classes();
  Array out({n, classes});
  for (std::size_t first = 0; first < n; first += kInferenceChunk) {
    const std::size_t count = std::min(kInferenceChunk, n - first);
    const Array probs = forward_chunk(spec, weights, slice_rows(images, first, count));
    std::copy(probs.data(), probs.data() + probs.size(), out.data() + first * classes);
  }
  return out;
}

Array predict_mean(const PbcnnModel& model, const Array& images) {
  std::vector<std::pair<Array, Array>> weights;
  for (const auto& l : model.layers()) weights.emplace_back(l.kernel.mu, l.bias.mu);
  return predict_with_weights(model.spec(), weights, images);
}

std::vector<std::pair<Array, Array>> sample_weights(const PbcnnModel& model, Rng& rng) {
  std::vector<std::pair<Array, Array>> weights;
  auto draw = [&](const GaussianVariational& g) {
    Array w = g.mu;
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += diffcore::softplus(g.rho[i]) * rng.normal();
    return w;
  };
  for (const auto& l : model.layers()) {
    Array k = draw(l.kernel);
    Array b = draw(l.bias);
    weights.emplace_back(std::move(k), std::move(b));
  }
  return weights;
}

TapeForward forward_on_tape(Tape& tape, const PbcnnModel& model, const Array& images, Rng& rng) {
  check_images(model.spec(), images);
  TapeForward f;
  for (const auto& l : model.layers()) {
    f.layer_nodes.push_back({tape.parameter(l.kernel.mu), tape.parameter(l.kernel.rho),
                             tape.parameter(l.bias.mu), tape.parameter(l.bias.rho)});
  }
  const std::size_t n = images.extent(0);
  NodeId x = tape.constant(images);
  std::size_t p = 0;
  const auto& layers = model.spec().layers;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    switch (l.kind) {
      case LayerKind::conv_flipout:
      case LayerKind::dense_flipout: {
        const KernelKind kind = kernel_kind(l.kind);
        f.draws.push_back(
            FlipoutDraw::sample(kind, model.layers()[p].kernel.mu.extents(), n, rng));
        x = flipout_node(tape, kind, f.layer_nodes[p], x, f.draws.back());
        if (i + 1 != layers.size()) x = tape.relu(x);
        ++p;
        break;
      }
      case LayerKind::pool:
        x = tape.maxpool2d(x);
        break;
      case LayerKind::flatten:
        x = tape.reshape(x, {n, tape.value(x).size() / n});
        break;
    }
  }
  f.probabilities = tape.softmax(x);
  return f;
}

}  // namespace pbcnn::bayes
