#include "bayes/checkpoint.hpp"

#include <fstream>

#include "common/binary_io.hpp"
#include "common/errors.hpp"

namespace pbcnn::bayes {

namespace {
constexpr char kMagic[9] = "PBCNNMDL";

void write_array(std::ostream& os, const Array& a) {
  binary::write_le<std::uint64_t>(os, a.size());
  for (double v : a.values()) binary::write_le<double>(os, v);
}

Array read_array(std::istream& is, const diffcore::Extents& extents) {
  const auto count = binary::read_le<std::uint64_t>(is);
  if (count != diffcore::element_count(extents)) {
    throw Error("checkpoint: array length " + std::to_string(count) + " does not match " +
                diffcore::describe(extents));
  }
  Array a(extents);
  for (double& v : a.values()) v = binary::read_le<double>(is);
  return a;
}
}  // namespace

void save_checkpoint(const PbcnnModel& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot open checkpoint for writing: " + path.string());
  binary::write_magic(os, kMagic);
  binary::write_le<std::uint32_t>(os, kCheckpointVersion);
  binary::write_le<std::uint32_t>(os, model.trained() ? 1u : 0u);
  binary::write_le<double>(os, model.prior().mean);
  binary::write_le<double>(os, model.prior().std);
  const NetworkSpec& spec = model.spec();
  binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(spec.height));
  binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(spec.width));
  binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(spec.channels));
  binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(spec.layers.size()));
  for (const LayerSpec& l : spec.layers) {
    binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(l.kind));
    binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(l.units));
    binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(l.kernel));
  }
  for (const VariationalLayer& l : model.layers()) {
    write_array(os, l.kernel.mu);
    write_array(os, l.kernel.rho);
    write_array(os, l.bias.mu);
    write_array(os, l.bias.rho);
  }
  if (!os) throw Error("failed writing checkpoint: " + path.string());
}

PbcnnModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint: " + path.string());
  binary::expect_magic(is, kMagic, "checkpoint " + path.string());
  const auto version = binary::read_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw Error("checkpoint: unsupported version " + std::to_string(version));
  }
  const bool trained = binary::read_le<std::uint32_t>(is) != 0;
  PriorSpec prior;
  prior.mean = binary::read_le<double>(is);
  prior.std = binary::read_le<double>(is);
  NetworkSpec spec;
  spec.height = binary::read_le<std::uint32_t>(is);
  spec.width = binary::read_le<std::uint32_t>(is);
  spec.channels = binary::read_le<std::uint32_t>(is);
  const auto layer_count = binary::read_le<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < layer_count; ++i) {
    LayerSpec l{};
    const auto kind = binary::read_le<std::uint32_t>(is);
    if (kind < 1 || kind > 4) throw Error("checkpoint: unknown layer kind " + std::to_string(kind));
    l.kind = static_cast<LayerKind>(kind);
    l.units = binary::read_le<std::uint32_t>(is);
    l.kernel = binary::read_le<std::uint32_t>(is);
    spec.layers.push_back(l);
  }
  const auto extents = layer_extents(spec);
  std::vector<VariationalLayer> layers;
  diffcore::Extents in{spec.height, spec.width, spec.channels};
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (l.parametric()) {
      const diffcore::Extents k = l.kind == LayerKind::conv_flipout
                                      ? diffcore::Extents{l.kernel, l.kernel, in.back(), l.units}
                                      : diffcore::Extents{in[0], l.units};
      VariationalLayer v{l, {}, {}};
      v.kernel.mu = read_array(is, k);
      v.kernel.rho = read_array(is, k);
      v.bias.mu = read_array(is, {l.units});
      v.bias.rho = read_array(is, {l.units});
      layers.push_back(std::move(v));
    }
    in = extents[i];
  }
  return PbcnnModel(std::move(spec), prior, std::move(layers), trained);
}

}  // namespace pbcnn::bayes
