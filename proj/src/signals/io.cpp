#include "signals/io.hpp"

#include <fstream>
#include <json.hpp>
#include <string>

#include "common/binary_io.hpp"
#include "common/errors.hpp"

namespace pbcnn::signals {

namespace {
constexpr char kDatasetMagic[9] = "PBCNNSPG";

std::filesystem::path with_ext(const std::filesystem::path& stem, const char* ext) {
  std::filesystem::path p = stem;
  p += ext;
  return p;
}
}  // namespace

void write_signal_record(const std::filesystem::path& stem, const SignalRecord& record) {
  record.validate();
  {
    std::ofstream os(with_ext(stem, ".f32"), std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + with_ext(stem, ".f32").string());
    for (double v : record.samples) binary::write_le<float>(os, static_cast<float>(v));
  }
  nlohmann::json j{{"sample_rate", record.sample_rate},
                   {"class_label", record.class_label},
                   {"condition", record.condition}};
  std::ofstream js(with_ext(stem, ".json"), std::ios::trunc);
  if (!js) throw Error("cannot write " + with_ext(stem, ".json").string());
  js << j.dump(2) << '\n';
}

SignalRecord read_signal_record(const std::filesystem::path& stem) {
  std::ifstream js(with_ext(stem, ".json"));
  if (!js) throw Error("cannot read " + with_ext(stem, ".json").string());
  SignalRecord r;
  try {
    const auto j = nlohmann::json::parse(js);
    r.sample_rate = j.at("sample_rate").get<double>();
    r.class_label = j.at("class_label").get<std::int64_t>();
    r.condition = j.value("condition", std::string{});
  } catch (const nlohmann::json::exception& e) {
    throw Error(with_ext(stem, ".json").string() + ": " + e.what());
  }
  const auto raw = with_ext(stem, ".f32");
  std::ifstream is(raw, std::ios::binary);
  if (!is) throw Error("cannot read " + raw.string());
  const auto bytes = std::filesystem::file_size(raw);
  if (bytes % 4 != 0) throw Error(raw.string() + ": size is not a multiple of 4");
  r.samples.resize(bytes / 4);
  for (double& v : r.samples) v = binary::read_le<float>(is);
  r.validate();
  return r;
}

SignalRecord read_signal_csv(const std::filesystem::path& path, double sample_rate,
                             std::int64_t class_label, std::string condition) {
  std::ifstream is(path);
  if (!is) throw Error("cannot read " + path.string());
  SignalRecord r;
  r.sample_rate = sample_rate;
  r.class_label = class_label;
  r.condition = std::move(condition);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    try {
      r.samples.push_back(std::stod(line));
    } catch (const std::exception&) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": not a number");
    }
  }
  r.validate();
  return r;
}

void write_dataset_file(const std::filesystem::path& path, const LabeledArrays& set) {
  if (set.data.rank() < 2 || set.data.extent(0) != set.labels.size()) {
    throw ContractError("dataset file: data must be [count, ...] with one label per item");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw Error("cannot write " + path.string());
  binary::write_magic(os, kDatasetMagic);
  binary::write_le<std::uint32_t>(os, kDatasetVersion);
  binary::write_le<std::uint64_t>(os, set.labels.size());
  binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(set.data.rank() - 1));
  for (std::size_t a = 1; a < set.data.rank(); ++a) {
    binary::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(set.data.extent(a)));
  }
  for (double v : set.data.values()) binary::write_le<float>(os, static_cast<float>(v));
  for (std::uint32_t l : set.labels) binary::write_le<std::uint32_t>(os, l);
  if (!os) throw Error("failed writing " + path.string());
}

LabeledArrays read_dataset_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot read " + path.string());
  binary::expect_magic(is, kDatasetMagic, path.string());
  const auto version = binary::read_le<std::uint32_t>(is);
  if (version != kDatasetVersion) {
    throw Error(path.string() + ": unsupported dataset version " + std::to_string(version));
  }
  const auto count = binary::read_le<std::uint64_t>(is);
  const auto rank = binary::read_le<std::uint32_t>(is);
  diffcore::Extents e{static_cast<std::size_t>(count)};
  for (std::uint32_t a = 0; a < rank; ++a) e.push_back(binary::read_le<std::uint32_t>(is));
  LabeledArrays set{Array(e), std::vector<std::uint32_t>(count)};
  for (double& v : set.data.values()) v = binary::read_le<float>(is);
  for (auto& l : set.labels) l = binary::read_le<std::uint32_t>(is);
  return set;
}

}  // namespace pbcnn::signals
