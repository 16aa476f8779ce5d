#include "pipeline/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <sstream>

#include "bayes/checkpoint.hpp"
#include "common/errors.hpp"
#include "common/random.hpp"
#include "gate/calibration.hpp"
#include "gate/metrics.hpp"
#include "signals/io.hpp"
#include "signals/synth.hpp"

namespace pbcnn::pipeline {

namespace fs = std::filesystem;
using diffcore::Array;
using diffcore::Extents;
using nlohmann::json;

inline constexpr const char* kToolkitVersion = "1.0.0";

namespace {

// Independent RNG streams per stage so that re-running one stage never
// shifts the draws of another.
enum Stream : std::uint64_t {
  kSynth = 1,
  kSplit = 2,
  kInit = 3,
  kTrain = 4,
  kCalibrateMc = 5,
  kUniform = 6,
  kFaults = 7,
  kEvaluateMc = 8,
};

fs::path signals_dir(const fs::path& out) { return out / "signals"; }
fs::path data_dir(const fs::path& out) { return out / "data"; }
fs::path model_path(const fs::path& out) { return out / "model" / "model.ckpt"; }
fs::path history_path(const fs::path& out) { return out / "model" / "history.csv"; }
fs::path ood_dir(const fs::path& out) { return out / "ood"; }
fs::path uncertainty_path(const fs::path& out, const std::string& set) {
  return out / "uncertainty" / (set + ".csv");
}
fs::path marker_path(const fs::path& out, Stage s) { return out / "stages" / (stage_id(s) + ".done"); }

std::string fault_set_name(std::size_t i, const signals::FaultSpec& f) {
  return "fault" + std::to_string(i) + "_" + signals::fault_kind_id(f.kind);
}

void require_file(const fs::path& p) {
  if (!fs::exists(p)) throw Error("missing input " + p.string());
}

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw Error("cannot write " + p.string());
  os << text;
  if (!os) throw Error("failed writing " + p.string());
}

json read_json(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw Error("missing artifact " + p.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw Error(p.string() + ": " + e.what());
  }
}

/// Dense index of every original class label, or -1 when held out.
std::vector<std::int64_t> class_map(const ExperimentConfig& c) {
  std::vector<std::int64_t> m(c.total_classes(), -1);
  const auto known = c.known_classes();
  for (std::size_t i = 0; i < known.size(); ++i) m[known[i]] = static_cast<std::int64_t>(i);
  return m;
}

std::size_t healthy_index(const ExperimentConfig& c) {
  return static_cast<std::size_t>(class_map(c)[c.data.healthy_class]);
}

signals::LabeledArrays stack(const std::vector<Array>& items, const std::vector<std::uint32_t>& labels,
                             const std::vector<std::size_t>& order) {
  Extents e{order.size()};
  if (!items.empty()) {
    for (auto x : items.front().extents()) e.push_back(x);
  } else {
    e.push_back(0);
  }
  signals::LabeledArrays out{Array(e), {}};
  out.labels.reserve(order.size());
  const std::size_t stride = items.empty() ? 0 : items.front().size();
  double* dst = out.data.data();
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Array& src = items[order[i]];
    std::copy(src.values().begin(), src.values().end(), dst + i * stride);
    out.labels.push_back(labels[order[i]]);
  }
  return out;
}

/// First `limit` items (all when 0 or larger than the set).
signals::LabeledArrays prefix(const signals::LabeledArrays& set, std::size_t limit) {
  const std::size_t n = (limit == 0 || limit >= set.size()) ? set.size() : limit;
  if (n == set.size()) return set;
  Extents e = set.data.extents();
  const std::size_t stride = set.data.size() / std::max<std::size_t>(e[0], 1);
  e[0] = n;
  std::vector<double> values(set.data.values().begin(),
                             set.data.values().begin() + static_cast<std::ptrdiff_t>(n * stride));
  return {Array(e, std::move(values)), std::vector<std::uint32_t>(set.labels.begin(), set.labels.begin() + static_cast<std::ptrdiff_t>(n))};
}

bayes::Dataset to_dataset(const signals::LabeledArrays& set, std::size_t classes) {
  return bayes::Dataset::from_indices(set.data, set.labels, classes);
}

std::vector<uq::UncertaintyRecord> mc_records(const bayes::PbcnnModel& model, const Array& images,
                                              const std::vector<std::int64_t>& true_labels,
                                              std::size_t passes, std::uint64_t seed) {
  const auto samples = uq::predict_mc_batch(model, images, passes, seed);
  std::vector<uq::UncertaintyRecord> out;
  out.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.push_back({i, true_labels[i], uq::summarize(samples[i])});
  }
  return out;
}

std::vector<std::int64_t> widen(const std::vector<std::uint32_t>& labels) {
  return {labels.begin(), labels.end()};
}

json rounded(double v) {
  if (!std::isfinite(v)) return gate::format_number(v);
  return v;
}

/// Per-measure AUROC and gate metrics of an ID-vs-OOD pairing.
json evaluate_source(const std::vector<uq::UncertaintyRecord>& id, const std::vector<uq::UncertaintyRecord>& ood,
                     const gate::ThresholdTable& table, std::size_t healthy, std::size_t classes,
                     const fs::path& roc_prefix) {
  std::vector<bool> is_id(id.size(), true);
  is_id.resize(id.size() + ood.size(), false);
  std::vector<std::int64_t> labels;
  labels.reserve(is_id.size());
  for (const auto& r : id) labels.push_back(r.true_label);
  for (std::size_t i = 0; i < ood.size(); ++i) labels.push_back(-1);

  json measures = json::array();
  for (std::size_t mi = 0; mi < table.measures.size(); ++mi) {
    const auto m = table.measures[mi];
    std::vector<double> scores;
    scores.reserve(is_id.size());
    for (const auto& r : id) scores.push_back(r.summary.value(m));
    for (const auto& r : ood) scores.push_back(r.summary.value(m));
    const auto roc = gate::roc_auroc(scores, is_id);
    fs::path roc_path = roc_prefix;
    roc_path += "_" + uq::measure_id(m) + ".csv";
    gate::write_roc_csv(roc_path, roc);

    json levels = json::array();
    for (std::size_t ri = 0; ri < table.risk_levels.size(); ++ri) {
      const double t = table.thresholds[mi][ri];
      json row{{"risk_level", table.risk_levels[ri]}, {"threshold", t}};
      std::vector<gate::GateDecision> decisions;
      decisions.reserve(is_id.size());
      for (const auto& r : id) decisions.push_back(gate::gate_decision(r.summary, m, t));
      for (const auto& r : ood) decisions.push_back(gate::gate_decision(r.summary, m, t));
      const auto conf = gate::ood_confusion(decisions, is_id);
      const auto prf = gate::micro_prf(decisions, labels, is_id, healthy, classes);
      row["tpr"] = conf.tpr;
      row["fpr"] = conf.fpr;
      row["precision"] = prf.precision;
      row["recall"] = prf.recall;
      row["f_measure"] = prf.f_measure;
      levels.push_back(std::move(row));
    }
    measures.push_back({{"measure", uq::measure_id(m)},
                        {"auroc", roc.auroc},
                        {"roc_csv", roc_path.filename().string()},
                        {"risk_levels", std::move(levels)}});
  }
  return {{"id_count", id.size()}, {"ood_count", ood.size()}, {"measures", std::move(measures)}};
}

}  // namespace

std::string stage_id(Stage s) {
  switch (s) {
    case Stage::synth: return "synth";
    case Stage::preprocess: return "preprocess";
    case Stage::train: return "train";
    case Stage::calibrate: return "calibrate";
    case Stage::inject: return "inject";
    case Stage::evaluate: return "evaluate";
    case Stage::report: return "report";
  }
  return "?";
}

Stage parse_stage(const std::string& id) {
  for (Stage s : kAllStages) {
    if (stage_id(s) == id) return s;
  }
  throw ContractError("unknown stage '" + id + "'");
}

std::vector<fs::path> ReportBundle::all() const {
  std::vector<fs::path> out{manifest};
  out.insert(out.end(), uncertainty_dumps.begin(), uncertainty_dumps.end());
  out.insert(out.end(), risk_coverage.begin(), risk_coverage.end());
  out.push_back(threshold_table);
  out.insert(out.end(), roc_curves.begin(), roc_curves.end());
  out.push_back(in_distribution_summary);
  out.insert(out.end(), summaries.begin(), summaries.end());
  out.push_back(report);
  return out;
}

ReportBundle bundle_for(const ExperimentConfig& c, const fs::path& out) {
  ReportBundle b;
  b.root = out;
  b.manifest = out / "manifest.json";
  b.threshold_table = out / "calibration" / "thresholds.csv";
  b.in_distribution_summary = out / "evaluation" / "in_distribution.json";
  b.report = out / "report.txt";
  for (auto m : c.calibration.measures) {
    b.risk_coverage.push_back(out / "calibration" / ("risk_coverage_" + uq::measure_id(m) + ".csv"));
  }
  std::vector<std::string> sets{"validation", "test"};
  auto add_roc = [&](const std::string& prefix) {
    for (auto m : c.calibration.measures) {
      b.roc_curves.push_back(out / "roc" / (prefix + "_" + uq::measure_id(m) + ".csv"));
    }
  };
  if (c.evaluation.uniform.enabled) {
    sets.push_back("uniform");
    add_roc("uniform");
    b.summaries.push_back(out / "evaluation" / "uniform.json");
  }
  if (c.evaluation.held_out.class_label) {
    sets.push_back("unknown_class");
    add_roc("unknown_class");
    b.summaries.push_back(out / "evaluation" / "unknown_class.json");
  }
  const auto& faults = c.evaluation.sensor_faults.faults;
  for (std::size_t i = 0; i < faults.size(); ++i) {
    sets.push_back(fault_set_name(i, faults[i]));
    add_roc(fault_set_name(i, faults[i]));
  }
  if (!faults.empty()) b.summaries.push_back(out / "evaluation" / "sensor_faults.json");
  for (const auto& s : sets) b.uncertainty_dumps.push_back(uncertainty_path(out, s));
  return b;
}

Pipeline::Pipeline(ExperimentConfig config, fs::path out, LogFn log)
    : config_(std::move(config)), out_(std::move(out)), log_(std::move(log)) {
  config_.validate();
  hash_ = config_hash(config_);
}

void Pipeline::log(const std::string& msg) const {
  if (log_) log_(msg);
}

bool Pipeline::stage_complete(Stage stage) const {
  std::ifstream is(marker_path(out_, stage));
  std::string h;
  return is && (is >> h) && h == hash_;
}

void Pipeline::mark_complete(Stage stage) const { write_text(marker_path(out_, stage), hash_ + "\n"); }

void Pipeline::write_manifest() const {
  json mapping = json::array();
  const auto m = class_map(config_);
  for (std::size_t c = 0; c < m.size(); ++c) {
    mapping.push_back({{"original", c}, {"index", m[c] < 0 ? json(nullptr) : json(m[c])}});
  }
  const auto bundle = bundle_for(config_, out_);
  json artifacts = json::array();
  for (const auto& p : bundle.all()) artifacts.push_back(fs::relative(p, out_).generic_string());
  json j{{"toolkit_version", kToolkitVersion},
         {"config_hash", hash_},
         {"seed", config_.seed},
         {"class_mapping", mapping},
         {"healthy_class", config_.data.healthy_class},
         {"held_out_class", config_.evaluation.held_out.class_label
                                ? json(*config_.evaluation.held_out.class_label)
                                : json(nullptr)},
         {"config", config_to_json(config_)},
         {"artifacts", artifacts}};
  write_text(out_ / "manifest.json", j.dump(2) + "\n");
}

void Pipeline::run_stage(Stage stage) {
  const std::string name = stage_id(stage);
  log("stage " + name);
  try {
    for (const char* sub : {"uncertainty", "calibration", "roc", "evaluation"}) fs::create_directories(out_ / sub);
    write_manifest();
    switch (stage) {
      case Stage::synth: synth(); break;
      case Stage::preprocess: preprocess(); break;
      case Stage::train: train(); break;
      case Stage::calibrate: calibrate(); break;
      case Stage::inject: inject(); break;
      case Stage::evaluate: evaluate(); break;
      case Stage::report: report(); break;
    }
    mark_complete(stage);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

ReportBundle Pipeline::run_all(bool resume) {
  for (Stage s : kAllStages) {
    if (resume && stage_complete(s)) {
      log("stage " + stage_id(s) + " up to date");
      continue;
    }
    run_stage(s);
  }
  return bundle_for(config_, out_);
}

void Pipeline::synth() {
  const fs::path dir = signals_dir(out_);
  fs::create_directories(dir);
  std::vector<signals::SignalRecord> records;
  if (config_.data.source == "synthetic") {
    const auto& s = config_.data.synthetic;
    records = signals::generate_synthetic_fleet(s.classes, s.signals_per_class, s.duration_s,
                                                derive_seed(config_.seed, kSynth), s.sample_rate);
  } else {
    for (const auto& f : config_.data.files) {
      signals::SignalRecord r = f.format == "csv"
                                    ? signals::read_signal_csv(f.path, f.sample_rate, f.class_label, f.condition)
                                    : signals::read_signal_record(f.path);
      r.class_label = f.class_label;
      if (!f.condition.empty()) r.condition = f.condition;
      records.push_back(std::move(r));
    }
  }
  json index = json::array();
  for (std::size_t i = 0; i < records.size(); ++i) {
    std::ostringstream stem;
    stem << "record_" << std::setw(5) << std::setfill('0') << i;
    signals::write_signal_record(dir / stem.str(), records[i]);
    index.push_back(stem.str());
  }
  write_text(dir / "index.json", json{{"records", index}}.dump(2) + "\n");
  log("  " + std::to_string(records.size()) + " signals");
}

void Pipeline::preprocess() {
  const fs::path dir = signals_dir(out_);
  const json index = read_json(dir / "index.json");
  const auto& spec = config_.data.spectrogram;
  const auto cmap = class_map(config_);

  std::vector<Array> images, segments, held_images;
  std::vector<std::uint32_t> labels, held_labels;
  for (const auto& stem : index.at("records")) {
    const auto rec = signals::read_signal_record(dir / stem.get<std::string>());
    if (rec.class_label < 0 || static_cast<std::size_t>(rec.class_label) >= cmap.size()) {
      throw Error("signal " + stem.get<std::string>() + " has class outside the configured range");
    }
    const auto dense = cmap[static_cast<std::size_t>(rec.class_label)];
    for (auto& seg : signals::segment_signal(rec, spec.segment_length)) {
      Array img = signals::stft_image(seg, spec);
      if (dense < 0) {
        held_images.push_back(std::move(img));
        held_labels.push_back(static_cast<std::uint32_t>(rec.class_label));
      } else {
        images.push_back(std::move(img));
        segments.push_back(std::move(seg));
        labels.push_back(static_cast<std::uint32_t>(dense));
      }
    }
  }

  // stratified split: per class, train_ratio to train+validation, and of
  // that fit_ratio to fitting
  const std::size_t classes = config_.known_classes().size();
  std::vector<std::vector<std::size_t>> by_class(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  Rng rng(derive_seed(config_.seed, kSplit));
  std::vector<std::size_t> fit, val, test;
  for (std::size_t c = 0; c < classes; ++c) {
    auto& idx = by_class[c];
    if (idx.size() < 3) throw Error("class " + std::to_string(config_.known_classes()[c]) + " has fewer than 3 segments");
    std::shuffle(idx.begin(), idx.end(), rng.engine());
    const auto n = idx.size();
    auto n_tv = static_cast<std::size_t>(std::llround(config_.split.train_ratio * static_cast<double>(n)));
    n_tv = std::clamp<std::size_t>(n_tv, 2, n - 1);
    auto n_fit = static_cast<std::size_t>(std::llround(config_.split.fit_ratio * static_cast<double>(n_tv)));
    n_fit = std::clamp<std::size_t>(n_fit, 1, n_tv - 1);
    fit.insert(fit.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_fit));
    val.insert(val.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_fit), idx.begin() + static_cast<std::ptrdiff_t>(n_tv));
    test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_tv), idx.end());
  }
  // interleave classes so that any prefix is a fair sample
  for (auto* part : {&fit, &val, &test}) std::shuffle(part->begin(), part->end(), rng.engine());

  const fs::path ddir = data_dir(out_);
  fs::create_directories(ddir);
  signals::write_dataset_file(ddir / "fit.spg", stack(images, labels, fit));
  signals::write_dataset_file(ddir / "validation.spg", stack(images, labels, val));
  signals::write_dataset_file(ddir / "test.spg", stack(images, labels, test));
  signals::write_dataset_file(ddir / "test_segments.spg", stack(segments, labels, test));
  if (config_.evaluation.held_out.class_label) {
    if (held_images.empty()) throw Error("held-out class has no segments");
    std::vector<std::size_t> order(held_images.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    signals::write_dataset_file(ddir / "unknown_class.spg", stack(held_images, held_labels, order));
  }
  log("  fit " + std::to_string(fit.size()) + ", validation " + std::to_string(val.size()) + ", test " +
      std::to_string(test.size()) + ", held out " + std::to_string(held_images.size()));
}

void Pipeline::train() {
  const fs::path ddir = data_dir(out_);
  require_file(ddir / "fit.spg");
  require_file(ddir / "validation.spg");
  const std::size_t classes = config_.known_classes().size();
  const auto fit = to_dataset(signals::read_dataset_file(ddir / "fit.spg"), classes);
  const auto val = to_dataset(signals::read_dataset_file(ddir / "validation.spg"), classes);

  auto model = bayes::build_pbcnn(config_.network(), config_.model.prior, derive_seed(config_.seed, kInit),
                                  config_.model.init);
  bayes::TrainConfig tc = config_.model.train;
  tc.seed = derive_seed(config_.seed, kTrain);
  std::ostringstream history;
  history << "epoch,loss,validation_accuracy\n" << std::setprecision(17);
  tc.on_epoch = [&](const bayes::EpochRecord& r) {
    history << r.epoch << ',' << r.loss << ',' << r.validation_accuracy << '\n';
    std::ostringstream msg;
    msg << "  epoch " << r.epoch << " loss " << std::setprecision(6) << r.loss << " val_acc " << r.validation_accuracy;
    log(msg.str());
  };
  const auto t0 = std::chrono::steady_clock::now();
  auto result = bayes::train(std::move(model), fit, val, tc);
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - t0;
  fs::create_directories(model_path(out_).parent_path());
  bayes::save_checkpoint(result.model, model_path(out_));
  write_text(history_path(out_), history.str());
  // wall time lives outside the evaluation summaries so those stay reproducible
  const json info{{"epochs", tc.epochs}, {"fit_examples", fit.size()}, {"train_seconds", elapsed.count()}};
  write_text(model_path(out_).parent_path() / "training.json", info.dump(2) + "\n");
}

void Pipeline::calibrate() {
  require_file(model_path(out_));
  const fs::path vpath = data_dir(out_) / "validation.spg";
  require_file(vpath);
  const auto model = bayes::load_checkpoint(model_path(out_));
  const auto val = prefix(signals::read_dataset_file(vpath), config_.calibration.max_examples);
  const auto classes = config_.known_classes().size();
  const auto records = mc_records(model, val.data, widen(val.labels), config_.calibration.mc_passes,
                                  derive_seed(config_.seed, kCalibrateMc));
  uq::write_uncertainty_csv(uncertainty_path(out_, "validation"), records, classes);

  std::vector<bool> correct;
  correct.reserve(records.size());
  for (const auto& r : records) {
    correct.push_back(static_cast<std::int64_t>(r.summary.predicted_class) == r.true_label);
  }
  std::vector<gate::RiskCoverageCurve> curves;
  const auto bundle = bundle_for(config_, out_);
  for (std::size_t i = 0; i < config_.calibration.measures.size(); ++i) {
    const auto m = config_.calibration.measures[i];
    std::vector<double> u;
    u.reserve(records.size());
    for (const auto& r : records) u.push_back(r.summary.value(m));
    curves.push_back(gate::risk_coverage_curve(u, correct, m));
    gate::write_risk_coverage_csv(bundle.risk_coverage[i], curves.back());
  }
  const auto table = gate::build_threshold_table(curves, config_.calibration.risk_levels);
  gate::write_threshold_table_csv(bundle.threshold_table, table);
}

void Pipeline::inject() {
  const fs::path dir = ood_dir(out_);
  fs::create_directories(dir);
  const fs::path seg_path = data_dir(out_) / "test_segments.spg";
  require_file(seg_path);
  const auto all_segments = signals::read_dataset_file(seg_path);
  const auto segments = prefix(all_segments, config_.evaluation.max_examples);
  const auto& spec = config_.data.spectrogram;

  if (config_.evaluation.uniform.enabled) {
    const std::size_t n = config_.evaluation.uniform.count ? config_.evaluation.uniform.count : segments.size();
    Array u = signals::generate_uniform_ood(n, derive_seed(config_.seed, kUniform), spec.frequency_bins(),
                                            spec.time_frames());
    signals::write_dataset_file(dir / "uniform.spg", {std::move(u), std::vector<std::uint32_t>(n, 0)});
  }

  const auto& faults = config_.evaluation.sensor_faults.faults;
  if (faults.empty()) return;
  // reference amplitude: global peak-to-peak over the whole test split
  std::vector<Array> split_segments;
  const std::size_t len = spec.segment_length;
  split_segments.reserve(all_segments.size());
  for (std::size_t i = 0; i < all_segments.size(); ++i) {
    auto first = all_segments.data.values().begin() + static_cast<std::ptrdiff_t>(i * len);
    split_segments.emplace_back(Extents{len}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(len)));
  }
  const double p2p = signals::peak_to_peak(split_segments);
  const double fs_rate =
      config_.data.source == "synthetic" ? config_.data.synthetic.sample_rate : config_.data.files.front().sample_rate;

  json meta = json::array();
  for (std::size_t fi = 0; fi < faults.size(); ++fi) {
    signals::FaultSpec f = faults[fi];
    f.p2p_reference = p2p;
    const std::uint64_t fseed = derive_seed(derive_seed(config_.seed, kFaults), fi);
    std::vector<Array> imgs;
    imgs.reserve(segments.size());
    for (std::size_t i = 0; i < segments.size(); ++i) {
      Rng rng(derive_seed(fseed, i));
      imgs.push_back(signals::stft_image(signals::inject_fault(split_segments[i], f, fs_rate, rng), spec));
    }
    std::vector<std::size_t> order(imgs.size());
    std::iota(order.begin(), order.end(), 0);
    signals::write_dataset_file(dir / (fault_set_name(fi, f) + ".spg"), stack(imgs, segments.labels, order));
    meta.push_back({{"name", fault_set_name(fi, f)},
                    {"kind", signals::fault_kind_id(f.kind)},
                    {"tau", f.tau},
                    {"snr_db", rounded(f.snr_db)},
                    {"p2p_reference", p2p},
                    {"sample_rate", fs_rate}});
  }
  write_text(dir / "faults.json", json{{"faults", meta}}.dump(2) + "\n");
}

void Pipeline::evaluate() {
  require_file(model_path(out_));
  const auto bundle = bundle_for(config_, out_);
  require_file(bundle.threshold_table);
  const auto model = bayes::load_checkpoint(model_path(out_));
  const auto table = gate::read_threshold_table_csv(bundle.threshold_table);
  const std::size_t classes = config_.known_classes().size();
  const std::size_t healthy = healthy_index(config_);
  const std::size_t passes = config_.evaluation.mc_passes;
  const std::uint64_t mc_seed = derive_seed(config_.seed, kEvaluateMc);
  const std::size_t limit = config_.evaluation.max_examples;

  const fs::path test_path = data_dir(out_) / "test.spg";
  require_file(test_path);
  const auto test = prefix(signals::read_dataset_file(test_path), limit);
  const auto id = mc_records(model, test.data, widen(test.labels), passes, derive_seed(mc_seed, 0));
  uq::write_uncertainty_csv(uncertainty_path(out_, "test"), id, classes);
  std::size_t hits = 0;
  for (const auto& r : id) hits += static_cast<std::int64_t>(r.summary.predicted_class) == r.true_label;
  const json id_summary{{"count", id.size()},
                        {"accuracy", id.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(id.size())}};
  write_text(bundle.in_distribution_summary, id_summary.dump(2) + "\n");

  const fs::path roc_dir = out_ / "roc";
  fs::create_directories(roc_dir);
  auto ood_records = [&](const fs::path& set_path, const std::string& name, std::uint64_t stream,
                         std::size_t cap) {
    require_file(set_path);
    const auto set = prefix(signals::read_dataset_file(set_path), cap);
    auto recs = mc_records(model, set.data, std::vector<std::int64_t>(set.size(), -1), passes,
                           derive_seed(mc_seed, stream));
    uq::write_uncertainty_csv(uncertainty_path(out_, name), recs, classes);
    return recs;
  };
  auto header = [&](const std::string& source) {
    return json{{"source", source}, {"config_hash", hash_}, {"seed", config_.seed}};
  };

  if (config_.evaluation.uniform.enabled) {
    const auto ood = ood_records(ood_dir(out_) / "uniform.spg", "uniform", 1, 0);
    json s = header("uniform");
    s.update(evaluate_source(id, ood, table, healthy, classes, roc_dir / "uniform"));
    write_text(out_ / "evaluation" / "uniform.json", s.dump(2) + "\n");
  }
  if (config_.evaluation.held_out.class_label) {
    const auto ood = ood_records(data_dir(out_) / "unknown_class.spg", "unknown_class", 2, limit);
    json s = header("unknown_class");
    s["held_out_class"] = *config_.evaluation.held_out.class_label;
    s.update(evaluate_source(id, ood, table, healthy, classes, roc_dir / "unknown_class"));
    write_text(out_ / "evaluation" / "unknown_class.json", s.dump(2) + "\n");
  }
  const auto& faults = config_.evaluation.sensor_faults.faults;
  if (!faults.empty()) {
    const json meta = read_json(ood_dir(out_) / "faults.json").at("faults");
    json s = header("sensor_faults");
    json entries = json::array();
    for (std::size_t fi = 0; fi < faults.size(); ++fi) {
      const std::string name = fault_set_name(fi, faults[fi]);
      const auto ood = ood_records(ood_dir(out_) / (name + ".spg"), name, 3 + fi, 0);
      json e = meta.at(fi);
      e.update(evaluate_source(id, ood, table, healthy, classes, roc_dir / name));
      entries.push_back(std::move(e));
    }
    s["faults"] = std::move(entries);
    write_text(out_ / "evaluation" / "sensor_faults.json", s.dump(2) + "\n");
  }
}

void Pipeline::report() {
  const auto bundle = bundle_for(config_, out_);
  // the report file itself is what this stage produces
  write_text(bundle.report, "");
  write_text(bundle.report, emit_report(bundle));
}

namespace {

std::string fixed(double v, int digits) {
  if (!std::isfinite(v)) return gate::format_number(v);
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

std::string cell(const json& v, int digits) {
  return v.is_number() ? fixed(v.get<double>(), digits) : v.get<std::string>();
}

void render_source(std::ostringstream& os, const std::string& title, const json& s,
                   const std::vector<std::string>& measure_order) {
  os << "\n" << title << " (" << s.at("id_count").get<std::size_t>() << " in-distribution, "
     << s.at("ood_count").get<std::size_t>() << " out-of-distribution)\n";
  std::map<std::string, const json*> by_id;
  for (const auto& m : s.at("measures")) by_id[m.at("measure").get<std::string>()] = &m;
  for (const auto& id : measure_order) {
    auto it = by_id.find(id);
    if (it == by_id.end()) continue;
    const json& m = *it->second;
    os << "  " << pad(uq::measure_title(uq::parse_measure(id)), 30) << "AUROC " << fixed(m.at("auroc").get<double>(), 3)
       << "\n";
    os << "    " << pad("risk", 8) << pad("threshold", 14) << pad("TPR", 8) << pad("FPR", 8) << pad("P_mu", 8)
       << pad("R_mu", 8) << "F_mu\n";
    for (const auto& r : m.at("risk_levels")) {
      os << "    " << pad(cell(r.at("risk_level"), 3), 8) << pad(cell(r.at("threshold"), 6), 14)
         << pad(cell(r.at("tpr"), 3), 8) << pad(cell(r.at("fpr"), 3), 8) << pad(cell(r.at("precision"), 3), 8)
         << pad(cell(r.at("recall"), 3), 8) << cell(r.at("f_measure"), 3) << "\n";
    }
  }
}

}  // namespace

std::string emit_report(const ReportBundle& bundle) {
  for (const auto& p : bundle.all()) {
    if (!fs::exists(p)) throw Error("missing artifact " + p.string());
  }
  const json manifest = read_json(bundle.manifest);
  const auto table = gate::read_threshold_table_csv(bundle.threshold_table);
  const json id = read_json(bundle.in_distribution_summary);

  std::vector<std::string> order;
  for (auto m : uq::kAllMeasures) {
    if (std::find(table.measures.begin(), table.measures.end(), m) != table.measures.end()) {
      order.push_back(uq::measure_id(m));
    }
  }

  std::ostringstream os;
  os << "Uncertainty-gated fault diagnosis report\n";
  os << "config " << manifest.at("config_hash").get<std::string>() << ", seed "
     << manifest.at("seed").get<std::uint64_t>() << "\n";
  os << "class mapping (original -> head index):";
  for (const auto& m : manifest.at("class_mapping")) {
    os << " " << m.at("original").get<std::size_t>() << "->"
       << (m.at("index").is_null() ? std::string("held out") : std::to_string(m.at("index").get<std::size_t>()));
  }
  os << "\n";
  os << "in-distribution test accuracy " << fixed(id.at("accuracy").get<double>(), 4) << " over "
     << id.at("count").get<std::size_t>() << " examples\n";

  os << "\nThresholds by risk level\n  " << pad("measure", 22);
  for (double r : table.risk_levels) os << pad(gate::format_number(r), 24);
  os << "\n";
  for (const auto& id_str : order) {
    const auto m = uq::parse_measure(id_str);
    const std::size_t row = static_cast<std::size_t>(
        std::find(table.measures.begin(), table.measures.end(), m) - table.measures.begin());
    os << "  " << pad(id_str, 22);
    for (double t : table.thresholds[row]) os << pad(gate::format_number(t), 24);
    os << "\n";
  }

  for (const auto& path : bundle.summaries) {
    const json s = read_json(path);
    const std::string source = s.at("source").get<std::string>();
    if (source == "sensor_faults") {
      for (const auto& f : s.at("faults")) {
        std::ostringstream title;
        title << "Sensor fault: " << f.at("kind").get<std::string>() << ", tau " << cell(f.at("tau"), 3) << ", SNR "
              << cell(f.at("snr_db"), 1) << " dB";
        render_source(os, title.str(), f, order);
      }
    } else if (source == "unknown_class") {
      render_source(os, "Unknown fault class " + std::to_string(s.at("held_out_class").get<std::size_t>()), s, order);
    } else {
      render_source(os, "Uniform noise", s, order);
    }
  }
  return os.str();
}

ReportBundle run_pipeline(const ExperimentConfig& config, const fs::path& out, LogFn log) {
  Pipeline p(config, out, std::move(log));
  return p.run_all(true);
}

}  // namespace pbcnn::pipeline
