#include "pipeline/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>

#include "common/errors.hpp"

namespace pbcnn::pipeline {

using nlohmann::json;

namespace {

std::string join(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

const json* child(const json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

void require_object(const json& j, const std::string& field) {
  if (!j.is_object()) throw ValidationError(field.empty() ? "<root>" : field, "expected an object");
}

double read_number(const json& j, const std::string& field) {
  if (j.is_number()) return j.get<double>();
  // JSON has no infinity literal; accept the spelled-out forms
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  }
  throw ValidationError(field, "expected a number");
}

std::uint64_t read_count(const json& j, const std::string& field) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return j.get<std::uint64_t>();
  throw ValidationError(field, "expected a non-negative integer");
}

std::string read_string(const json& j, const std::string& field) {
  if (!j.is_string()) throw ValidationError(field, "expected a string");
  return j.get<std::string>();
}

template <typename F>
void with(const json& j, const char* key, const std::string& base, F&& f) {
  if (const json* c = child(j, key)) f(*c, join(base, key));
}

json number_json(double v) {
  if (std::isinf(v)) return v > 0 ? json("inf") : json("-inf");
  return v;
}

bayes::LayerKind parse_layer_kind(const std::string& s, const std::string& field) {
  if (s == "conv") return bayes::LayerKind::conv_flipout;
  if (s == "pool") return bayes::LayerKind::pool;
  if (s == "flatten") return bayes::LayerKind::flatten;
  if (s == "dense") return bayes::LayerKind::dense_flipout;
  throw ValidationError(field, "unknown layer kind '" + s + "'");
}

const char* layer_kind_id(bayes::LayerKind k) {
  switch (k) {
    case bayes::LayerKind::conv_flipout: return "conv";
    case bayes::LayerKind::pool: return "pool";
    case bayes::LayerKind::flatten: return "flatten";
    case bayes::LayerKind::dense_flipout: return "dense";
  }
  return "?";
}

std::vector<signals::FaultSpec> default_faults() {
  using signals::FaultKind;
  return {{FaultKind::bias, 0.5, 5.0, 0.0},
          {FaultKind::drift, 8.0, 5.0, 0.0},
          {FaultKind::scaling, 3.0, 5.0, 0.0},
          {FaultKind::precision, 1.0, 5.0, 0.0}};
}

}  // namespace

std::vector<std::size_t> ExperimentConfig::known_classes() const {
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < total_classes(); ++c) {
    if (evaluation.held_out.class_label && *evaluation.held_out.class_label == c) continue;
    out.push_back(c);
  }
  return out;
}

std::size_t ExperimentConfig::total_classes() const {
  if (data.source == "synthetic") return data.synthetic.classes;
  std::size_t n = 0;
  for (const auto& f : data.files) n = std::max(n, static_cast<std::size_t>(f.class_label) + 1);
  return n;
}

bayes::NetworkSpec ExperimentConfig::network() const {
  const std::size_t n = known_classes().size();
  if (model.layers.empty()) return bayes::NetworkSpec::pbcnn(n);
  const std::size_t side = data.spectrogram.frequency_bins();
  bayes::NetworkSpec spec{side, data.spectrogram.time_frames(), 1, model.layers};
  return spec;
}

void ExperimentConfig::validate() const {
  if (data.source != "synthetic" && data.source != "files") {
    throw ValidationError("data.source", "must be 'synthetic' or 'files'");
  }
  if (data.source == "synthetic") {
    const auto& s = data.synthetic;
    if (s.classes < 2) throw ValidationError("data.synthetic.classes", "must be >= 2");
    if (s.signals_per_class < 1) throw ValidationError("data.synthetic.signals_per_class", "must be >= 1");
    if (!(s.duration_s > 0.0)) throw ValidationError("data.synthetic.duration_s", "must be > 0");
    if (!(s.sample_rate > 0.0)) throw ValidationError("data.synthetic.sample_rate", "must be > 0");
    if (s.duration_s * s.sample_rate < static_cast<double>(data.spectrogram.segment_length)) {
      throw ValidationError("data.synthetic.duration_s", "shorter than one segment");
    }
  } else {
    if (data.files.empty()) throw ValidationError("data.files", "must list at least one signal");
    for (std::size_t i = 0; i < data.files.size(); ++i) {
      const auto& f = data.files[i];
      const std::string field = "data.files[" + std::to_string(i) + "]";
      if (f.format != "f32" && f.format != "csv") {
        throw ValidationError(field + ".format", "must be 'f32' or 'csv'");
      }
      if (f.class_label < 0) throw ValidationError(field + ".class_label", "must be >= 0");
      if (!(f.sample_rate > 0.0)) throw ValidationError(field + ".sample_rate", "must be > 0");
    }
  }
  try {
    data.spectrogram.validate();
  } catch (const Error& e) {
    throw ValidationError("data.spectrogram", e.what());
  }
  if (data.healthy_class >= total_classes()) {
    throw ValidationError("data.healthy_class", "outside the class range");
  }

  if (!(split.train_ratio > 0.0 && split.train_ratio < 1.0)) {
    throw ValidationError("split.train_ratio", "must lie in (0,1)");
  }
  if (!(split.fit_ratio > 0.0 && split.fit_ratio < 1.0)) {
    throw ValidationError("split.fit_ratio", "must lie in (0,1)");
  }

  if (const auto& h = evaluation.held_out.class_label) {
    if (*h >= total_classes()) throw ValidationError("evaluation.held_out.class", "outside the class range");
    if (*h == data.healthy_class) {
      throw ValidationError("evaluation.held_out.class", "cannot hold out the healthy class");
    }
  }
  if (known_classes().size() < 2) {
    throw ValidationError("data", "need at least two known classes");
  }

  if (!(model.prior.std > 0.0) || !std::isfinite(model.prior.std)) {
    throw ValidationError("model.prior.std", "must be > 0");
  }
  if (!std::isfinite(model.prior.mean)) throw ValidationError("model.prior.mean", "must be finite");
  if (!(model.init.mu_std >= 0.0)) throw ValidationError("model.init.mu_std", "must be >= 0");
  if (!(model.init.initial_sigma > 0.0)) throw ValidationError("model.init.initial_sigma", "must be > 0");
  const auto& t = model.train;
  if (t.epochs < 1) throw ValidationError("model.train.epochs", "must be >= 1");
  if (t.batch_size < 1) throw ValidationError("model.train.batch_size", "must be >= 1");
  if (!(t.learning_rate > 0.0)) throw ValidationError("model.train.learning_rate", "must be > 0");
  if (t.kl_scale && !(*t.kl_scale > 0.0)) throw ValidationError("model.train.kl_scale", "must be > 0");
  try {
    bayes::layer_extents(network());
  } catch (const Error& e) {
    throw ValidationError("model.layers", e.what());
  }

  if (calibration.measures.empty()) throw ValidationError("calibration.measures", "must not be empty");
  for (std::size_t i = 0; i < calibration.measures.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (calibration.measures[i] == calibration.measures[j]) {
        throw ValidationError("calibration.measures", "duplicate measure");
      }
    }
  }
  const auto& r = calibration.risk_levels;
  if (r.empty()) throw ValidationError("calibration.risk_levels", "must not be empty");
  for (std::size_t i = 0; i < r.size(); ++i) {
    if (!(r[i] >= 0.0 && r[i] <= 1.0)) throw ValidationError("calibration.risk_levels", "must lie in [0,1]");
    if (i > 0 && !(r[i] > r[i - 1])) {
      throw ValidationError("calibration.risk_levels", "must be strictly increasing");
    }
  }
  if (calibration.mc_passes < 2) throw ValidationError("calibration.mc_passes", "must be >= 2");
  if (evaluation.mc_passes < 2) throw ValidationError("evaluation.mc_passes", "must be >= 2");
  for (std::size_t i = 0; i < evaluation.sensor_faults.faults.size(); ++i) {
    auto f = evaluation.sensor_faults.faults[i];
    f.p2p_reference = 1.0;
    try {
      f.validate();
    } catch (const Error& e) {
      throw ValidationError("evaluation.sensor_faults[" + std::to_string(i) + "]", e.what());
    }
  }
}

namespace {

/// Rejects keys that the canonical form does not have, so typos surface
/// instead of silently falling back to defaults.
void reject_unknown(const json& given, const json& canonical, const std::string& base) {
  if (given.is_object() && canonical.is_object()) {
    for (const auto& [key, value] : given.items()) {
      const std::string field = join(base, key);
      if (!canonical.contains(key)) throw ValidationError(field, "unknown key");
      reject_unknown(value, canonical.at(key), field);
    }
  } else if (given.is_array() && canonical.is_array() && given.size() == canonical.size()) {
    for (std::size_t i = 0; i < given.size(); ++i) {
      reject_unknown(given[i], canonical[i], base + "[" + std::to_string(i) + "]");
    }
  }
}

}  // namespace

ExperimentConfig config_from_json(const json& root) {
  ExperimentConfig c;
  c.evaluation.sensor_faults.faults = default_faults();
  require_object(root, "");
  with(root, "seed", "", [&](const json& v, const std::string& f) { c.seed = read_count(v, f); });

  with(root, "data", "", [&](const json& d, const std::string& base) {
    require_object(d, base);
    with(d, "source", base, [&](const json& v, const std::string& f) { c.data.source = read_string(v, f); });
    with(d, "healthy_class", base,
         [&](const json& v, const std::string& f) { c.data.healthy_class = read_count(v, f); });
    with(d, "synthetic", base, [&](const json& s, const std::string& sb) {
      require_object(s, sb);
      auto& o = c.data.synthetic;
      with(s, "classes", sb, [&](const json& v, const std::string& f) { o.classes = read_count(v, f); });
      with(s, "signals_per_class", sb,
           [&](const json& v, const std::string& f) { o.signals_per_class = read_count(v, f); });
      with(s, "duration_s", sb, [&](const json& v, const std::string& f) { o.duration_s = read_number(v, f); });
      with(s, "sample_rate", sb, [&](const json& v, const std::string& f) { o.sample_rate = read_number(v, f); });
    });
    with(d, "files", base, [&](const json& arr, const std::string& fb) {
      if (!arr.is_array()) throw ValidationError(fb, "expected an array");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string eb = fb + "[" + std::to_string(i) + "]";
        require_object(arr[i], eb);
        SignalFile sf;
        const json* p = child(arr[i], "path");
        if (!p) throw ValidationError(eb + ".path", "required");
        sf.path = read_string(*p, eb + ".path");
        with(arr[i], "format", eb, [&](const json& v, const std::string& f) { sf.format = read_string(v, f); });
        with(arr[i], "class_label", eb, [&](const json& v, const std::string& f) {
          sf.class_label = static_cast<std::int64_t>(read_count(v, f));
        });
        with(arr[i], "sample_rate", eb,
             [&](const json& v, const std::string& f) { sf.sample_rate = read_number(v, f); });
        with(arr[i], "condition", eb,
             [&](const json& v, const std::string& f) { sf.condition = read_string(v, f); });
        c.data.files.push_back(std::move(sf));
      }
    });
    with(d, "spectrogram", base, [&](const json& s, const std::string& sb) {
      require_object(s, sb);
      auto& o = c.data.spectrogram;
      with(s, "segment_length", sb, [&](const json& v, const std::string& f) { o.segment_length = read_count(v, f); });
      with(s, "fft_length", sb, [&](const json& v, const std::string& f) { o.fft_length = read_count(v, f); });
      with(s, "hop", sb, [&](const json& v, const std::string& f) { o.hop = read_count(v, f); });
    });
  });

  with(root, "split", "", [&](const json& s, const std::string& base) {
    require_object(s, base);
    with(s, "train_ratio", base, [&](const json& v, const std::string& f) { c.split.train_ratio = read_number(v, f); });
    with(s, "fit_ratio", base, [&](const json& v, const std::string& f) { c.split.fit_ratio = read_number(v, f); });
  });

  with(root, "model", "", [&](const json& m, const std::string& base) {
    require_object(m, base);
    with(m, "layers", base, [&](const json& arr, const std::string& lb) {
      if (!arr.is_array()) throw ValidationError(lb, "expected an array");
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string eb = lb + "[" + std::to_string(i) + "]";
        require_object(arr[i], eb);
        const json* k = child(arr[i], "kind");
        if (!k) throw ValidationError(eb + ".kind", "required");
        bayes::LayerSpec ls{parse_layer_kind(read_string(*k, eb + ".kind"), eb + ".kind")};
        with(arr[i], "units", eb, [&](const json& v, const std::string& f) { ls.units = read_count(v, f); });
        with(arr[i], "kernel", eb, [&](const json& v, const std::string& f) { ls.kernel = read_count(v, f); });
        c.model.layers.push_back(ls);
      }
    });
    with(m, "prior", base, [&](const json& p, const std::string& pb) {
      require_object(p, pb);
      with(p, "mean", pb, [&](const json& v, const std::string& f) { c.model.prior.mean = read_number(v, f); });
      with(p, "std", pb, [&](const json& v, const std::string& f) { c.model.prior.std = read_number(v, f); });
    });
    with(m, "init", base, [&](const json& p, const std::string& pb) {
      require_object(p, pb);
      with(p, "mu_std", pb, [&](const json& v, const std::string& f) { c.model.init.mu_std = read_number(v, f); });
      with(p, "initial_sigma", pb,
           [&](const json& v, const std::string& f) { c.model.init.initial_sigma = read_number(v, f); });
    });
    with(m, "train", base, [&](const json& t, const std::string& tb) {
      require_object(t, tb);
      auto& o = c.model.train;
      with(t, "epochs", tb, [&](const json& v, const std::string& f) { o.epochs = read_count(v, f); });
      with(t, "batch_size", tb, [&](const json& v, const std::string& f) { o.batch_size = read_count(v, f); });
      with(t, "learning_rate", tb, [&](const json& v, const std::string& f) { o.learning_rate = read_number(v, f); });
      with(t, "kl_scale", tb, [&](const json& v, const std::string& f) {
        if (!v.is_null()) o.kl_scale = read_number(v, f);
      });
      with(t, "kl_mode", tb, [&](const json& v, const std::string& f) {
        const auto s = read_string(v, f);
        if (s == "analytic") o.kl_mode = bayes::KlMode::analytic;
        else if (s == "monte_carlo") o.kl_mode = bayes::KlMode::monte_carlo;
        else throw ValidationError(f, "must be 'analytic' or 'monte_carlo'");
      });
    });
  });

  with(root, "calibration", "", [&](const json& s, const std::string& base) {
    require_object(s, base);
    with(s, "measures", base, [&](const json& arr, const std::string& f) {
      if (!arr.is_array()) throw ValidationError(f, "expected an array");
      c.calibration.measures.clear();
      for (const auto& v : arr) {
        try {
          c.calibration.measures.push_back(uq::parse_measure(read_string(v, f)));
        } catch (const ValidationError&) {
          throw;
        } catch (const Error& e) {
          throw ValidationError(f, e.what());
        }
      }
    });
    with(s, "risk_levels", base, [&](const json& arr, const std::string& f) {
      if (!arr.is_array()) throw ValidationError(f, "expected an array");
      c.calibration.risk_levels.clear();
      for (const auto& v : arr) c.calibration.risk_levels.push_back(read_number(v, f));
    });
    with(s, "mc_passes", base, [&](const json& v, const std::string& f) { c.calibration.mc_passes = read_count(v, f); });
    with(s, "max_examples", base,
         [&](const json& v, const std::string& f) { c.calibration.max_examples = read_count(v, f); });
  });

  with(root, "evaluation", "", [&](const json& s, const std::string& base) {
    require_object(s, base);
    auto& e = c.evaluation;
    with(s, "mc_passes", base, [&](const json& v, const std::string& f) { e.mc_passes = read_count(v, f); });
    with(s, "max_examples", base, [&](const json& v, const std::string& f) { e.max_examples = read_count(v, f); });
    with(s, "uniform", base, [&](const json& u, const std::string& ub) {
      require_object(u, ub);
      with(u, "enabled", ub, [&](const json& v, const std::string& f) {
        if (!v.is_boolean()) throw ValidationError(f, "expected true or false");
        e.uniform.enabled = v.get<bool>();
      });
      with(u, "count", ub, [&](const json& v, const std::string& f) { e.uniform.count = read_count(v, f); });
    });
    with(s, "held_out", base, [&](const json& h, const std::string& hb) {
      require_object(h, hb);
      with(h, "class", hb, [&](const json& v, const std::string& f) {
        if (v.is_null()) e.held_out.class_label.reset();
        else e.held_out.class_label = read_count(v, f);
      });
    });
    with(s, "sensor_faults", base, [&](const json& arr, const std::string& fb) {
      if (!arr.is_array()) throw ValidationError(fb, "expected an array");
      e.sensor_faults.faults.clear();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string eb = fb + "[" + std::to_string(i) + "]";
        require_object(arr[i], eb);
        signals::FaultSpec spec;
        const json* k = child(arr[i], "kind");
        if (!k) throw ValidationError(eb + ".kind", "required");
        try {
          spec.kind = signals::parse_fault_kind(read_string(*k, eb + ".kind"));
        } catch (const ValidationError&) {
          throw;
        } catch (const Error& err) {
          throw ValidationError(eb + ".kind", err.what());
        }
        const json* tau = child(arr[i], "tau");
        if (!tau) throw ValidationError(eb + ".tau", "required");
        spec.tau = read_number(*tau, eb + ".tau");
        with(arr[i], "snr_db", eb, [&](const json& v, const std::string& f) { spec.snr_db = read_number(v, f); });
        e.sensor_faults.faults.push_back(spec);
      }
    });
  });
  reject_unknown(root, config_to_json(c), "");
  c.validate();
  return c;
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  json& d = j["data"];
  d["source"] = c.data.source;
  d["healthy_class"] = c.data.healthy_class;
  d["synthetic"] = {{"classes", c.data.synthetic.classes},
                    {"signals_per_class", c.data.synthetic.signals_per_class},
                    {"duration_s", c.data.synthetic.duration_s},
                    {"sample_rate", c.data.synthetic.sample_rate}};
  d["files"] = json::array();
  for (const auto& f : c.data.files) {
    d["files"].push_back({{"path", f.path},
                          {"format", f.format},
                          {"class_label", f.class_label},
                          {"sample_rate", f.sample_rate},
                          {"condition", f.condition}});
  }
  d["spectrogram"] = {{"segment_length", c.data.spectrogram.segment_length},
                      {"fft_length", c.data.spectrogram.fft_length},
                      {"hop", c.data.spectrogram.hop}};
  j["split"] = {{"train_ratio", c.split.train_ratio}, {"fit_ratio", c.split.fit_ratio}};
  json& m = j["model"];
  m["layers"] = json::array();
  for (const auto& l : c.model.layers) {
    m["layers"].push_back({{"kind", layer_kind_id(l.kind)}, {"units", l.units}, {"kernel", l.kernel}});
  }
  m["prior"] = {{"mean", c.model.prior.mean}, {"std", c.model.prior.std}};
  m["init"] = {{"mu_std", c.model.init.mu_std}, {"initial_sigma", c.model.init.initial_sigma}};
  const auto& t = c.model.train;
  m["train"] = {{"epochs", t.epochs},
                {"batch_size", t.batch_size},
                {"learning_rate", t.learning_rate},
                {"kl_scale", t.kl_scale ? json(*t.kl_scale) : json(nullptr)},
                {"kl_mode", t.kl_mode == bayes::KlMode::analytic ? "analytic" : "monte_carlo"}};
  json measures = json::array();
  for (auto ms : c.calibration.measures) measures.push_back(uq::measure_id(ms));
  j["calibration"] = {{"measures", measures},
                      {"risk_levels", c.calibration.risk_levels},
                      {"mc_passes", c.calibration.mc_passes},
                      {"max_examples", c.calibration.max_examples}};
  json faults = json::array();
  for (const auto& f : c.evaluation.sensor_faults.faults) {
    faults.push_back({{"kind", signals::fault_kind_id(f.kind)}, {"tau", f.tau}, {"snr_db", number_json(f.snr_db)}});
  }
  const auto& e = c.evaluation;
  j["evaluation"] = {
      {"mc_passes", e.mc_passes},
      {"max_examples", e.max_examples},
      {"uniform", {{"enabled", e.uniform.enabled}, {"count", e.uniform.count}}},
      {"held_out", {{"class", e.held_out.class_label ? json(*e.held_out.class_label) : json(nullptr)}}},
      {"sensor_faults", faults}};
  return j;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("config", "cannot open " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw ValidationError("config", std::string("malformed JSON: ") + e.what());
  }
  if (const char* env = std::getenv(kSeedEnvVar); env && *env) {
    char* end = nullptr;
    const unsigned long long s = std::strtoull(env, &end, 10);
    if (*end != '\0' || env[0] == '-') throw ValidationError("seed", std::string(kSeedEnvVar) + " is not a u64");
    if (j.is_object()) j["seed"] = static_cast<std::uint64_t>(s);
  }
  return config_from_json(j);
}

std::string config_hash(const ExperimentConfig& config) {
  const std::string text = config_to_json(config).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pbcnn::pipeline
