#include "pbcnn/pbcnn.h"

#include <exception>
#include <string>

#include "bayes/checkpoint.hpp"
#include "common/errors.hpp"
#include "gate/metrics.hpp"
#include "pipeline/pipeline.hpp"
#include "uq/uncertainty.hpp"

namespace fs = std::filesystem;
using namespace pbcnn;

struct pbcnn_experiment {
  pipeline::ExperimentConfig config;
  fs::path out;
  std::string report;
  pbcnn_log_fn log_fn = nullptr;
  void* log_user = nullptr;

  pipeline::LogFn logger() const {
    if (!log_fn) return {};
    return [fn = log_fn, user = log_user](const std::string& m) { fn(m.c_str(), user); };
  }
};

struct pbcnn_model {
  bayes::PbcnnModel model;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
pbcnn_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return PBCNN_OK;
  } catch (const ValidationError& e) {
    g_last_error = e.what();
    return PBCNN_ERR_VALIDATION;
  } catch (const ContractError& e) {  // bad argument values
    g_last_error = e.what();
    return PBCNN_ERR_VALIDATION;
  } catch (const ShapeError& e) {
    g_last_error = e.what();
    return PBCNN_ERR_VALIDATION;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return PBCNN_ERR_RUNTIME;
  } catch (...) {
    g_last_error = "unknown error";
    return PBCNN_ERR_RUNTIME;
  }
}

void require(bool ok, const char* field) {
  if (!ok) throw ValidationError(field, "null or invalid argument");
}

void fill_measures(const uq::UncertaintySummary& s, double* out) {
  out[PBCNN_MEASURE_ENTROPY] = s.entropy;
  out[PBCNN_MEASURE_TOTAL_STD] = s.total_std;
  out[PBCNN_MEASURE_CLASSWISE_STD] = s.classwise_std_max;
  out[PBCNN_MEASURE_CLASSWISE_RANGE] = s.classwise_range_max;
}

}  // namespace

extern "C" {

const char* pbcnn_version(void) { return "1.0.0"; }

const char* pbcnn_last_error(void) { return g_last_error.c_str(); }

pbcnn_status pbcnn_experiment_load(const char* config_path, const char* out_dir, pbcnn_experiment** out) {
  return guarded([&] {
    require(config_path && out_dir && out, "arguments");
    *out = nullptr;
    auto cfg = pipeline::load_config(config_path);
    *out = new pbcnn_experiment{std::move(cfg), fs::path(out_dir), {}, nullptr, nullptr};
  });
}

pbcnn_status pbcnn_experiment_set_log(pbcnn_experiment* exp, pbcnn_log_fn fn, void* user) {
  return guarded([&] {
    require(exp, "experiment");
    exp->log_fn = fn;
    exp->log_user = user;
  });
}

pbcnn_status pbcnn_experiment_set_seed(pbcnn_experiment* exp, uint64_t seed) {
  return guarded([&] {
    require(exp, "experiment");
    exp->config.seed = seed;
  });
}

uint64_t pbcnn_experiment_seed(const pbcnn_experiment* exp) { return exp ? exp->config.seed : 0; }

pbcnn_status pbcnn_experiment_config_hash(const pbcnn_experiment* exp, char* buf, size_t size) {
  return guarded([&] {
    require(exp && buf && size >= 17, "buffer");
    const auto h = pipeline::config_hash(exp->config);
    h.copy(buf, 16);
    buf[16] = '\0';
  });
}

pbcnn_status pbcnn_experiment_run_stage(pbcnn_experiment* exp, const char* stage) {
  return guarded([&] {
    require(exp && stage, "stage");
    pipeline::Stage s;
    try {
      s = pipeline::parse_stage(stage);
    } catch (const Error& e) {
      throw ValidationError("stage", e.what());
    }
    pipeline::Pipeline p(exp->config, exp->out, exp->logger());
    p.run_stage(s);
  });
}

pbcnn_status pbcnn_experiment_run_all(pbcnn_experiment* exp, int resume) {
  return guarded([&] {
    require(exp, "experiment");
    pipeline::Pipeline p(exp->config, exp->out, exp->logger());
    p.run_all(resume != 0);
  });
}

pbcnn_status pbcnn_experiment_report(pbcnn_experiment* exp, const char** text) {
  return guarded([&] {
    require(exp && text, "arguments");
    exp->report = pipeline::emit_report(pipeline::bundle_for(exp->config, exp->out));
    *text = exp->report.c_str();
  });
}

void pbcnn_experiment_free(pbcnn_experiment* exp) { delete exp; }

pbcnn_status pbcnn_model_load(const char* checkpoint_path, pbcnn_model** out) {
  return guarded([&] {
    require(checkpoint_path && out, "arguments");
    *out = nullptr;
    *out = new pbcnn_model{bayes::load_checkpoint(checkpoint_path)};
  });
}

void pbcnn_model_free(pbcnn_model* model) { delete model; }

pbcnn_status pbcnn_model_shape(const pbcnn_model* model, size_t* height, size_t* width, size_t* classes) {
  return guarded([&] {
    require(model && height && width && classes, "arguments");
    const auto& spec = model->model.spec();
    *height = spec.height;
    *width = spec.width;
    *classes = spec.num_classes();
  });
}

pbcnn_status pbcnn_model_parameter_count(const pbcnn_model* model, uint64_t* frequentist, uint64_t* variational) {
  return guarded([&] {
    require(model && frequentist && variational, "arguments");
    const auto c = model->model.parameter_count();
    *frequentist = c.frequentist;
    *variational = c.variational;
  });
}

pbcnn_status pbcnn_model_predict(const pbcnn_model* model, const double* image, size_t passes, uint64_t seed,
                                 double* mean_prob, double* measures, size_t* predicted_class) {
  return guarded([&] {
    require(model && image && mean_prob && measures && predicted_class, "arguments");
    const auto& spec = model->model.spec();
    if (spec.channels != 1) throw ValidationError("image", "model expects multi-channel input");
    const std::size_t n = spec.height * spec.width;
    diffcore::Array img({spec.height, spec.width, 1}, std::vector<double>(image, image + n));
    const auto s = uq::summarize(uq::predict_mc(model->model, img, passes, seed));
    std::copy(s.mean_prob.begin(), s.mean_prob.end(), mean_prob);
    fill_measures(s, measures);
    *predicted_class = s.predicted_class;
  });
}

pbcnn_status pbcnn_uncertainty(const double* probs, size_t passes, size_t classes, double* measures) {
  return guarded([&] {
    require(probs && measures, "arguments");
    uq::PredictiveSamples samples{
        diffcore::Array({passes, classes}, std::vector<double>(probs, probs + passes * classes))};
    fill_measures(uq::summarize(samples), measures);
  });
}

pbcnn_status pbcnn_auroc(const double* scores, const int* is_id, size_t n, double* auroc) {
  return guarded([&] {
    require(scores && is_id && auroc, "arguments");
    std::vector<bool> id(n);
    for (size_t i = 0; i < n; ++i) id[i] = is_id[i] != 0;
    *auroc = gate::roc_auroc(std::span<const double>(scores, n), id).auroc;
  });
}

}  // extern "C"
