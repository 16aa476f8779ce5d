// Command-line front end; talks to the toolkit only through the C API.
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "pbcnn/pbcnn.h"

namespace {

struct Common {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  bool fresh = false;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--out", c.out, "output directory")->required();
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_flag("-q,--quiet", c.quiet, "suppress progress messages");
}

void print_log(const char* msg, void*) { std::cerr << msg << '\n'; }

int fail(pbcnn_status st) {
  std::cerr << "error: " << pbcnn_last_error() << '\n';
  return static_cast<int>(st);
}

int run(const Common& c, const std::string& stage) {
  pbcnn_experiment* exp = nullptr;
  if (auto st = pbcnn_experiment_load(c.config.c_str(), c.out.c_str(), &exp); st != PBCNN_OK) return fail(st);
  auto st = PBCNN_OK;
  if (c.seed) st = pbcnn_experiment_set_seed(exp, *c.seed);
  if (st == PBCNN_OK && !c.quiet) st = pbcnn_experiment_set_log(exp, print_log, nullptr);
  if (st == PBCNN_OK) {
    st = stage == "run" ? pbcnn_experiment_run_all(exp, c.fresh ? 0 : 1)
                        : pbcnn_experiment_run_stage(exp, stage.c_str());
  }
  if (st == PBCNN_OK && (stage == "report" || stage == "run")) {
    const char* text = nullptr;
    st = pbcnn_experiment_report(exp, &text);
    if (st == PBCNN_OK) std::cout << text;
  }
  pbcnn_experiment_free(exp);
  return st == PBCNN_OK ? 0 : fail(st);
}

int model_info(const std::string& path) {
  pbcnn_model* m = nullptr;
  if (auto st = pbcnn_model_load(path.c_str(), &m); st != PBCNN_OK) return fail(st);
  size_t h = 0, w = 0, k = 0;
  uint64_t freq = 0, var = 0;
  auto st = pbcnn_model_shape(m, &h, &w, &k);
  if (st == PBCNN_OK) st = pbcnn_model_parameter_count(m, &freq, &var);
  if (st == PBCNN_OK) {
    std::cout << "input " << h << "x" << w << ", classes " << k << "\n"
              << "parameters: frequentist-equivalent " << freq << ", variational " << var << "\n";
  }
  pbcnn_model_free(m);
  return st == PBCNN_OK ? 0 : fail(st);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian CNN fault diagnosis with uncertainty-gated OOD detection"};
  app.set_version_flag("--version", std::string(pbcnn_version()));
  app.require_subcommand(1);

  Common common;
  std::string selected;
  const char* stages[][2] = {
      {"synth", "generate or ingest raw signals"},
      {"preprocess", "segment, build spectrograms and split"},
      {"train", "fit the Bayesian CNN"},
      {"calibrate", "risk-coverage curves and threshold table"},
      {"inject", "build out-of-distribution sets"},
      {"evaluate", "AUROC and gated diagnosis metrics"},
      {"report", "print the text report"},
  };
  for (auto& s : stages) {
    auto* cmd = app.add_subcommand(s[0], s[1]);
    add_common(cmd, common);
    cmd->callback([&selected, name = std::string(s[0])] { selected = name; });
  }
  auto* run_cmd = app.add_subcommand("run", "all stages in order, resuming completed ones");
  add_common(run_cmd, common);
  run_cmd->add_flag("--fresh", common.fresh, "rerun every stage");
  run_cmd->callback([&selected] { selected = "run"; });

  std::string model_path;
  auto* info = app.add_subcommand("model-info", "describe a checkpoint");
  info->add_option("checkpoint", model_path)->required()->check(CLI::ExistingFile);
  info->callback([&selected] { selected = "model-info"; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : PBCNN_ERR_VALIDATION;
  }
  if (selected == "model-info") return model_info(model_path);
  return run(common, selected);
}
