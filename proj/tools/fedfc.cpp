// fedfc command line: preprocess, synth, run, sweeps, interpret, report.
#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedfc/data/csv_io.hpp"
#include "fedfc/data/synthetic.hpp"
#include "fedfc/harness/config.hpp"
#include "fedfc/harness/runner.hpp"

namespace {

using fedfc::harness::ExperimentConfig;
using fedfc::harness::SweepKind;

struct CommonOpts {
  std::string config;
  std::string out;
  std::int64_t seed = -1;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool config_required) {
  auto* c = cmd->add_option("--config", opts.config, "experiment config (json)");
  if (config_required) c->required();
  cmd->add_option("--out", opts.out, "output directory (overrides config)");
  cmd->add_option("--seed", opts.seed,
                  "run a single seed instead of the config's seed list");
  cmd->add_option("--threads", opts.threads, "worker threads");
}

ExperimentConfig configure(const CommonOpts& opts) {
  ExperimentConfig cfg;
  if (!opts.config.empty()) cfg = fedfc::harness::load_config(opts.config);
  if (!opts.out.empty()) cfg.out = opts.out;
  if (opts.seed >= 0) cfg.seeds = {static_cast<std::uint64_t>(opts.seed)};
  if (opts.threads > 0) cfg.threads = opts.threads;
  return cfg;
}

int cmd_preprocess(const std::string& roi_dir, const std::string& phenotype,
                   int window, int stride, const std::string& out) {
  fedfc::harness::DataConfig data;
  data.source = "roi-dir";
  data.roi_dir = roi_dir;
  data.phenotype = phenotype;
  data.window = window;
  data.stride = stride;
  auto features = fedfc::harness::load_features(data);
  fedfc::harness::save_features_csv(features, out);
  std::cout << "wrote " << features.size() << " windows ("
            << features.front().values.size() << " features) to " << out
            << "\n";
  return 0;
}

int cmd_synth(const fedfc::data::SynthConfig& sc, const std::string& out) {
  fedfc::data::SynthDataset ds = fedfc::data::synth_generate(sc);
  fedfc::data::export_synth_dataset(ds, out);
  std::cout << "wrote " << ds.subjects.size() << " subjects to " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"federated fMRI connectivity classification workbench"};
  app.require_subcommand(1);

  // preprocess
  auto* pre = app.add_subcommand(
      "preprocess", "ROI time series directory -> connectivity feature csv");
  std::string roi_dir, phenotype, pre_out = "features.csv";
  int window = 32, stride = 1;
  pre->add_option("--roi-dir", roi_dir, "directory of per-subject ROI csvs")
      ->required();
  pre->add_option("--phenotype", phenotype, "phenotype csv")->required();
  pre->add_option("--window", window, "window length (frames)");
  pre->add_option("--stride", stride, "window stride (frames)");
  pre->add_option("--out", pre_out, "output feature csv");

  // synth
  auto* synth = app.add_subcommand(
      "synth", "generate a synthetic multi-site ROI dataset on disk");
  fedfc::data::SynthConfig sc;
  std::string synth_out = "synth";
  synth->add_option("--sites", sc.n_sites, "number of sites");
  synth->add_option("--subjects-per-class", sc.subjects_per_class,
                    "subjects per class per site");
  synth->add_option("--rois", sc.rois, "ROI count");
  synth->add_option("--frames", sc.frames, "frames per subject");
  synth->add_option("--signal", sc.signal_strength, "class signal strength");
  synth->add_option("--shift", sc.shift_strength, "site shift strength");
  synth->add_option("--informative", sc.informative_roi_count,
                    "informative ROI count");
  synth->add_option("--seed", sc.seed, "generator seed");
  synth->add_option("--out", synth_out, "output directory");

  // run / sweeps
  CommonOpts run_opts, pace_opts, noise_opts;
  auto* run = app.add_subcommand("run", "run the configured strategies");
  add_common(run, run_opts, true);
  auto* pace = app.add_subcommand("sweep-pace",
                                  "run the strategies across the tau grid");
  add_common(pace, pace_opts, true);
  auto* noise = app.add_subcommand(
      "sweep-noise", "run the strategies across the noise grid");
  add_common(noise, noise_opts, true);

  // interpret
  CommonOpts int_opts;
  auto* interp = app.add_subcommand(
      "interpret", "train one strategy and write the biomarker report");
  add_common(interp, int_opts, true);
  std::string int_strategy = "fed", labels_path;
  int int_fold = 0;
  interp->add_option("--strategy", int_strategy, "strategy to interpret");
  interp->add_option("--fold", int_fold, "fold to train on");
  interp->add_option("--labels", labels_path, "ROI label csv (index,name)");

  // report
  auto* report =
      app.add_subcommand("report", "summarize a results csv to a table");
  std::string results_path, report_out = "out";
  report->add_option("--results", results_path, "results.csv path")->required();
  report->add_option("--out", report_out, "directory for summary.csv");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pre->parsed())
      return cmd_preprocess(roi_dir, phenotype, window, stride, pre_out);
    if (synth->parsed()) return cmd_synth(sc, synth_out);
    if (run->parsed())
      return fedfc::harness::run_experiment(configure(run_opts),
                                            SweepKind::None);
    if (pace->parsed())
      return fedfc::harness::run_experiment(configure(pace_opts),
                                            SweepKind::Pace);
    if (noise->parsed())
      return fedfc::harness::run_experiment(configure(noise_opts),
                                            SweepKind::Noise);
    if (interp->parsed()) {
      ExperimentConfig cfg = configure(int_opts);
      std::map<fedfc::Index, std::string> labels;
      if (!labels_path.empty())
        labels = fedfc::harness::load_roi_labels(labels_path);
      return fedfc::harness::run_interpret(
          cfg, int_strategy, int_fold, labels,
          fedfc::harness::resolve_out_dir(cfg));
    }
    if (report->parsed()) {
      auto rows = fedfc::harness::summarize_results(results_path);
      fedfc::harness::write_report(rows, report_out, std::cout);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "fedfc: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
