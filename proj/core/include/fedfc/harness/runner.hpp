#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fedfc/data/features.hpp"
#include "fedfc/data/folds.hpp"
#include "fedfc/fed/strategy.hpp"
#include "fedfc/harness/config.hpp"

namespace fedfc::harness {

enum class SweepKind { None, Pace, Noise };

// One unit of work: strategy x fold x seed x tau x noise point.  Cross is
// fold-free and planned once per (seed, tau, noise) with fold = -1.
struct Cell {
  std::string strategy;
  int fold = 0;
  std::uint64_t seed = 0;
  int tau = 0;
  NoisePoint noise;
};

struct ResultRow {
  std::string strategy;
  std::string site;
  int fold = 0;
  std::uint64_t seed = 0;
  int tau = 0;
  NoisePoint noise;
  double subject_acc = 0.0;
  double window_acc = 0.0;
  int subjects = 0;
  int windows = 0;
};

struct TelemetryRow {
  std::string strategy;
  int fold = 0;
  std::uint64_t seed = 0;
  int tau = 0;
  NoisePoint noise;
  fed::StepRecord step;
};

struct GateRow {
  int fold = 0;
  std::uint64_t seed = 0;
  std::string site;
  double lo = 0.0, hi = 0.0;
  int count = 0;
};

struct ProbeRow {
  int fold = 0;
  std::uint64_t seed = 0;
  std::string site_a, site_b;
  double acc_pre = 0.0, acc_post = 0.0;
};

struct RunOutput {
  std::vector<ResultRow> results;
  std::vector<TelemetryRow> telemetry;
  std::vector<GateRow> gate_hist;
  std::vector<ProbeRow> align_probe;
};

// Features from whichever source the config names; synth takes windowing
// from data.window / data.stride.
std::vector<data::ConnectivityFeature> load_features(const DataConfig& data);

// Subject-stratified folds; fixed by fold_seed, not by the run seeds.
data::FoldSplit make_folds(
    const std::vector<data::ConnectivityFeature>& features, int k,
    std::uint64_t fold_seed);

std::vector<Cell> plan_cells(const ExperimentConfig& cfg, SweepKind sweep);

// Runs cells on cfg.threads workers; outputs follow the plan order whatever
// the scheduling, so files are reproducible.
RunOutput run_cells(const ExperimentConfig& cfg,
                    const std::vector<data::ConnectivityFeature>& features,
                    const data::FoldSplit& split,
                    const std::vector<Cell>& cells);

// cfg.out unless the FEDFC_OUT environment variable is set.
std::string resolve_out_dir(const ExperimentConfig& cfg);

void write_outputs(const ExperimentConfig& cfg, SweepKind sweep,
                   const RunOutput& out, const std::string& dir);

// load -> folds -> plan -> run -> write, into resolve_out_dir(cfg).
int run_experiment(const ExperimentConfig& cfg, SweepKind sweep);

// Feature tables as CSV: subject_id,site_id,label,window,f0..f{D-1}.
void save_features_csv(const std::vector<data::ConnectivityFeature>& features,
                       const std::string& path);
std::vector<data::ConnectivityFeature> load_features_csv(
    const std::string& path);

// Trains the federated model on one fold and writes the biomarker report;
// roi_labels optionally maps ROI index to a display name.
int run_interpret(const ExperimentConfig& cfg, const std::string& strategy,
                  int fold, const std::map<Index, std::string>& roi_labels,
                  const std::string& dir);
std::map<Index, std::string> load_roi_labels(const std::string& path);

struct SummaryRow {
  std::string strategy;
  std::string site;  // "(all)" for the pooled row
  int n = 0;
  double mean_subject = 0.0;
  double std_subject = 0.0;
  double mean_window = 0.0;
  double p_vs_single = -1.0;  // pooled rows only; -1 when not computed
};

std::vector<SummaryRow> summarize_results(const std::string& results_csv);
void write_report(const std::vector<SummaryRow>& rows, const std::string& dir,
                  std::ostream& console);

}  // namespace fedfc::harness
