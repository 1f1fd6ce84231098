#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fedfc/data/synthetic.hpp"
#include "fedfc/fed/federation.hpp"
#include "fedfc/privacy/noise.hpp"

namespace fedfc::harness {

// One point of the noise sweep; the run seed stays the experiment's.
struct NoisePoint {
  privacy::Mechanism mechanism = privacy::Mechanism::None;
  double alpha = 0.0;
};

struct DataConfig {
  std::string source = "synth";  // synth | roi-dir | features-csv
  data::SynthConfig synth;       // windowing comes from the fields below
  std::string roi_dir;
  std::string phenotype;
  std::string features_csv;
  int window = 32;
  int stride = 1;
};

struct ExperimentConfig {
  DataConfig data;
  std::vector<std::string> strategies{"fed"};
  fed::FedConfig fed;  // K=50, 60 steps/epoch, tau=20 by default
  std::string single_arch;
  std::string cross_site;
  bool moe_gate_on_output = false;
  int align_warmup = 5;
  privacy::NoiseSpec feature_noise{privacy::Mechanism::Gaussian, 0.01, 0};
  double delta = 1e-5;  // for the reported Gaussian budget
  int folds = 5;
  std::vector<int> fold_subset;  // empty: every fold
  std::uint64_t fold_seed = 17;  // folds fixed across run seeds
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
  std::vector<int> tau_grid{5, 10, 20, 30};
  std::vector<NoisePoint> noise_grid;  // defaulted in the constructor
  std::string out = "out";
  int threads = 1;
  bool telemetry = true;

  ExperimentConfig();
};

// Strict JSON: unknown keys and malformed values throw with the field path.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Canonical serialization, used for the run metadata echo.
std::string dump_config(const ExperimentConfig& cfg);

void validate_config(const ExperimentConfig& cfg);

}  // namespace fedfc::harness
