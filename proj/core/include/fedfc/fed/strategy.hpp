#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fedfc/data/features.hpp"
#include "fedfc/data/folds.hpp"
#include "fedfc/fed/federation.hpp"
#include "fedfc/privacy/noise.hpp"

namespace fedfc::fed {

enum class Strategy { Single, Cross, Mix, Ensemble, Fed, FedMoE, FedAlign };

Strategy parse_strategy(const std::string& name);
std::string strategy_name(Strategy s);

// Per-site window tables for one fold, z-scored with the fitting site's
// training statistics.  Sites sorted; sites with no rows on a side are
// dropped from that side.
struct PreparedFold {
  std::vector<SiteData> train;
  std::vector<SiteData> test;
};

PreparedFold prepare_fold(const std::vector<data::ConnectivityFeature>& features,
                          const data::FoldSplit& split, int fold);

// Fold-free view for the cross-site strategies: every site's full data,
// z-scored with that site's own full statistics.
std::vector<SiteData> prepare_full(
    const std::vector<data::ConnectivityFeature>& features);

struct StrategyConfig {
  FedConfig fed;                    // arch = the pooled/federated architecture
  std::string single_arch;          // defaults to the 8-hidden-unit variant
  std::string cross_site;           // empty: largest site by window count
  bool moe_gate_on_output = false;  // gate reads y_G instead of the feature
  int align_warmup = 5;
  // boundary noise for the alignment step; light Gaussian by default
  privacy::NoiseSpec feature_noise{privacy::Mechanism::Gaussian, 0.01, 0};
};

struct StrategyCell {
  std::string strategy;
  std::string site;  // evaluated site
  double subject_acc = 0.0;
  double window_acc = 0.0;
  int subjects = 0;
  int windows = 0;
};

// Side products of a strategy run, for telemetry files and probes.
struct StrategyArtifacts {
  std::vector<StepRecord> telemetry;
  std::map<std::string, std::vector<double>> gate_values;  // fed-moe
  // fed-align: per-site generator features before and after the alignment
  // phase, separately for the training fold (probe fitting) and the held-out
  // fold (probe scoring)
  std::map<std::string, Matrix> features_pre, features_post;
  std::map<std::string, Matrix> train_features_pre, train_features_post;
};

// Runs one strategy end to end on one fold and scores every evaluable site.
// Cross and Ensemble additionally use the fold-free site view (a Cross model
// trains on its whole site and is tested on whole foreign sites, so fold
// boundaries do not apply to it).
std::vector<StrategyCell> run_strategy(
    Strategy strategy, const std::vector<data::ConnectivityFeature>& features,
    const data::FoldSplit& split, int fold, const StrategyConfig& cfg,
    StrategyArtifacts* artifacts = nullptr);

// "mlp:<input>-<hidden>-2"
std::string mlp_arch(Index input_dim, int hidden);

// Largest site by window count, ties to the lexicographically first id;
// exclude names a site that must not be picked (the evaluated site).
std::string largest_site(const std::vector<SiteData>& sites,
                         const std::string& exclude = "");

}  // namespace fedfc::fed
