#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "fedfc/eval/metrics.hpp"
#include "fedfc/nn/model.hpp"
#include "fedfc/nn/optimizer.hpp"
#include "fedfc/privacy/noise.hpp"
#include "fedfc/rng.hpp"
#include "fedfc/types.hpp"

namespace fedfc::fed {

struct FedConfig {
  int epochs = 50;
  int steps_per_epoch = 60;
  int tau = 20;                 // aggregation pace, in local steps
  privacy::NoiseSpec noise;     // applied to shared trainable tensors
  std::string arch = "fed-mlp";
  std::string lr = "halve20";
  std::uint64_t seed = 0;
};

// One site's window table after normalization; rows are windows.
struct SiteData {
  std::string site_id;
  Matrix x;
  std::vector<int> y;
  std::vector<std::string> subject_of_row;
};

// Cycles through the site's rows in shuffled order, reshuffling with the
// site's rng whenever a pass is exhausted.  Batch size is
// ceil(rows / steps_per_epoch), at least 1.
class BatchIterator {
 public:
  BatchIterator(const SiteData* data, int steps_per_epoch);

  std::pair<Matrix, std::vector<int>> next(Rng& rng);
  Index batch_size() const { return batch_; }

 private:
  const SiteData* data_;
  Index batch_;
  std::vector<Index> order_;
  std::size_t cursor_;
};

struct SiteNode {
  std::string site_id;
  const SiteData* data;
  nn::MlpModel model;
  nn::AdamState opt;
  Rng rng;  // the site's only randomness source: batch order and dropout
  BatchIterator batches;
};

struct StepRecord {
  int epoch = 0;
  int step = 0;
  std::string site;
  double loss = 0.0;
  bool comm = false;  // an aggregation barrier closed this step
};

struct CommRecord {
  int epoch = 0;
  int step = 0;
  int round = 0;  // global aggregation counter, 1-based
};

struct FedResult {
  nn::MlpModel global;
  std::vector<nn::MlpModel> site_models;   // final local copies, site order
  std::vector<std::string> site_ids;       // sorted
  std::vector<StepRecord> telemetry;
  std::vector<CommRecord> comms;
  std::vector<std::string> shared_tensor_ids;  // everything aggregation touches
  int rounds = 0;
};

// Builds a ready-to-step node: model from the shared init stream (all sites
// start from identical weights), rng from the "site/<id>" substream.
SiteNode make_site_node(const FedConfig& cfg, const SiteData& data);

// One forward/backward/adam update on the node's next mini-batch.
double local_step(SiteNode& node, double lr);

// One model role shared across all sites (the plain federated model, or the
// generator / classifier halves of the alignment setup).  locals follow the
// sorted site order of site_ids.
struct AggregateGroup {
  std::string role;  // "" for the single shared model; becomes part of ids
  nn::MlpModel* global = nullptr;
  std::vector<nn::MlpModel*> locals;
};

// w_bar <- mean over sites of (w_n + noise); every trainable tensor is
// perturbed independently through a substream keyed by (round, site, role,
// tensor), BN running stats are averaged unperturbed.  Sites are consumed in
// sorted site_id order so the result is schedule-independent.
void aggregate_models(std::vector<AggregateGroup>& groups,
                      const std::vector<std::string>& site_ids,
                      const privacy::NoiseSpec& noise, std::uint64_t run_seed,
                      int round);
void broadcast_models(std::vector<AggregateGroup>& groups);

// The ids aggregation would share for these groups ("L1.W" or "G/L1.W").
std::vector<std::string> shared_ids(std::vector<AggregateGroup>& groups);

void aggregate(nn::MlpModel& global, std::vector<SiteNode>& nodes,
               const privacy::NoiseSpec& noise, std::uint64_t run_seed,
               int round);

// Copies every global tensor (weights and BN buffers) into each node's
// model; optimizer moments and step counts are retained.
void broadcast(nn::MlpModel& global, std::vector<SiteNode>& nodes);

// Algorithm: per epoch the pace counter resets; each step every site takes
// one local update, and after every tau steps the noised weights are
// averaged and broadcast.  If no aggregation ever triggers (tau larger than
// the total step count of an epoch) a terminal one builds the returned
// global model; it is not part of the telemetry.
FedResult run_fed(const FedConfig& cfg, const std::vector<SiteData>& sites);

// Centralized baseline: the identical per-site stepping loop with no
// aggregation.  With one site and tau = 1, run_fed must match this exactly.
struct TrainResult {
  nn::MlpModel model;
  std::vector<StepRecord> telemetry;
};
TrainResult train_single(const FedConfig& cfg, const SiteData& data);

// Eval-mode class probabilities for a window table.
Matrix predict_probs(nn::MlpModel& model, const Matrix& x);
std::vector<int> argmax_rows(const Matrix& probs);

// Window argmax, subject majority vote, subject/window accuracies.
eval::FoldScore score_model(nn::MlpModel& model, const SiteData& test);
eval::FoldScore score_probs(const Matrix& probs, const SiteData& test);

}  // namespace fedfc::fed
