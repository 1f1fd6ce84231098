#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fedfc/fed/federation.hpp"
#include "fedfc/nn/model.hpp"
#include "fedfc/privacy/noise.hpp"
#include "fedfc/types.hpp"

namespace fedfc::adapt {

struct AlignConfig {
  fed::FedConfig fed;       // arch must contain a BatchNorm (the split point)
  int warmup_epochs = 5;    // classification-only epochs before aligning
  // applied to features crossing sites; light Gaussian noise by default
  privacy::NoiseSpec feature_noise{privacy::Mechanism::Gaussian, 0.01, 0};
  int disc_hidden = 8;
  // discriminators are small and trained from scratch inside the loop, so
  // they need a far larger rate than the model itself to stay informative
  double disc_lr = 1e-2;
};

// Generator = layers up to and including the first BatchNorm (the hidden
// representation); classifier = the rest.
std::pair<nn::MlpModel, nn::MlpModel> split_model(const nn::MlpModel& model);

// A feature batch leaving its owning site; the boundary mechanism runs
// exactly here, so `noised` certifies what the foreign discriminator saw.
struct FeatureBatch {
  Matrix values;
  bool crossed_boundary = false;
  bool noised = false;
};

FeatureBatch export_features(const Matrix& features,
                             const privacy::NoiseSpec& noise, Rng& stream);

// Eq. 7: -E[log D(f_src)] - E[log(1 - D(f_tgt))], probabilities floored.
double disc_loss(const Matrix& d_src, const Matrix& d_tgt);
// Eq. 8: -E[log D(f_src)] - E[log D(f_tgt)].
double gen_align_loss(const Matrix& d_src, const Matrix& d_tgt);

struct AlignStepRecord {
  int epoch = 0;
  int step = 0;
  std::string site;    // discriminator owner / source
  std::string target;  // whose exported features were judged
  double d_loss = 0.0;
  double g_loss = 0.0;
};

struct AlignResult {
  nn::MlpModel global_gen;
  nn::MlpModel global_cls;
  std::vector<nn::MlpModel> site_gens;  // final local copies, site order
  std::vector<nn::MlpModel> site_clss;
  std::vector<nn::MlpModel> site_gens_pre;  // snapshots at warmup end
  std::vector<std::string> site_ids;    // sorted
  std::vector<fed::StepRecord> telemetry;        // classification loss
  std::vector<AlignStepRecord> align_telemetry;  // empty during warmup
  std::vector<fed::CommRecord> comms;
  std::vector<std::string> shared_tensor_ids;    // G/... and C/..., never D
  std::map<std::string, Matrix> features_pre;    // G_i over the site's rows,
  std::map<std::string, Matrix> features_post;   // at warmup end / at the end
  int rounds = 0;
};

// Algorithm: per step each site takes a classification update through its
// G+C; after the warmup an alignment update follows, with the site as source
// and one other site (round-robin) as target: the site's discriminator
// trains on its own raw features against the target's noised exports, then
// both generators step to confuse the updated discriminator.  Every tau
// steps G and C are noise-averaged and broadcast; discriminators stay local.
// Alignment forward passes run in eval mode so BN statistics are owned by
// the classification path.
AlignResult run_fed_align(const AlignConfig& cfg,
                          const std::vector<fed::SiteData>& sites);

// Eval-mode class probabilities through a generator/classifier pair.
Matrix align_predict(nn::MlpModel& gen, nn::MlpModel& cls, const Matrix& x);

// Trains a fresh discriminator to tell rows of a from rows of b and returns
// its held-out accuracy (80/20 split); the domain-distance proxy.
double site_probe_accuracy(const Matrix& a, const Matrix& b,
                           std::uint64_t seed, int epochs = 30,
                           int hidden = 8);

// Transfer variant: fit the probe on one pair of feature sets and score it
// on another, e.g. train on training-fold features and evaluate on the
// held-out fold so subject identity cannot leak across the split.
double site_probe_accuracy(const Matrix& train_a, const Matrix& train_b,
                           const Matrix& eval_a, const Matrix& eval_b,
                           std::uint64_t seed, int epochs = 30,
                           int hidden = 8);

}  // namespace fedfc::adapt
