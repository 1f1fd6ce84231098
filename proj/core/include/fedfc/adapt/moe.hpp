#pragma once

#include <string>
#include <vector>

#include "fedfc/fed/federation.hpp"
#include "fedfc/nn/model.hpp"
#include "fedfc/types.hpp"

namespace fedfc::adapt {

// Site-private half of the mixture: an expert model plus a one-unit gate
// a(x) = sigmoid(psi . x + b).  Neither tensor is ever shared or noised.
// With gate_on_output the gate reads the global model's class probabilities
// instead of the raw feature (the reduced variant of the layer table).
struct MoEHead {
  nn::MlpModel private_model;
  nn::MlpModel gate;  // "gatelin:<dim>"
  bool gate_on_output = false;
};

MoEHead make_moe_head(Index input_dim, Index output_dim, int hidden,
                      bool gate_on_output, std::uint64_t seed);

// Gate values over a batch, eval mode; column vector in (0,1).
Vector moe_gate(MoEHead& head, nn::MlpModel& global_model, const Matrix& x);

// y_hat = a(x) y_G + (1 - a(x)) y_P, eval mode; rows remain distributions.
Matrix moe_forward(MoEHead& head, nn::MlpModel& global_model, const Matrix& x);

struct MoESiteResult {
  std::string site;
  eval::FoldScore score;
  std::vector<double> gate_values;  // a(x) on the site's test windows
};

struct MoEResult {
  nn::MlpModel global;
  std::vector<nn::MlpModel> site_globals;  // final local copies
  std::vector<MoEHead> heads;              // site order
  std::vector<std::string> site_ids;
  std::vector<MoESiteResult> sites;        // one per site with test data
  std::vector<fed::StepRecord> telemetry;  // mixed-output training loss
  std::vector<fed::CommRecord> comms;
  std::vector<std::string> shared_tensor_ids;
  int rounds = 0;
};

// The federated loop with a per-site mixture head: the global model follows
// the noised-averaging schedule, while private model and gate train locally
// from the cross-entropy of the mixed output; all three get their gradients
// from one joint backward pass per step.  Evaluation mixes each site's final
// global copy with its head; private_hidden sizes the expert.
MoEResult train_fed_moe(const fed::FedConfig& cfg, bool gate_on_output,
                        int private_hidden,
                        const std::vector<fed::SiteData>& train,
                        const std::vector<fed::SiteData>& test);

}  // namespace fedfc::adapt
