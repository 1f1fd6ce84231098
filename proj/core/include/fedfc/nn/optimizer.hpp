#pragma once

#include <string>
#include <vector>

#include "fedfc/nn/model.hpp"
#include "fedfc/types.hpp"

namespace fedfc::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Per-tensor first/second moment estimates, aligned with trainable_tensors().
struct AdamState {
  std::vector<Vector> m, v;
  long step = 0;

  static AdamState init_for(MlpModel& model);
};

// One bias-corrected Adam update in place.  Throws on non-finite gradients.
void adam_step(MlpModel& model, AdamState& state,
               const std::vector<Vector>& grads, double lr,
               const AdamConfig& cfg = {});

// Schedule ids: "halve20" (1e-5 halved every 20 epochs), "halve20:<init>",
// "const:<lr>".
double lr_schedule(const std::string& schedule_id, int epoch);

}  // namespace fedfc::nn
