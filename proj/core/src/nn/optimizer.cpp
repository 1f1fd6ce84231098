#include "fedfc/nn/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace fedfc::nn {

AdamState AdamState::init_for(MlpModel& model) {
  AdamState st;
  for (const TensorRef& t : model.trainable_tensors()) {
    st.m.push_back(Vector::Zero(t.size()));
    st.v.push_back(Vector::Zero(t.size()));
  }
  return st;
}

void adam_step(MlpModel& model, AdamState& state,
               const std::vector<Vector>& grads, double lr,
               const AdamConfig& cfg) {
  std::vector<TensorRef> params = model.trainable_tensors();
  if (grads.size() != params.size() || state.m.size() != params.size())
    throw std::invalid_argument("adam_step: gradient/state layout mismatch");

  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < params.size(); ++i) {
    const Vector& g = grads[i];
    if (g.size() != params[i].size())
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + params[i].id);
    if (!g.allFinite())
      throw std::runtime_error("adam_step: non-finite gradient in " + params[i].id);
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    Eigen::Map<Vector> w(params[i].data, params[i].size());
    w.array() -= lr * (state.m[i].array() / bc1) /
                 ((state.v[i].array() / bc2).sqrt() + cfg.eps);
  }
}

double lr_schedule(const std::string& schedule_id, int epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_schedule: negative epoch");
  std::string id = schedule_id;
  double init = 1e-5;
  const std::size_t colon = id.find(':');
  std::string family = colon == std::string::npos ? id : id.substr(0, colon);
  if (colon != std::string::npos) {
    try {
      init = std::stod(id.substr(colon + 1));
    } catch (const std::exception&) {
      throw std::invalid_argument("lr_schedule: bad schedule id '" + schedule_id + "'");
    }
  }
  if (family == "halve20")
    return init * std::pow(0.5, static_cast<double>(epoch / 20));
  if (family == "const" && colon != std::string::npos) return init;
  throw std::invalid_argument("lr_schedule: bad schedule id '" + schedule_id + "'");
}

}  // namespace fedfc::nn
