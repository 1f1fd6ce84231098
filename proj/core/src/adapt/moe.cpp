#include "fedfc/adapt/moe.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "fedfc/nn/optimizer.hpp"

namespace fedfc::adapt {

namespace {

constexpr double kProbFloor = 1e-12;

Matrix mix_outputs(const Matrix& p_global, const Matrix& p_private, const Vector& a) {
  Matrix out = (p_global.array().colwise() * a.array()).matrix();
  out += (p_private.array().colwise() * (1.0 - a.array())).matrix();
  return out;
}

}  // namespace

MoEHead make_moe_head(Index input_dim, Index output_dim, int hidden,
                      bool gate_on_output, std::uint64_t seed) {
  if (input_dim <= 0 || output_dim <= 0 || hidden <= 0)
    throw std::invalid_argument("make_moe_head: dimensions must be positive");
  MoEHead head;
  head.gate_on_output = gate_on_output;
  const std::string private_arch = "mlp:" + std::to_string(input_dim) + "-" +
                                   std::to_string(hidden) + "-" +
                                   std::to_string(output_dim);
  head.private_model =
      nn::init_model(private_arch, Rng::derive_seed(seed, "moe-private"));
  const Index gate_dim = gate_on_output ? output_dim : input_dim;
  head.gate = nn::init_model("gatelin:" + std::to_string(gate_dim),
                             Rng::derive_seed(seed, "moe-gate"));
  return head;
}

Vector moe_gate(MoEHead& head, nn::MlpModel& global_model, const Matrix& x) {
  Matrix gate_in = head.gate_on_output
                       ? nn::forward(global_model, x, nn::Mode::Eval)
                       : x;
  return nn::forward(head.gate, gate_in, nn::Mode::Eval).col(0);
}

Matrix moe_forward(MoEHead& head, nn::MlpModel& global_model, const Matrix& x) {
  Matrix p_global = nn::forward(global_model, x, nn::Mode::Eval);
  Matrix gate_in = head.gate_on_output ? p_global : x;
  Vector a = nn::forward(head.gate, gate_in, nn::Mode::Eval).col(0);
  Matrix p_private = nn::forward(head.private_model, x, nn::Mode::Eval);
  return mix_outputs(p_global, p_private, a);
}

MoEResult train_fed_moe(const fed::FedConfig& cfg, bool gate_on_output,
                        int private_hidden,
                        const std::vector<fed::SiteData>& train,
                        const std::vector<fed::SiteData>& test) {
  if (train.empty()) throw std::invalid_argument("train_fed_moe: no sites");

  std::vector<const fed::SiteData*> ordered;
  std::set<std::string> seen;
  for (const fed::SiteData& s : train) {
    if (!seen.insert(s.site_id).second)
      throw std::invalid_argument("train_fed_moe: duplicate site id " + s.site_id);
    ordered.push_back(&s);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const fed::SiteData* a, const fed::SiteData* b) {
              return a->site_id < b->site_id;
            });

  MoEResult res;
  res.global = nn::init_model(cfg.arch, Rng::derive_seed(cfg.seed, "init"));
  const Index in_dim = res.global.input_dim();
  const Index out_dim = res.global.output_dim();

  std::vector<fed::SiteNode> nodes;
  std::vector<nn::AdamState> opt_private, opt_gate;
  for (const fed::SiteData* s : ordered) {
    nodes.push_back(fed::make_site_node(cfg, *s));
    res.site_ids.push_back(s->site_id);
    res.heads.push_back(make_moe_head(
        in_dim, out_dim, private_hidden, gate_on_output,
        Rng::derive_seed(cfg.seed, "moe/" + s->site_id)));
    opt_private.push_back(nn::AdamState::init_for(res.heads.back().private_model));
    opt_gate.push_back(nn::AdamState::init_for(res.heads.back().gate));
  }
  for (const nn::TensorRef& t : res.global.all_tensors())
    res.shared_tensor_ids.push_back(t.id);

  auto moe_step = [&](std::size_t idx, double lr) {
    fed::SiteNode& node = nodes[idx];
    MoEHead& head = res.heads[idx];
    auto [bx, by] = node.batches.next(node.rng);
    const Index batch = bx.rows();

    nn::ForwardCache cache_g, cache_p, cache_a;
    Matrix p_global = nn::forward(node.model, bx, nn::Mode::Train, &node.rng, &cache_g);
    Matrix p_private =
        nn::forward(head.private_model, bx, nn::Mode::Train, &node.rng, &cache_p);
    Matrix gate_in = head.gate_on_output ? p_global : bx;
    Vector a = nn::forward(head.gate, gate_in, nn::Mode::Eval, nullptr, &cache_a).col(0);

    Matrix y_hat = mix_outputs(p_global, p_private, a);
    const double loss = nn::cross_entropy(y_hat, by);

    // d loss / d y_hat for the mean negative log likelihood
    Matrix d_yhat = Matrix::Zero(batch, out_dim);
    for (Index r = 0; r < batch; ++r) {
      const int label = by[static_cast<std::size_t>(r)];
      d_yhat(r, label) =
          -1.0 / (static_cast<double>(batch) * std::max(y_hat(r, label), kProbFloor));
    }

    // gate: d loss / d a, then through the sigmoid to the affine unit
    Vector d_a = ((p_global - p_private).array() * d_yhat.array()).rowwise().sum().matrix();
    Matrix d_u = (d_a.array() * a.array() * (1.0 - a.array())).matrix();
    nn::BackpropResult back_gate =
        nn::backprop(head.gate, cache_a, d_u, /*top_is_preactivation=*/true);

    Matrix d_pg = (d_yhat.array().colwise() * a.array()).matrix();
    if (head.gate_on_output) d_pg += back_gate.input_grad;
    Matrix d_pp = (d_yhat.array().colwise() * (1.0 - a.array())).matrix();

    nn::BackpropResult back_g =
        nn::backprop(node.model, cache_g, d_pg, /*top_is_preactivation=*/false);
    nn::BackpropResult back_p = nn::backprop(head.private_model, cache_p, d_pp,
                                             /*top_is_preactivation=*/false);

    nn::adam_step(node.model, node.opt, back_g.grads, lr);
    nn::adam_step(head.private_model, opt_private[idx], back_p.grads, lr);
    nn::adam_step(head.gate, opt_gate[idx], back_gate.grads, lr);
    return loss;
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = nn::lr_schedule(cfg.lr, epoch);
    int t = 0;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      const bool comm_now = (t + 1) % cfg.tau == 0;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        const double loss = moe_step(i, lr);
        res.telemetry.push_back({epoch, step, nodes[i].site_id, loss, comm_now});
      }
      ++t;
      if (comm_now) {
        ++res.rounds;
        fed::aggregate(res.global, nodes, cfg.noise, cfg.seed, res.rounds);
        fed::broadcast(res.global, nodes);
        res.comms.push_back({epoch, step, res.rounds});
      }
    }
  }
  if (res.rounds == 0) {
    ++res.rounds;
    fed::aggregate(res.global, nodes, cfg.noise, cfg.seed, res.rounds);
    fed::broadcast(res.global, nodes);
  }

  for (const fed::SiteData& ts : test) {
    auto it = std::find(res.site_ids.begin(), res.site_ids.end(), ts.site_id);
    if (it == res.site_ids.end())
      throw std::invalid_argument("train_fed_moe: test site " + ts.site_id +
                                  " was never trained");
    const std::size_t idx = static_cast<std::size_t>(it - res.site_ids.begin());
    MoESiteResult site_res;
    site_res.site = ts.site_id;
    Matrix probs = moe_forward(res.heads[idx], nodes[idx].model, ts.x);
    site_res.score = fed::score_probs(probs, ts);
    Vector gates = moe_gate(res.heads[idx], nodes[idx].model, ts.x);
    site_res.gate_values.assign(gates.data(), gates.data() + gates.size());
    res.sites.push_back(std::move(site_res));
  }

  for (fed::SiteNode& node : nodes) res.site_globals.push_back(std::move(node.model));
  return res;
}

}  // namespace fedfc::adapt
