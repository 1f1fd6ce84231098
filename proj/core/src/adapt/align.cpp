#include "fedfc/adapt/align.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "fedfc/nn/optimizer.hpp"

namespace fedfc::adapt {

namespace {

constexpr double kProbFloor = 1e-12;

double mean_neg_log(const Matrix& p) {
  return -(p.array().max(kProbFloor).log().sum()) / static_cast<double>(p.rows());
}

std::vector<Vector> add_grads(std::vector<Vector> a, const std::vector<Vector>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

// steps_per_epoch equivalent that yields roughly 64-row alignment batches
int align_steps(Index rows) {
  return std::max<int>(1, static_cast<int>((rows + 63) / 64));
}

}  // namespace

std::pair<nn::MlpModel, nn::MlpModel> split_model(const nn::MlpModel& model) {
  std::size_t bn = model.layers.size();
  for (std::size_t i = 0; i < model.layers.size(); ++i)
    if (std::holds_alternative<nn::BatchNorm>(model.layers[i])) {
      bn = i;
      break;
    }
  if (bn == model.layers.size())
    throw std::invalid_argument("split_model: architecture has no batch norm");
  nn::MlpModel gen, cls;
  gen.arch_id = model.arch_id + "#gen";
  cls.arch_id = model.arch_id + "#cls";
  for (std::size_t i = 0; i <= bn; ++i) gen.layers.push_back(model.layers[i]);
  for (std::size_t i = bn + 1; i < model.layers.size(); ++i)
    cls.layers.push_back(model.layers[i]);
  if (cls.layers.empty())
    throw std::invalid_argument("split_model: nothing left for the classifier");
  return {std::move(gen), std::move(cls)};
}

FeatureBatch export_features(const Matrix& features,
                             const privacy::NoiseSpec& noise, Rng& stream) {
  FeatureBatch out;
  out.values = privacy::perturb_tensor(features, noise, stream);
  out.crossed_boundary = true;
  out.noised = noise.mechanism != privacy::Mechanism::None && noise.alpha > 0.0;
  return out;
}

double disc_loss(const Matrix& d_src, const Matrix& d_tgt) {
  return mean_neg_log(d_src) + mean_neg_log(Matrix(1.0 - d_tgt.array()));
}

double gen_align_loss(const Matrix& d_src, const Matrix& d_tgt) {
  return mean_neg_log(d_src) + mean_neg_log(d_tgt);
}

Matrix align_predict(nn::MlpModel& gen, nn::MlpModel& cls, const Matrix& x) {
  Matrix feats = nn::forward(gen, x, nn::Mode::Eval);
  return nn::forward(cls, feats, nn::Mode::Eval);
}

AlignResult run_fed_align(const AlignConfig& cfg,
                          const std::vector<fed::SiteData>& sites) {
  if (sites.size() < 2)
    throw std::invalid_argument("run_fed_align: needs at least two sites");
  if (cfg.fed.epochs < 1 || cfg.fed.steps_per_epoch < 1 || cfg.fed.tau < 1)
    throw std::invalid_argument("run_fed_align: epochs, steps_per_epoch and tau must be >= 1");
  if (cfg.warmup_epochs < 0)
    throw std::invalid_argument("run_fed_align: negative warmup");

  std::vector<const fed::SiteData*> ordered;
  std::set<std::string> seen;
  for (const fed::SiteData& s : sites) {
    if (!seen.insert(s.site_id).second)
      throw std::invalid_argument("run_fed_align: duplicate site id " + s.site_id);
    ordered.push_back(&s);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const fed::SiteData* a, const fed::SiteData* b) {
              return a->site_id < b->site_id;
            });

  const std::uint64_t seed = cfg.fed.seed;
  nn::MlpModel full = nn::init_model(cfg.fed.arch, Rng::derive_seed(seed, "init"));

  AlignResult res;
  std::tie(res.global_gen, res.global_cls) = split_model(full);
  const Index feat_dim = res.global_gen.output_dim();
  const std::string disc_arch = "disc:" + std::to_string(feat_dim) + "-" +
                                std::to_string(cfg.disc_hidden) + "-1";

  struct Node {
    const fed::SiteData* data;
    nn::MlpModel gen, cls, disc;
    nn::AdamState opt_gen, opt_cls, opt_disc;
    Rng rng_cls, rng_src, rng_exp;
    fed::BatchIterator it_cls, it_src, it_exp;
    std::size_t rr = 0;  // round-robin target cursor
  };
  std::vector<Node> nodes;
  for (const fed::SiteData* s : ordered) {
    auto [gen, cls] = split_model(full);
    nn::MlpModel disc =
        nn::init_model(disc_arch, Rng::derive_seed(seed, "disc/" + s->site_id));
    Node n{s,
           std::move(gen),
           std::move(cls),
           std::move(disc),
           {},
           {},
           {},
           Rng::derive(seed, "site/" + s->site_id),
           Rng::derive(seed, "align-src/" + s->site_id),
           Rng::derive(seed, "align-exp/" + s->site_id),
           fed::BatchIterator(s, cfg.fed.steps_per_epoch),
           // alignment batches are sized independently of the classification
           // schedule; tiny batches make the discriminators memorize rows
           // instead of the site signature
           fed::BatchIterator(s, align_steps(s->x.rows())),
           fed::BatchIterator(s, align_steps(s->x.rows()))};
    n.opt_gen = nn::AdamState::init_for(n.gen);
    n.opt_cls = nn::AdamState::init_for(n.cls);
    n.opt_disc = nn::AdamState::init_for(n.disc);
    nodes.push_back(std::move(n));
    res.site_ids.push_back(s->site_id);
  }

  std::vector<fed::AggregateGroup> groups(2);
  groups[0].role = "G";
  groups[0].global = &res.global_gen;
  groups[1].role = "C";
  groups[1].global = &res.global_cls;
  for (Node& n : nodes) {
    groups[0].locals.push_back(&n.gen);
    groups[1].locals.push_back(&n.cls);
  }
  res.shared_tensor_ids = fed::shared_ids(groups);

  auto capture = [&](std::map<std::string, Matrix>& into) {
    for (Node& n : nodes)
      into[n.data->site_id] = nn::forward(n.gen, n.data->x, nn::Mode::Eval);
  };
  auto snapshot_gens = [&] {
    res.site_gens_pre.clear();
    for (Node& n : nodes) res.site_gens_pre.push_back(n.gen);
  };
  if (cfg.warmup_epochs == 0) {
    capture(res.features_pre);
    snapshot_gens();
  }

  for (int epoch = 0; epoch < cfg.fed.epochs; ++epoch) {
    const double lr = nn::lr_schedule(cfg.fed.lr, epoch);
    const bool aligning = epoch >= cfg.warmup_epochs;
    int t = 0;
    for (int step = 0; step < cfg.fed.steps_per_epoch; ++step) {
      const bool comm_now = (t + 1) % cfg.fed.tau == 0;
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        Node& node = nodes[i];

        // classification step through G and C
        auto [bx, by] = node.it_cls.next(node.rng_cls);
        nn::ForwardCache cache_g, cache_c;
        Matrix feats =
            nn::forward(node.gen, bx, nn::Mode::Train, &node.rng_cls, &cache_g);
        Matrix probs =
            nn::forward(node.cls, feats, nn::Mode::Train, &node.rng_cls, &cache_c);
        const double loss = nn::cross_entropy(probs, by);
        nn::BackpropResult back_c = nn::ce_backprop(node.cls, cache_c, by);
        nn::BackpropResult back_g =
            nn::backprop(node.gen, cache_g, back_c.input_grad, false);
        nn::adam_step(node.cls, node.opt_cls, back_c.grads, lr);
        nn::adam_step(node.gen, node.opt_gen, back_g.grads, lr);
        res.telemetry.push_back({epoch, step, node.data->site_id, loss, comm_now});

        if (!aligning) continue;

        // alignment step: this site is the source, one other the target
        const std::size_t j =
            [&] {
              std::size_t k = node.rr % (nodes.size() - 1);
              ++node.rr;
              return k < i ? k : k + 1;  // skip self in sorted order
            }();
        Node& target = nodes[j];

        auto [sx, sy] = node.it_src.next(node.rng_src);
        auto [tx, ty] = target.it_exp.next(target.rng_exp);
        (void)sy;
        (void)ty;

        nn::ForwardCache cache_gs, cache_gt;
        Matrix fs = nn::forward(node.gen, sx, nn::Mode::Eval, nullptr, &cache_gs);
        Matrix ft_raw =
            nn::forward(target.gen, tx, nn::Mode::Eval, nullptr, &cache_gt);
        Rng noise_stream = Rng::derive(
            seed, "feat-noise/s" + std::to_string(cfg.feature_noise.seed) + "/e" +
                      std::to_string(epoch) + "/t" + std::to_string(step) + "/" +
                      node.data->site_id + "/" + target.data->site_id);
        FeatureBatch exported =
            export_features(ft_raw, cfg.feature_noise, noise_stream);

        const double bs = static_cast<double>(fs.rows());
        const double bt = static_cast<double>(exported.values.rows());

        // discriminator step, Eq. 7
        nn::ForwardCache cache_ds, cache_dt;
        Matrix s_out = nn::forward(node.disc, fs, nn::Mode::Eval, nullptr, &cache_ds);
        Matrix t_out =
            nn::forward(node.disc, exported.values, nn::Mode::Eval, nullptr, &cache_dt);
        const double d_loss_val = disc_loss(s_out, t_out);
        Matrix dz_s = (s_out.array() - 1.0).matrix() / bs;
        Matrix dz_t = t_out / bt;
        std::vector<Vector> d_grads =
            add_grads(nn::backprop(node.disc, cache_ds, dz_s, true).grads,
                      nn::backprop(node.disc, cache_dt, dz_t, true).grads);
        nn::adam_step(node.disc, node.opt_disc, d_grads, cfg.disc_lr);

        // generator step against the updated, frozen discriminator, Eq. 8
        nn::ForwardCache cache_ds2, cache_dt2;
        Matrix s_out2 = nn::forward(node.disc, fs, nn::Mode::Eval, nullptr, &cache_ds2);
        Matrix t_out2 =
            nn::forward(node.disc, exported.values, nn::Mode::Eval, nullptr, &cache_dt2);
        const double g_loss_val = gen_align_loss(s_out2, t_out2);
        Matrix dz_s2 = (s_out2.array() - 1.0).matrix() / bs;
        Matrix dz_t2 = (t_out2.array() - 1.0).matrix() / bt;
        Matrix d_in_s = nn::backprop(node.disc, cache_ds2, dz_s2, true).input_grad;
        Matrix d_in_t = nn::backprop(node.disc, cache_dt2, dz_t2, true).input_grad;
        // additive noise passes the gradient through to the owning generator
        nn::BackpropResult g_src = nn::backprop(node.gen, cache_gs, d_in_s, false);
        nn::BackpropResult g_tgt = nn::backprop(target.gen, cache_gt, d_in_t, false);
        nn::adam_step(node.gen, node.opt_gen, g_src.grads, lr);
        nn::adam_step(target.gen, target.opt_gen, g_tgt.grads, lr);

        res.align_telemetry.push_back({epoch, step, node.data->site_id,
                                       target.data->site_id, d_loss_val,
                                       g_loss_val});
      }
      ++t;
      if (comm_now) {
        ++res.rounds;
        fed::aggregate_models(groups, res.site_ids, cfg.fed.noise, seed, res.rounds);
        fed::broadcast_models(groups);
        res.comms.push_back({epoch, step, res.rounds});
      }
    }
    if (epoch + 1 == cfg.warmup_epochs) {
      capture(res.features_pre);
      snapshot_gens();
    }
  }

  if (res.rounds == 0) {
    ++res.rounds;
    fed::aggregate_models(groups, res.site_ids, cfg.fed.noise, seed, res.rounds);
    fed::broadcast_models(groups);
  }

  capture(res.features_post);
  if (res.features_pre.empty()) {
    res.features_pre = res.features_post;
    snapshot_gens();
  }

  for (Node& n : nodes) {
    res.site_gens.push_back(std::move(n.gen));
    res.site_clss.push_back(std::move(n.cls));
  }
  return res;
}

namespace {

// Shared probe body: fit a small discriminator on the training rows, report
// accuracy on the evaluation rows.
double probe_core(const Matrix& train_x, const std::vector<double>& train_y,
                  const Matrix& eval_x, const std::vector<double>& eval_y,
                  std::uint64_t seed, int epochs, int hidden) {
  const Index n_train = train_x.rows();
  nn::MlpModel disc = nn::init_model(
      "disc:" + std::to_string(train_x.cols()) + "-" + std::to_string(hidden) +
          "-1",
      Rng::derive_seed(seed, "probe/init"));
  nn::AdamState opt = nn::AdamState::init_for(disc);
  Rng epoch_rng = Rng::derive(seed, "probe/epochs");

  std::vector<Index> order(static_cast<std::size_t>(n_train));
  std::iota(order.begin(), order.end(), Index{0});

  constexpr Index kBatch = 32;
  for (int e = 0; e < epochs; ++e) {
    epoch_rng.shuffle(order);
    for (Index start = 0; start < n_train; start += kBatch) {
      const Index take = std::min(kBatch, n_train - start);
      Matrix bx(take, train_x.cols());
      Vector by(take);
      for (Index r = 0; r < take; ++r) {
        const Index row = order[static_cast<std::size_t>(start + r)];
        bx.row(r) = train_x.row(row);
        by(r) = train_y[static_cast<std::size_t>(row)];
      }
      nn::ForwardCache cache;
      Matrix s = nn::forward(disc, bx, nn::Mode::Eval, nullptr, &cache);
      Matrix dz = (s.col(0) - by).matrix() / static_cast<double>(take);
      nn::BackpropResult back = nn::backprop(disc, cache, dz, true);
      nn::adam_step(disc, opt, back.grads, 1e-2);
    }
  }

  Index correct = 0;
  Matrix s = nn::forward(disc, eval_x, nn::Mode::Eval);
  for (Index i = 0; i < eval_x.rows(); ++i) {
    const int pred = s(i, 0) >= 0.5 ? 1 : 0;
    if (pred == static_cast<int>(eval_y[static_cast<std::size_t>(i)])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(eval_x.rows());
}

std::pair<Matrix, std::vector<double>> stack_pair(const Matrix& a,
                                                  const Matrix& b) {
  if (a.cols() != b.cols())
    throw std::invalid_argument("site_probe_accuracy: feature dims differ");
  if (a.rows() < 2 || b.rows() < 2)
    throw std::invalid_argument("site_probe_accuracy: too few rows");
  Matrix x(a.rows() + b.rows(), a.cols());
  x.topRows(a.rows()) = a;
  x.bottomRows(b.rows()) = b;
  std::vector<double> y(static_cast<std::size_t>(x.rows()), 0.0);
  for (Index i = 0; i < a.rows(); ++i) y[static_cast<std::size_t>(i)] = 1.0;
  return {std::move(x), std::move(y)};
}

}  // namespace

double site_probe_accuracy(const Matrix& a, const Matrix& b,
                           std::uint64_t seed, int epochs, int hidden) {
  auto [x, y] = stack_pair(a, b);
  std::vector<Index> order(static_cast<std::size_t>(x.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  Rng shuffle_rng = Rng::derive(seed, "probe/shuffle");
  shuffle_rng.shuffle(order);

  const Index n_eval = std::max<Index>(1, x.rows() / 5);
  const Index n_train = x.rows() - n_eval;
  Matrix train_x(n_train, x.cols()), eval_x(n_eval, x.cols());
  std::vector<double> train_y(static_cast<std::size_t>(n_train)),
      eval_y(static_cast<std::size_t>(n_eval));
  for (Index i = 0; i < n_train; ++i) {
    train_x.row(i) = x.row(order[static_cast<std::size_t>(i)]);
    train_y[static_cast<std::size_t>(i)] =
        y[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
  }
  for (Index i = 0; i < n_eval; ++i) {
    const Index row = order[static_cast<std::size_t>(n_train + i)];
    eval_x.row(i) = x.row(row);
    eval_y[static_cast<std::size_t>(i)] = y[static_cast<std::size_t>(row)];
  }
  return probe_core(train_x, train_y, eval_x, eval_y, seed, epochs, hidden);
}

double site_probe_accuracy(const Matrix& train_a, const Matrix& train_b,
                           const Matrix& eval_a, const Matrix& eval_b,
                           std::uint64_t seed, int epochs, int hidden) {
  auto [tx, ty] = stack_pair(train_a, train_b);
  auto [ex, ey] = stack_pair(eval_a, eval_b);
  if (tx.cols() != ex.cols())
    throw std::invalid_argument("site_probe_accuracy: feature dims differ");
  return probe_core(tx, ty, ex, ey, seed, epochs, hidden);
}

}  // namespace fedfc::adapt
