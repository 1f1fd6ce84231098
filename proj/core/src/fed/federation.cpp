#include "fedfc/fed/federation.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

namespace fedfc::fed {

namespace {

void validate_site(const SiteData& s) {
  if (s.site_id.empty()) throw std::invalid_argument("fed: empty site id");
  if (s.x.rows() == 0) throw std::invalid_argument("fed: site " + s.site_id + " has no data");
  if (static_cast<Index>(s.y.size()) != s.x.rows() ||
      static_cast<Index>(s.subject_of_row.size()) != s.x.rows())
    throw std::invalid_argument("fed: site " + s.site_id + " row/label count mismatch");
}

void validate_config(const FedConfig& cfg) {
  if (cfg.epochs < 1 || cfg.steps_per_epoch < 1 || cfg.tau < 1)
    throw std::invalid_argument("fed: epochs, steps_per_epoch and tau must be >= 1");
}

std::string noise_label(const privacy::NoiseSpec& noise, int round,
                        const std::string& site, const std::string& tensor_id) {
  return "noise/s" + std::to_string(noise.seed) + "/r" + std::to_string(round) +
         "/" + site + "/" + tensor_id;
}

std::string role_id(const std::string& role, const std::string& tensor_id) {
  return role.empty() ? tensor_id : role + "/" + tensor_id;
}

}  // namespace

BatchIterator::BatchIterator(const SiteData* data, int steps_per_epoch)
    : data_(data) {
  const Index rows = data_->x.rows();
  batch_ = (rows + steps_per_epoch - 1) / steps_per_epoch;
  if (batch_ < 1) batch_ = 1;
  order_.resize(static_cast<std::size_t>(rows));
  for (Index i = 0; i < rows; ++i) order_[static_cast<std::size_t>(i)] = i;
  cursor_ = order_.size();  // first next() starts a fresh shuffled pass
}

std::pair<Matrix, std::vector<int>> BatchIterator::next(Rng& rng) {
  if (cursor_ >= order_.size()) {
    rng.shuffle(order_);
    cursor_ = 0;
  }
  const std::size_t take =
      std::min(static_cast<std::size_t>(batch_), order_.size() - cursor_);
  Matrix bx(static_cast<Index>(take), data_->x.cols());
  std::vector<int> by(take);
  for (std::size_t i = 0; i < take; ++i) {
    const Index row = order_[cursor_ + i];
    bx.row(static_cast<Index>(i)) = data_->x.row(row);
    by[i] = data_->y[static_cast<std::size_t>(row)];
  }
  cursor_ += take;
  return {std::move(bx), std::move(by)};
}

SiteNode make_site_node(const FedConfig& cfg, const SiteData& data) {
  validate_site(data);
  nn::MlpModel model = nn::init_model(cfg.arch, Rng::derive_seed(cfg.seed, "init"));
  nn::AdamState opt = nn::AdamState::init_for(model);
  return SiteNode{data.site_id,
                  &data,
                  std::move(model),
                  std::move(opt),
                  Rng::derive(cfg.seed, "site/" + data.site_id),
                  BatchIterator(&data, cfg.steps_per_epoch)};
}

double local_step(SiteNode& node, double lr) {
  auto [bx, by] = node.batches.next(node.rng);
  nn::ForwardCache cache;
  Matrix probs = nn::forward(node.model, bx, nn::Mode::Train, &node.rng, &cache);
  const double loss = nn::cross_entropy(probs, by);
  nn::BackpropResult back = nn::ce_backprop(node.model, cache, by);
  nn::adam_step(node.model, node.opt, back.grads, lr);
  return loss;
}

void aggregate_models(std::vector<AggregateGroup>& groups,
                      const std::vector<std::string>& site_ids,
                      const privacy::NoiseSpec& noise, std::uint64_t run_seed,
                      int round) {
  if (site_ids.empty()) throw std::invalid_argument("aggregate: no sites");
  for (AggregateGroup& group : groups) {
    if (group.locals.size() != site_ids.size())
      throw std::invalid_argument("aggregate: site/model count mismatch");
    std::vector<nn::TensorRef> g_train = group.global->trainable_tensors();
    std::vector<nn::TensorRef> g_buf = group.global->buffer_tensors();

    std::vector<Matrix> acc_train, acc_buf;
    for (const nn::TensorRef& t : g_train) acc_train.push_back(Matrix::Zero(t.rows, t.cols));
    for (const nn::TensorRef& t : g_buf) acc_buf.push_back(Matrix::Zero(t.rows, t.cols));

    for (std::size_t s = 0; s < site_ids.size(); ++s) {  // sorted site order
      std::vector<nn::TensorRef> n_train = group.locals[s]->trainable_tensors();
      std::vector<nn::TensorRef> n_buf = group.locals[s]->buffer_tensors();
      if (n_train.size() != g_train.size() || n_buf.size() != g_buf.size())
        throw std::invalid_argument("aggregate: tensor count mismatch at " + site_ids[s]);
      for (std::size_t i = 0; i < n_train.size(); ++i) {
        const nn::TensorRef& t = n_train[i];
        if (t.rows != g_train[i].rows || t.cols != g_train[i].cols)
          throw std::invalid_argument("aggregate: shape mismatch for " + t.id);
        Matrix w = Eigen::Map<const Matrix>(t.data, t.rows, t.cols);
        Rng stream = Rng::derive(
            run_seed,
            noise_label(noise, round, site_ids[s], role_id(group.role, t.id)));
        acc_train[i] += privacy::perturb_tensor(w, noise, stream);
      }
      for (std::size_t i = 0; i < n_buf.size(); ++i) {
        const nn::TensorRef& t = n_buf[i];
        acc_buf[i] += Eigen::Map<const Matrix>(t.data, t.rows, t.cols);
      }
    }

    const double n = static_cast<double>(site_ids.size());
    for (std::size_t i = 0; i < g_train.size(); ++i)
      Eigen::Map<Matrix>(g_train[i].data, g_train[i].rows, g_train[i].cols) =
          acc_train[i] / n;
    for (std::size_t i = 0; i < g_buf.size(); ++i)
      Eigen::Map<Matrix>(g_buf[i].data, g_buf[i].rows, g_buf[i].cols) = acc_buf[i] / n;
  }
}

void broadcast_models(std::vector<AggregateGroup>& groups) {
  for (AggregateGroup& group : groups) {
    std::vector<nn::TensorRef> g_all = group.global->all_tensors();
    for (nn::MlpModel* local : group.locals) {
      std::vector<nn::TensorRef> n_all = local->all_tensors();
      if (n_all.size() != g_all.size())
        throw std::invalid_argument("broadcast: tensor count mismatch");
      for (std::size_t i = 0; i < g_all.size(); ++i)
        Eigen::Map<Matrix>(n_all[i].data, n_all[i].rows, n_all[i].cols) =
            Eigen::Map<const Matrix>(g_all[i].data, g_all[i].rows, g_all[i].cols);
    }
  }
}

std::vector<std::string> shared_ids(std::vector<AggregateGroup>& groups) {
  std::vector<std::string> ids;
  for (AggregateGroup& group : groups)
    for (const nn::TensorRef& t : group.global->all_tensors())
      ids.push_back(role_id(group.role, t.id));
  return ids;
}

void aggregate(nn::MlpModel& global, std::vector<SiteNode>& nodes,
               const privacy::NoiseSpec& noise, std::uint64_t run_seed,
               int round) {
  std::vector<std::string> site_ids;
  std::vector<AggregateGroup> groups(1);
  groups[0].global = &global;
  for (SiteNode& node : nodes) {
    site_ids.push_back(node.site_id);
    groups[0].locals.push_back(&node.model);
  }
  aggregate_models(groups, site_ids, noise, run_seed, round);
}

void broadcast(nn::MlpModel& global, std::vector<SiteNode>& nodes) {
  std::vector<AggregateGroup> groups(1);
  groups[0].global = &global;
  for (SiteNode& node : nodes) groups[0].locals.push_back(&node.model);
  broadcast_models(groups);
}

FedResult run_fed(const FedConfig& cfg, const std::vector<SiteData>& sites) {
  validate_config(cfg);
  if (sites.empty()) throw std::invalid_argument("run_fed: no sites");

  std::vector<const SiteData*> ordered;
  std::set<std::string> seen;
  for (const SiteData& s : sites) {
    validate_site(s);
    if (!seen.insert(s.site_id).second)
      throw std::invalid_argument("run_fed: duplicate site id " + s.site_id);
    ordered.push_back(&s);
  }
  std::sort(ordered.begin(), ordered.end(),
            [](const SiteData* a, const SiteData* b) { return a->site_id < b->site_id; });

  FedResult res;
  res.global = nn::init_model(cfg.arch, Rng::derive_seed(cfg.seed, "init"));
  std::vector<SiteNode> nodes;
  for (const SiteData* s : ordered) {
    nodes.push_back(make_site_node(cfg, *s));
    res.site_ids.push_back(s->site_id);
  }
  for (const nn::TensorRef& t : res.global.all_tensors())
    res.shared_tensor_ids.push_back(t.id);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = nn::lr_schedule(cfg.lr, epoch);
    int t = 0;  // pace counter, per-epoch
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      const bool comm_now = (t + 1) % cfg.tau == 0;
      for (SiteNode& node : nodes) {
        const double loss = local_step(node, lr);
        res.telemetry.push_back({epoch, step, node.site_id, loss, comm_now});
      }
      ++t;
      if (comm_now) {
        ++res.rounds;
        aggregate(res.global, nodes, cfg.noise, cfg.seed, res.rounds);
        broadcast(res.global, nodes);
        res.comms.push_back({epoch, step, res.rounds});
      }
    }
  }

  if (res.rounds == 0) {
    // tau never divided the step count; the returned global model still has
    // to exist, so close with one aggregation outside the telemetry.
    ++res.rounds;
    aggregate(res.global, nodes, cfg.noise, cfg.seed, res.rounds);
    broadcast(res.global, nodes);
  }

  for (SiteNode& node : nodes) res.site_models.push_back(std::move(node.model));
  return res;
}

TrainResult train_single(const FedConfig& cfg, const SiteData& data) {
  validate_config(cfg);
  SiteNode node = make_site_node(cfg, data);
  TrainResult res;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = nn::lr_schedule(cfg.lr, epoch);
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      const double loss = local_step(node, lr);
      res.telemetry.push_back({epoch, step, node.site_id, loss, false});
    }
  }
  res.model = std::move(node.model);
  return res;
}

Matrix predict_probs(nn::MlpModel& model, const Matrix& x) {
  return nn::forward(model, x, nn::Mode::Eval);
}

std::vector<int> argmax_rows(const Matrix& probs) {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Index r = 0; r < probs.rows(); ++r) {
    Index best = 0;
    probs.row(r).maxCoeff(&best);
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

eval::FoldScore score_probs(const Matrix& probs, const SiteData& test) {
  validate_site(test);
  if (probs.rows() != test.x.rows())
    throw std::invalid_argument("score_probs: prediction/window count mismatch");
  std::vector<int> preds = argmax_rows(probs);
  std::map<std::string, std::vector<int>> by_subject;
  std::map<std::string, int> labels;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const std::string& subj = test.subject_of_row[i];
    by_subject[subj].push_back(preds[i]);
    auto [it, inserted] = labels.emplace(subj, test.y[i]);
    if (!inserted && it->second != test.y[i])
      throw std::invalid_argument("score_probs: conflicting labels for " + subj);
  }
  return eval::score_windows(by_subject, labels);
}

eval::FoldScore score_model(nn::MlpModel& model, const SiteData& test) {
  return score_probs(predict_probs(model, test.x), test);
}

}  // namespace fedfc::fed
