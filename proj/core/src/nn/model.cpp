#include "fedfc/nn/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fedfc::nn {

namespace {

std::vector<Index> parse_dims(const std::string& spec, const std::string& id) {
  std::vector<Index> dims;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    std::size_t dash = spec.find('-', pos);
    if (dash == std::string::npos) dash = spec.size();
    const std::string tok = spec.substr(pos, dash - pos);
    if (tok.empty()) throw std::invalid_argument("init_model: bad architecture id '" + id + "'");
    dims.push_back(static_cast<Index>(std::stol(tok)));
    pos = dash + 1;
    if (dash == spec.size()) break;
  }
  if (dims.size() != 3 || dims[0] <= 0 || dims[1] <= 0 || dims[2] <= 0)
    throw std::invalid_argument("init_model: bad architecture id '" + id + "'");
  return dims;
}

Dense make_dense(Index in, Index out, Rng& rng) {
  Dense d;
  d.W = Matrix(out, in);
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  for (Index i = 0; i < out; ++i)
    for (Index j = 0; j < in; ++j)
      d.W(i, j) = (rng.uniform01() * 2.0 - 1.0) * bound;
  d.b = Vector::Zero(out);
  return d;
}

BatchNorm make_bn(Index dim) {
  BatchNorm bn;
  bn.gamma = Vector::Ones(dim);
  bn.beta = Vector::Zero(dim);
  bn.running_mean = Vector::Zero(dim);
  bn.running_var = Vector::Ones(dim);
  return bn;
}

}  // namespace

Index MlpModel::input_dim() const {
  for (const Layer& l : layers)
    if (const Dense* d = std::get_if<Dense>(&l)) return d->W.cols();
  throw std::logic_error("MlpModel: no dense layer");
}

Index MlpModel::output_dim() const {
  for (auto it = layers.rbegin(); it != layers.rend(); ++it)
    if (const Dense* d = std::get_if<Dense>(&*it)) return d->W.rows();
  throw std::logic_error("MlpModel: no dense layer");
}

std::vector<TensorRef> MlpModel::trainable_tensors() {
  std::vector<TensorRef> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "L" + std::to_string(i) + ".";
    if (Dense* d = std::get_if<Dense>(&layers[i])) {
      out.push_back({p + "W", d->W.data(), d->W.rows(), d->W.cols()});
      out.push_back({p + "b", d->b.data(), d->b.size(), 1});
    } else if (BatchNorm* bn = std::get_if<BatchNorm>(&layers[i])) {
      out.push_back({p + "gamma", bn->gamma.data(), bn->gamma.size(), 1});
      out.push_back({p + "beta", bn->beta.data(), bn->beta.size(), 1});
    }
  }
  return out;
}

std::vector<TensorRef> MlpModel::buffer_tensors() {
  std::vector<TensorRef> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "L" + std::to_string(i) + ".";
    if (BatchNorm* bn = std::get_if<BatchNorm>(&layers[i])) {
      out.push_back({p + "running_mean", bn->running_mean.data(), bn->running_mean.size(), 1});
      out.push_back({p + "running_var", bn->running_var.data(), bn->running_var.size(), 1});
    }
  }
  return out;
}

std::vector<TensorRef> MlpModel::all_tensors() {
  std::vector<TensorRef> out = trainable_tensors();
  std::vector<TensorRef> buf = buffer_tensors();
  out.insert(out.end(), buf.begin(), buf.end());
  return out;
}

MlpModel init_model(const std::string& arch_id, std::uint64_t seed) {
  std::string id = arch_id;
  if (id == "fed-mlp") id = "mlp:6105-16-2";
  else if (id == "single-mlp") id = "mlp:6105-8-2";
  else if (id == "gate-mlp") id = "gate:6105-8-1";
  else if (id == "disc-mlp") id = "disc:6105-8-1";

  MlpModel m;
  m.arch_id = arch_id;
  Rng rng(seed);

  const std::size_t colon = id.find(':');
  if (colon == std::string::npos)
    throw std::invalid_argument("init_model: unknown architecture id '" + arch_id + "'");
  const std::string family = id.substr(0, colon);

  if (family == "gatelin") {  // single affine unit + sigmoid, sigma(psi.x + b)
    const std::string tok = id.substr(colon + 1);
    Index in = 0;
    try {
      in = static_cast<Index>(std::stol(tok));
    } catch (const std::exception&) {
      throw std::invalid_argument("init_model: bad architecture id '" + arch_id + "'");
    }
    if (in <= 0 || tok.find('-') != std::string::npos)
      throw std::invalid_argument("init_model: bad architecture id '" + arch_id + "'");
    m.layers.push_back(make_dense(in, 1, rng));
    m.layers.push_back(Sigmoid{});
    return m;
  }

  const std::vector<Index> dims = parse_dims(id.substr(colon + 1), arch_id);

  if (family == "mlp") {
    m.layers.push_back(Dropout{0.5});
    m.layers.push_back(make_dense(dims[0], dims[1], rng));
    m.layers.push_back(Relu{});
    m.layers.push_back(make_bn(dims[1]));
    m.layers.push_back(Dropout{0.5});
    m.layers.push_back(make_dense(dims[1], dims[2], rng));
    m.layers.push_back(Softmax{});
  } else if (family == "mlp-plain") {
    m.layers.push_back(make_dense(dims[0], dims[1], rng));
    m.layers.push_back(Relu{});
    m.layers.push_back(make_bn(dims[1]));
    m.layers.push_back(make_dense(dims[1], dims[2], rng));
    m.layers.push_back(Softmax{});
  } else if (family == "gate" || family == "disc") {
    if (dims[2] != 1)
      throw std::invalid_argument("init_model: " + family + " head must end in one unit");
    m.layers.push_back(make_dense(dims[0], dims[1], rng));
    m.layers.push_back(Relu{});
    m.layers.push_back(make_dense(dims[1], dims[2], rng));
    m.layers.push_back(Sigmoid{});
  } else {
    throw std::invalid_argument("init_model: unknown architecture id '" + arch_id + "'");
  }
  return m;
}

Matrix forward(MlpModel& model, const Matrix& x, Mode mode, Rng* rng,
               ForwardCache* cache) {
  if (x.rows() == 0) throw std::invalid_argument("forward: empty batch");
  for (const Layer& l : model.layers)
    if (const Dense* d = std::get_if<Dense>(&l)) {
      if (x.cols() != d->W.cols())
        throw std::invalid_argument("forward: input has " + std::to_string(x.cols()) +
                                    " features, model expects " +
                                    std::to_string(d->W.cols()));
      break;
    }
  if (cache) {
    cache->layers.assign(model.layers.size(), {});
    cache->mode = mode;
  }

  Matrix cur = x;
  const Index B = x.rows();
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    LayerCache* lc = cache ? &cache->layers[i] : nullptr;
    if (lc) lc->input = cur;
    Layer& layer = model.layers[i];

    if (Dense* d = std::get_if<Dense>(&layer)) {
      cur = (cur * d->W.transpose()).rowwise() + d->b.transpose();
    } else if (std::get_if<Relu>(&layer)) {
      cur = cur.cwiseMax(0.0);
    } else if (BatchNorm* bn = std::get_if<BatchNorm>(&layer)) {
      Vector mean, var;
      if (mode == Mode::Train) {
        mean = cur.colwise().mean();
        Matrix centered = cur.rowwise() - mean.transpose();
        var = centered.array().square().colwise().mean();
        bn->running_mean = (1.0 - bn->momentum) * bn->running_mean + bn->momentum * mean;
        bn->running_var = (1.0 - bn->momentum) * bn->running_var + bn->momentum * var;
      } else {
        mean = bn->running_mean;
        var = bn->running_var;
      }
      Vector inv_std = (var.array() + bn->eps).rsqrt();
      Matrix xhat = (cur.rowwise() - mean.transpose()).array().rowwise() *
                    inv_std.transpose().array();
      cur = (xhat.array().rowwise() * bn->gamma.transpose().array()).rowwise() +
            bn->beta.transpose().array();
      if (lc) {
        lc->aux = std::move(xhat);
        lc->inv_std = std::move(inv_std);
      }
    } else if (Dropout* dr = std::get_if<Dropout>(&layer)) {
      if (mode == Mode::Train && dr->rate > 0.0) {
        if (!rng) throw std::invalid_argument("forward: dropout in train mode needs an rng");
        const double keep_scale = 1.0 / (1.0 - dr->rate);
        Matrix mask(cur.rows(), cur.cols());
        for (Index r = 0; r < mask.rows(); ++r)
          for (Index c = 0; c < mask.cols(); ++c)
            mask(r, c) = rng->uniform01() >= dr->rate ? keep_scale : 0.0;
        cur = cur.cwiseProduct(mask);
        if (lc) lc->aux = std::move(mask);
      }
    } else if (std::get_if<Softmax>(&layer)) {
      Matrix probs(cur.rows(), cur.cols());
      for (Index r = 0; r < B; ++r) {
        Vector row = cur.row(r);
        const double m = row.maxCoeff();
        Vector e = (row.array() - m).exp();
        probs.row(r) = e / e.sum();
      }
      cur = probs;
      if (lc) lc->aux = cur;
    } else if (std::get_if<Sigmoid>(&layer)) {
      cur = (1.0 + (-cur.array()).exp()).inverse();
      if (lc) lc->aux = cur;
    }
  }
  if (cache) cache->output = cur;
  return cur;
}

double cross_entropy(const Matrix& probs, const std::vector<int>& labels) {
  if (static_cast<Index>(labels.size()) != probs.rows())
    throw std::invalid_argument("cross_entropy: label count does not match batch");
  double loss = 0.0;
  for (Index r = 0; r < probs.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= probs.cols())
      throw std::invalid_argument("cross_entropy: label out of range");
    loss -= std::log(std::max(probs(r, y), 1e-12));
  }
  return loss / static_cast<double>(probs.rows());
}

BackpropResult backprop(MlpModel& model, const ForwardCache& cache,
                        const Matrix& d_top, bool top_is_preactivation,
                        ReluRule rule) {
  if (cache.layers.size() != model.layers.size())
    throw std::invalid_argument("backprop: cache does not match model");

  std::vector<TensorRef> params = model.trainable_tensors();
  BackpropResult res;
  res.grads.resize(params.size());

  // slot of the first gradient tensor per layer, in trainable order
  std::vector<std::size_t> slot(model.layers.size(), 0);
  {
    std::size_t s = 0;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
      slot[i] = s;
      if (std::get_if<Dense>(&model.layers[i])) s += 2;
      else if (std::get_if<BatchNorm>(&model.layers[i])) s += 2;
    }
  }

  Matrix g = d_top;
  std::size_t start = model.layers.size();
  if (top_is_preactivation) {
    if (model.layers.empty() ||
        (!std::get_if<Softmax>(&model.layers.back()) &&
         !std::get_if<Sigmoid>(&model.layers.back())))
      throw std::invalid_argument("backprop: preactivation start needs an activation head");
    start -= 1;
  }

  for (std::size_t ii = start; ii-- > 0;) {
    const LayerCache& lc = cache.layers[ii];
    Layer& layer = model.layers[ii];
    if (g.rows() != lc.input.rows() && !std::get_if<Softmax>(&layer) &&
        !std::get_if<Sigmoid>(&layer))
      throw std::invalid_argument("backprop: stale cache (batch shape mismatch)");

    if (Dense* d = std::get_if<Dense>(&layer)) {
      Matrix dW = g.transpose() * lc.input;
      Vector db = g.colwise().sum();
      res.grads[slot[ii]] = Eigen::Map<const Vector>(dW.data(), dW.size());
      res.grads[slot[ii] + 1] = std::move(db);
      g = g * d->W;
    } else if (std::get_if<Relu>(&layer)) {
      Matrix mask = (lc.input.array() > 0.0).cast<double>();
      if (rule == ReluRule::Guided)
        mask = mask.cwiseProduct((g.array() > 0.0).cast<double>().matrix());
      g = g.cwiseProduct(mask);
    } else if (BatchNorm* bn = std::get_if<BatchNorm>(&layer)) {
      const Matrix& xhat = lc.aux;
      Vector dgamma = g.cwiseProduct(xhat).colwise().sum();
      Vector dbeta = g.colwise().sum();
      res.grads[slot[ii]] = std::move(dgamma);
      res.grads[slot[ii] + 1] = std::move(dbeta);
      Matrix dxhat = g.array().rowwise() * bn->gamma.transpose().array();
      if (cache.mode == Mode::Train) {
        const double B = static_cast<double>(g.rows());
        Vector mean_dxhat = dxhat.colwise().mean();
        Vector mean_dxhat_xhat = dxhat.cwiseProduct(xhat).colwise().mean();
        Matrix inner = (dxhat.rowwise() - mean_dxhat.transpose()) -
                       (xhat.array().rowwise() * mean_dxhat_xhat.transpose().array()).matrix();
        (void)B;
        g = inner.array().rowwise() * lc.inv_std.transpose().array();
      } else {
        g = dxhat.array().rowwise() * lc.inv_std.transpose().array();
      }
    } else if (Dropout* dr = std::get_if<Dropout>(&layer)) {
      if (cache.mode == Mode::Train && dr->rate > 0.0) {
        if (lc.aux.size() == 0)
          throw std::invalid_argument("backprop: stale cache (missing dropout mask)");
        g = g.cwiseProduct(lc.aux);
      }
    } else if (std::get_if<Softmax>(&layer)) {
      const Matrix& p = lc.aux;
      Vector rowdot = g.cwiseProduct(p).rowwise().sum();
      Matrix shifted = g.array().colwise() - rowdot.array();
      g = p.cwiseProduct(shifted);
    } else if (std::get_if<Sigmoid>(&layer)) {
      const Matrix& s = lc.aux;
      g = g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix()));
    }
  }
  res.input_grad = std::move(g);
  return res;
}

BackpropResult ce_backprop(MlpModel& model, const ForwardCache& cache,
                           const std::vector<int>& labels) {
  if (model.layers.empty() || !std::get_if<Softmax>(&model.layers.back()))
    throw std::invalid_argument("ce_backprop: model must end in softmax");
  const Matrix& probs = cache.layers.back().aux;
  if (probs.rows() != static_cast<Index>(labels.size()))
    throw std::invalid_argument("ce_backprop: stale cache (batch shape mismatch)");
  const double B = static_cast<double>(probs.rows());
  Matrix dz = probs;
  for (Index r = 0; r < dz.rows(); ++r) {
    const int y = labels[static_cast<std::size_t>(r)];
    if (y < 0 || y >= dz.cols())
      throw std::invalid_argument("ce_backprop: label out of range");
    dz(r, y) -= 1.0;
  }
  dz /= B;
  return backprop(model, cache, dz, /*top_is_preactivation=*/true);
}

}  // namespace fedfc::nn
