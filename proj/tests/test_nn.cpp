#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include "fedfc/nn/checkpoint.hpp"
#include "fedfc/nn/model.hpp"
#include "fedfc/nn/optimizer.hpp"
#include "support/oracles.hpp"

using namespace fedfc;
using namespace fedfc::nn;

namespace {

std::vector<double> snapshot(MlpModel& m) {
  std::vector<double> out;
  for (const TensorRef& t : m.all_tensors())
    out.insert(out.end(), t.data, t.data + t.size());
  return out;
}

}  // namespace

TEST_CASE("dense softmax forward matches hand computation") {
  MlpModel m;
  m.arch_id = "manual";
  Dense d;
  d.W = Matrix(2, 2);
  d.W << 1.0, -1.0, 0.5, 2.0;
  d.b = Vector(2);
  d.b << 0.1, -0.1;
  m.layers.push_back(d);
  m.layers.push_back(Softmax{});

  Matrix x(1, 2);
  x << 0.3, 0.7;
  Matrix p = forward(m, x, Mode::Eval);

  const double z0 = 1.0 * 0.3 - 1.0 * 0.7 + 0.1;
  const double z1 = 0.5 * 0.3 + 2.0 * 0.7 - 0.1;
  const double e0 = std::exp(z0), e1 = std::exp(z1);
  CHECK(p(0, 0) == doctest::Approx(e0 / (e0 + e1)).epsilon(1e-14));
  CHECK(p(0, 1) == doctest::Approx(e1 / (e0 + e1)).epsilon(1e-14));
}

TEST_CASE("softmax rows are distributions") {
  MlpModel m = init_model("mlp:7-4-3", 11);
  Rng rng(2);
  Matrix x = oracles::random_matrix(9, 7, rng);
  Matrix p = forward(m, x, Mode::Eval);
  for (Index r = 0; r < p.rows(); ++r) {
    CHECK(p.row(r).sum() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(p.row(r).minCoeff() > 0.0);
  }
}

TEST_CASE("cross entropy hand values") {
  Matrix p(1, 2);
  p << 0.9, 0.1;
  CHECK(cross_entropy(p, {0}) == doctest::Approx(0.10536051565782630).epsilon(1e-12));

  Matrix q(1, 2);
  q << 0.5, 0.5;
  CHECK(cross_entropy(q, {1}) == doctest::Approx(0.6931471805599453).epsilon(1e-12));

  Matrix u(1, 4);
  u << 0.25, 0.25, 0.25, 0.25;
  CHECK(cross_entropy(u, {2}) == doctest::Approx(1.3862943611198906).epsilon(1e-12));

  Matrix both(2, 2);
  both << 0.9, 0.1, 0.5, 0.5;
  CHECK(cross_entropy(both, {0, 1}) ==
        doctest::Approx(0.5 * (0.10536051565782630 + 0.6931471805599453)).epsilon(1e-12));

  Matrix tiny(1, 2);
  tiny << 0.0, 1.0;
  CHECK(cross_entropy(tiny, {0}) == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));
  CHECK_THROWS_AS(cross_entropy(p, {2}), std::invalid_argument);
  CHECK_THROWS_AS(cross_entropy(p, {0, 1}), std::invalid_argument);
}

TEST_CASE("fused bias gradient is softmax minus one-hot") {
  MlpModel m;
  m.arch_id = "manual";
  Rng rng(4);
  Dense d;
  d.W = oracles::random_matrix(3, 5, rng, 0.5);
  d.b = Vector::Zero(3);
  m.layers.push_back(d);
  m.layers.push_back(Softmax{});

  Matrix x = oracles::random_matrix(6, 5, rng);
  std::vector<int> y = {0, 2, 1, 1, 0, 2};
  ForwardCache cache;
  Matrix p = forward(m, x, Mode::Train, nullptr, &cache);
  BackpropResult res = ce_backprop(m, cache, y);

  Vector expect = Vector::Zero(3);
  for (Index r = 0; r < p.rows(); ++r) {
    expect += p.row(r).transpose();
    expect(y[static_cast<std::size_t>(r)]) -= 1.0;
  }
  expect /= static_cast<double>(p.rows());
  // grads[1] is the bias of the only dense layer
  for (Index k = 0; k < 3; ++k)
    CHECK(res.grads[1](k) == doctest::Approx(expect(k)).epsilon(1e-12));
}

TEST_CASE("backward matches central differences through batchnorm") {
  MlpModel m = init_model("mlp-plain:20-5-2", 17);
  Rng rng(23);
  Matrix x = oracles::random_matrix(8, 20, rng);
  std::vector<int> y = {0, 1, 1, 0, 1, 0, 0, 1};

  ForwardCache cache;
  forward(m, x, Mode::Train, nullptr, &cache);
  BackpropResult analytic = ce_backprop(m, cache, y);

  auto loss = [&]() {
    Matrix p = forward(m, x, Mode::Train);
    return cross_entropy(p, y);
  };
  std::vector<Vector> fd = oracles::finite_difference(loss, m.trainable_tensors());
  CHECK(oracles::max_rel_err(analytic.grads, fd) < 1e-4);
}

TEST_CASE("input gradient through softmax matches central differences") {
  MlpModel m = init_model("mlp-plain:6-4-3", 5);
  Rng rng(31);
  Matrix x = oracles::random_matrix(1, 6, rng);
  Matrix c = oracles::random_matrix(1, 3, rng);  // fixed linear functional

  ForwardCache cache;
  forward(m, x, Mode::Eval, nullptr, &cache);
  BackpropResult res = backprop(m, cache, c, /*top_is_preactivation=*/false);

  for (Index k = 0; k < x.cols(); ++k) {
    const double h = 1e-6;
    Matrix xp = x, xm = x;
    xp(0, k) += h;
    xm(0, k) -= h;
    const double up = (forward(m, xp, Mode::Eval).cwiseProduct(c)).sum();
    const double down = (forward(m, xm, Mode::Eval).cwiseProduct(c)).sum();
    CHECK(oracles::rel_err(res.input_grad(0, k), (up - down) / (2.0 * h)) < 1e-4);
  }
}

TEST_CASE("batch duplication changes neither loss nor gradients") {
  MlpModel m = init_model("mlp-plain:10-4-2", 3);
  Rng rng(8);
  Matrix x = oracles::random_matrix(5, 10, rng);
  std::vector<int> y = {1, 0, 1, 1, 0};

  Matrix x2(10, 10);
  x2 << x, x;
  std::vector<int> y2 = y;
  y2.insert(y2.end(), y.begin(), y.end());

  ForwardCache c1, c2;
  Matrix p1 = forward(m, x, Mode::Train, nullptr, &c1);
  BackpropResult g1 = ce_backprop(m, c1, y);
  Matrix p2 = forward(m, x2, Mode::Train, nullptr, &c2);
  BackpropResult g2 = ce_backprop(m, c2, y2);

  CHECK(cross_entropy(p1, y) == doctest::Approx(cross_entropy(p2, y2)).epsilon(1e-12));
  CHECK(oracles::max_rel_err(g1.grads, g2.grads) < 1e-10);
}

TEST_CASE("eval mode is pure") {
  MlpModel m = init_model("mlp:6-4-2", 9);
  std::vector<double> before = snapshot(m);
  Rng rng(1);
  Matrix x = oracles::random_matrix(3, 6, rng);
  Matrix p1 = forward(m, x, Mode::Eval);
  Matrix p2 = forward(m, x, Mode::Eval);
  CHECK((p1 - p2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(snapshot(m) == before);
}

TEST_CASE("train mode dropout requires an rng") {
  MlpModel m = init_model("mlp:6-4-2", 9);
  Matrix x = Matrix::Ones(2, 6);
  CHECK_THROWS_AS(forward(m, x, Mode::Train, nullptr), std::invalid_argument);
}

TEST_CASE("dropout applies inverted scaling at train time") {
  MlpModel m;
  m.arch_id = "manual";
  m.layers.push_back(Dropout{0.5});
  Rng rng(13);
  Matrix x = Matrix::Ones(200, 50);
  Matrix out = forward(m, x, Mode::Train, &rng);
  int kept = 0;
  for (Index r = 0; r < out.rows(); ++r)
    for (Index c = 0; c < out.cols(); ++c) {
      CHECK((out(r, c) == 0.0 || out(r, c) == 2.0));
      if (out(r, c) != 0.0) ++kept;
    }
  const double keep_rate = static_cast<double>(kept) / static_cast<double>(out.size());
  CHECK(std::abs(keep_rate - 0.5) < 0.02);
  // eval is the identity
  Matrix eval_out = forward(m, x, Mode::Eval);
  CHECK((eval_out - x).cwiseAbs().maxCoeff() == 0.0);
  // zero rate is the identity without an rng
  MlpModel z;
  z.arch_id = "manual";
  z.layers.push_back(Dropout{0.0});
  CHECK((forward(z, x, Mode::Train) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("batchnorm train normalizes with batch statistics") {
  MlpModel m;
  m.arch_id = "manual";
  m.layers.push_back(BatchNorm{Vector::Ones(5), Vector::Zero(5), Vector::Zero(5),
                               Vector::Ones(5)});
  Rng rng(21);
  Matrix x = oracles::random_matrix(64, 5, rng, 2.0);
  Matrix out = forward(m, x, Mode::Train);

  Vector mean = out.colwise().mean();
  CHECK(mean.cwiseAbs().maxCoeff() < 1e-12);
  Vector var = (out.rowwise() - mean.transpose()).array().square().colwise().mean();
  for (Index j = 0; j < 5; ++j) CHECK(var(j) == doctest::Approx(1.0).epsilon(1e-4));

  const BatchNorm& bn = std::get<BatchNorm>(m.layers[0]);
  Vector xmean = x.colwise().mean();
  for (Index j = 0; j < 5; ++j)
    CHECK(bn.running_mean(j) == doctest::Approx(0.1 * xmean(j)).epsilon(1e-12));
}

TEST_CASE("batchnorm eval applies running statistics") {
  MlpModel m;
  m.arch_id = "manual";
  BatchNorm bn{Vector::Ones(3), Vector::Zero(3), Vector::Zero(3), Vector::Ones(3)};
  bn.gamma << 2.0, 1.0, 0.5;
  bn.beta << 0.0, 1.0, -1.0;
  bn.running_mean << 1.0, -1.0, 0.0;
  bn.running_var << 4.0, 1.0, 0.25;
  m.layers.push_back(bn);

  Matrix x(1, 3);
  x << 3.0, 0.0, 1.0;
  Matrix out = forward(m, x, Mode::Eval);
  CHECK(out(0, 0) == doctest::Approx(2.0 * (3.0 - 1.0) / std::sqrt(4.0 + 1e-5)).epsilon(1e-12));
  CHECK(out(0, 1) == doctest::Approx(1.0 * (0.0 + 1.0) / std::sqrt(1.0 + 1e-5) + 1.0).epsilon(1e-12));
  CHECK(out(0, 2) == doctest::Approx(0.5 * 1.0 / std::sqrt(0.25 + 1e-5) - 1.0).epsilon(1e-12));
}

TEST_CASE("guided relu rule zeroes negative forward and backward signals") {
  MlpModel m;
  m.arch_id = "manual";
  m.layers.push_back(Relu{});

  Matrix x(1, 4);
  x << 1.0, -1.0, 2.0, 3.0;
  ForwardCache cache;
  forward(m, x, Mode::Eval, nullptr, &cache);

  Matrix g(1, 4);
  g << 0.5, 0.5, -0.5, 0.25;
  BackpropResult plain = backprop(m, cache, g, false, ReluRule::Plain);
  CHECK(plain.input_grad(0, 0) == 0.5);
  CHECK(plain.input_grad(0, 1) == 0.0);   // forward negative
  CHECK(plain.input_grad(0, 2) == -0.5);  // negative signal passes
  CHECK(plain.input_grad(0, 3) == 0.25);

  BackpropResult guided = backprop(m, cache, g, false, ReluRule::Guided);
  CHECK(guided.input_grad(0, 0) == 0.5);
  CHECK(guided.input_grad(0, 1) == 0.0);
  CHECK(guided.input_grad(0, 2) == 0.0);  // backward negative is zeroed
  CHECK(guided.input_grad(0, 3) == 0.25);
}

TEST_CASE("adam single step matches the hand formula") {
  MlpModel m;
  m.arch_id = "manual";
  Dense d;
  d.W = Matrix::Constant(1, 1, 0.5);
  d.b = Vector::Zero(1);
  m.layers.push_back(d);
  m.layers.push_back(Softmax{});

  AdamState st = AdamState::init_for(m);
  std::vector<Vector> grads(2);
  grads[0] = Vector::Constant(1, 0.3);
  grads[1] = Vector::Constant(1, -0.2);
  const double lr = 1e-3;
  adam_step(m, st, grads, lr);

  // first step: mhat = g, vhat = g^2 regardless of betas
  CHECK(std::get<Dense>(m.layers[0]).W(0, 0) ==
        doctest::Approx(0.5 - lr * 0.3 / (0.3 + 1e-8)).epsilon(1e-12));
  CHECK(std::get<Dense>(m.layers[0]).b(0) ==
        doctest::Approx(0.0 + lr * 0.2 / (0.2 + 1e-8)).epsilon(1e-12));
  CHECK(st.step == 1);
}

TEST_CASE("adam per-step magnitude approaches lr under a constant gradient") {
  MlpModel m;
  m.arch_id = "manual";
  Dense d;
  d.W = Matrix::Constant(1, 1, 0.0);
  d.b = Vector::Zero(1);
  m.layers.push_back(d);
  m.layers.push_back(Softmax{});

  AdamState st = AdamState::init_for(m);
  std::vector<Vector> grads(2);
  grads[0] = Vector::Constant(1, 0.05);
  grads[1] = Vector::Zero(1);
  const double lr = 1e-3;
  double prev = 0.0;
  for (int i = 0; i < 500; ++i) {
    prev = std::get<Dense>(m.layers[0]).W(0, 0);
    adam_step(m, st, grads, lr);
  }
  const double step = std::abs(std::get<Dense>(m.layers[0]).W(0, 0) - prev);
  CHECK(step == doctest::Approx(lr).epsilon(1e-3));
}

TEST_CASE("adam rejects non-finite gradients") {
  MlpModel m = init_model("mlp-plain:4-3-2", 1);
  AdamState st = AdamState::init_for(m);
  std::vector<Vector> grads;
  for (const TensorRef& t : m.trainable_tensors()) grads.push_back(Vector::Zero(t.size()));
  grads[0](0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(adam_step(m, st, grads, 1e-3), std::runtime_error);
}

TEST_CASE("lr schedule") {
  CHECK(lr_schedule("halve20", 0) == doctest::Approx(1e-5).epsilon(1e-15));
  CHECK(lr_schedule("halve20", 19) == doctest::Approx(1e-5).epsilon(1e-15));
  CHECK(lr_schedule("halve20", 20) == doctest::Approx(5e-6).epsilon(1e-15));
  CHECK(lr_schedule("halve20", 39) == doctest::Approx(5e-6).epsilon(1e-15));
  CHECK(lr_schedule("halve20", 40) == doctest::Approx(2.5e-6).epsilon(1e-15));
  CHECK(lr_schedule("halve20", 49) == doctest::Approx(2.5e-6).epsilon(1e-15));
  CHECK(lr_schedule("halve20:0.001", 20) == doctest::Approx(5e-4).epsilon(1e-15));
  CHECK(lr_schedule("const:0.01", 49) == 0.01);
  CHECK_THROWS_AS(lr_schedule("warp", 0), std::invalid_argument);
  CHECK_THROWS_AS(lr_schedule("halve20", -1), std::invalid_argument);
}

TEST_CASE("init is deterministic, bounded and seed sensitive") {
  MlpModel a = init_model("mlp:50-8-2", 7);
  MlpModel b = init_model("mlp:50-8-2", 7);
  MlpModel c = init_model("mlp:50-8-2", 8);
  CHECK(snapshot(a) == snapshot(b));
  CHECK(snapshot(a) != snapshot(c));

  const Dense& d1 = std::get<Dense>(a.layers[1]);
  CHECK(d1.W.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(50.0));
  CHECK(d1.b.cwiseAbs().maxCoeff() == 0.0);
  const BatchNorm& bn = std::get<BatchNorm>(a.layers[3]);
  CHECK(bn.gamma.minCoeff() == 1.0);
  CHECK(bn.beta.cwiseAbs().maxCoeff() == 0.0);
  CHECK(bn.running_mean.cwiseAbs().maxCoeff() == 0.0);
  CHECK(bn.running_var.maxCoeff() == 1.0);
}

TEST_CASE("named architectures have the documented shapes") {
  MlpModel fed = init_model("fed-mlp", 1);
  CHECK(fed.input_dim() == 6105);
  CHECK(fed.output_dim() == 2);
  CHECK(std::get<Dense>(fed.layers[1]).W.rows() == 16);
  CHECK(std::holds_alternative<Dropout>(fed.layers[0]));
  CHECK(std::holds_alternative<Relu>(fed.layers[2]));
  CHECK(std::holds_alternative<BatchNorm>(fed.layers[3]));
  CHECK(std::holds_alternative<Dropout>(fed.layers[4]));
  CHECK(std::holds_alternative<Softmax>(fed.layers[6]));

  MlpModel single = init_model("single-mlp", 1);
  CHECK(single.input_dim() == 6105);
  CHECK(std::get<Dense>(single.layers[1]).W.rows() == 8);

  MlpModel gate = init_model("gate-mlp", 1);
  CHECK(gate.input_dim() == 6105);
  CHECK(gate.output_dim() == 1);
  CHECK(std::holds_alternative<Sigmoid>(gate.layers.back()));

  MlpModel disc = init_model("disc:16-8-1", 1);
  CHECK(disc.input_dim() == 16);
  CHECK(disc.output_dim() == 1);

  CHECK_THROWS_AS(init_model("transformer", 0), std::invalid_argument);
  CHECK_THROWS_AS(init_model("mlp:10-0-2", 0), std::invalid_argument);
  CHECK_THROWS_AS(init_model("gate:10-4-2", 0), std::invalid_argument);
}

TEST_CASE("sigmoid head outputs probabilities and backward matches differences") {
  MlpModel m = init_model("disc:5-3-1", 4);
  Rng rng(6);
  Matrix x = oracles::random_matrix(4, 5, rng);
  ForwardCache cache;
  Matrix s = forward(m, x, Mode::Train, nullptr, &cache);
  for (Index r = 0; r < s.rows(); ++r) {
    CHECK(s(r, 0) > 0.0);
    CHECK(s(r, 0) < 1.0);
  }

  // loss = mean of -log s  (all samples labeled positive)
  Matrix dz(4, 1);
  for (Index r = 0; r < 4; ++r) dz(r, 0) = (s(r, 0) - 1.0) / 4.0;
  BackpropResult analytic = backprop(m, cache, dz, /*top_is_preactivation=*/true);

  auto loss = [&]() {
    Matrix p = forward(m, x, Mode::Train);
    double l = 0.0;
    for (Index r = 0; r < 4; ++r) l -= std::log(p(r, 0));
    return l / 4.0;
  };
  std::vector<Vector> fd = oracles::finite_difference(loss, m.trainable_tensors());
  CHECK(oracles::max_rel_err(analytic.grads, fd) < 1e-4);
}

TEST_CASE("checkpoint round trip is bit exact") {
  MlpModel m = init_model("mlp:30-6-2", 77);
  Rng rng(5);
  Matrix x = oracles::random_matrix(16, 30, rng);
  forward(m, x, Mode::Train, &rng);  // move running stats off their init

  const std::string path = "ckpt_roundtrip.bin";
  save_checkpoint(m, path);
  MlpModel loaded = load_checkpoint(path);
  CHECK(loaded.arch_id == m.arch_id);
  CHECK(snapshot(loaded) == snapshot(m));

  Matrix probe = oracles::random_matrix(3, 30, rng);
  CHECK((forward(m, probe, Mode::Eval) - forward(loaded, probe, Mode::Eval))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects corrupt input") {
  const std::string path = "ckpt_bad.bin";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("not a checkpoint", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("forward rejects bad input shapes") {
  MlpModel m = init_model("mlp:6-4-2", 1);
  Matrix wrong = Matrix::Ones(2, 5);
  CHECK_THROWS_AS(forward(m, wrong, Mode::Eval), std::invalid_argument);
  Matrix empty(0, 6);
  CHECK_THROWS_AS(forward(m, empty, Mode::Eval), std::invalid_argument);
}
