#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "fedfc/rng.hpp"
#include "fedfc/types.hpp"

namespace fedfc::nn {

enum class Mode { Train, Eval };
enum class ReluRule { Plain, Guided };

struct Dense {
  Matrix W;  // out x in, y = x W^T + b
  Vector b;
};
struct Relu {};
struct BatchNorm {
  Vector gamma, beta, running_mean, running_var;
  double eps = 1e-5;
  double momentum = 0.1;
};
struct Dropout {
  double rate = 0.5;  // drop probability, inverted scaling at train time
};
struct Softmax {};
struct Sigmoid {};

using Layer = std::variant<Dense, Relu, BatchNorm, Dropout, Softmax, Sigmoid>;

// Flat view of one parameter or buffer tensor, addressable by a stable id
// ("L1.W", "L3.gamma", ...) used for optimizer state, aggregation payloads
// and checkpoints.
struct TensorRef {
  std::string id;
  double* data = nullptr;
  Index rows = 0, cols = 0;
  Index size() const { return rows * cols; }
};

struct MlpModel {
  std::string arch_id;
  std::vector<Layer> layers;

  Index input_dim() const;
  Index output_dim() const;
  std::vector<TensorRef> trainable_tensors();
  std::vector<TensorRef> buffer_tensors();  // BN running stats
  std::vector<TensorRef> all_tensors();
};

// Supported architecture ids:
//   "fed-mlp"        dropout/dense/relu/bn block, 6105-16-2, softmax head
//   "single-mlp"     same block, 6105-8-2
//   "gate-mlp"       dense/relu/dense/sigmoid, 6105-8-1
//   "disc-mlp"       dense/relu/dense/sigmoid, 6105-8-1
//   "mlp:I-H-O"      parametric dropout block
//   "mlp-plain:I-H-O" parametric block without dropout
//   "gate:I-H-1", "disc:I-H-1" parametric sigmoid heads
//   "gatelin:I"      one affine unit + sigmoid, sigma(psi . x + b)
// Weights are uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero,
// BN gamma 1 / beta 0 / running stats (0, 1); fully determined by seed.
MlpModel init_model(const std::string& arch_id, std::uint64_t seed);

struct LayerCache {
  Matrix input;   // layer input as seen in the forward pass
  Matrix aux;     // dropout mask, BN xhat, softmax probs, sigmoid output
  Vector inv_std; // BN only
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  Matrix output;
  Mode mode = Mode::Eval;
};

// Rows of x are samples.  rng must be non-null in Train mode when the model
// contains a dropout layer with a positive rate; Train mode also updates BN
// running statistics.  Eval mode never touches model state or the rng.
Matrix forward(MlpModel& model, const Matrix& x, Mode mode, Rng* rng = nullptr,
               ForwardCache* cache = nullptr);

// Mean over the batch of -log p(true class); probabilities clamped at 1e-12.
double cross_entropy(const Matrix& probs, const std::vector<int>& labels);

struct BackpropResult {
  std::vector<Vector> grads;  // aligned with trainable_tensors(), flat
  Matrix input_grad;
};

// Walks the cached forward pass backwards.  d_top is the gradient at the
// network output, or at the input of the final activation layer when
// top_is_preactivation is set (fused softmax cross-entropy, score gradients).
BackpropResult backprop(MlpModel& model, const ForwardCache& cache,
                        const Matrix& d_top, bool top_is_preactivation,
                        ReluRule rule = ReluRule::Plain);

// Gradient of cross_entropy(forward(x), labels) for a softmax-headed model.
BackpropResult ce_backprop(MlpModel& model, const ForwardCache& cache,
                           const std::vector<int>& labels);

}  // namespace fedfc::nn
