#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "archinf/rng.hpp"

namespace archinf {

using Vec = std::vector<double>;

enum class Activation { kIdentity, kRelu, kTanh, kSigmoid };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

double apply_activation(Activation a, double x);
double activation_derivative(Activation a, double pre, double post);

// Numerically stable softmax (max-shift). Throws on empty input.
Vec softmax(const Vec& logits);

double sigmoid(double x);

// Fully connected layer. Weights are row-major out_dim x in_dim.
struct DenseLayer {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  Vec weights;
  Vec bias;
  Activation activation = Activation::kIdentity;

  DenseLayer() = default;
  // Scaled-uniform init in [-sqrt(6/(in+out)), +sqrt(6/(in+out))], zero bias.
  DenseLayer(std::size_t in, std::size_t out, Activation act, Rng& rng);

  void forward(std::span<const double> x, Vec& preact, Vec& out) const;
  // Accumulates weight/bias grads into w_grad/b_grad and writes the input
  // gradient. preact/input must come from the matching forward call.
  void backward(std::span<const double> input, std::span<const double> preact,
                std::span<const double> out, std::span<const double> out_grad,
                std::span<double> w_grad, std::span<double> b_grad,
                Vec& in_grad) const;

  std::size_t param_count() const { return weights.size() + bias.size(); }
};

// Activation trace from a forward pass; consumed by Mlp::backward.
struct MlpCache {
  std::vector<Vec> inputs;    // input to each layer
  std::vector<Vec> preacts;   // affine outputs before the nonlinearity
  std::vector<Vec> outputs;   // post-activation outputs
};

struct MlpGrads {
  Vec flat;  // same layout as Mlp::params()
};

// Plain MLP over DenseLayers. Parameters are exposed as one flat vector
// (layer by layer, weights then bias) so optimizers and serialization can
// treat the whole model uniformly.
class Mlp {
 public:
  Mlp() = default;
  // dims = [in, h1, ..., out]; acts has dims.size()-1 entries.
  Mlp(const std::vector<std::size_t>& dims,
      const std::vector<Activation>& acts, Rng& rng);

  Vec forward(std::span<const double> input) const;
  Vec forward(std::span<const double> input, MlpCache& cache) const;

  // output_grad is dL/d(output). Returns dL/d(input); parameter grads are
  // accumulated into grads.flat (caller zeroes it between samples as needed).
  Vec backward(const MlpCache& cache, std::span<const double> output_grad,
               MlpGrads& grads) const;

  std::size_t in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim; }
  std::size_t out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim; }
  std::size_t param_count() const;
  Vec params() const;
  void set_params(std::span<const double> flat);

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::vector<DenseLayer>& layers() { return layers_; }

 private:
  std::vector<DenseLayer> layers_;
};

enum class OptimizerKind { kSgdMomentum, kAdam };

// Per-parameter optimizer state; buffers are lazily sized on first step.
struct Optimizer {
  OptimizerKind kind = OptimizerKind::kSgdMomentum;
  double learning_rate = 1e-4;
  double momentum = 0.5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  Vec velocity;
  Vec m1;
  Vec m2;
  long step_count = 0;

  static Optimizer sgd_momentum(double lr, double mom = 0.5);
  static Optimizer adam(double lr);

  // In-place update. Throws std::runtime_error naming the offending index if
  // a gradient entry is non-finite.
  void step(std::span<double> params, std::span<const double> grads);
};

}  // namespace archinf
