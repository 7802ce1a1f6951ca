#include "archinf/nn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace archinf {

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSigmoid: return "sigmoid";
  }
  return "?";
}

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::kIdentity;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "sigmoid") return Activation::kSigmoid;
  throw std::invalid_argument("unknown activation: " + name);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double apply_activation(Activation a, double x) {
  switch (a) {
    case Activation::kIdentity: return x;
    case Activation::kRelu: return x > 0.0 ? x : 0.0;
    case Activation::kTanh: return std::tanh(x);
    case Activation::kSigmoid: return sigmoid(x);
  }
  return x;
}

double activation_derivative(Activation a, double pre, double post) {
  switch (a) {
    case Activation::kIdentity: return 1.0;
    case Activation::kRelu: return pre > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: return 1.0 - post * post;
    case Activation::kSigmoid: return post * (1.0 - post);
  }
  return 1.0;
}

Vec softmax(const Vec& logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  const double m = *std::max_element(logits.begin(), logits.end());
  Vec out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - m);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

DenseLayer::DenseLayer(std::size_t in, std::size_t out, Activation act, Rng& rng)
    : in_dim(in), out_dim(out), weights(in * out), bias(out, 0.0), activation(act) {
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : weights) w = rng.uniform(-bound, bound);
}

void DenseLayer::forward(std::span<const double> x, Vec& preact, Vec& out) const {
  if (x.size() != in_dim)
    throw std::invalid_argument("DenseLayer::forward: input dim " +
                                std::to_string(x.size()) + " != " +
                                std::to_string(in_dim));
  preact.assign(out_dim, 0.0);
  out.resize(out_dim);
  for (std::size_t r = 0; r < out_dim; ++r) {
    const double* wr = weights.data() + r * in_dim;
    double acc = bias[r];
    for (std::size_t c = 0; c < in_dim; ++c) acc += wr[c] * x[c];
    preact[r] = acc;
    out[r] = apply_activation(activation, acc);
  }
}

void DenseLayer::backward(std::span<const double> input,
                          std::span<const double> preact,
                          std::span<const double> out,
                          std::span<const double> out_grad,
                          std::span<double> w_grad, std::span<double> b_grad,
                          Vec& in_grad) const {
  if (preact.size() != out_dim || input.size() != in_dim ||
      out_grad.size() != out_dim)
    throw std::logic_error("DenseLayer::backward: cache/grad shape mismatch");
  in_grad.assign(in_dim, 0.0);
  for (std::size_t r = 0; r < out_dim; ++r) {
    const double d = out_grad[r] * activation_derivative(activation, preact[r], out[r]);
    b_grad[r] += d;
    double* wg = w_grad.data() + r * in_dim;
    const double* wr = weights.data() + r * in_dim;
    for (std::size_t c = 0; c < in_dim; ++c) {
      wg[c] += d * input[c];
      in_grad[c] += d * wr[c];
    }
  }
}

Mlp::Mlp(const std::vector<std::size_t>& dims,
         const std::vector<Activation>& acts, Rng& rng) {
  if (dims.size() < 2) throw std::invalid_argument("Mlp: need at least 2 dims");
  if (acts.size() != dims.size() - 1)
    throw std::invalid_argument("Mlp: acts size must be dims size - 1");
  layers_.reserve(acts.size());
  for (std::size_t i = 0; i + 1 < dims.size(); ++i)
    layers_.emplace_back(dims[i], dims[i + 1], acts[i], rng);
}

Vec Mlp::forward(std::span<const double> input) const {
  MlpCache cache;
  return forward(input, cache);
}

Vec Mlp::forward(std::span<const double> input, MlpCache& cache) const {
  if (layers_.empty()) throw std::logic_error("Mlp::forward: empty net");
  cache.inputs.resize(layers_.size());
  cache.preacts.resize(layers_.size());
  cache.outputs.resize(layers_.size());
  Vec x(input.begin(), input.end());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cache.inputs[i] = x;
    layers_[i].forward(x, cache.preacts[i], cache.outputs[i]);
    x = cache.outputs[i];
  }
  return x;
}

Vec Mlp::backward(const MlpCache& cache, std::span<const double> output_grad,
                  MlpGrads& grads) const {
  if (cache.inputs.size() != layers_.size())
    throw std::logic_error("Mlp::backward: cache does not match this net");
  grads.flat.resize(param_count());
  Vec g(output_grad.begin(), output_grad.end());
  // Walk the flat layout backwards so each layer writes into its own slice.
  std::size_t offset = param_count();
  Vec in_grad;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const DenseLayer& layer = layers_[i];
    offset -= layer.param_count();
    std::span<double> w_grad(grads.flat.data() + offset, layer.weights.size());
    std::span<double> b_grad(grads.flat.data() + offset + layer.weights.size(),
                             layer.bias.size());
    layer.backward(cache.inputs[i], cache.preacts[i], cache.outputs[i], g,
                   w_grad, b_grad, in_grad);
    g = in_grad;
  }
  return g;
}

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.param_count();
  return n;
}

Vec Mlp::params() const {
  Vec flat;
  flat.reserve(param_count());
  for (const auto& l : layers_) {
    flat.insert(flat.end(), l.weights.begin(), l.weights.end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  return flat;
}

void Mlp::set_params(std::span<const double> flat) {
  if (flat.size() != param_count())
    throw std::invalid_argument("Mlp::set_params: wrong length");
  std::size_t off = 0;
  for (auto& l : layers_) {
    std::copy_n(flat.begin() + off, l.weights.size(), l.weights.begin());
    off += l.weights.size();
    std::copy_n(flat.begin() + off, l.bias.size(), l.bias.begin());
    off += l.bias.size();
  }
}

Optimizer Optimizer::sgd_momentum(double lr, double mom) {
  Optimizer o;
  o.kind = OptimizerKind::kSgdMomentum;
  o.learning_rate = lr;
  o.momentum = mom;
  return o;
}

Optimizer Optimizer::adam(double lr) {
  Optimizer o;
  o.kind = OptimizerKind::kAdam;
  o.learning_rate = lr;
  return o;
}

void Optimizer::step(std::span<double> params, std::span<const double> grads) {
  if (params.size() != grads.size())
    throw std::invalid_argument("Optimizer::step: shape mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i]))
      throw std::runtime_error("Optimizer::step: non-finite gradient at index " +
                               std::to_string(i));
  }
  if (kind == OptimizerKind::kSgdMomentum) {
    if (velocity.size() != params.size()) velocity.assign(params.size(), 0.0);
    for (std::size_t i = 0; i < params.size(); ++i) {
      velocity[i] = momentum * velocity[i] - learning_rate * grads[i];
      params[i] += velocity[i];
    }
  } else {
    if (m1.size() != params.size()) {
      m1.assign(params.size(), 0.0);
      m2.assign(params.size(), 0.0);
    }
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m1[i] = beta1 * m1[i] + (1.0 - beta1) * grads[i];
      m2[i] = beta2 * m2[i] + (1.0 - beta2) * grads[i] * grads[i];
      const double mhat = m1[i] / bc1;
      const double vhat = m2[i] / bc2;
      params[i] -= learning_rate * mhat / (std::sqrt(vhat) + epsilon);
    }
  }
}

}  // namespace archinf
