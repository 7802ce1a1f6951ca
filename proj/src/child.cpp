#include "archinf/child.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

namespace archinf {

namespace {
std::atomic<std::uint64_t> g_child_steps{0};
}

std::uint64_t child_training_steps() { return g_child_steps.load(); }

ChildTrainConfig ChildTrainConfig::desk_scale() {
  ChildTrainConfig c;
  c.optimizer = Optimizer::adam(1e-2);
  c.epochs = 5;
  c.batch_size = 32;
  return c;
}

struct ChildModel::Trace {
  std::vector<Vec> layer_inputs;        // h_0 .. h_L (width W each)
  std::vector<Vec> base_preacts;        // L*p
  std::vector<Vec> base_outs;           // L*p
  Vec head_logits;
  Vec probs;
};

ChildModel::ChildModel(const ArchitectureEncoding& encoding,
                       const SearchSpaceSpec& space,
                       const FeatureSpace& features, std::size_t num_classes,
                       Rng& rng)
    : space_(space),
      encoding_(encoding),
      input_width_(features.sample_width()),
      width_(space.max_base_size()),
      num_classes_(num_classes) {
  space_.validate();
  if (!encoding.matches(space))
    throw std::invalid_argument("ChildModel: encoding does not match space");

  const std::size_t L = space.num_layers;
  const std::size_t p = space.mixture_size();
  mix_.reserve(L);
  gate_.reserve(L);
  for (std::size_t j = 0; j < L; ++j) {
    mix_.push_back(mixing_weights(encoding, j));
    gate_.push_back(layer_gate(encoding, j));
  }
  module_mix_ = softmax(encoding.gamma);

  // Module 0 is an identity pad/truncate; the rest are fixed seeded random
  // projections, scaled to preserve input magnitude.
  preproc_.resize(space.num_preproc_modules);
  preproc_[0].assign(width_ * input_width_, 0.0);
  for (std::size_t i = 0; i < std::min(width_, input_width_); ++i)
    preproc_[0][i * input_width_ + i] = 1.0;
  const double scale = 1.0 / std::sqrt(static_cast<double>(input_width_));
  for (std::size_t e = 1; e < space.num_preproc_modules; ++e) {
    preproc_[e].resize(width_ * input_width_);
    for (double& v : preproc_[e]) v = scale * rng.normal();
  }

  base_.reserve(L * p);
  base_off_.reserve(L * p);
  const std::size_t num_acts = space.activations.size();
  std::size_t off = 0;
  for (std::size_t j = 0; j < L; ++j)
    for (std::size_t i = 0; i < p; ++i) {
      const std::size_t size = space.base_sizes[i / num_acts];
      const Activation act = space.activations[i % num_acts];
      base_.emplace_back(width_, size, act, rng);
      base_off_.push_back(off);
      off += base_.back().param_count();
    }
  head_ = DenseLayer(width_, num_classes, Activation::kIdentity, rng);
}

Vec ChildModel::preprocess(std::span<const double> x) const {
  if (x.size() != input_width_)
    throw std::invalid_argument("ChildModel: input width mismatch");
  Vec h(width_, 0.0);
  for (std::size_t e = 0; e < preproc_.size(); ++e) {
    const double w = module_mix_[e];
    if (w == 0.0) continue;
    const Vec& mat = preproc_[e];
    for (std::size_t r = 0; r < width_; ++r) {
      double acc = 0.0;
      const double* row = mat.data() + r * input_width_;
      for (std::size_t c = 0; c < input_width_; ++c) acc += row[c] * x[c];
      h[r] += w * acc;
    }
  }
  return h;
}

Vec ChildModel::parametrized_layer_forward(std::size_t layer_index,
                                           std::span<const double> x) const {
  if (layer_index >= space_.num_layers)
    throw std::out_of_range("parametrized_layer_forward: layer out of range");
  if (x.size() != width_)
    throw std::invalid_argument("parametrized_layer_forward: width mismatch");
  const std::size_t p = space_.mixture_size();
  Vec mixed(width_, 0.0);
  Vec preact, out;
  for (std::size_t i = 0; i < p; ++i) {
    base_[layer_index * p + i].forward(x, preact, out);
    const double w = mix_[layer_index][i];
    for (std::size_t r = 0; r < out.size(); ++r) mixed[r] += w * out[r];
  }
  const double g = gate_[layer_index];
  Vec y(width_);
  for (std::size_t r = 0; r < width_; ++r) y[r] = g * mixed[r] + (1.0 - g) * x[r];
  return y;
}

Vec ChildModel::forward(std::span<const double> x, Trace* trace) const {
  Vec h = preprocess(x);
  const std::size_t p = space_.mixture_size();
  if (trace) {
    trace->layer_inputs.clear();
    trace->base_preacts.assign(base_.size(), {});
    trace->base_outs.assign(base_.size(), {});
  }
  Vec preact, out;
  for (std::size_t j = 0; j < space_.num_layers; ++j) {
    if (trace) trace->layer_inputs.push_back(h);
    Vec mixed(width_, 0.0);
    for (std::size_t i = 0; i < p; ++i) {
      const std::size_t bi = j * p + i;
      base_[bi].forward(h, preact, out);
      const double w = mix_[j][i];
      for (std::size_t r = 0; r < out.size(); ++r) mixed[r] += w * out[r];
      if (trace) {
        trace->base_preacts[bi] = preact;
        trace->base_outs[bi] = out;
      }
    }
    const double g = gate_[j];
    for (std::size_t r = 0; r < width_; ++r)
      h[r] = g * mixed[r] + (1.0 - g) * h[r];
  }
  if (trace) trace->layer_inputs.push_back(h);
  Vec logits, pre;
  head_.forward(h, pre, logits);
  if (trace) {
    trace->head_logits = logits;
    trace->probs = softmax(logits);
  }
  return logits;
}

Vec ChildModel::predict(std::span<const double> x) const {
  return softmax(forward(x, nullptr));
}

std::size_t ChildModel::trainable_param_count() const {
  std::size_t n = head_.param_count();
  for (const auto& l : base_) n += l.param_count();
  return n;
}

Vec ChildModel::trainable_params() const {
  Vec flat;
  flat.reserve(trainable_param_count());
  for (const auto& l : base_) {
    flat.insert(flat.end(), l.weights.begin(), l.weights.end());
    flat.insert(flat.end(), l.bias.begin(), l.bias.end());
  }
  flat.insert(flat.end(), head_.weights.begin(), head_.weights.end());
  flat.insert(flat.end(), head_.bias.begin(), head_.bias.end());
  return flat;
}

void ChildModel::set_trainable_params(std::span<const double> flat) {
  if (flat.size() != trainable_param_count())
    throw std::invalid_argument("ChildModel::set_trainable_params: wrong length");
  std::size_t off = 0;
  auto take = [&](Vec& dst) {
    std::copy_n(flat.begin() + off, dst.size(), dst.begin());
    off += dst.size();
  };
  for (auto& l : base_) {
    take(l.weights);
    take(l.bias);
  }
  take(head_.weights);
  take(head_.bias);
}

double ChildModel::loss_and_grad(std::span<const double> x, std::size_t label,
                                 Vec& grad_flat) const {
  if (label >= num_classes_)
    throw std::invalid_argument("ChildModel::loss_and_grad: bad label");
  if (grad_flat.size() != trainable_param_count())
    grad_flat.assign(trainable_param_count(), 0.0);

  Trace trace;
  forward(x, &trace);
  const double loss = -std::log(std::max(trace.probs[label], 1e-300));

  // Softmax + cross-entropy: dL/dlogits = p - onehot(label).
  Vec g(num_classes_);
  for (std::size_t c = 0; c < num_classes_; ++c)
    g[c] = trace.probs[c] - (c == label ? 1.0 : 0.0);

  const std::size_t p = space_.mixture_size();
  std::size_t head_off = grad_flat.size() - head_.param_count();
  std::span<double> head_wg(grad_flat.data() + head_off, head_.weights.size());
  std::span<double> head_bg(grad_flat.data() + head_off + head_.weights.size(),
                            head_.bias.size());
  Vec dh;
  head_.backward(trace.layer_inputs.back(), trace.head_logits, trace.head_logits,
                 g, head_wg, head_bg, dh);

  Vec din, dbase_out;
  for (std::size_t j = space_.num_layers; j-- > 0;) {
    const Vec& h_in = trace.layer_inputs[j];
    const double gate = gate_[j];
    // y = gate * sum_i mix_i * pad(o_i(h)) + (1-gate) * h
    Vec dnext(width_, 0.0);
    for (std::size_t r = 0; r < width_; ++r) dnext[r] = (1.0 - gate) * dh[r];
    for (std::size_t i = 0; i < p; ++i) {
      const std::size_t bi = j * p + i;
      const DenseLayer& layer = base_[bi];
      const double w = gate * mix_[j][i];
      if (w == 0.0) continue;
      dbase_out.assign(layer.out_dim, 0.0);
      for (std::size_t r = 0; r < layer.out_dim; ++r) dbase_out[r] = w * dh[r];
      const std::size_t param_off = base_off_[bi];
      std::span<double> wg(grad_flat.data() + param_off, layer.weights.size());
      std::span<double> bg(grad_flat.data() + param_off + layer.weights.size(),
                           layer.bias.size());
      layer.backward(h_in, trace.base_preacts[bi], trace.base_outs[bi],
                     dbase_out, wg, bg, din);
      for (std::size_t r = 0; r < width_; ++r) dnext[r] += din[r];
    }
    dh = std::move(dnext);
  }
  return loss;
}

double train_and_score(const ArchitectureEncoding& encoding,
                       const SearchSpaceSpec& space, const FeatureSpace& fspace,
                       const TaskDataset& task, const ChildTrainConfig& config,
                       Rng& rng) {
  if (task.train_idx.empty() || task.val_idx.empty())
    throw std::invalid_argument("train_and_score: empty train or validation split");
  if (config.epochs < 1)
    throw std::invalid_argument("train_and_score: epochs >= 1 required");

  ChildModel model(encoding, space, fspace, task.num_classes, rng);
  Vec params = model.trainable_params();
  Optimizer opt = config.optimizer;

  auto input_row = [&](std::size_t idx) {
    // Features padded to the shared width; label slots stay zero (the label
    // is the training target, not an input).
    Vec row(fspace.sample_width(), 0.0);
    std::copy(task.features[idx].begin(), task.features[idx].end(), row.begin());
    return row;
  };

  std::vector<std::size_t> order(task.train_idx);
  Vec grads(model.trainable_param_count());
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.index(i)]);
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(start + config.batch_size, order.size());
      std::fill(grads.begin(), grads.end(), 0.0);
      for (std::size_t k = start; k < end; ++k)
        model.loss_and_grad(input_row(order[k]), task.labels[order[k]], grads);
      const double inv = 1.0 / static_cast<double>(end - start);
      for (double& gv : grads) gv *= inv;
      opt.step(params, grads);
      model.set_trainable_params(params);
      g_child_steps.fetch_add(1);
    }
  }

  std::size_t correct = 0;
  for (std::size_t idx : task.val_idx) {
    const Vec probs = model.predict(input_row(idx));
    const std::size_t pred =
        std::max_element(probs.begin(), probs.end()) - probs.begin();
    if (pred == task.labels[idx]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(task.val_idx.size());
}

}  // namespace archinf
