#pragma once

#include <cstdint>

#include "archinf/encoding.hpp"
#include "archinf/nn.hpp"
#include "archinf/task.hpp"

namespace archinf {

struct ChildTrainConfig {
  Optimizer optimizer = Optimizer::adam(1e-4);
  std::size_t epochs = 20;
  std::size_t batch_size = 32;

  // Small, fast settings for tests and acceptance runs.
  static ChildTrainConfig desk_scale();
};

// Continuously parametrized child classifier: a soft-selected preprocessing
// module, L parametrized layers (each a softmax mixture of p base layers with
// a sigmoid presence gate on a bypass path), and a linear softmax head. The
// encoding is a frozen input; only base layers and the head are trained.
//
// All parametrized layers run at width W = max base size. Inputs narrower
// than W are zero-padded at the tail; base-layer outputs likewise.
class ChildModel {
 public:
  ChildModel(const ArchitectureEncoding& encoding, const SearchSpaceSpec& space,
             const FeatureSpace& features, std::size_t num_classes, Rng& rng);

  // Class probabilities for one input row of width d + class_cap (label slots
  // are zeroed by callers during training/eval; the label is the target).
  Vec predict(std::span<const double> x) const;

  // Cross-entropy loss for one example; accumulates parameter grads.
  double loss_and_grad(std::span<const double> x, std::size_t label,
                       Vec& grad_flat) const;

  std::size_t trainable_param_count() const;
  Vec trainable_params() const;
  void set_trainable_params(std::span<const double> flat);

  std::size_t input_width() const { return input_width_; }
  std::size_t num_classes() const { return num_classes_; }
  const SearchSpaceSpec& space() const { return space_; }

  // Output of parametrized layer `layer_index` on x (width W), exposed for
  // unit-level checks of the mixture arithmetic.
  Vec parametrized_layer_forward(std::size_t layer_index,
                                 std::span<const double> x) const;
  Vec preprocess(std::span<const double> x) const;

 private:
  struct Trace;
  Vec forward(std::span<const double> x, Trace* trace) const;

  SearchSpaceSpec space_;
  ArchitectureEncoding encoding_;
  std::size_t input_width_;
  std::size_t width_;        // shared layer width W
  std::size_t num_classes_;
  std::vector<Vec> mix_;     // softmax(alpha row) per layer, precomputed
  Vec gate_;                 // sigmoid(beta) per layer
  Vec module_mix_;           // softmax(gamma)
  std::vector<Vec> preproc_; // E fixed matrices, W x input_width row-major
  std::vector<DenseLayer> base_;       // L*p, indexed layer*p + i
  std::vector<std::size_t> base_off_;  // flat-parameter offset per base layer
  DenseLayer head_;                    // W -> num_classes, linear
};

// Trains a child with the given encoding on the task's train split and
// returns its validation accuracy. Deterministic given the rng seed.
double train_and_score(const ArchitectureEncoding& encoding,
                       const SearchSpaceSpec& space, const FeatureSpace& fspace,
                       const TaskDataset& task, const ChildTrainConfig& config,
                       Rng& rng);

// Number of child optimizer steps taken since process start. Inference must
// leave this untouched; the acceptance suite asserts on it.
std::uint64_t child_training_steps();

}  // namespace archinf
