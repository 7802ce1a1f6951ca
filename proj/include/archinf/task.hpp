#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "archinf/nn.hpp"
#include "archinf/rng.hpp"

namespace archinf {

// Shared feature-space conventions: every task lives in the same d-dim
// feature space and class counts are capped so one-hot labels have a fixed
// width. phi's input width is d + class_cap for all tasks.
struct FeatureSpace {
  std::size_t feature_dim = 16;
  std::size_t class_cap = 16;
  std::size_t sample_width() const { return feature_dim + class_cap; }
};

enum class Split { kTrain, kValidation, kTest };

struct TaskDataset {
  std::string task_id;
  std::vector<Vec> features;          // all of dimension d
  std::vector<std::size_t> labels;    // < num_classes
  std::size_t num_classes = 0;
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> val_idx;
  std::vector<std::size_t> test_idx;

  std::size_t size() const { return features.size(); }
  std::size_t feature_dim() const { return features.empty() ? 0 : features[0].size(); }
  const std::vector<std::size_t>& split(Split s) const;
};

struct SyntheticTaskSpec {
  std::string task_id;
  std::uint64_t seed = 0;
  std::size_t num_samples = 1000;
  std::size_t num_classes = 2;
  std::size_t feature_dim = 16;
  double margin = 4.0;               // class-centroid separation scale
  double label_noise = 0.0;          // fraction of labels flipped
  std::size_t informative_features = 8;
  bool rotate = true;                // task-specific random rotation

  void validate() const;
};

// Gaussian class clusters at margin-separated centroids in an informative
// subspace, optionally rotated by a task-specific orthogonal matrix, labels
// flipped at the noise rate. Deterministic given the seed. Split 80/10/10.
TaskDataset generate_synthetic_task(const SyntheticTaskSpec& spec);

// CSV: numeric feature columns, final column is the label (any string; label
// ids assigned by first appearance). Split 80/10/10 by a shuffle seeded from
// split_seed.
TaskDataset load_csv_task(const std::string& path, const std::string& task_id,
                          bool has_header, std::uint64_t split_seed);

void write_csv_task(const TaskDataset& task, const std::string& path);

// Fixed-length vector of order-free dataset statistics: log counts, label
// entropy (nats), class distribution sorted descending (padded to 16), mean
// per-feature min/max/median and mean feature-label mutual information on
// 10-bin equal-width quantized features.
inline constexpr std::size_t kMetaFeatureDim = 23;
Vec compute_meta_features(const TaskDataset& task);

// One batch row: [features, one-hot label padded to class_cap].
std::vector<Vec> sample_batch(const TaskDataset& task, Split split,
                              std::size_t size, const FeatureSpace& space,
                              Rng& rng);

Vec sample_row(const TaskDataset& task, std::size_t index,
               const FeatureSpace& space);

}  // namespace archinf
