#include "archinf/task.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace archinf {

namespace {

// Fisher-Yates on our own rng so shuffles are stable across stdlibs.
template <typename T>
void shuffle_vec(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i)
    std::swap(v[i - 1], v[rng.index(i)]);
}

void assign_splits(TaskDataset& task, Rng& rng) {
  std::vector<std::size_t> order(task.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  shuffle_vec(order, rng);
  const std::size_t n = order.size();
  const std::size_t n_train = (n * 8) / 10;
  const std::size_t n_val = n / 10;
  task.train_idx.assign(order.begin(), order.begin() + n_train);
  task.val_idx.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  task.test_idx.assign(order.begin() + n_train + n_val, order.end());
}

// Random orthonormal columns via Gram-Schmidt on Gaussian draws.
std::vector<Vec> random_orthonormal(std::size_t dim, std::size_t count, Rng& rng) {
  std::vector<Vec> basis;
  while (basis.size() < count) {
    Vec v(dim);
    for (double& x : v) x = rng.normal();
    for (const auto& b : basis) {
      double dot = 0.0;
      for (std::size_t i = 0; i < dim; ++i) dot += v[i] * b[i];
      for (std::size_t i = 0; i < dim; ++i) v[i] -= dot * b[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-8) continue;  // rare degenerate draw, resample
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  return basis;
}

}  // namespace

const std::vector<std::size_t>& TaskDataset::split(Split s) const {
  switch (s) {
    case Split::kTrain: return train_idx;
    case Split::kValidation: return val_idx;
    case Split::kTest: return test_idx;
  }
  return train_idx;
}

void SyntheticTaskSpec::validate() const {
  if (num_samples < 30) throw std::invalid_argument("task spec: num_samples >= 30");
  if (num_classes < 2) throw std::invalid_argument("task spec: num_classes >= 2");
  if (label_noise < 0.0 || label_noise >= 1.0)
    throw std::invalid_argument("task spec: label_noise in [0,1)");
  if (feature_dim < 1) throw std::invalid_argument("task spec: feature_dim >= 1");
  if (informative_features < 1 || informative_features > feature_dim)
    throw std::invalid_argument("task spec: informative_features in [1, d]");
}

TaskDataset generate_synthetic_task(const SyntheticTaskSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t d = spec.feature_dim;
  const std::size_t f = spec.informative_features;

  // Centroids in the informative subspace. When they fit, use orthonormal
  // directions so all pairwise distances equal margin*sqrt(2); otherwise
  // fall back to independent unit directions.
  std::vector<Vec> dirs;
  if (spec.num_classes <= f) {
    dirs = random_orthonormal(f, spec.num_classes, rng);
  } else {
    for (std::size_t c = 0; c < spec.num_classes; ++c)
      dirs.push_back(random_orthonormal(f, 1, rng)[0]);
  }

  std::vector<Vec> rotation;
  if (spec.rotate) rotation = random_orthonormal(d, d, rng);

  TaskDataset task;
  task.task_id = spec.task_id;
  task.num_classes = spec.num_classes;
  task.features.reserve(spec.num_samples);
  task.labels.reserve(spec.num_samples);
  for (std::size_t i = 0; i < spec.num_samples; ++i) {
    const std::size_t true_class = rng.index(spec.num_classes);
    Vec x(d);
    for (std::size_t k = 0; k < d; ++k) {
      x[k] = rng.normal();
      if (k < f) x[k] += spec.margin * dirs[true_class][k];
    }
    if (spec.rotate) {
      Vec rx(d, 0.0);
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) rx[r] += rotation[r][c] * x[c];
      x = std::move(rx);
    }
    std::size_t label = true_class;
    if (spec.label_noise > 0.0 && rng.uniform() < spec.label_noise) {
      label = rng.index(spec.num_classes - 1);
      if (label >= true_class) ++label;  // flip to a different class
    }
    task.features.push_back(std::move(x));
    task.labels.push_back(label);
  }
  assign_splits(task, rng);
  return task;
}

TaskDataset load_csv_task(const std::string& path, const std::string& task_id,
                          bool has_header, std::uint64_t split_seed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open task file: " + path);
  TaskDataset task;
  task.task_id = task_id;
  std::map<std::string, std::size_t> label_ids;
  std::string line;
  std::size_t line_no = 0;
  std::size_t expected_cols = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && has_header) continue;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 2)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": need at least one feature and a label");
    if (expected_cols == 0) expected_cols = cells.size();
    if (cells.size() != expected_cols)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": inconsistent column count");
    Vec x(cells.size() - 1);
    for (std::size_t c = 0; c + 1 < cells.size(); ++c) {
      try {
        std::size_t pos = 0;
        x[c] = std::stod(cells[c], &pos);
        if (pos != cells[c].size()) throw std::invalid_argument("trailing junk");
      } catch (const std::exception&) {
        throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                 ": column " + std::to_string(c + 1) +
                                 ": non-numeric feature '" + cells[c] + "'");
      }
    }
    const auto it = label_ids.emplace(cells.back(), label_ids.size()).first;
    task.features.push_back(std::move(x));
    task.labels.push_back(it->second);
  }
  if (task.features.empty()) throw std::runtime_error(path + ": no samples");
  task.num_classes = label_ids.size();
  Rng rng(split_seed);
  assign_splits(task, rng);
  return task;
}

void write_csv_task(const TaskDataset& task, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write task file: " + path);
  out.precision(17);
  for (std::size_t i = 0; i < task.size(); ++i) {
    for (double v : task.features[i]) out << v << ',';
    out << task.labels[i] << '\n';
  }
}

namespace {

double entropy_nats(const std::vector<double>& probs) {
  double h = 0.0;
  for (double p : probs)
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

// I(quantized feature; label) by direct counting, nats.
double feature_label_mi(const TaskDataset& task, std::size_t feature,
                        std::size_t bins) {
  double lo = task.features[0][feature], hi = lo;
  for (const auto& x : task.features) {
    lo = std::min(lo, x[feature]);
    hi = std::max(hi, x[feature]);
  }
  const double width = hi - lo;
  const std::size_t n = task.size();
  std::vector<std::vector<double>> joint(bins,
                                         std::vector<double>(task.num_classes, 0.0));
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t b = 0;
    if (width > 0.0) {
      b = static_cast<std::size_t>((task.features[i][feature] - lo) / width *
                                   static_cast<double>(bins));
      if (b >= bins) b = bins - 1;
    }
    joint[b][task.labels[i]] += 1.0 / static_cast<double>(n);
  }
  std::vector<double> pb(bins, 0.0), pl(task.num_classes, 0.0);
  for (std::size_t b = 0; b < bins; ++b)
    for (std::size_t l = 0; l < task.num_classes; ++l) {
      pb[b] += joint[b][l];
      pl[l] += joint[b][l];
    }
  double mi = 0.0;
  for (std::size_t b = 0; b < bins; ++b)
    for (std::size_t l = 0; l < task.num_classes; ++l)
      if (joint[b][l] > 0.0)
        mi += joint[b][l] * std::log(joint[b][l] / (pb[b] * pl[l]));
  return mi;
}

}  // namespace

Vec compute_meta_features(const TaskDataset& task) {
  if (task.size() == 0) throw std::invalid_argument("meta-features: empty dataset");
  constexpr std::size_t kClassDistLen = 16;
  constexpr std::size_t kMiBins = 10;
  Vec meta;
  meta.reserve(kMetaFeatureDim);
  meta.push_back(std::log(1.0 + static_cast<double>(task.size())));
  meta.push_back(std::log(1.0 + static_cast<double>(task.num_classes)));

  std::vector<double> class_dist(task.num_classes, 0.0);
  for (std::size_t l : task.labels) class_dist[l] += 1.0 / static_cast<double>(task.size());
  meta.push_back(entropy_nats(class_dist));

  // Sorted descending: invariant to class relabeling.
  std::sort(class_dist.begin(), class_dist.end(), std::greater<>());
  class_dist.resize(kClassDistLen, 0.0);
  meta.insert(meta.end(), class_dist.begin(), class_dist.end());

  const std::size_t d = task.feature_dim();
  double mean_min = 0.0, mean_max = 0.0, mean_median = 0.0, mean_mi = 0.0;
  Vec column(task.size());
  for (std::size_t f = 0; f < d; ++f) {
    for (std::size_t i = 0; i < task.size(); ++i) column[i] = task.features[i][f];
    std::sort(column.begin(), column.end());
    mean_min += column.front();
    mean_max += column.back();
    const std::size_t n = column.size();
    mean_median += (n % 2 == 1) ? column[n / 2]
                                : 0.5 * (column[n / 2 - 1] + column[n / 2]);
    mean_mi += feature_label_mi(task, f, kMiBins);
  }
  meta.push_back(mean_min / static_cast<double>(d));
  meta.push_back(mean_max / static_cast<double>(d));
  meta.push_back(mean_median / static_cast<double>(d));
  meta.push_back(mean_mi / static_cast<double>(d));
  return meta;
}

Vec sample_row(const TaskDataset& task, std::size_t index,
               const FeatureSpace& space) {
  if (task.feature_dim() != space.feature_dim)
    throw std::invalid_argument("sample_row: task feature dim differs from space");
  if (task.labels[index] >= space.class_cap)
    throw std::invalid_argument("sample_row: label exceeds class cap");
  Vec row(space.sample_width(), 0.0);
  std::copy(task.features[index].begin(), task.features[index].end(), row.begin());
  row[space.feature_dim + task.labels[index]] = 1.0;
  return row;
}

std::vector<Vec> sample_batch(const TaskDataset& task, Split split,
                              std::size_t size, const FeatureSpace& space,
                              Rng& rng) {
  const auto& idx = task.split(split);
  if (size > idx.size())
    throw std::invalid_argument("sample_batch: requested " + std::to_string(size) +
                                " from split of size " + std::to_string(idx.size()));
  std::vector<std::size_t> pool(idx);
  // Partial Fisher-Yates: first `size` entries are a without-replacement draw.
  for (std::size_t i = 0; i < size; ++i)
    std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
  std::vector<Vec> batch;
  batch.reserve(size);
  for (std::size_t i = 0; i < size; ++i)
    batch.push_back(sample_row(task, pool[i], space));
  return batch;
}

}  // namespace archinf
