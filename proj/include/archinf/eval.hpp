#pragma once

#include <string>
#include <vector>

#include "archinf/db.hpp"
#include "archinf/dvn.hpp"
#include "archinf/infer.hpp"
#include "archinf/task.hpp"

namespace archinf {

// Spearman's rank correlation with averaged (mid) ranks for ties. Throws on
// length mismatch, length < 2, or an all-constant argument.
double spearman(const Vec& a, const Vec& b);

// Coefficient of determination 1 - SS_res/SS_tot. Throws on constant actual.
double r2(const Vec& pred, const Vec& actual);

struct MetricSummary {
  double mean = 0.0;
  double stddev = 0.0;  // population std over repeats
  std::vector<double> raw;
  void add(double v) { raw.push_back(v); }
  void finalize();
};

struct TaskEvalRow {
  std::string task_id;
  MetricSummary spearman_stat;
  MetricSummary r2_stat;
};

struct EvaluationReport {
  MetaMode mode = MetaMode::kNoMeta;
  std::size_t repeats = 0;
  std::vector<TaskEvalRow> rows;
};

struct LeaveOneOutConfig {
  DvnTrainConfig dvn;
  std::size_t repeats = 3;
};

// For each held-out task and repeat: train a fresh DVN on the other tasks'
// records, predict the held-out task's recorded encodings, score
// spearman(pred, v*) and r2(pred, normalized v*).
EvaluationReport leave_one_out(const std::vector<TaskDataset>& tasks,
                               const ExperimentDb& db, const FeatureSpace& fspace,
                               MetaMode mode, const LeaveOneOutConfig& config,
                               Rng& rng);

struct AddingTasksPoint {
  std::size_t num_tasks = 0;
  double mean_spearman = 0.0;
  double mean_r2 = 0.0;
};

// Appendix-style study: hold out test_task, add the remaining tasks in
// `orderings` random orders, and for each prefix length train
// `trainings_per_ordering` DVNs and average the held-out metrics.
std::vector<AddingTasksPoint> adding_tasks_study(
    const std::vector<TaskDataset>& tasks, const std::string& test_task,
    const ExperimentDb& db, const FeatureSpace& fspace, MetaMode mode,
    const DvnTrainConfig& dvn_config, std::size_t orderings,
    std::size_t trainings_per_ordering, Rng& rng);

struct EmbeddingPoint {
  std::string task_id;
  std::size_t batch_index = 0;
  Vec embedding;      // raw 50-d z
  double pc1 = 0.0;   // 2-d PCA projection
  double pc2 = 0.0;
};

struct EmbeddingStabilityReport {
  double mean_intra_distance = 0.0;
  double mean_inter_distance = 0.0;
  std::vector<EmbeddingPoint> points;
};

// Embeds batches_per_task random batches per task and compares mean pairwise
// intra-task vs inter-task Euclidean distance; projects all embeddings onto
// the top-2 principal components.
EmbeddingStabilityReport embedding_stability_study(
    const DvnModel& dvn, const std::vector<TaskDataset>& tasks,
    const FeatureSpace& fspace, std::size_t batches_per_task,
    std::size_t batch_size, Rng& rng);

// Top-`components` principal axes of the row-major point set, by Jacobi
// eigendecomposition of the centered covariance. Sign convention: each
// component's largest-magnitude coordinate is positive.
std::vector<Vec> pca_components(const std::vector<Vec>& points,
                                std::size_t components);
Vec pca_project(const std::vector<Vec>& points, const Vec& component);

struct SearchQualityRow {
  std::string task_id;
  MetricSummary proposed;        // child accuracy at inferred u, over repeats
  MetricSummary baseline;        // accuracies of random one-hot children
  double baseline_median = 0.0;
};

// Per held-out task: train a child at the inferred continuous encoding and at
// `baseline_samples` random one-hot encodings, report accuracies.
std::vector<SearchQualityRow> search_quality_eval(
    const std::vector<TaskDataset>& tasks, const ExperimentDb& db,
    const FeatureSpace& fspace, MetaMode mode, const DvnTrainConfig& dvn_config,
    const InferenceConfig& infer_config, const ChildTrainConfig& child_config,
    std::size_t baseline_samples, std::size_t repeats, Rng& rng,
    Split score_split = Split::kValidation);

}  // namespace archinf
