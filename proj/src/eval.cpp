#include "archinf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace archinf {

namespace {

Vec mid_ranks(const Vec& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  Vec ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    // 1-based ranks; tied values share the average rank of the run.
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson(const Vec& a, const Vec& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

bool is_constant(const Vec& v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
}

double euclidean(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

double spearman(const Vec& a, const Vec& b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
  if (a.size() < 2) throw std::invalid_argument("spearman: need >= 2 points");
  if (is_constant(a) || is_constant(b))
    throw std::invalid_argument("spearman: undefined for constant input");
  return pearson(mid_ranks(a), mid_ranks(b));
}

double r2(const Vec& pred, const Vec& actual) {
  if (pred.size() != actual.size()) throw std::invalid_argument("r2: length mismatch");
  if (pred.size() < 2) throw std::invalid_argument("r2: need >= 2 points");
  if (is_constant(actual))
    throw std::invalid_argument("r2: undefined for constant actual");
  double mean = 0.0;
  for (double v : actual) mean += v;
  mean /= static_cast<double>(actual.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ss_res += (actual[i] - pred[i]) * (actual[i] - pred[i]);
    ss_tot += (actual[i] - mean) * (actual[i] - mean);
  }
  return 1.0 - ss_res / ss_tot;
}

void MetricSummary::finalize() {
  if (raw.empty()) return;
  mean = 0.0;
  for (double v : raw) mean += v;
  mean /= static_cast<double>(raw.size());
  double ss = 0.0;
  for (double v : raw) ss += (v - mean) * (v - mean);
  stddev = std::sqrt(ss / static_cast<double>(raw.size()));
}

namespace {

struct HeldOutScores {
  double spearman_v = 0.0;
  double r2_v = 0.0;
};

// Train a DVN on `train_tasks` and score its predictions on the held-out
// task's recorded experiments.
HeldOutScores run_fold(const std::vector<TaskDataset>& train_tasks,
                       const TaskDataset& held_out, const ExperimentDb& db,
                       const FeatureSpace& fspace, MetaMode mode,
                       const DvnTrainConfig& dvn_config, Rng& rng,
                       DvnModel* model_out = nullptr) {
  DvnModel dvn(mode, db.space(), fspace, rng);
  train_dvn(dvn, db, train_tasks, fspace, dvn_config, rng);

  Vec z, meta;
  if (dvn.uses_learned_meta()) {
    Rng embed_rng = rng.split(17);
    const auto batch = sample_batch(held_out, Split::kTrain,
                                    held_out.train_idx.size(), fspace, embed_rng);
    z = dvn.embed_task(batch);
  }
  if (dvn.uses_precomputed_meta()) meta = compute_meta_features(held_out);

  const auto targets = db.normalized_targets(held_out.task_id);
  const auto recs = db.task_records(held_out.task_id);
  Vec preds, actual, normalized;
  preds.reserve(recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    preds.push_back(dvn.predict(recs[i]->u, z, meta));
    actual.push_back(recs[i]->v);
    normalized.push_back(targets[i].second);
  }
  HeldOutScores s;
  s.spearman_v = spearman(preds, actual);
  s.r2_v = r2(preds, normalized);
  if (model_out) *model_out = std::move(dvn);
  return s;
}

}  // namespace

EvaluationReport leave_one_out(const std::vector<TaskDataset>& tasks,
                               const ExperimentDb& db, const FeatureSpace& fspace,
                               MetaMode mode, const LeaveOneOutConfig& config,
                               Rng& rng) {
  if (tasks.size() < 2)
    throw std::invalid_argument("leave_one_out: need >= 2 tasks");
  EvaluationReport report;
  report.mode = mode;
  report.repeats = config.repeats;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    try {
      db.normalized_targets(tasks[t].task_id);
    } catch (const std::exception& e) {
      std::cerr << "leave_one_out: skipping held-out task " << tasks[t].task_id
                << ": " << e.what() << '\n';
      continue;
    }
    std::vector<TaskDataset> train_tasks;
    for (std::size_t k = 0; k < tasks.size(); ++k)
      if (k != t) train_tasks.push_back(tasks[k]);
    TaskEvalRow row;
    row.task_id = tasks[t].task_id;
    for (std::size_t r = 0; r < config.repeats; ++r) {
      Rng fold_rng = rng.split(t * 1000 + r);
      const auto scores = run_fold(train_tasks, tasks[t], db, fspace, mode,
                                   config.dvn, fold_rng);
      row.spearman_stat.add(scores.spearman_v);
      row.r2_stat.add(scores.r2_v);
    }
    row.spearman_stat.finalize();
    row.r2_stat.finalize();
    report.rows.push_back(std::move(row));
  }
  return report;
}

std::vector<AddingTasksPoint> adding_tasks_study(
    const std::vector<TaskDataset>& tasks, const std::string& test_task,
    const ExperimentDb& db, const FeatureSpace& fspace, MetaMode mode,
    const DvnTrainConfig& dvn_config, std::size_t orderings,
    std::size_t trainings_per_ordering, Rng& rng) {
  const TaskDataset* held_out = nullptr;
  std::vector<TaskDataset> pool;
  for (const auto& t : tasks) {
    if (t.task_id == test_task) held_out = &t;
    else pool.push_back(t);
  }
  if (!held_out) throw std::invalid_argument("adding_tasks_study: unknown test task");
  if (pool.size() < 3)
    throw std::invalid_argument("adding_tasks_study: need >= 3 training tasks");

  std::vector<AddingTasksPoint> curve(pool.size());
  for (std::size_t k = 0; k < pool.size(); ++k) curve[k].num_tasks = k + 1;
  std::vector<std::size_t> counts(pool.size(), 0);

  for (std::size_t o = 0; o < orderings; ++o) {
    std::vector<TaskDataset> order(pool);
    Rng order_rng = rng.split(o);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[order_rng.index(i)]);
    for (std::size_t k = 1; k <= order.size(); ++k) {
      std::vector<TaskDataset> prefix(order.begin(), order.begin() + k);
      for (std::size_t r = 0; r < trainings_per_ordering; ++r) {
        Rng fold_rng = order_rng.split(k * 100 + r);
        try {
          const auto scores = run_fold(prefix, *held_out, db, fspace, mode,
                                       dvn_config, fold_rng);
          curve[k - 1].mean_spearman += scores.spearman_v;
          curve[k - 1].mean_r2 += scores.r2_v;
          ++counts[k - 1];
        } catch (const std::exception& e) {
          std::cerr << "adding_tasks_study: fold failed (k=" << k << "): "
                    << e.what() << '\n';
        }
      }
    }
  }
  for (std::size_t k = 0; k < curve.size(); ++k) {
    if (counts[k] > 0) {
      curve[k].mean_spearman /= static_cast<double>(counts[k]);
      curve[k].mean_r2 /= static_cast<double>(counts[k]);
    }
  }
  return curve;
}

// ---- PCA ----------------------------------------------------------------

namespace {

// Cyclic Jacobi eigendecomposition of a symmetric matrix (row-major n x n).
// Returns eigenvalues and fills `vectors` with the corresponding rows.
Vec jacobi_eigen(Vec a, std::size_t n, std::vector<Vec>& vectors) {
  std::vector<Vec> v(n, Vec(n, 0.0));
  for (std::size_t i = 0; i < n; ++i) v[i][i] = 1.0;
  auto at = [&](std::size_t r, std::size_t c) -> double& { return a[r * n + c]; };
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += at(p, q) * at(p, q);
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(at(p, q)) < 1e-300) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * at(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = at(k, p), akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = at(p, k), aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p], vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
  }
  Vec eigenvalues(n);
  for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = at(i, i);
  vectors.assign(n, Vec(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) vectors[i][k] = v[k][i];
  return eigenvalues;
}

Vec centroid(const std::vector<Vec>& points) {
  Vec mean(points[0].size(), 0.0);
  for (const auto& p : points)
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += p[i];
  for (double& m : mean) m /= static_cast<double>(points.size());
  return mean;
}

}  // namespace

std::vector<Vec> pca_components(const std::vector<Vec>& points,
                                std::size_t components) {
  if (points.size() < 2) throw std::invalid_argument("pca: need >= 2 points");
  const std::size_t d = points[0].size();
  if (components > d) throw std::invalid_argument("pca: more components than dims");
  const Vec mean = centroid(points);
  Vec cov(d * d, 0.0);
  for (const auto& p : points)
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c)
        cov[r * d + c] += (p[r] - mean[r]) * (p[c] - mean[c]);
  for (double& x : cov) x /= static_cast<double>(points.size());

  std::vector<Vec> vectors;
  Vec values = jacobi_eigen(std::move(cov), d, vectors);
  std::vector<std::size_t> order(d);
  for (std::size_t i = 0; i < d; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });

  std::vector<Vec> out;
  for (std::size_t c = 0; c < components; ++c) {
    Vec comp = vectors[order[c]];
    // Deterministic sign: largest-magnitude coordinate positive.
    std::size_t imax = 0;
    for (std::size_t i = 1; i < d; ++i)
      if (std::abs(comp[i]) > std::abs(comp[imax])) imax = i;
    if (comp[imax] < 0.0)
      for (double& x : comp) x = -x;
    out.push_back(std::move(comp));
  }
  return out;
}

Vec pca_project(const std::vector<Vec>& points, const Vec& component) {
  const Vec mean = centroid(points);
  Vec proj(points.size(), 0.0);
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::size_t k = 0; k < component.size(); ++k)
      proj[i] += (points[i][k] - mean[k]) * component[k];
  return proj;
}

EmbeddingStabilityReport embedding_stability_study(
    const DvnModel& dvn, const std::vector<TaskDataset>& tasks,
    const FeatureSpace& fspace, std::size_t batches_per_task,
    std::size_t batch_size, Rng& rng) {
  if (!dvn.uses_learned_meta())
    throw std::invalid_argument("embedding study: dvn has no learned meta-features");
  if (batches_per_task < 2)
    throw std::invalid_argument("embedding study: need >= 2 batches per task");

  EmbeddingStabilityReport report;
  for (const auto& task : tasks) {
    const std::size_t bs = std::min(batch_size, task.train_idx.size());
    for (std::size_t b = 0; b < batches_per_task; ++b) {
      EmbeddingPoint pt;
      pt.task_id = task.task_id;
      pt.batch_index = b;
      pt.embedding = dvn.embed_task(
          sample_batch(task, Split::kTrain, bs, fspace, rng));
      report.points.push_back(std::move(pt));
    }
  }

  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  for (std::size_t i = 0; i < report.points.size(); ++i)
    for (std::size_t j = i + 1; j < report.points.size(); ++j) {
      const double d = euclidean(report.points[i].embedding,
                                 report.points[j].embedding);
      if (report.points[i].task_id == report.points[j].task_id) {
        intra += d;
        ++n_intra;
      } else {
        inter += d;
        ++n_inter;
      }
    }
  if (n_intra > 0) report.mean_intra_distance = intra / static_cast<double>(n_intra);
  if (n_inter > 0) report.mean_inter_distance = inter / static_cast<double>(n_inter);

  std::vector<Vec> embeddings;
  embeddings.reserve(report.points.size());
  for (const auto& pt : report.points) embeddings.push_back(pt.embedding);
  const auto comps = pca_components(embeddings, 2);
  const Vec p1 = pca_project(embeddings, comps[0]);
  const Vec p2 = pca_project(embeddings, comps[1]);
  for (std::size_t i = 0; i < report.points.size(); ++i) {
    report.points[i].pc1 = p1[i];
    report.points[i].pc2 = p2[i];
  }
  return report;
}

std::vector<SearchQualityRow> search_quality_eval(
    const std::vector<TaskDataset>& tasks, const ExperimentDb& db,
    const FeatureSpace& fspace, MetaMode mode, const DvnTrainConfig& dvn_config,
    const InferenceConfig& infer_config, const ChildTrainConfig& child_config,
    std::size_t baseline_samples, std::size_t repeats, Rng& rng,
    Split score_split) {
  std::vector<SearchQualityRow> rows;
  for (std::size_t t = 0; t < tasks.size(); ++t) {
    std::vector<TaskDataset> train_tasks;
    for (std::size_t k = 0; k < tasks.size(); ++k)
      if (k != t) train_tasks.push_back(tasks[k]);
    Rng fold_rng = rng.split(t);

    DvnModel dvn;
    run_fold(train_tasks, tasks[t], db, fspace, mode, dvn_config, fold_rng, &dvn);
    const InferenceResult inferred = infer_architecture(
        dvn, tasks[t], db.space(), fspace, infer_config, fold_rng);
    const ArchitectureEncoding u_hat = unflatten(inferred.best_u, db.space());

    auto score = [&](const ArchitectureEncoding& enc, Rng& child_rng) {
      TaskDataset scored = tasks[t];
      if (score_split == Split::kTest) std::swap(scored.val_idx, scored.test_idx);
      return train_and_score(enc, db.space(), fspace, scored, child_config,
                             child_rng);
    };

    SearchQualityRow row;
    row.task_id = tasks[t].task_id;
    for (std::size_t r = 0; r < repeats; ++r) {
      Rng child_rng = fold_rng.split(500 + r);
      row.proposed.add(score(u_hat, child_rng));
    }
    for (std::size_t b = 0; b < baseline_samples; ++b) {
      Rng child_rng = fold_rng.split(9000 + b);
      const auto enc = random_one_hot_encoding(db.space(), fold_rng);
      row.baseline.add(score(enc, child_rng));
    }
    row.proposed.finalize();
    row.baseline.finalize();
    if (!row.baseline.raw.empty()) {
      Vec sorted = row.baseline.raw;
      std::sort(sorted.begin(), sorted.end());
      const std::size_t n = sorted.size();
      row.baseline_median = (n % 2 == 1)
                                ? sorted[n / 2]
                                : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace archinf
