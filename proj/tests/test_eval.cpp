#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "archinf/eval.hpp"

using namespace archinf;

namespace {

// Brute-force Spearman: build mid-ranks by direct comparison counting, then
// Pearson on the ranks. O(n^2), independent of the library's sort-based path.
double spearman_bruteforce(const Vec& a, const Vec& b) {
  const std::size_t n = a.size();
  auto midranks = [n](const Vec& v) {
    Vec r(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t less = 0, equal = 0;
      for (std::size_t j = 0; j < n; ++j) {
        if (v[j] < v[i]) ++less;
        if (v[j] == v[i]) ++equal;
      }
      r[i] = static_cast<double>(less) + 0.5 * static_cast<double>(equal - 1) + 1.0;
    }
    return r;
  };
  const Vec ra = midranks(a), rb = midranks(b);
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    ma += ra[i] / static_cast<double>(n);
    mb += rb[i] / static_cast<double>(n);
  }
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  return cov / std::sqrt(va * vb);
}

}  // namespace

TEST_CASE("spearman: exact values on hand cases") {
  CHECK(spearman({1, 2, 3, 4}, {10, 20, 30, 40}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(spearman({1, 2, 3, 4}, {8, 6, 4, 2}) == doctest::Approx(-1.0).epsilon(1e-15));
  // Monotone transform invariance: ranks only.
  CHECK(spearman({1, 2, 3, 4}, {1, 8, 27, 64}) == doctest::Approx(1.0).epsilon(1e-15));
  // Classic small case: (1,2,3) vs (2,1,3) -> rho = 0.5.
  CHECK(spearman({1, 2, 3}, {2, 1, 3}) == doctest::Approx(0.5).epsilon(1e-12));

  CHECK_THROWS_AS(spearman({1, 2}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(spearman({1}, {2}), std::invalid_argument);
  CHECK_THROWS_AS(spearman({3, 3, 3}, {1, 2, 3}), std::invalid_argument);
}

TEST_CASE("spearman matches a brute-force mid-rank oracle, ties included") {
  Rng rng(80);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 5 + rng.index(40);
    Vec a(n), b(n);
    for (double& v : a) v = 0.25 * static_cast<double>(rng.index(8));  // many ties
    for (double& v : b) v = rng.uniform(0.0, 1.0);
    bool const_a = std::all_of(a.begin(), a.end(), [&](double v) { return v == a[0]; });
    if (const_a) a[0] += 1.0;
    CHECK(spearman(a, b) == doctest::Approx(spearman_bruteforce(a, b)).epsilon(1e-12));
  }
}

TEST_CASE("r2: exact algebra") {
  // Perfect prediction.
  CHECK(r2({1, 2, 3}, {1, 2, 3}) == doctest::Approx(1.0).epsilon(1e-15));
  // Predicting the mean scores 0.
  CHECK(r2({2, 2, 2}, {1, 2, 3}) == doctest::Approx(0.0).epsilon(1e-15));
  // Hand case: pred {1,2,4}, actual {1,2,3}: SSres = 1, SStot = 2.
  CHECK(r2({1, 2, 4}, {1, 2, 3}) == doctest::Approx(0.5).epsilon(1e-12));
  // R2 is unbounded below.
  CHECK(r2({10, -10, 10}, {1, 2, 3}) < -50.0);

  CHECK_THROWS_AS(r2({1, 2}, {1, 2, 3}), std::invalid_argument);
  CHECK_THROWS_AS(r2({1, 2, 3}, {5, 5, 5}), std::invalid_argument);
}

TEST_CASE("MetricSummary uses the population standard deviation") {
  MetricSummary m;
  m.add(0.2);
  m.add(0.4);
  m.add(0.6);
  m.finalize();
  CHECK(m.mean == doctest::Approx(0.4).epsilon(1e-12));
  CHECK(m.stddev == doctest::Approx(std::sqrt(0.08 / 3.0)).epsilon(1e-12));
}

TEST_CASE("pca_components: exact recovery of a planar point cloud") {
  // Points in the plane spanned by e1 and (e2+e3)/sqrt(2), spread 3:1.
  Rng rng(81);
  std::vector<Vec> points;
  for (int i = 0; i < 200; ++i) {
    const double s = 3.0 * rng.normal();
    const double t = 1.0 * rng.normal();
    Vec p(5, 0.0);
    p[0] = s + 10.0;  // offset checks centering
    p[1] = t / std::sqrt(2.0) - 4.0;
    p[2] = t / std::sqrt(2.0) + 1.0;
    points.push_back(p);
  }
  const auto comps = pca_components(points, 3);
  REQUIRE(comps.size() == 3);

  // PC1 ~ e1, PC2 ~ (e2+e3)/sqrt(2) up to finite-sample rotation within the
  // plane; both must be exactly orthogonal to the unused dims 3 and 4.
  CHECK(std::abs(comps[0][0]) > 0.99);
  CHECK(comps[0][0] > 0.0);  // sign convention
  CHECK(comps[1][1] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.05));
  CHECK(comps[1][2] == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.05));
  for (std::size_t c = 0; c < 2; ++c) {
    CHECK(std::abs(comps[c][3]) < 1e-8);
    CHECK(std::abs(comps[c][4]) < 1e-8);
  }

  // Orthonormality.
  for (std::size_t i = 0; i < comps.size(); ++i)
    for (std::size_t j = 0; j <= i; ++j) {
      const double dot =
          std::inner_product(comps[i].begin(), comps[i].end(), comps[j].begin(), 0.0);
      CHECK(dot == doctest::Approx(i == j ? 1.0 : 0.0).epsilon(1e-8));
    }

  // Projection variance onto PC1 matches the sample variance of s.
  const Vec proj = pca_project(points, comps[0]);
  double mean = 0.0;
  for (double v : proj) mean += v / proj.size();
  double var = 0.0;
  for (double v : proj) var += (v - mean) * (v - mean) / proj.size();
  CHECK(var > 4.0);  // ~9 expected, far above the t-direction's ~1
}

TEST_CASE("pca_components matches a direct 2x2 eigensolution") {
  // 2-d points with covariance [[2.5, 1.5], [1.5, 2.5]] (exact, constructed):
  // eigenvalues 4 and 1, eigenvectors (1,1)/sqrt2 and (1,-1)/sqrt2.
  std::vector<Vec> points;
  const double a = std::sqrt(2.0);
  points.push_back({a + 1.0 / a, a - 1.0 / a});
  points.push_back({-a - 1.0 / a, -a + 1.0 / a});
  points.push_back({a - 1.0 / a, a + 1.0 / a});
  points.push_back({-a + 1.0 / a, -a - 1.0 / a});
  const auto comps = pca_components(points, 2);
  REQUIRE(comps.size() == 2);
  const double inv = 1.0 / std::sqrt(2.0);
  CHECK(comps[0][0] == doctest::Approx(inv).epsilon(1e-10));
  CHECK(comps[0][1] == doctest::Approx(inv).epsilon(1e-10));
  CHECK(std::abs(comps[1][0]) == doctest::Approx(inv).epsilon(1e-10));
  CHECK(comps[1][0] * comps[1][1] < 0.0);
}

namespace {

// Shared fixture: a few small tasks whose recorded performance depends only
// on the gate logits, which a DVN can learn from u alone.
struct EvalFixture {
  SearchSpaceSpec space = SearchSpaceSpec::desk_scale();
  FeatureSpace fspace;
  std::vector<TaskDataset> tasks;
  ExperimentDb db{space};

  EvalFixture(std::uint64_t seed, std::size_t num_tasks,
              std::size_t records_per_task) {
    fspace.feature_dim = 6;
    fspace.class_cap = 4;
    Rng rng(seed);
    for (std::size_t t = 0; t < num_tasks; ++t) {
      SyntheticTaskSpec spec;
      spec.task_id = "eval-" + std::to_string(t);
      spec.seed = seed + 100 + t;
      spec.num_samples = 50;
      spec.feature_dim = fspace.feature_dim;
      spec.informative_features = 3;
      spec.num_classes = 2;
      tasks.push_back(generate_synthetic_task(spec));
      for (std::size_t i = 0; i < records_per_task; ++i) {
        ExperimentRecord r;
        r.task_id = tasks.back().task_id;
        const auto enc = random_one_hot_encoding(space, rng);
        r.u = flatten(enc);
        double v = 0.2;
        for (std::size_t j = 0; j < space.num_layers; ++j)
          if (layer_gate(enc, j) > 0.5) v += 0.2;
        r.v = std::clamp(v + 0.02 * rng.normal(), 0.0, 1.0);
        r.seed = i;
        r.ts = static_cast<std::int64_t>(db.size());
        db.append(r);
      }
    }
  }
};

}  // namespace

TEST_CASE("leave_one_out scores every task and repeat on a learnable db") {
  EvalFixture fix(90, 3, 50);
  LeaveOneOutConfig cfg;
  cfg.repeats = 2;
  cfg.dvn.max_steps = 800;
  cfg.dvn.learning_rate = 1e-2;
  cfg.dvn.patience_window = 800;
  Rng rng(91);
  const auto report =
      leave_one_out(fix.tasks, fix.db, fix.fspace, MetaMode::kNoMeta, cfg, rng);

  CHECK(report.mode == MetaMode::kNoMeta);
  CHECK(report.repeats == 2);
  REQUIRE(report.rows.size() == 3);
  for (const auto& row : report.rows) {
    CHECK(row.spearman_stat.raw.size() == 2);
    CHECK(row.r2_stat.raw.size() == 2);
    // The gate signal transfers across tasks: rank correlation must be strong.
    CHECK(row.spearman_stat.mean > 0.5);
    CHECK(row.spearman_stat.mean <= 1.0);
    for (double v : row.spearman_stat.raw) {
      CHECK(v >= -1.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("leave_one_out is deterministic for a fixed seed") {
  EvalFixture fix(92, 2, 30);
  LeaveOneOutConfig cfg;
  cfg.repeats = 1;
  cfg.dvn.max_steps = 100;
  cfg.dvn.patience_window = 200;
  Rng ra(93), rb(93);
  const auto a =
      leave_one_out(fix.tasks, fix.db, fix.fspace, MetaMode::kLearnedMeta, cfg, ra);
  const auto b =
      leave_one_out(fix.tasks, fix.db, fix.fspace, MetaMode::kLearnedMeta, cfg, rb);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].task_id == b.rows[i].task_id);
    CHECK(a.rows[i].spearman_stat.raw == b.rows[i].spearman_stat.raw);
    CHECK(a.rows[i].r2_stat.raw == b.rows[i].r2_stat.raw);
  }
}

TEST_CASE("adding_tasks_study produces one point per prefix length") {
  EvalFixture fix(94, 4, 30);
  DvnTrainConfig dvn;
  dvn.max_steps = 100;
  dvn.patience_window = 200;
  Rng rng(95);
  const auto points =
      adding_tasks_study(fix.tasks, fix.tasks[0].task_id, fix.db, fix.fspace,
                         MetaMode::kNoMeta, dvn, 2, 1, rng);
  REQUIRE(points.size() == 3);  // prefixes of the 3 non-held-out tasks
  for (std::size_t k = 0; k < points.size(); ++k) {
    CHECK(points[k].num_tasks == k + 1);
    CHECK(std::isfinite(points[k].mean_spearman));
    CHECK(std::isfinite(points[k].mean_r2));
  }
}

TEST_CASE("embedding_stability_study separates distinct tasks") {
  EvalFixture fix(96, 3, 30);
  // Make the tasks very different so phi separates them even untrained hurts;
  // train a learned-meta DVN briefly so phi is informative.
  Rng mrng(97);
  DvnModel dvn(MetaMode::kLearnedMeta, fix.space, fix.fspace, mrng);
  DvnTrainConfig cfg;
  cfg.max_steps = 300;
  cfg.patience_window = 300;
  cfg.task_batch = 16;
  Rng trng(98);
  train_dvn(dvn, fix.db, fix.tasks, fix.fspace, cfg, trng);

  Rng rng(99);
  const auto report =
      embedding_stability_study(dvn, fix.tasks, fix.fspace, 4, 16, rng);
  CHECK(report.points.size() == 12);  // 3 tasks x 4 batches
  for (const auto& p : report.points) {
    CHECK(p.embedding.size() == kEmbedDim);
    CHECK(std::isfinite(p.pc1));
    CHECK(std::isfinite(p.pc2));
  }
  CHECK(report.mean_intra_distance >= 0.0);
  CHECK(report.mean_inter_distance > 0.0);
  // Same-task batches must embed closer together than cross-task pairs.
  CHECK(report.mean_intra_distance < report.mean_inter_distance);
}

TEST_CASE("search_quality_eval reports proposed and baseline accuracies") {
  EvalFixture fix(100, 2, 30);
  DvnTrainConfig dvn;
  dvn.max_steps = 200;
  dvn.patience_window = 300;
  InferenceConfig infer;
  infer.num_starting_points = 2;
  infer.max_iters = 50;
  auto child = ChildTrainConfig::desk_scale();
  child.epochs = 1;

  Rng rng(101);
  const auto rows = search_quality_eval(fix.tasks, fix.db, fix.fspace,
                                        MetaMode::kNoMeta, dvn, infer, child,
                                        /*baseline_samples=*/3, /*repeats=*/2, rng);
  REQUIRE(rows.size() == 2);
  for (const auto& row : rows) {
    CHECK(row.proposed.raw.size() == 2);
    CHECK(row.baseline.raw.size() == 3);
    for (double v : row.proposed.raw) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
    Vec sorted = row.baseline.raw;
    std::sort(sorted.begin(), sorted.end());
    CHECK(row.baseline_median == sorted[1]);
  }
}