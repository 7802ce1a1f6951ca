#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "archinf/dvn.hpp"
#include "test_util.hpp"

using namespace archinf;

namespace {

FeatureSpace small_features() {
  FeatureSpace f;
  f.feature_dim = 4;
  f.class_cap = 3;
  return f;
}

std::vector<Vec> random_batch(std::size_t n, std::size_t width, Rng& rng) {
  std::vector<Vec> batch(n, Vec(width));
  for (auto& row : batch)
    for (double& v : row) v = rng.normal();
  return batch;
}

Vec random_u(const SearchSpaceSpec& space, Rng& rng) {
  Vec u(space.encoding_dim());
  for (double& v : u) v = rng.uniform(-2.0, 2.0);
  return u;
}

Vec joint_params(const DvnModel& dvn) {
  Vec p = dvn.phi().params();
  const Vec r = dvn.rho().params();
  p.insert(p.end(), r.begin(), r.end());
  return p;
}

void set_joint_params(DvnModel& dvn, const Vec& p) {
  const std::size_t phi_n = dvn.phi().param_count();
  dvn.phi().set_params(std::span<const double>(p.data(), phi_n));
  dvn.rho().set_params(std::span<const double>(p.data() + phi_n, p.size() - phi_n));
}

}  // namespace

TEST_CASE("tower shapes per meta mode") {
  const auto space = SearchSpaceSpec::desk_scale();
  const auto fspace = small_features();
  Rng rng(30);
  const std::size_t u = space.encoding_dim();

  DvnModel none(MetaMode::kNoMeta, space, fspace, rng);
  CHECK(none.rho().in_dim() == u);
  CHECK(none.phi().param_count() == 0);

  DvnModel pre(MetaMode::kPrecomputedMeta, space, fspace, rng);
  CHECK(pre.rho().in_dim() == u + kMetaFeatureDim);

  DvnModel learned(MetaMode::kLearnedMeta, space, fspace, rng);
  CHECK(learned.rho().in_dim() == u + kEmbedDim);
  CHECK(learned.phi().in_dim() == fspace.sample_width());
  CHECK(learned.phi().out_dim() == kEmbedDim);

  DvnModel both(MetaMode::kBoth, space, fspace, rng);
  CHECK(both.rho().in_dim() == u + kEmbedDim + kMetaFeatureDim);

  CHECK(meta_mode_from_name("both") == MetaMode::kBoth);
  CHECK(std::string(meta_mode_name(MetaMode::kLearnedMeta)) == "learned_meta");
  CHECK_THROWS_AS(meta_mode_from_name("nope"), std::invalid_argument);
}

TEST_CASE("embed_task is permutation invariant and equals the mean of phi") {
  const auto space = SearchSpaceSpec::desk_scale();
  const auto fspace = small_features();
  Rng rng(31);
  DvnModel dvn(MetaMode::kLearnedMeta, space, fspace, rng);

  auto batch = random_batch(17, fspace.sample_width(), rng);
  const Vec z = dvn.embed_task(batch);
  REQUIRE(z.size() == kEmbedDim);

  // Oracle: mean of independent per-row forwards.
  Vec mean(kEmbedDim, 0.0);
  for (const auto& row : batch) {
    const Vec h = dvn.phi().forward(row);
    for (std::size_t i = 0; i < kEmbedDim; ++i) mean[i] += h[i] / 17.0;
  }
  for (std::size_t i = 0; i < kEmbedDim; ++i)
    CHECK(z[i] == doctest::Approx(mean[i]).epsilon(1e-12));

  // Permuting rows changes nothing beyond reassociation error.
  auto shuffled = batch;
  Rng perm(32);
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[perm.index(i)]);
  const Vec z2 = dvn.embed_task(shuffled);
  for (std::size_t i = 0; i < kEmbedDim; ++i)
    CHECK(std::abs(z[i] - z2[i]) < 1e-9);

  // Duplicating the batch leaves the mean embedding unchanged.
  auto doubled = batch;
  doubled.insert(doubled.end(), batch.begin(), batch.end());
  const Vec z3 = dvn.embed_task(doubled);
  for (std::size_t i = 0; i < kEmbedDim; ++i)
    CHECK(std::abs(z[i] - z3[i]) < 1e-9);

  CHECK_THROWS_AS(dvn.embed_task({}), std::invalid_argument);
  DvnModel no_meta(MetaMode::kNoMeta, space, fspace, rng);
  CHECK_THROWS_AS(no_meta.embed_task(batch), std::logic_error);
}

TEST_CASE("predict with a hand-set linear rho") {
  const auto space = SearchSpaceSpec::desk_scale();
  const auto fspace = small_features();
  Rng rng(33);
  DvnModel dvn(MetaMode::kNoMeta, space, fspace, rng);

  // Collapse rho to an affine map: zero both tanh hidden layers except for
  // a straight-through first coordinate carried by small weights in the
  // linear regime is fiddly; instead set all weights so the hidden layers
  // output tanh(0)=0 and drive the output purely by the final bias plus a
  // first-layer contribution checked against the closed form.
  Vec p(dvn.rho().param_count(), 0.0);
  // Layer shapes: u -> 50 -> 10 -> 1. Flat layout per layer: weights, bias.
  const std::size_t u = space.encoding_dim();
  const std::size_t l0_w = 50 * u, l0_b = 50;
  const std::size_t l1_w = 10 * 50, l1_b = 10;
  p[0] = 1e-6;                       // h0[0] = tanh(1e-6 * u[0] * kUInputScale)
  p[l0_w + l0_b] = 1e-6;                         // h1[0] = tanh(1e-6 * h0[0])
  p[l0_w + l0_b + l1_w + l1_b] = 1.0;            // out = h1[0] + bias
  p[p.size() - 1] = 0.75;                        // final bias
  dvn.rho().set_params(p);

  Vec uvec(u, 0.0);
  uvec[0] = 2.0;
  const double got = dvn.predict(uvec, {});
  const double expected =
      std::tanh(1e-6 * std::tanh(1e-6 * 2.0 * kUInputScale)) + 0.75;
  CHECK(got == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("grad_wrt_u matches finite differences in every mode") {
  const auto space = SearchSpaceSpec::desk_scale();
  const auto fspace = small_features();
  Rng rng(34);

  for (MetaMode mode : {MetaMode::kNoMeta, MetaMode::kPrecomputedMeta,
                        MetaMode::kLearnedMeta, MetaMode::kBoth}) {
    DvnModel dvn(mode, space, fspace, rng);
    Vec z;
    if (dvn.uses_learned_meta())
      z = dvn.embed_task(random_batch(9, fspace.sample_width(), rng));
    Vec meta;
    if (dvn.uses_precomputed_meta()) {
      meta.resize(kMetaFeatureDim);
      for (double& v : meta) v = rng.normal();
    }
    const Vec u = random_u(space, rng);
    const Vec g = dvn.grad_wrt_u(u, z, meta);
    const Vec fd = testutil::finite_difference(
        [&](const Vec& uu) { return dvn.predict(uu, z, meta); }, u);
    CHECK(testutil::max_rel_error(g, fd, 1e-6) < 1e-6);
  }
}

TEST_CASE("dvn_loss_and_grad: value matches a direct MSE computation") {
  const auto space = SearchSpaceSpec::desk_scale();
  const auto fspace = small_features();
  Rng rng(35);
  DvnModel dvn(MetaMode::kBoth, space, fspace, rng);

  auto task_batch = random_batch(11, fspace.sample_width(), rng);
  Vec meta(kMetaFeatureDim);
  for (double& v : meta) v = rng.normal();
  std::vector<std::pair<Vec, double>> minibatch;
  for (int i = 0; i < 5; ++i)
    minibatch.emplace_back(random_u(space, rng), rng.normal());

  Vec grads;
  const double loss = dvn_loss_and_grad(dvn, minibatch, task_batch, meta, grads);

  const Vec z = dvn.embed_task(task_batch);
  double expected = 0.0;
  for (const auto& [u, t] : minibatch) {
    const double e = dvn.predict(u, z, meta) - t;
    expected += e * e / 5.0;
  }
  CHECK(loss == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("dvn_loss_and_grad matches finite differences over [phi|rho]") {
  const auto space = SearchSpaceSpec::desk_scale();
  const auto fspace = small_features();
  Rng rng(36);

  for (MetaMode mode : {MetaMode::kNoMeta, MetaMode::kLearnedMeta, MetaMode::kBoth}) {
    DvnModel dvn(mode, space, fspace, rng);
    auto task_batch = random_batch(7, fspace.sample_width(), rng);
    Vec meta;
    if (dvn.uses_precomputed_meta()) {
      meta.resize(kMetaFeatureDim);
      for (double& v : meta) v = rng.normal();
    }
    std::vector<std::pair<Vec, double>> minibatch;
    for (int i = 0; i < 4; ++i)
      minibatch.emplace_back(random_u(space, rng), rng.normal());

    Vec grads;
    dvn_loss_and_grad(dvn, minibatch, task_batch, meta, grads);
    REQUIRE(grads.size() == dvn.phi().param_count() + dvn.rho().param_count());

    DvnModel probe = dvn;
    const Vec fd = testutil::finite_difference(
        [&](const Vec& p) {
          set_joint_params(probe, p);
          Vec tmp;
          return dvn_loss_and_grad(probe, minibatch, task_batch, meta, tmp);
        },
        joint_params(dvn));
    CHECK(testutil::max_rel_error(grads, fd, 1e-5) < 1e-4);
  }
}

TEST_CASE("checkpoint save/load round-trips predictions") {
  const auto space = SearchSpaceSpec::desk_scale();
  const auto fspace = small_features();
  Rng rng(37);
  DvnModel dvn(MetaMode::kBoth, space, fspace, rng);

  const std::string path = "/tmp/archinf_dvntest_ckpt.json";
  dvn.save(path);
  const DvnModel loaded = DvnModel::load(path);
  CHECK(loaded.mode() == dvn.mode());
  CHECK(loaded.fingerprint() == dvn.fingerprint());
  CHECK(loaded.u_dim() == dvn.u_dim());

  auto batch = random_batch(5, fspace.sample_width(), rng);
  Vec meta(kMetaFeatureDim);
  for (double& v : meta) v = rng.normal();
  const Vec u = random_u(space, rng);
  CHECK(dvn.predict(u, dvn.embed_task(batch), meta) ==
        loaded.predict(u, loaded.embed_task(batch), meta));

  CHECK_THROWS_AS(DvnModel::load("/nonexistent/ckpt.json"), std::runtime_error);
  std::remove(path.c_str());
}

namespace {

// A small db + task set that the DVN can fit: performance depends on which
// gate logits are hot, a signal visible from u alone.
struct TrainFixture {
  SearchSpaceSpec space = SearchSpaceSpec::desk_scale();
  FeatureSpace fspace = small_features();
  std::vector<TaskDataset> tasks;
  ExperimentDb db{space};

  explicit TrainFixture(std::uint64_t seed, std::size_t records_per_task = 60) {
    Rng rng(seed);
    for (int t = 0; t < 2; ++t) {
      SyntheticTaskSpec spec;
      spec.task_id = "fit-" + std::to_string(t);
      spec.seed = seed + 10 + t;
      spec.num_samples = 50;
      spec.feature_dim = fspace.feature_dim;
  spec.informative_features = 2;
      spec.num_classes = 2;
      spec.informative_features = 2;
      tasks.push_back(generate_synthetic_task(spec));
      for (std::size_t i = 0; i < records_per_task; ++i) {
        ExperimentRecord r;
        r.task_id = tasks.back().task_id;
        const auto enc = random_one_hot_encoding(space, rng);
        r.u = flatten(enc);
        double v = 0.2;
        for (std::size_t j = 0; j < space.num_layers; ++j)
          if (layer_gate(enc, j) > 0.5) v += 0.2;
        r.v = std::min(1.0, v + 0.01 * rng.normal());
        r.v = std::max(0.0, r.v);
        r.seed = i;
        r.ts = static_cast<std::int64_t>(db.size());
        db.append(r);
      }
    }
  }
};

}  // namespace

TEST_CASE("train_dvn reduces the loss on a learnable signal") {
  TrainFixture fix(40);
  Rng rng(41);
  DvnModel dvn(MetaMode::kLearnedMeta, fix.space, fix.fspace, rng);

  DvnTrainConfig cfg;
  cfg.max_steps = 1500;
  cfg.task_batch = 16;
  cfg.learning_rate = 1e-2;
  cfg.patience_window = 1500;  // no early stop for this check
  Rng train_rng(42);
  const auto log = train_dvn(dvn, fix.db, fix.tasks, fix.fspace, cfg, train_rng);
  REQUIRE(log.steps == 1500);

  auto avg = [&](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += log.loss_per_step[i];
    return s / static_cast<double>(hi - lo);
  };
  const double head = avg(0, 100);
  const double tail = avg(1400, 1500);
  CHECK(tail < 0.5 * head);
  CHECK(tail < 0.5);  // targets are unit-variance; fit well below baseline
}

TEST_CASE("train_dvn with lr=0 leaves the parameters unchanged") {
  TrainFixture fix(43, 20);
  Rng rng(44);
  DvnModel dvn(MetaMode::kNoMeta, fix.space, fix.fspace, rng);
  const Vec before = joint_params(dvn);

  DvnTrainConfig cfg;
  cfg.max_steps = 50;
  cfg.learning_rate = 0.0;
  cfg.patience_window = 1000;
  Rng train_rng(45);
  train_dvn(dvn, fix.db, fix.tasks, fix.fspace, cfg, train_rng);
  CHECK(joint_params(dvn) == before);
}

TEST_CASE("train_dvn is deterministic under fixed seeds") {
  TrainFixture fix(46, 20);
  DvnTrainConfig cfg;
  cfg.max_steps = 60;
  cfg.task_batch = 8;
  cfg.patience_window = 1000;

  Rng ma(47), mb(47);
  DvnModel a(MetaMode::kBoth, fix.space, fix.fspace, ma);
  DvnModel b(MetaMode::kBoth, fix.space, fix.fspace, mb);
  Rng ta(48), tb(48);
  const auto la = train_dvn(a, fix.db, fix.tasks, fix.fspace, cfg, ta);
  const auto lb = train_dvn(b, fix.db, fix.tasks, fix.fspace, cfg, tb);
  CHECK(la.loss_per_step == lb.loss_per_step);
  CHECK(joint_params(a) == joint_params(b));
}

TEST_CASE("train_dvn takes inner_iters steps per minibatch and honors max_steps") {
  TrainFixture fix(49, 20);
  Rng rng(50);
  DvnModel dvn(MetaMode::kNoMeta, fix.space, fix.fspace, rng);
  DvnTrainConfig cfg;
  cfg.max_steps = 7;  // not a multiple of inner_iters=2: budget still exact
  cfg.patience_window = 1000;
  Rng train_rng(51);
  const auto log = train_dvn(dvn, fix.db, fix.tasks, fix.fspace, cfg, train_rng);
  CHECK(log.steps == 7);
  CHECK(log.loss_per_step.size() == 7);
  CHECK_FALSE(log.early_stopped);
}

TEST_CASE("train_dvn skips degenerate tasks and throws when none remain") {
  const auto space = SearchSpaceSpec::desk_scale();
  const auto fspace = small_features();
  ExperimentDb db(space);
  SyntheticTaskSpec spec;
  spec.task_id = "flat";
  spec.seed = 52;
  spec.num_samples = 40;
  spec.feature_dim = fspace.feature_dim;
  spec.informative_features = 2;
  const std::vector<TaskDataset> tasks{generate_synthetic_task(spec)};
  Rng rec_rng(53);
  for (int i = 0; i < 4; ++i) {
    ExperimentRecord r;
    r.task_id = "flat";
    r.u = flatten(random_one_hot_encoding(space, rec_rng));
    r.v = 0.5;  // constant: zero spread
    r.ts = i;
    db.append(r);
  }
  Rng rng(54);
  DvnModel dvn(MetaMode::kNoMeta, space, fspace, rng);
  DvnTrainConfig cfg;
  cfg.max_steps = 5;
  Rng train_rng(55);
  CHECK_THROWS_AS(train_dvn(dvn, db, tasks, fspace, cfg, train_rng),
                  std::runtime_error);
}

TEST_CASE("early stopping triggers on a plateau") {
  // One task, full-pool minibatches, lr = 0: the loss is exactly constant, so
  // the second patience window must trigger the stop.
  const auto space = SearchSpaceSpec::desk_scale();
  const auto fspace = small_features();
  ExperimentDb db(space);
  SyntheticTaskSpec spec;
  spec.task_id = "plateau";
  spec.seed = 56;
  spec.num_samples = 40;
  spec.feature_dim = fspace.feature_dim;
  spec.informative_features = 2;
  const std::vector<TaskDataset> tasks{generate_synthetic_task(spec)};
  Rng rec_rng(57);
  for (int i = 0; i < 8; ++i) {
    ExperimentRecord r;
    r.task_id = "plateau";
    r.u = flatten(random_one_hot_encoding(space, rec_rng));
    r.v = 0.1 * static_cast<double>(i % 5);
    r.ts = i;
    db.append(r);
  }
  Rng rng(58);
  DvnModel dvn(MetaMode::kNoMeta, space, fspace, rng);
  DvnTrainConfig cfg;
  cfg.max_steps = 5000;
  cfg.learning_rate = 0.0;
  cfg.minibatch = 64;  // > pool size: every minibatch is the whole pool
  cfg.patience_window = 50;
  Rng train_rng(59);
  const auto log = train_dvn(dvn, db, tasks, fspace, cfg, train_rng);
  CHECK(log.early_stopped);
  CHECK(log.steps == 100);  // two windows: baseline then no improvement
}