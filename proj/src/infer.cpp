#include "archinf/infer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace archinf {

namespace {

bool all_finite(const Vec& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double inf_norm(const Vec& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

RestartTrajectory gradient_ascent(const DvnModel& dvn, const Vec& z,
                                  const Vec& meta, const Vec& u0,
                                  const InferenceConfig& config) {
  RestartTrajectory traj;
  traj.initial_u = u0;
  traj.initial_value = dvn.predict(u0, z, meta);
  Vec u = u0;
  traj.termination = "max_iters";
  for (std::size_t t = 0; t < config.max_iters; ++t) {
    const Vec grad = dvn.grad_wrt_u(u, z, meta);
    ++traj.iterations;
    if (!all_finite(grad)) {
      traj.termination = "non_finite";
      traj.ok = false;
      break;
    }
    if (inf_norm(grad) < config.grad_tolerance) {
      traj.termination = "converged";
      break;
    }
    for (std::size_t i = 0; i < u.size(); ++i)
      u[i] += config.step_size * grad[i];
    if (!all_finite(u)) {
      traj.termination = "non_finite";
      traj.ok = false;
      break;
    }
  }
  traj.final_u = std::move(u);
  if (traj.ok) traj.final_value = dvn.predict(traj.final_u, z, meta);
  return traj;
}

InferenceResult infer_architecture(const DvnModel& dvn, const TaskDataset& task,
                                   const SearchSpaceSpec& space,
                                   const FeatureSpace& fspace,
                                   const InferenceConfig& config, Rng& rng) {
  if (config.num_starting_points < 1)
    throw std::invalid_argument("infer: num_starting_points >= 1 required");
  if (dvn.fingerprint() != space.fingerprint())
    throw std::invalid_argument("infer: dvn was trained on a different space");

  // z is computed once, from the full training split.
  Vec z, meta;
  if (dvn.uses_learned_meta()) {
    const auto batch = sample_batch(task, Split::kTrain, task.train_idx.size(),
                                    fspace, rng);
    z = dvn.embed_task(batch);
  }
  if (dvn.uses_precomputed_meta()) meta = compute_meta_features(task);

  InferenceResult result;
  for (std::size_t s = 0; s < config.num_starting_points; ++s) {
    Vec u0;
    if (config.init == InitStrategy::kRandomOneHotJitter) {
      u0 = flatten(random_one_hot_encoding(space, rng));
      for (double& x : u0) x += config.jitter_sigma * rng.normal();
    } else {
      u0.resize(space.encoding_dim());
      for (double& x : u0) x = rng.normal();
    }
    result.restarts.push_back(gradient_ascent(dvn, z, meta, u0, config));
  }

  bool found = false;
  for (std::size_t s = 0; s < result.restarts.size(); ++s) {
    const auto& traj = result.restarts[s];
    if (!traj.ok) continue;
    if (!found || traj.final_value > result.best_value) {
      found = true;
      result.best_value = traj.final_value;
      result.best_u = traj.final_u;
      result.best_restart = s;
    }
  }
  if (!found) throw std::runtime_error("infer: all restarts failed");
  return result;
}

}  // namespace archinf
