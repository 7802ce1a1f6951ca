#pragma once

#include <string>
#include <vector>

#include "archinf/dvn.hpp"
#include "archinf/encoding.hpp"
#include "archinf/task.hpp"

namespace archinf {

enum class InitStrategy { kRandomOneHotJitter, kGaussian };

struct InferenceConfig {
  std::size_t num_starting_points = 10;  // kNumStartingPoints
  std::size_t max_iters = 1000;          // kMaxIters
  double step_size = 0.05;               // eta
  double grad_tolerance = 1e-6;          // convergence: grad inf-norm below this
  InitStrategy init = InitStrategy::kRandomOneHotJitter;
  double jitter_sigma = 0.5;
};

struct RestartTrajectory {
  Vec initial_u;
  Vec final_u;
  double initial_value = 0.0;
  double final_value = 0.0;
  std::size_t iterations = 0;
  std::string termination;  // "converged", "max_iters", "non_finite"
  bool ok = true;
};

struct InferenceResult {
  Vec best_u;
  double best_value = 0.0;
  std::size_t best_restart = 0;
  std::vector<RestartTrajectory> restarts;
};

// One ascent: u <- u + eta * dv/du until the gradient inf-norm drops below
// tolerance or max_iters is reached. A non-finite iterate aborts the restart.
RestartTrajectory gradient_ascent(const DvnModel& dvn, const Vec& z,
                                  const Vec& meta, const Vec& u0,
                                  const InferenceConfig& config);

// Full online phase for a new task: embed the task once from its train split
// (and/or compute precomputed meta-features), run num_starting_points
// independent ascents, return the argmax over surviving restarts (first-index
// tie-break). Trains no child model.
InferenceResult infer_architecture(const DvnModel& dvn, const TaskDataset& task,
                                   const SearchSpaceSpec& space,
                                   const FeatureSpace& fspace,
                                   const InferenceConfig& config, Rng& rng);

}  // namespace archinf
