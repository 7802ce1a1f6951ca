#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "archinf/db.hpp"
#include "archinf/encoding.hpp"
#include "archinf/nn.hpp"
#include "archinf/task.hpp"

namespace archinf {

enum class MetaMode { kNoMeta, kPrecomputedMeta, kLearnedMeta, kBoth };

const char* meta_mode_name(MetaMode m);
MetaMode meta_mode_from_name(const std::string& name);

inline constexpr std::size_t kEmbedDim = 50;

// Encodings are fed to rho scaled by 1/kHotLogit so one-hot logits map to
// +/-1; raw +/-8 inputs saturate the tanh tower under Glorot init. The factor
// is part of the model (grad_wrt_u applies the matching chain rule).
inline constexpr double kUInputScale = 1.0 / kHotLogit;

struct DvnTrainConfig {
  std::size_t inner_iters = 2;     // kInnerIters
  std::size_t outer_iters = 1;     // kOuterIters
  std::size_t minibatch = 32;      // triplets per SGD step
  std::size_t task_batch = 128;    // samples per learned-meta batch
  double learning_rate = 1e-4;
  double momentum = 0.5;
  std::size_t max_steps = 20000;
  // Early stop when the moving-average loss over `patience_window` steps
  // improves by less than `patience_tol`.
  std::size_t patience_window = 500;
  double patience_tol = 1e-5;
};

// The deep value network: a set-embedding tower phi applied samplewise and
// mean-aggregated into z, and a predictor tower rho mapping [u, z, meta] to a
// scalar normalized-performance estimate.
class DvnModel {
 public:
  DvnModel() = default;
  DvnModel(MetaMode mode, const SearchSpaceSpec& space,
           const FeatureSpace& features, Rng& rng);

  MetaMode mode() const { return mode_; }
  std::size_t u_dim() const { return u_dim_; }
  std::size_t meta_dim() const { return meta_dim_; }
  std::uint64_t fingerprint() const { return fingerprint_; }
  bool uses_learned_meta() const {
    return mode_ == MetaMode::kLearnedMeta || mode_ == MetaMode::kBoth;
  }
  bool uses_precomputed_meta() const {
    return mode_ == MetaMode::kPrecomputedMeta || mode_ == MetaMode::kBoth;
  }

  // Mean of phi over the batch rows. Permutation-invariant up to floating
  // reassociation.
  Vec embed_task(const std::vector<Vec>& task_batch) const;

  double predict(const Vec& u_flat, const Vec& z, const Vec& meta = {}) const;

  // d(predict)/du with z and meta held fixed.
  Vec grad_wrt_u(const Vec& u_flat, const Vec& z, const Vec& meta = {}) const;

  const Mlp& phi() const { return phi_; }
  const Mlp& rho() const { return rho_; }
  Mlp& phi() { return phi_; }
  Mlp& rho() { return rho_; }

  void save(const std::string& path) const;
  static DvnModel load(const std::string& path);

 private:
  friend struct DvnTrainer;
  Vec rho_input(const Vec& u_flat, const Vec& z, const Vec& meta) const;

  MetaMode mode_ = MetaMode::kNoMeta;
  std::size_t u_dim_ = 0;
  std::size_t meta_dim_ = 0;
  std::uint64_t fingerprint_ = 0;
  Mlp phi_;  // sample_width -> 50 -> 50
  Mlp rho_;  // (u [+ z] [+ meta]) -> 50 -> 10 -> 1
};

struct DvnTrainLog {
  std::vector<double> loss_per_step;
  std::size_t steps = 0;
  bool early_stopped = false;
};

// Offline training: repeat { sample task k; outer_iters x [triplet minibatch
// from k; inner_iters x (fresh task batch, one SGD-momentum step on the L2
// loss)] } until the step budget or the moving-average plateau is hit.
// Degenerate tasks (constant performances) are skipped with a warning.
DvnTrainLog train_dvn(DvnModel& dvn, const ExperimentDb& db,
                      const std::vector<TaskDataset>& tasks,
                      const FeatureSpace& fspace, const DvnTrainConfig& config,
                      Rng& rng);

// Mean squared error of one triplet minibatch plus parameter gradients in
// the flat [phi | rho] layout used by train_dvn. Gradients flow through rho
// and, via z, through phi.
double dvn_loss_and_grad(const DvnModel& dvn,
                         const std::vector<std::pair<Vec, double>>& minibatch,
                         const std::vector<Vec>& task_batch, const Vec& meta,
                         Vec& grad_flat);

}  // namespace archinf
