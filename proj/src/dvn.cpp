#include "archinf/dvn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include <json.hpp>

namespace archinf {

using nlohmann::json;

const char* meta_mode_name(MetaMode m) {
  switch (m) {
    case MetaMode::kNoMeta: return "no_meta";
    case MetaMode::kPrecomputedMeta: return "precomputed_meta";
    case MetaMode::kLearnedMeta: return "learned_meta";
    case MetaMode::kBoth: return "both";
  }
  return "?";
}

MetaMode meta_mode_from_name(const std::string& name) {
  if (name == "no_meta") return MetaMode::kNoMeta;
  if (name == "precomputed_meta") return MetaMode::kPrecomputedMeta;
  if (name == "learned_meta") return MetaMode::kLearnedMeta;
  if (name == "both") return MetaMode::kBoth;
  throw std::invalid_argument("unknown meta mode: " + name);
}

DvnModel::DvnModel(MetaMode mode, const SearchSpaceSpec& space,
                   const FeatureSpace& features, Rng& rng)
    : mode_(mode),
      u_dim_(space.encoding_dim()),
      meta_dim_(0),
      fingerprint_(space.fingerprint()) {
  if (uses_learned_meta())
    phi_ = Mlp({features.sample_width(), kEmbedDim, kEmbedDim},
               {Activation::kTanh, Activation::kTanh}, rng);
  if (uses_precomputed_meta()) meta_dim_ = kMetaFeatureDim;
  std::size_t rho_in = u_dim_ + meta_dim_;
  if (uses_learned_meta()) rho_in += kEmbedDim;
  rho_ = Mlp({rho_in, 50, 10, 1},
             {Activation::kTanh, Activation::kTanh, Activation::kIdentity}, rng);
}

Vec DvnModel::embed_task(const std::vector<Vec>& task_batch) const {
  if (!uses_learned_meta())
    throw std::logic_error("embed_task: mode has no learned meta-features");
  if (task_batch.empty()) throw std::invalid_argument("embed_task: empty batch");
  Vec z(kEmbedDim, 0.0);
  for (const auto& x : task_batch) {
    const Vec h = phi_.forward(x);
    for (std::size_t i = 0; i < kEmbedDim; ++i) z[i] += h[i];
  }
  const double inv = 1.0 / static_cast<double>(task_batch.size());
  for (double& v : z) v *= inv;
  return z;
}

Vec DvnModel::rho_input(const Vec& u_flat, const Vec& z, const Vec& meta) const {
  if (u_flat.size() != u_dim_)
    throw std::invalid_argument("dvn: u dimension mismatch");
  if (uses_learned_meta() && z.size() != kEmbedDim)
    throw std::invalid_argument("dvn: z dimension mismatch");
  if (uses_precomputed_meta() && meta.size() != meta_dim_)
    throw std::invalid_argument("dvn: meta dimension mismatch");
  Vec in;
  in.reserve(rho_.in_dim());
  for (double v : u_flat) in.push_back(v * kUInputScale);
  if (uses_learned_meta()) in.insert(in.end(), z.begin(), z.end());
  if (uses_precomputed_meta()) in.insert(in.end(), meta.begin(), meta.end());
  return in;
}

double DvnModel::predict(const Vec& u_flat, const Vec& z, const Vec& meta) const {
  return rho_.forward(rho_input(u_flat, z, meta))[0];
}

Vec DvnModel::grad_wrt_u(const Vec& u_flat, const Vec& z, const Vec& meta) const {
  MlpCache cache;
  rho_.forward(rho_input(u_flat, z, meta), cache);
  MlpGrads grads;
  grads.flat.assign(rho_.param_count(), 0.0);
  const Vec in_grad = rho_.backward(cache, Vec{1.0}, grads);
  Vec g(in_grad.begin(), in_grad.begin() + u_dim_);
  for (double& v : g) v *= kUInputScale;
  return g;
}

namespace {

json mlp_to_json(const Mlp& mlp) {
  json layers = json::array();
  for (const auto& l : mlp.layers()) {
    json j;
    j["in"] = l.in_dim;
    j["out"] = l.out_dim;
    j["activation"] = activation_name(l.activation);
    j["weights"] = l.weights;
    j["bias"] = l.bias;
    layers.push_back(std::move(j));
  }
  return layers;
}

Mlp mlp_from_json(const json& layers) {
  Mlp mlp;
  for (const auto& j : layers) {
    DenseLayer l;
    l.in_dim = j.at("in").get<std::size_t>();
    l.out_dim = j.at("out").get<std::size_t>();
    l.activation = activation_from_name(j.at("activation").get<std::string>());
    l.weights = j.at("weights").get<Vec>();
    l.bias = j.at("bias").get<Vec>();
    if (l.weights.size() != l.in_dim * l.out_dim || l.bias.size() != l.out_dim)
      throw std::runtime_error("dvn checkpoint: inconsistent layer shapes");
    mlp.layers().push_back(std::move(l));
  }
  return mlp;
}

}  // namespace

void DvnModel::save(const std::string& path) const {
  json j;
  j["format"] = "archinf-dvn";
  j["version"] = 1;
  j["mode"] = meta_mode_name(mode_);
  j["fp"] = fingerprint_;
  j["u_dim"] = u_dim_;
  j["meta_dim"] = meta_dim_;
  j["phi"] = mlp_to_json(phi_);
  j["rho"] = mlp_to_json(rho_);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out << j.dump(2) << '\n';
}

DvnModel DvnModel::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  json j;
  in >> j;
  if (j.value("format", "") != "archinf-dvn" || j.value("version", 0) != 1)
    throw std::runtime_error(path + ": not a v1 dvn checkpoint");
  DvnModel dvn;
  dvn.mode_ = meta_mode_from_name(j.at("mode").get<std::string>());
  dvn.fingerprint_ = j.at("fp").get<std::uint64_t>();
  dvn.u_dim_ = j.at("u_dim").get<std::size_t>();
  dvn.meta_dim_ = j.at("meta_dim").get<std::size_t>();
  dvn.phi_ = mlp_from_json(j.at("phi"));
  dvn.rho_ = mlp_from_json(j.at("rho"));
  return dvn;
}

double dvn_loss_and_grad(const DvnModel& dvn,
                         const std::vector<std::pair<Vec, double>>& minibatch,
                         const std::vector<Vec>& task_batch, const Vec& meta,
                         Vec& grad_flat) {
  const std::size_t phi_n = dvn.phi().param_count();
  const std::size_t rho_n = dvn.rho().param_count();
  if (grad_flat.size() != phi_n + rho_n) grad_flat.assign(phi_n + rho_n, 0.0);
  else std::fill(grad_flat.begin(), grad_flat.end(), 0.0);

  // Forward phi over the task batch once; caches are reused for the backward
  // pass once dL/dz is known.
  Vec z;
  std::vector<MlpCache> phi_caches;
  if (dvn.uses_learned_meta()) {
    if (task_batch.empty())
      throw std::invalid_argument("dvn loss: empty task batch in learned-meta mode");
    phi_caches.resize(task_batch.size());
    z.assign(kEmbedDim, 0.0);
    for (std::size_t i = 0; i < task_batch.size(); ++i) {
      const Vec h = dvn.phi().forward(task_batch[i], phi_caches[i]);
      for (std::size_t k = 0; k < kEmbedDim; ++k) z[k] += h[k];
    }
    const double inv = 1.0 / static_cast<double>(task_batch.size());
    for (double& v : z) v *= inv;
  }

  const double inv_m = 1.0 / static_cast<double>(minibatch.size());
  double loss = 0.0;
  Vec dz(kEmbedDim, 0.0);
  MlpGrads rho_grads;
  rho_grads.flat.assign(rho_n, 0.0);
  MlpCache cache;
  for (const auto& [u, target] : minibatch) {
    Vec in;
    in.reserve(dvn.rho().in_dim());
    for (double v : u) in.push_back(v * kUInputScale);
    if (dvn.uses_learned_meta()) in.insert(in.end(), z.begin(), z.end());
    if (dvn.uses_precomputed_meta()) in.insert(in.end(), meta.begin(), meta.end());
    const double pred = dvn.rho().forward(in, cache)[0];
    const double err = pred - target;
    loss += err * err * inv_m;
    const Vec in_grad = dvn.rho().backward(cache, Vec{2.0 * err * inv_m}, rho_grads);
    if (dvn.uses_learned_meta())
      for (std::size_t k = 0; k < kEmbedDim; ++k)
        dz[k] += in_grad[dvn.u_dim() + k];
  }
  std::copy(rho_grads.flat.begin(), rho_grads.flat.end(),
            grad_flat.begin() + phi_n);

  if (dvn.uses_learned_meta()) {
    const double inv_b = 1.0 / static_cast<double>(task_batch.size());
    Vec dz_scaled(kEmbedDim);
    for (std::size_t k = 0; k < kEmbedDim; ++k) dz_scaled[k] = dz[k] * inv_b;
    MlpGrads phi_grads;
    phi_grads.flat.assign(phi_n, 0.0);
    for (auto& c : phi_caches) dvn.phi().backward(c, dz_scaled, phi_grads);
    std::copy(phi_grads.flat.begin(), phi_grads.flat.end(), grad_flat.begin());
  }
  return loss;
}

DvnTrainLog train_dvn(DvnModel& dvn, const ExperimentDb& db,
                      const std::vector<TaskDataset>& tasks,
                      const FeatureSpace& fspace, const DvnTrainConfig& config,
                      Rng& rng) {
  struct TaskEntry {
    const TaskDataset* task;
    std::vector<std::pair<Vec, double>> triplets;
    Vec meta;
  };
  std::vector<TaskEntry> usable;
  for (const auto& task : tasks) {
    try {
      TaskEntry e;
      e.task = &task;
      e.triplets = db.normalized_targets(task.task_id);
      if (dvn.uses_precomputed_meta()) e.meta = compute_meta_features(task);
      usable.push_back(std::move(e));
    } catch (const std::exception& ex) {
      std::cerr << "train_dvn: skipping task " << task.task_id << ": "
                << ex.what() << '\n';
    }
  }
  if (usable.empty())
    throw std::runtime_error("train_dvn: no non-degenerate training task");

  const std::size_t phi_n = dvn.phi().param_count();
  Vec params = dvn.phi().params();
  {
    const Vec rho_p = dvn.rho().params();
    params.insert(params.end(), rho_p.begin(), rho_p.end());
  }
  Optimizer opt = Optimizer::sgd_momentum(config.learning_rate, config.momentum);
  Vec grads(params.size());

  DvnTrainLog log;
  double prev_window_avg = 0.0;
  bool have_prev_window = false;
  double window_sum = 0.0;

  while (log.steps < config.max_steps) {
    TaskEntry& entry = usable[rng.index(usable.size())];
    for (std::size_t o = 0; o < config.outer_iters && log.steps < config.max_steps;
         ++o) {
      // Triplet minibatch from this task only (without replacement).
      const std::size_t m = std::min(config.minibatch, entry.triplets.size());
      std::vector<std::size_t> pick(entry.triplets.size());
      for (std::size_t i = 0; i < pick.size(); ++i) pick[i] = i;
      for (std::size_t i = 0; i < m; ++i)
        std::swap(pick[i], pick[i + rng.index(pick.size() - i)]);
      std::vector<std::pair<Vec, double>> minibatch;
      minibatch.reserve(m);
      for (std::size_t i = 0; i < m; ++i)
        minibatch.push_back(entry.triplets[pick[i]]);

      for (std::size_t j = 0;
           j < config.inner_iters && log.steps < config.max_steps; ++j) {
        std::vector<Vec> task_batch;
        if (dvn.uses_learned_meta()) {
          const std::size_t bs =
              std::min(config.task_batch, entry.task->train_idx.size());
          task_batch = sample_batch(*entry.task, Split::kTrain, bs, fspace, rng);
        }
        const double loss =
            dvn_loss_and_grad(dvn, minibatch, task_batch, entry.meta, grads);
        if (!std::isfinite(loss))
          throw std::runtime_error("train_dvn: non-finite loss at step " +
                                   std::to_string(log.steps));
        opt.step(params, grads);
        dvn.phi().set_params(std::span<const double>(params.data(), phi_n));
        dvn.rho().set_params(
            std::span<const double>(params.data() + phi_n, params.size() - phi_n));
        log.loss_per_step.push_back(loss);
        ++log.steps;
        window_sum += loss;
        if (log.steps % config.patience_window == 0) {
          const double avg = window_sum / static_cast<double>(config.patience_window);
          window_sum = 0.0;
          if (have_prev_window && prev_window_avg - avg < config.patience_tol) {
            log.early_stopped = true;
            return log;
          }
          prev_window_avg = avg;
          have_prev_window = true;
        }
      }
    }
  }
  return log;
}

}  // namespace archinf
