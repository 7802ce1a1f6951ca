// archinf: task-aware architecture inference pipeline.
//
// Every command is a pure function of (config JSON, input artifacts, seed):
// reruns with the same inputs produce byte-identical outputs. All report
// files are written via temp-file + atomic rename; logs go to stderr only.

#include <algorithm>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "archinf/child.hpp"
#include "archinf/db.hpp"
#include "archinf/dvn.hpp"
#include "archinf/encoding.hpp"
#include "archinf/eval.hpp"
#include "archinf/infer.hpp"
#include "archinf/task.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace archinf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitMissingInput = 2;
constexpr int kExitUsage = 64;
constexpr int kExitInternal = 70;

// Thrown for missing/invalid inputs -> exit 2.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void log(const std::string& msg) { std::cerr << "archinf: " << msg << '\n'; }

// ---------------------------------------------------------------------------
// Atomic writes

void atomic_write(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw std::runtime_error("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

// Fixed numeric formatting for CSV so reruns are byte-identical.
std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

// ---------------------------------------------------------------------------
// Config

struct RunConfig {
  json raw;
  fs::path out_dir = "out";
  std::uint64_t seed = 1;
  SearchSpaceSpec space;
  FeatureSpace features;
};

json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

// --set key.path=value; value parsed as JSON when possible, else as a string.
void apply_override(json& cfg, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0)
    throw InputError("--set expects key.path=value, got: " + kv);
  const std::string key = kv.substr(0, eq);
  const std::string val = kv.substr(eq + 1);
  json parsed;
  try {
    parsed = json::parse(val);
  } catch (const json::exception&) {
    parsed = val;
  }
  json* node = &cfg;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty()) throw InputError("--set: empty key segment in " + key);
    if (dot == std::string::npos) {
      (*node)[part] = parsed;
      return;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

Activation activation_from_config(const std::string& name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "identity") return Activation::kIdentity;
  throw InputError("unknown activation in config: " + name);
}

RunConfig parse_config(const json& j) {
  RunConfig cfg;
  cfg.raw = j;
  try {
    if (!j.contains("seed"))
      throw InputError("config: 'seed' is required (no wall-clock seeding)");
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.out_dir = j.value("out_dir", std::string("out"));
    if (j.contains("space")) {
      const json& s = j.at("space");
      cfg.space.num_layers = s.value("num_layers", cfg.space.num_layers);
      if (s.contains("base_sizes"))
        cfg.space.base_sizes = s.at("base_sizes").get<std::vector<std::size_t>>();
      if (s.contains("activations")) {
        cfg.space.activations.clear();
        for (const auto& a : s.at("activations"))
          cfg.space.activations.push_back(
              activation_from_config(a.get<std::string>()));
      }
      cfg.space.num_preproc_modules =
          s.value("num_preproc_modules", cfg.space.num_preproc_modules);
    }
    cfg.space.validate();
    if (j.contains("features")) {
      const json& f = j.at("features");
      cfg.features.feature_dim = f.value("feature_dim", cfg.features.feature_dim);
      cfg.features.class_cap = f.value("class_cap", cfg.features.class_cap);
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  return cfg;
}

ChildTrainConfig child_config(const RunConfig& cfg) {
  ChildTrainConfig c;
  const json j = cfg.raw.value("child", json::object());
  const std::string opt = j.value("optimizer", std::string("adam"));
  const double lr = j.value("learning_rate", 1e-4);
  if (opt == "adam")
    c.optimizer = Optimizer::adam(lr);
  else if (opt == "sgd_momentum")
    c.optimizer = Optimizer::sgd_momentum(lr, j.value("momentum", 0.9));
  else
    throw InputError("config: unknown child optimizer: " + opt);
  c.epochs = j.value("epochs", std::size_t{20});
  c.batch_size = j.value("batch_size", std::size_t{32});
  return c;
}

DvnTrainConfig dvn_config(const RunConfig& cfg) {
  DvnTrainConfig c;
  const json j = cfg.raw.value("dvn", json::object());
  c.inner_iters = j.value("inner_iters", c.inner_iters);
  c.outer_iters = j.value("outer_iters", c.outer_iters);
  c.minibatch = j.value("minibatch", c.minibatch);
  c.task_batch = j.value("task_batch", c.task_batch);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.momentum = j.value("momentum", c.momentum);
  c.max_steps = j.value("max_steps", c.max_steps);
  c.patience_window = j.value("patience_window", c.patience_window);
  c.patience_tol = j.value("patience_tol", c.patience_tol);
  return c;
}

MetaMode dvn_mode(const RunConfig& cfg) {
  return meta_mode_from_name(
      cfg.raw.value("dvn", json::object()).value("mode", std::string("learned_meta")));
}

InferenceConfig inference_config(const RunConfig& cfg) {
  InferenceConfig c;
  const json j = cfg.raw.value("inference", json::object());
  c.num_starting_points = j.value("num_starting_points", c.num_starting_points);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.step_size = j.value("step_size", c.step_size);
  c.grad_tolerance = j.value("grad_tolerance", c.grad_tolerance);
  c.jitter_sigma = j.value("jitter_sigma", c.jitter_sigma);
  return c;
}

fs::path db_path(const RunConfig& cfg) {
  return fs::path(cfg.raw.value("db", json::object())
                      .value("path", (cfg.out_dir / "experiments.ndjson").string()));
}

fs::path checkpoint_path(const RunConfig& cfg) {
  return fs::path(cfg.raw.value("dvn", json::object())
                      .value("checkpoint", (cfg.out_dir / "dvn.json").string()));
}

fs::path manifest_path(const RunConfig& cfg) {
  return fs::path(cfg.raw.value("tasks", json::object())
                      .value("manifest", (cfg.out_dir / "tasks" / "manifest.json").string()));
}

// ---------------------------------------------------------------------------
// Task plumbing

std::vector<SyntheticTaskSpec> synthetic_specs(const RunConfig& cfg) {
  const json tasks = cfg.raw.value("tasks", json::object());
  if (!tasks.contains("synthetic") || tasks.at("synthetic").empty())
    throw InputError("config: tasks.synthetic is empty; nothing to generate");
  std::vector<SyntheticTaskSpec> specs;
  for (const json& t : tasks.at("synthetic")) {
    SyntheticTaskSpec s;
    s.task_id = t.at("task_id").get<std::string>();
    s.seed = t.value("seed", cfg.seed);
    s.num_samples = t.value("num_samples", s.num_samples);
    s.num_classes = t.value("num_classes", s.num_classes);
    s.feature_dim = t.value("feature_dim", cfg.features.feature_dim);
    s.margin = t.value("margin", s.margin);
    s.label_noise = t.value("label_noise", s.label_noise);
    s.informative_features = t.value("informative_features", s.informative_features);
    s.rotate = t.value("rotate", s.rotate);
    if (s.feature_dim > cfg.features.feature_dim)
      throw InputError("config: task " + s.task_id +
                       " feature_dim exceeds the shared feature space");
    if (s.num_classes > cfg.features.class_cap)
      throw InputError("config: task " + s.task_id + " exceeds class_cap");
    s.validate();
    specs.push_back(std::move(s));
  }
  return specs;
}

std::vector<TaskDataset> load_suite(const RunConfig& cfg) {
  const fs::path manifest = manifest_path(cfg);
  if (!fs::exists(manifest))
    throw InputError("task manifest not found: " + manifest.string() +
                     " (run gen-tasks first)");
  const json m = load_json_file(manifest);
  std::vector<TaskDataset> tasks;
  for (const json& e : m.at("tasks")) {
    const fs::path csv = manifest.parent_path() / e.at("file").get<std::string>();
    if (!fs::exists(csv)) throw InputError("task file not found: " + csv.string());
    tasks.push_back(load_csv_task(csv.string(), e.at("task_id").get<std::string>(),
                                  /*has_header=*/true,
                                  e.at("split_seed").get<std::uint64_t>()));
  }
  if (tasks.empty()) throw InputError(manifest.string() + ": no tasks listed");
  return tasks;
}

TaskDataset find_task(std::vector<TaskDataset>& tasks, const std::string& id) {
  for (auto& t : tasks)
    if (t.task_id == id) return std::move(t);
  throw InputError("task not found in suite: " + id);
}

// ---------------------------------------------------------------------------
// Report helpers

json metric_json(const MetricSummary& m) {
  return json{{"mean", m.mean}, {"stddev", m.stddev}, {"raw", m.raw}};
}

json describe_architecture(const Vec& u, const SearchSpaceSpec& space) {
  const DiscreteArchitecture arch = discretize(unflatten(u, space));
  json layers = json::array();
  for (std::size_t j = 0; j < space.num_layers; ++j) {
    json l;
    l["present"] = static_cast<bool>(arch.layer_on[j]);
    const std::size_t idx = arch.base_choice[j];
    l["size"] = space.base_sizes[idx / space.activations.size()];
    l["activation"] = activation_name(space.activations[idx % space.activations.size()]);
    layers.push_back(std::move(l));
  }
  return json{{"preproc_module", arch.module_choice},
              {"layers", std::move(layers)},
              {"summary", arch.describe(space)}};
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_gen_tasks(const RunConfig& cfg) {
  const auto specs = synthetic_specs(cfg);
  const fs::path manifest = manifest_path(cfg);
  const fs::path dir = manifest.parent_path();
  json entries = json::array();
  for (const auto& s : specs) {
    const TaskDataset task = generate_synthetic_task(s);
    const std::string file = s.task_id + ".csv";
    // write_csv_task is deterministic; route it through a temp + rename too.
    fs::create_directories(dir);
    const fs::path tmp = dir / (file + ".tmp");
    write_csv_task(task, tmp.string());
    fs::rename(tmp, dir / file);
    entries.push_back(json{{"task_id", s.task_id},
                           {"file", file},
                           {"split_seed", s.seed},
                           {"num_samples", s.num_samples},
                           {"num_classes", s.num_classes}});
    log("wrote task " + s.task_id + " (" + std::to_string(task.size()) + " rows)");
  }
  atomic_write(manifest, dump_json(json{{"format", "archinf-task-suite"},
                                        {"version", 1},
                                        {"tasks", std::move(entries)}}));
  log("wrote manifest " + manifest.string());
  return kExitOk;
}

int cmd_populate(const RunConfig& cfg) {
  const auto tasks = load_suite(cfg);
  const std::size_t per_task =
      cfg.raw.value("db", json::object()).value("per_task", std::size_t{200});
  ExperimentDb db(cfg.space);
  Rng rng(cfg.seed);
  const std::size_t added =
      populate(db, tasks, per_task, cfg.features, child_config(cfg), rng,
               /*log_progress=*/true);
  const fs::path path = db_path(cfg);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  db.save(tmp.string());
  fs::rename(tmp, path);
  log("populated " + std::to_string(added) + " records -> " + path.string());
  return kExitOk;
}

int cmd_train_dvn(const RunConfig& cfg) {
  const fs::path dbp = db_path(cfg);
  if (!fs::exists(dbp))
    throw InputError("experiment db not found: " + dbp.string() +
                     " (run populate first)");
  const ExperimentDb db = ExperimentDb::load(dbp.string());
  if (db.space().fingerprint() != cfg.space.fingerprint())
    throw InputError("db " + dbp.string() + " was built for a different space");
  const auto tasks = load_suite(cfg);

  Rng rng(cfg.seed);
  DvnModel dvn(dvn_mode(cfg), cfg.space, cfg.features, rng);
  const DvnTrainLog tlog =
      train_dvn(dvn, db, tasks, cfg.features, dvn_config(cfg), rng);
  log("trained dvn for " + std::to_string(tlog.steps) + " steps" +
      (tlog.early_stopped ? " (early stop)" : ""));

  const fs::path ckpt = checkpoint_path(cfg);
  if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
  const fs::path tmp = ckpt.string() + ".tmp";
  dvn.save(tmp.string());
  fs::rename(tmp, ckpt);

  json report;
  report["mode"] = meta_mode_name(dvn.mode());
  report["steps"] = tlog.steps;
  report["early_stopped"] = tlog.early_stopped;
  report["final_loss"] =
      tlog.loss_per_step.empty() ? 0.0 : tlog.loss_per_step.back();
  atomic_write(cfg.out_dir / "train_dvn.json", dump_json(report));
  log("wrote checkpoint " + ckpt.string());
  return kExitOk;
}

DvnModel load_checkpoint(const RunConfig& cfg) {
  const fs::path ckpt = checkpoint_path(cfg);
  if (!fs::exists(ckpt))
    throw InputError("checkpoint not found: " + ckpt.string() +
                     " (run train-dvn first)");
  DvnModel dvn = DvnModel::load(ckpt.string());
  if (dvn.fingerprint() != cfg.space.fingerprint())
    throw InputError("checkpoint " + ckpt.string() +
                     " was trained on a different space");
  return dvn;
}

// predict: score the recorded encodings of one task with the trained DVN.
int cmd_predict(const RunConfig& cfg) {
  const DvnModel dvn = load_checkpoint(cfg);
  const fs::path dbp = db_path(cfg);
  if (!fs::exists(dbp)) throw InputError("experiment db not found: " + dbp.string());
  const ExperimentDb db = ExperimentDb::load(dbp.string());

  auto tasks = load_suite(cfg);
  const std::string task_id = cfg.raw.value("predict", json::object())
                                  .value("task", tasks.front().task_id);
  const TaskDataset task = find_task(tasks, task_id);
  const auto records = db.task_records(task_id);
  if (records.size() < 2)
    throw InputError("predict: task " + task_id + " has fewer than 2 records");

  Rng rng(cfg.seed);
  Vec z, meta;
  if (dvn.uses_learned_meta()) {
    const auto batch =
        sample_batch(task, Split::kTrain, task.train_idx.size(), cfg.features, rng);
    z = dvn.embed_task(batch);
  }
  if (dvn.uses_precomputed_meta()) meta = compute_meta_features(task);

  std::ostringstream csv;
  csv << "task_id,ts,v_actual,v_predicted\n";
  Vec pred, actual;
  for (const auto* r : records) {
    const double p = dvn.predict(r->u, z, meta);
    pred.push_back(p);
    actual.push_back(r->v);
    csv << task_id << ',' << r->ts << ',' << fmt(r->v) << ',' << fmt(p) << '\n';
  }
  atomic_write(cfg.out_dir / ("predict_" + task_id + ".csv"), csv.str());

  json report;
  report["task_id"] = task_id;
  report["records"] = records.size();
  report["spearman"] = spearman(pred, actual);
  atomic_write(cfg.out_dir / ("predict_" + task_id + ".json"), dump_json(report));
  log("predict " + task_id + ": spearman " + fmt(spearman(pred, actual)));
  return kExitOk;
}

int cmd_infer(const RunConfig& cfg) {
  const DvnModel dvn = load_checkpoint(cfg);
  auto tasks = load_suite(cfg);
  const std::string task_id = cfg.raw.value("inference", json::object())
                                  .value("task", tasks.front().task_id);
  const TaskDataset task = find_task(tasks, task_id);

  Rng rng(cfg.seed);
  const InferenceResult result = infer_architecture(
      dvn, task, cfg.space, cfg.features, inference_config(cfg), rng);

  json report;
  report["task_id"] = task_id;
  report["best_value"] = result.best_value;
  report["best_restart"] = result.best_restart;
  report["best_u"] = result.best_u;
  report["architecture"] = describe_architecture(result.best_u, cfg.space);
  json restarts = json::array();
  for (const auto& t : result.restarts)
    restarts.push_back(json{{"initial_value", t.initial_value},
                            {"final_value", t.final_value},
                            {"iterations", t.iterations},
                            {"termination", t.termination},
                            {"ok", t.ok}});
  report["restarts"] = std::move(restarts);
  atomic_write(cfg.out_dir / ("infer_" + task_id + ".json"), dump_json(report));
  log("inferred architecture for " + task_id + ": v_hat " +
      fmt(result.best_value));
  log(report["architecture"]["summary"].get<std::string>());
  return kExitOk;
}

int cmd_evaluate_loo(const RunConfig& cfg) {
  const fs::path dbp = db_path(cfg);
  if (!fs::exists(dbp)) throw InputError("experiment db not found: " + dbp.string());
  const ExperimentDb db = ExperimentDb::load(dbp.string());
  const auto tasks = load_suite(cfg);

  const json ev = cfg.raw.value("evaluate", json::object());
  std::vector<MetaMode> modes;
  for (const auto& m : ev.value("modes", json::array({"no_meta", "learned_meta"})))
    modes.push_back(meta_mode_from_name(m.get<std::string>()));
  LeaveOneOutConfig loo;
  loo.repeats = ev.value("repeats", std::size_t{3});
  loo.dvn = dvn_config(cfg);

  std::ostringstream csv;
  csv << "mode,task_id,repeat,spearman,r2\n";
  json summary = json::array();
  for (MetaMode mode : modes) {
    log(std::string("leave-one-out, mode ") + meta_mode_name(mode));
    Rng rng(cfg.seed);  // same stream per mode: columns differ only by mode
    const EvaluationReport report =
        leave_one_out(tasks, db, cfg.features, mode, loo, rng);
    json rows = json::array();
    for (const auto& row : report.rows) {
      for (std::size_t r = 0; r < row.spearman_stat.raw.size(); ++r)
        csv << meta_mode_name(mode) << ',' << row.task_id << ',' << r << ','
            << fmt(row.spearman_stat.raw[r]) << ',' << fmt(row.r2_stat.raw[r])
            << '\n';
      rows.push_back(json{{"task_id", row.task_id},
                          {"spearman", metric_json(row.spearman_stat)},
                          {"r2", metric_json(row.r2_stat)}});
    }
    summary.push_back(json{{"mode", meta_mode_name(mode)},
                           {"repeats", report.repeats},
                           {"tasks", std::move(rows)}});
  }
  atomic_write(cfg.out_dir / "evaluate_loo.csv", csv.str());
  atomic_write(cfg.out_dir / "evaluate_loo.json", dump_json(summary));
  log("wrote evaluate_loo reports");
  return kExitOk;
}

int cmd_study_tasks(const RunConfig& cfg) {
  const fs::path dbp = db_path(cfg);
  if (!fs::exists(dbp)) throw InputError("experiment db not found: " + dbp.string());
  const ExperimentDb db = ExperimentDb::load(dbp.string());
  const auto tasks = load_suite(cfg);

  const json st = cfg.raw.value("study_tasks", json::object());
  const std::string test_task = st.value("test_task", tasks.front().task_id);
  const std::size_t orderings = st.value("orderings", std::size_t{5});
  const std::size_t trainings = st.value("trainings", std::size_t{2});
  const MetaMode mode =
      meta_mode_from_name(st.value("mode", std::string("no_meta")));

  Rng rng(cfg.seed);
  const auto points = adding_tasks_study(tasks, test_task, db, cfg.features,
                                         mode, dvn_config(cfg), orderings,
                                         trainings, rng);
  std::ostringstream csv;
  csv << "num_tasks,mean_spearman,mean_r2\n";
  for (const auto& p : points)
    csv << p.num_tasks << ',' << fmt(p.mean_spearman) << ',' << fmt(p.mean_r2)
        << '\n';
  atomic_write(cfg.out_dir / "study_tasks.csv", csv.str());
  json report;
  report["test_task"] = test_task;
  report["orderings"] = orderings;
  report["trainings_per_ordering"] = trainings;
  json jp = json::array();
  for (const auto& p : points)
    jp.push_back(json{{"num_tasks", p.num_tasks},
                      {"mean_spearman", p.mean_spearman},
                      {"mean_r2", p.mean_r2}});
  report["points"] = std::move(jp);
  atomic_write(cfg.out_dir / "study_tasks.json", dump_json(report));
  log("wrote study_tasks reports");
  return kExitOk;
}

int cmd_study_embeddings(const RunConfig& cfg) {
  const DvnModel dvn = load_checkpoint(cfg);
  if (!dvn.uses_learned_meta())
    throw InputError("study-embeddings requires a learned-meta checkpoint");
  const auto tasks = load_suite(cfg);

  const json st = cfg.raw.value("study_embeddings", json::object());
  const std::size_t batches = st.value("batches_per_task", std::size_t{10});
  const std::size_t batch_size = st.value("batch_size", std::size_t{32});

  Rng rng(cfg.seed);
  const EmbeddingStabilityReport report = embedding_stability_study(
      dvn, tasks, cfg.features, batches, batch_size, rng);

  std::ostringstream csv;
  csv << "task_id,batch_index,pc1,pc2\n";
  for (const auto& p : report.points)
    csv << p.task_id << ',' << p.batch_index << ',' << fmt(p.pc1) << ','
        << fmt(p.pc2) << '\n';
  atomic_write(cfg.out_dir / "study_embeddings_pca.csv", csv.str());

  json summary;
  summary["mean_intra_distance"] = report.mean_intra_distance;
  summary["mean_inter_distance"] = report.mean_inter_distance;
  summary["batches_per_task"] = batches;
  summary["batch_size"] = batch_size;
  atomic_write(cfg.out_dir / "study_embeddings.json", dump_json(summary));
  log("intra " + fmt(report.mean_intra_distance) + " vs inter " +
      fmt(report.mean_inter_distance));
  return kExitOk;
}

int cmd_search_eval(const RunConfig& cfg) {
  const fs::path dbp = db_path(cfg);
  if (!fs::exists(dbp)) throw InputError("experiment db not found: " + dbp.string());
  const ExperimentDb db = ExperimentDb::load(dbp.string());
  const auto tasks = load_suite(cfg);

  const json se = cfg.raw.value("search_eval", json::object());
  const std::size_t baseline_samples =
      se.value("baseline_samples", std::size_t{10});
  const std::size_t repeats = se.value("repeats", std::size_t{3});
  const MetaMode mode =
      meta_mode_from_name(se.value("mode", std::string("learned_meta")));
  const std::string split_name = se.value("split", std::string("validation"));
  Split split;
  if (split_name == "validation") split = Split::kValidation;
  else if (split_name == "test") split = Split::kTest;
  else throw InputError("search_eval.split must be 'validation' or 'test'");

  Rng rng(cfg.seed);
  const auto rows = search_quality_eval(
      tasks, db, cfg.features, mode, dvn_config(cfg), inference_config(cfg),
      child_config(cfg), baseline_samples, repeats, rng, split);

  std::ostringstream csv;
  csv << "task_id,kind,index,accuracy\n";
  json summary = json::array();
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.proposed.raw.size(); ++i)
      csv << row.task_id << ",proposed," << i << ',' << fmt(row.proposed.raw[i])
          << '\n';
    for (std::size_t i = 0; i < row.baseline.raw.size(); ++i)
      csv << row.task_id << ",baseline," << i << ',' << fmt(row.baseline.raw[i])
          << '\n';
    summary.push_back(json{{"task_id", row.task_id},
                           {"proposed", metric_json(row.proposed)},
                           {"baseline", metric_json(row.baseline)},
                           {"baseline_median", row.baseline_median}});
  }
  atomic_write(cfg.out_dir / "search_eval.csv", csv.str());
  atomic_write(cfg.out_dir / "search_eval.json", dump_json(summary));
  log("wrote search_eval reports");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"task-aware architecture inference pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::int64_t seed_flag = -1;
  std::size_t jobs = 1;
  std::string out_flag;
  app.add_option("--config", config_path, "JSON config file")
      ->required()
      ->check(CLI::ExistingFile);
  app.add_option("--seed", seed_flag, "override config seed");
  app.add_option("--jobs", jobs, "parallelism bound (default 1, deterministic)");
  app.add_option("--out", out_flag, "override output directory");
  app.add_option("--set", overrides, "config override key.path=value")
      ->take_all();

  const std::map<std::string, int (*)(const RunConfig&)> commands = {
      {"gen-tasks", cmd_gen_tasks},         {"populate", cmd_populate},
      {"train-dvn", cmd_train_dvn},         {"predict", cmd_predict},
      {"infer", cmd_infer},                 {"evaluate-loo", cmd_evaluate_loo},
      {"study-tasks", cmd_study_tasks},     {"study-embeddings", cmd_study_embeddings},
      {"search-eval", cmd_search_eval}};
  for (const auto& [name, fn] : commands) {
    (void)fn;
    app.add_subcommand(name)->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // CLI11 prints its own message/usage; map all parse problems to 64.
    std::ostringstream dummy;
    app.exit(e, dummy, std::cerr);
    return e.get_name() == "CallForHelp" ? kExitOk : kExitUsage;
  }

  const std::string sub = app.get_subcommands().front()->get_name();
  try {
    json raw = load_json_file(config_path);
    for (const auto& kv : overrides) apply_override(raw, kv);
    if (seed_flag >= 0) raw["seed"] = static_cast<std::uint64_t>(seed_flag);
    if (!out_flag.empty()) raw["out_dir"] = out_flag;
    if (jobs < 1) throw InputError("--jobs must be >= 1");
    const RunConfig cfg = parse_config(raw);
    fs::create_directories(cfg.out_dir);
    return commands.at(sub)(cfg);
  } catch (const InputError& e) {
    log(std::string("error: ") + e.what());
    return kExitMissingInput;
  } catch (const std::invalid_argument& e) {
    // Library precondition failures are input problems, not numeric ones.
    log(std::string("error: ") + e.what());
    return kExitMissingInput;
  } catch (const std::exception& e) {
    log(std::string("internal error: ") + e.what());
    return kExitInternal;
  }
}