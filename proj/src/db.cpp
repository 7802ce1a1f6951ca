#include "archinf/db.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <stdexcept>

#include <json.hpp>

namespace archinf {

using nlohmann::json;

ExperimentDb::ExperimentDb(const SearchSpaceSpec& space) : space_(space) {
  space_.validate();
}

void ExperimentDb::append(ExperimentRecord record) {
  if (record.u.size() != space_.encoding_dim())
    throw std::invalid_argument("ExperimentDb::append: encoding dim mismatch");
  if (record.ok && (record.v < 0.0 || record.v > 1.0))
    throw std::invalid_argument("ExperimentDb::append: v outside [0,1]");
  records_.push_back(std::move(record));
}

std::vector<std::string> ExperimentDb::task_ids() const {
  std::vector<std::string> ids;
  for (const auto& r : records_)
    if (std::find(ids.begin(), ids.end(), r.task_id) == ids.end())
      ids.push_back(r.task_id);
  return ids;
}

std::vector<const ExperimentRecord*> ExperimentDb::task_records(
    const std::string& task_id) const {
  std::vector<const ExperimentRecord*> out;
  for (const auto& r : records_)
    if (r.ok && r.task_id == task_id) out.push_back(&r);
  return out;
}

TaskStats ExperimentDb::task_stats(const std::string& task_id) const {
  const auto recs = task_records(task_id);
  TaskStats s;
  s.task_id = task_id;
  s.count = recs.size();
  if (recs.empty()) return s;
  for (const auto* r : recs) s.mean += r->v;
  s.mean /= static_cast<double>(recs.size());
  double ss = 0.0;
  for (const auto* r : recs) ss += (r->v - s.mean) * (r->v - s.mean);
  s.stddev = std::sqrt(ss / static_cast<double>(recs.size()));
  return s;
}

std::vector<std::pair<Vec, double>> ExperimentDb::normalized_targets(
    const std::string& task_id) const {
  constexpr double kEps = 1e-9;
  const auto recs = task_records(task_id);
  if (recs.size() < 2)
    throw std::runtime_error("normalized_targets: task '" + task_id +
                             "' has fewer than 2 records");
  const TaskStats s = task_stats(task_id);
  if (s.stddev <= kEps)
    throw std::runtime_error("normalized_targets: task '" + task_id +
                             "' is degenerate (constant performances)");
  std::vector<std::pair<Vec, double>> out;
  out.reserve(recs.size());
  for (const auto* r : recs)
    out.emplace_back(r->u, (r->v - s.mean) / s.stddev);
  return out;
}

namespace {

json space_to_json(const SearchSpaceSpec& space) {
  json j;
  j["num_layers"] = space.num_layers;
  j["base_sizes"] = space.base_sizes;
  std::vector<std::string> acts;
  for (auto a : space.activations) acts.emplace_back(activation_name(a));
  j["activations"] = acts;
  j["num_preproc_modules"] = space.num_preproc_modules;
  return j;
}

SearchSpaceSpec space_from_json(const json& j) {
  SearchSpaceSpec space;
  space.num_layers = j.at("num_layers").get<std::size_t>();
  space.base_sizes = j.at("base_sizes").get<std::vector<std::size_t>>();
  space.activations.clear();
  for (const auto& name : j.at("activations"))
    space.activations.push_back(activation_from_name(name.get<std::string>()));
  space.num_preproc_modules = j.at("num_preproc_modules").get<std::size_t>();
  space.validate();
  return space;
}

}  // namespace

void ExperimentDb::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write db file: " + path);
  json header;
  header["format"] = "archinf-experiment-db";
  header["version"] = 1;
  header["fp"] = space_.fingerprint_hex();
  header["space"] = space_to_json(space_);
  out << header.dump() << '\n';
  const std::string fp = space_.fingerprint_hex();
  for (const auto& r : records_) {
    json line;
    line["task_id"] = r.task_id;
    line["u"] = r.u;
    line["v"] = r.v;
    line["seed"] = r.seed;
    line["ts"] = r.ts;
    line["ok"] = r.ok;
    line["fp"] = fp;
    out << line.dump() << '\n';
  }
}

ExperimentDb ExperimentDb::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open db file: " + path);
  std::string line;
  std::size_t line_no = 0;
  auto parse = [&](const std::string& text) {
    try {
      return json::parse(text);
    } catch (const json::parse_error& e) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": malformed db line: " + e.what());
    }
  };
  if (!std::getline(in, line))
    throw std::runtime_error(path + ": empty db file, missing header");
  ++line_no;
  const json header = parse(line);
  if (header.value("format", "") != "archinf-experiment-db" ||
      header.value("version", 0) != 1)
    throw std::runtime_error(path + ": not a v1 experiment db");
  ExperimentDb db(space_from_json(header.at("space")));
  const std::string fp = db.space_.fingerprint_hex();
  if (header.at("fp").get<std::string>() != fp)
    throw std::runtime_error(path + ": header fingerprint does not match space");
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const json j = parse(line);
    if (j.at("fp").get<std::string>() != fp)
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": record fingerprint mismatch");
    ExperimentRecord r;
    r.task_id = j.at("task_id").get<std::string>();
    r.u = j.at("u").get<Vec>();
    r.v = j.at("v").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.ts = j.at("ts").get<std::int64_t>();
    r.ok = j.at("ok").get<bool>();
    db.append(std::move(r));
  }
  return db;
}

std::size_t populate(ExperimentDb& db, const std::vector<TaskDataset>& tasks,
                     std::size_t m_per_task, const FeatureSpace& fspace,
                     const ChildTrainConfig& config, Rng& rng,
                     bool log_progress) {
  if (m_per_task < 2)
    throw std::invalid_argument("populate: m_per_task >= 2 required");
  std::size_t added = 0;
  for (const auto& task : tasks) {
    for (std::size_t i = 0; i < m_per_task; ++i) {
      const ArchitectureEncoding enc = random_one_hot_encoding(db.space(), rng);
      const std::uint64_t child_seed = rng.next_u64();
      ExperimentRecord rec;
      rec.task_id = task.task_id;
      rec.u = flatten(enc);
      rec.seed = child_seed;
      rec.ts = static_cast<std::int64_t>(db.size());
      try {
        Rng child_rng(child_seed);
        rec.v = train_and_score(enc, db.space(), fspace, task, config, child_rng);
        rec.ok = true;
      } catch (const std::exception& e) {
        rec.v = 0.0;
        rec.ok = false;
        std::cerr << "populate: training failed for task " << task.task_id
                  << ": " << e.what() << '\n';
      }
      db.append(std::move(rec));
      ++added;
      if (log_progress && added % 10 == 0)
        std::cerr << "populate: " << added << " records\n";
    }
  }
  return added;
}

}  // namespace archinf
