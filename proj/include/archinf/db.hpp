#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "archinf/child.hpp"
#include "archinf/encoding.hpp"
#include "archinf/task.hpp"

namespace archinf {

struct ExperimentRecord {
  std::string task_id;
  Vec u;                 // flattened encoding
  double v = 0.0;        // measured validation accuracy
  std::uint64_t seed = 0;
  std::int64_t ts = 0;   // logical timestamp (append order)
  bool ok = true;        // false when child training failed
};

struct TaskStats {
  std::string task_id;
  double mean = 0.0;
  double stddev = 0.0;   // population std (denominator n)
  std::size_t count = 0;
};

// Append-only store of (task, encoding, performance) triplets. Persisted as
// newline-delimited JSON with a header line carrying the format version and
// the search-space fingerprint; loads reject files from a different space.
class ExperimentDb {
 public:
  explicit ExperimentDb(const SearchSpaceSpec& space);

  void append(ExperimentRecord record);
  const std::vector<ExperimentRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  const SearchSpaceSpec& space() const { return space_; }

  std::vector<std::string> task_ids() const;
  // Successful records for one task.
  std::vector<const ExperimentRecord*> task_records(const std::string& task_id) const;
  TaskStats task_stats(const std::string& task_id) const;

  // (u, (v - mean)/std) pairs for DVN training. Throws std::runtime_error if
  // the task has < 2 usable records or near-zero performance spread.
  std::vector<std::pair<Vec, double>> normalized_targets(
      const std::string& task_id) const;

  void save(const std::string& path) const;
  static ExperimentDb load(const std::string& path);

 private:
  SearchSpaceSpec space_;
  std::vector<ExperimentRecord> records_;
};

// Trains m random one-hot architectures per task and appends the results.
// Training failures are recorded with ok=false rather than aborting.
std::size_t populate(ExperimentDb& db, const std::vector<TaskDataset>& tasks,
                     std::size_t m_per_task, const FeatureSpace& fspace,
                     const ChildTrainConfig& config, Rng& rng,
                     bool log_progress = false);

}  // namespace archinf
