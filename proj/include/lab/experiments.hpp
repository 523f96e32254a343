#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lab/config.hpp"
#include "lab/rng.hpp"

namespace lab {

/// One estimator value from one replication, with the replication's
/// estimand.
struct Observation {
  std::string estimator;
  double value = 0.0;
  double truth = 0.0;
};

/// Raw per-replication record; `error` is empty on success.  A failed
/// replication contributes a single row with an empty estimator name.
struct RawRow {
  std::string estimator;
  std::size_t n = 0;
  std::size_t rep = 0;
  double value = 0.0;
  double truth = 0.0;
  std::string error;
};

/// Moment summary of one estimator at one sample size.  `variance` is the
/// population variance of the per-replication errors (value - truth), so
/// rmse^2 = bias^2 + variance exactly; mc_se = sqrt(variance / reps); the
/// 95% interval is mean +- 1.96 mc_se.
struct McSummary {
  std::string experiment_id;
  std::string estimator;
  std::size_t n = 0;
  std::size_t reps = 0;
  double mean = 0.0;
  double bias = 0.0;
  double variance = 0.0;
  double rmse = 0.0;
  double mc_se = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::uint64_t master_seed = 0;
};

/// Builds the summary from paired values and truths; requires equal
/// nonempty lengths.
McSummary summarize(const std::string& experiment_id,
                    const std::string& estimator, std::size_t n,
                    std::uint64_t master_seed,
                    const std::vector<double>& values,
                    const std::vector<double>& truths);

/// Registry metadata for one experiment.
struct ExperimentInfo {
  std::string id;
  std::string summary;
  std::map<std::string, std::string> parameters;  ///< name -> description.
};

/// All registered experiments, sorted by id.
std::vector<ExperimentInfo> list_experiments();

/// Metadata for one id; throws std::invalid_argument for unknown ids.
const ExperimentInfo& describe_experiment(const std::string& id);

/// Replication body: all estimator values for one (n, stream) pair.
using ReplicateFn =
    std::function<std::vector<Observation>(std::size_t n,
                                           rng::RngStream& stream)>;

/// Validates the configuration against the registry (unknown id or
/// malformed parameters throw std::invalid_argument) and returns the
/// replication body.  Any expensive n-dependent setup is precomputed here;
/// the returned callable is safe to invoke concurrently.
ReplicateFn make_replicator(const ExperimentConfig& cfg);

struct ExperimentResult {
  std::vector<McSummary> summaries;
  std::vector<RawRow> raw;
  std::size_t failed_replications = 0;
};

/// Runs every replication of every grid point.  Replication r at sample
/// size n consumes RngStream(master_seed, r).substream(n), so the output
/// is independent of the worker count and of the other grid points.
/// Per-replication exceptions are recorded in the raw table; more than 1%
/// failures raises std::runtime_error.
ExperimentResult run_experiment(const ExperimentConfig& cfg,
                                std::size_t workers = 1);

/// Summary CSV with the fixed column header
/// experiment_id,estimator,n,reps,mean,bias,variance,rmse,mc_se,ci_low,
/// ci_high,master_seed and 12-significant-digit numbers.
std::string summary_csv(const std::vector<McSummary>& summaries);

/// JSON array mirroring the CSV fields by name.
std::string summary_json(const std::vector<McSummary>& summaries);

/// Raw-table CSV (columns estimator,n,rep,value,truth,error).
std::string raw_csv(const std::vector<RawRow>& rows);

/// Writes text to a file; throws std::runtime_error with the path on
/// failure.
void write_text_file(const std::string& path, const std::string& text);

/// Writes gzip-compressed text with a fixed header (zero mtime), so equal
/// inputs give byte-identical archives.
void write_gzip_file(const std::string& path, const std::string& text);

/// Least-squares slope of log(rmse) on log(n) for one estimator's
/// summaries; requires at least three points, a single estimator name,
/// distinct sizes, and positive rmse everywhere.
struct SlopeFit {
  double slope = 0.0;
  double r2 = 0.0;
};

SlopeFit slope_fit(const std::vector<McSummary>& points);

}  // namespace lab
