#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace lab {

/// Parsed experiment configuration.  The file format is line-oriented:
/// `[experiment]` and `[params]` section headers, `key = value` entries,
/// full-line comments starting with '#' or ';', and blank lines.  The
/// experiment section takes `id`, `reps`, `size_grid` (one or more sample
/// sizes, whitespace- or comma-separated), and optional `master_seed`
/// (default 1).  Every params entry is numeric; multi-token values become
/// vector parameters.
struct ExperimentConfig {
  std::string experiment_id;
  std::uint64_t master_seed = 1;
  std::size_t reps = 0;
  std::vector<std::size_t> size_grid;
  std::map<std::string, double> scalar_params;
  std::map<std::string, std::vector<double>> vector_params;

  bool has_param(const std::string& name) const;

  /// Scalar parameter with a fallback; throws std::invalid_argument when
  /// the name is bound to a vector.
  double param_or(const std::string& name, double fallback) const;

  /// Vector parameter with a fallback (scalars read as length-1 vectors).
  std::vector<double> vector_or(const std::string& name,
                                std::vector<double> fallback) const;

  /// Throws std::invalid_argument unless id, reps, and size_grid are set
  /// and every grid entry is positive.
  void validate() const;
};

/// Parses configuration text; `origin` names the source in error messages
/// ("origin:line: message").
ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin);

/// Reads and parses a configuration file.
ExperimentConfig parse_config_file(const std::string& path);

/// Master-seed override from the LAB_SEED environment variable; empty when
/// the variable is unset.  Throws std::invalid_argument when the value is
/// not a plain unsigned 64-bit integer.
std::optional<std::uint64_t> seed_override_from_env();

}  // namespace lab
