#include "lab/config.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lab {

namespace {

std::string trim(const std::string& s) {
  const std::size_t first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const std::size_t last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

[[noreturn]] void fail(const std::string& origin, std::size_t line,
                       const std::string& message) {
  throw std::invalid_argument(origin + ":" + std::to_string(line) + ": " +
                              message);
}

std::vector<std::string> tokens_of(const std::string& value) {
  std::string normalized = value;
  for (char& c : normalized) {
    if (c == ',') c = ' ';
  }
  std::istringstream in(normalized);
  std::vector<std::string> tokens;
  std::string token;
  while (in >> token) tokens.push_back(token);
  return tokens;
}

double parse_double(const std::string& token, const std::string& origin,
                    std::size_t line) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(token, &used);
  } catch (const std::exception&) {
    fail(origin, line, "expected a number, got '" + token + "'");
  }
  if (used != token.size()) {
    fail(origin, line, "trailing characters in number '" + token + "'");
  }
  return value;
}

std::uint64_t parse_u64(const std::string& token, const std::string& origin,
                        std::size_t line) {
  if (token.empty() || token[0] == '-' || token[0] == '+') {
    fail(origin, line,
         "expected an unsigned integer, got '" + token + "'");
  }
  std::size_t used = 0;
  unsigned long long value = 0;
  try {
    value = std::stoull(token, &used);
  } catch (const std::exception&) {
    fail(origin, line,
         "expected an unsigned integer, got '" + token + "'");
  }
  if (used != token.size()) {
    fail(origin, line, "trailing characters in integer '" + token + "'");
  }
  return static_cast<std::uint64_t>(value);
}

}  // namespace

bool ExperimentConfig::has_param(const std::string& name) const {
  return scalar_params.count(name) > 0 || vector_params.count(name) > 0;
}

double ExperimentConfig::param_or(const std::string& name,
                                  double fallback) const {
  const auto it = scalar_params.find(name);
  if (it != scalar_params.end()) return it->second;
  if (vector_params.count(name) > 0) {
    throw std::invalid_argument("parameter '" + name +
                                "' is a vector, expected a scalar");
  }
  return fallback;
}

std::vector<double> ExperimentConfig::vector_or(
    const std::string& name, std::vector<double> fallback) const {
  const auto vec = vector_params.find(name);
  if (vec != vector_params.end()) return vec->second;
  const auto scalar = scalar_params.find(name);
  if (scalar != scalar_params.end()) return {scalar->second};
  return fallback;
}

void ExperimentConfig::validate() const {
  if (experiment_id.empty()) {
    throw std::invalid_argument("config is missing the experiment id");
  }
  if (reps < 1) {
    throw std::invalid_argument("reps must be at least 1");
  }
  if (size_grid.empty()) {
    throw std::invalid_argument("size_grid must be nonempty");
  }
  for (std::size_t n : size_grid) {
    if (n == 0) {
      throw std::invalid_argument("size_grid entries must be positive");
    }
  }
}

ExperimentConfig parse_config_text(const std::string& text,
                                   const std::string& origin) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw_line;
  std::string section;
  std::size_t line_no = 0;
  bool saw_reps = false;
  bool saw_grid = false;

  while (std::getline(in, raw_line)) {
    ++line_no;
    const std::string line = trim(raw_line);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;

    if (line.front() == '[') {
      if (line.back() != ']') {
        fail(origin, line_no, "unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section != "experiment" && section != "params") {
        fail(origin, line_no, "unknown section [" + section + "]");
      }
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      fail(origin, line_no, "expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail(origin, line_no, "empty key");
    if (value.empty()) fail(origin, line_no, "empty value for '" + key + "'");
    if (section.empty()) {
      fail(origin, line_no, "entry before any section header");
    }

    if (section == "experiment") {
      if (key == "id") {
        if (!cfg.experiment_id.empty()) fail(origin, line_no, "duplicate id");
        cfg.experiment_id = value;
      } else if (key == "master_seed") {
        cfg.master_seed = parse_u64(value, origin, line_no);
      } else if (key == "reps") {
        if (saw_reps) fail(origin, line_no, "duplicate reps");
        cfg.reps = static_cast<std::size_t>(parse_u64(value, origin, line_no));
        saw_reps = true;
      } else if (key == "size_grid") {
        if (saw_grid) fail(origin, line_no, "duplicate size_grid");
        for (const std::string& token : tokens_of(value)) {
          cfg.size_grid.push_back(
              static_cast<std::size_t>(parse_u64(token, origin, line_no)));
        }
        saw_grid = true;
      } else {
        fail(origin, line_no, "unknown experiment key '" + key + "'");
      }
    } else {
      if (cfg.scalar_params.count(key) > 0 ||
          cfg.vector_params.count(key) > 0) {
        fail(origin, line_no, "duplicate parameter '" + key + "'");
      }
      const std::vector<std::string> tokens = tokens_of(value);
      if (tokens.size() == 1) {
        cfg.scalar_params[key] = parse_double(tokens[0], origin, line_no);
      } else {
        std::vector<double> values;
        for (const std::string& token : tokens) {
          values.push_back(parse_double(token, origin, line_no));
        }
        cfg.vector_params[key] = values;
      }
    }
  }

  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(origin + ": " + e.what());
  }
  return cfg;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::invalid_argument("cannot open config file '" + path + "'");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_config_text(buffer.str(), path);
}

std::optional<std::uint64_t> seed_override_from_env() {
  const char* raw = std::getenv("LAB_SEED");
  if (raw == nullptr) return std::nullopt;
  return parse_u64(raw, "LAB_SEED", 1);
}

}  // namespace lab
