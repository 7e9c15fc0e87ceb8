#pragma once

// Versioned JSON config documents for the experiment drivers. Parsing is
// strict: the schema version must match, the section for the declared kind
// must be present, and unknown keys anywhere are an error (they usually mean
// a typo that would otherwise silently fall back to a default).

#include <optional>
#include <string>

#include "atrl/experiments.hpp"
#include "json.hpp"

namespace atrl {

inline constexpr int kConfigVersion = 1;

struct ExperimentConfig {
  int version = kConfigVersion;
  std::string kind;  // "sweep" | "table1" | "gravity"
  std::string records;        // JSON-lines store path
  std::string report_prefix;  // optional; empty = no report wanted

  std::optional<SweepOptions> sweep;
  std::optional<TemporalOrderOptions> table1;
  std::optional<GravityExperimentOptions> gravity;

  nlohmann::ordered_json to_json() const;
};

ExperimentConfig parse_experiment_config(const nlohmann::json& doc);
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace atrl
