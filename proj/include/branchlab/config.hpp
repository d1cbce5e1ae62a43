#pragma once

#include <optional>
#include <string>

#include <json.hpp>

#include "branchlab/model.hpp"

namespace branchlab {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// One experiment: a model, an optional immigration law, and the parameters of
// one of the four experiment kinds (check | solve | simulate | verify).
struct ExperimentConfig {
  std::string id = "model";
  ModelAny model;
  std::optional<ImmAny> immigration;
  std::string kind;
  ordered_json params;  // kind-specific parameters, already schema-checked
};

// Fail-closed parsing: unknown fields anywhere raise SchemaError.
ExperimentConfig parse_config(const json& doc);
ExperimentConfig parse_config_text(const std::string& text);

ordered_json serialize(const ExperimentConfig& config);

}  // namespace branchlab
