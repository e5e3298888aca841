#pragma once

#include <string>

#include <json.hpp>

#include "distlab/trainer.hpp"

namespace distlab {

// Thrown for malformed config files, unknown keys, or bad override flags.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Defaults serialized as a JSON document (the full schema, every known key).
nlohmann::json default_config_json();

// Parses a config document into an ExperimentConfig. Unknown keys are
// rejected with the offending path in the message.
ExperimentConfig config_from_json(const nlohmann::json& doc);
nlohmann::json config_to_json(const ExperimentConfig& cfg);

// Reads and parses a config file; `path` appears in error messages.
nlohmann::json load_config_file(const std::string& path);

// Applies a dotted-path override ("grpo.clip_eps", "0.1") on top of a config
// document. Values parse as JSON first, falling back to a plain string.
void apply_override(nlohmann::json& doc, const std::string& dotted_key,
                    const std::string& value);

// Key lookup used for the seed fallback chain (flag > file > env > default).
bool config_has_key(const nlohmann::json& doc, const std::string& dotted_key);

}  // namespace distlab
