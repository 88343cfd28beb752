#pragma once

// Run configuration: plain-text key=value file with '#' comments. Unknown
// keys are rejected; required keys must be present; values are validated
// against the model/training invariants on parse.

#include <string>

#include "cwp/model.hpp"
#include "cwp/training.hpp"

namespace cwp {

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    std::string manifest;  // training data manifest path
    std::string out_dir;   // filled from the CLI, not the file

    void validate() const;
};

RunConfig parse_run_config(const std::string& path);
RunConfig parse_run_config_string(const std::string& text);
std::string run_config_to_string(const RunConfig& cfg);

}  // namespace cwp
