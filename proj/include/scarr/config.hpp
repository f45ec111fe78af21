#pragma once

#include <filesystem>
#include <string>

#include "scarr/oracle.hpp"
#include "scarr/step1.hpp"
#include "scarr/step2.hpp"

namespace scarr {

struct PredictSettings {
    int first_day = 1;
    int last_day = 10;
    bool grid = true;
    bool smoothed = false;
    bool mean_only = false;
};

/// INI-style run configuration with sections [simulate], [step1], [step2]
/// and [predict]. Unknown sections and keys are rejected.
struct RunConfig {
    oracle::SimulationConfig simulate;
    step1::Step1Config step1;
    step2::Step2Config step2;
    PredictSettings predict;
};

RunConfig parse_config(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);

void apply_predict_option(PredictSettings& p, const std::string& key, const std::string& value);

/// Canonical text of every setting; paths and worker counts are not part of it.
std::string canonical_text(const RunConfig& cfg);
std::string config_hash(const RunConfig& cfg);

} // namespace scarr
