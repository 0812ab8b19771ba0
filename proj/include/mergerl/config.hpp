#pragma once

#include <iosfwd>
#include <string>

#include "mergerl/trainer.hpp"

namespace mergerl {

// Flat `key = value` config files ('#' starts a comment). Keys mirror
// TrainConfig, ScenarioConfig, and RewardCoeffs; unknown keys are errors.
void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value);
TrainConfig parse_config_file(const std::string& path, TrainConfig base);
void write_config(std::ostream& out, const TrainConfig& cfg);

}  // namespace mergerl
