#pragma once

#include <filesystem>

#include <json.hpp>

#include "raca/criteria_compositional.hpp"
#include "raca/criteria_individual.hpp"
#include "raca/neuron_baselines.hpp"

namespace raca {

/// Every criterion knob in one place. Defaults:
/// topk 2, bins 10, epsilon_sfc 5.0, epsilon_pcc 2.5, delta 8.0, and the
/// NC/TKNC/TKNP/TFC baseline thresholds 0.25/10/1/50.
struct CoverageConfig {
  IndividualConfig individual;
  CompositionalConfig compositional;
  BaselineConfig baseline;

  friend bool operator==(const CoverageConfig&, const CoverageConfig&) = default;
};

nlohmann::json to_json(const CoverageConfig& cfg);
/// Missing keys keep the values already in base, so config files may be partial.
CoverageConfig merge_config(const CoverageConfig& base, const nlohmann::json& j);
CoverageConfig load_config(const std::filesystem::path& file);

}  // namespace raca
