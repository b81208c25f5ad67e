#include "raca/config.hpp"

#include "raca/error.hpp"
#include "raca/io_util.hpp"

namespace raca {

using nlohmann::json;

json to_json(const CoverageConfig& cfg) {
  return {{"individual",
           {{"epsilon_sfc", cfg.individual.epsilon_sfc},
            {"topk", cfg.individual.topk},
            {"bins", cfg.individual.bins}}},
          {"compositional", {{"epsilon_pcc", cfg.compositional.epsilon_pcc}, {"delta", cfg.compositional.delta}}},
          {"baseline",
           {{"nc_threshold", cfg.baseline.nc_threshold},
            {"tknc_k", cfg.baseline.tknc_k},
            {"tknp_k", cfg.baseline.tknp_k},
            {"tfc_threshold", cfg.baseline.tfc_threshold},
            {"layers", cfg.baseline.layers}}}};
}

CoverageConfig merge_config(const CoverageConfig& base, const json& j) {
  CoverageConfig cfg = base;
  try {
    if (auto it = j.find("individual"); it != j.end()) {
      cfg.individual.epsilon_sfc = it->value("epsilon_sfc", cfg.individual.epsilon_sfc);
      cfg.individual.topk = it->value("topk", cfg.individual.topk);
      cfg.individual.bins = it->value("bins", cfg.individual.bins);
    }
    if (auto it = j.find("compositional"); it != j.end()) {
      cfg.compositional.epsilon_pcc = it->value("epsilon_pcc", cfg.compositional.epsilon_pcc);
      cfg.compositional.delta = it->value("delta", cfg.compositional.delta);
    }
    if (auto it = j.find("baseline"); it != j.end()) {
      cfg.baseline.nc_threshold = it->value("nc_threshold", cfg.baseline.nc_threshold);
      cfg.baseline.tknc_k = it->value("tknc_k", cfg.baseline.tknc_k);
      cfg.baseline.tknp_k = it->value("tknp_k", cfg.baseline.tknp_k);
      cfg.baseline.tfc_threshold = it->value("tfc_threshold", cfg.baseline.tfc_threshold);
      cfg.baseline.layers = it->value("layers", cfg.baseline.layers);
    }
  } catch (const json::exception& e) {
    throw ValidationError("config: " + std::string(e.what()));
  }
  return cfg;
}

CoverageConfig load_config(const std::filesystem::path& file) {
  return merge_config(CoverageConfig{}, parse_json_file(file));
}

}  // namespace raca
