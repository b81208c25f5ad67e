#pragma once

#include <vector>

#include "raca/activation_store.hpp"
#include "raca/concept_space.hpp"
#include "raca/matrix.hpp"

namespace fixtures {

/// Dump whose layer i holds per_layer[i] (all P x d). Ids are "r0", "r1", ...
raca::ActivationDump dump_from_layers(const std::vector<raca::Matrix>& per_layer,
                                      raca::PromptLabel label = raca::PromptLabel::calibration,
                                      int first_layer = 15);

/// Space with identity components and zero mean, so projection is the activation itself.
raca::LayerConceptSpace identity_layer(int layer, std::size_t d, raca::Matrix centroids,
                                       std::vector<raca::FeatureRange> ranges);

/// Suite over rows "r<i>" for the given rows.
raca::TestSuite suite_of(std::initializer_list<std::size_t> rows, const char* name = "t");
raca::TestSuite suite_of(const std::vector<std::size_t>& rows, const char* name = "t");

}  // namespace fixtures
