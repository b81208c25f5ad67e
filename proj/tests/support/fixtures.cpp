#include "fixtures.hpp"

#include <string>

namespace fixtures {

using namespace raca;

ActivationDump dump_from_layers(const std::vector<Matrix>& per_layer, PromptLabel label, int first_layer) {
  const std::size_t p = per_layer.at(0).rows();
  const std::size_t d = per_layer.at(0).cols();
  std::vector<int> layers;
  for (std::size_t l = 0; l < per_layer.size(); ++l) layers.push_back(first_layer + static_cast<int>(l));
  std::vector<PromptMeta> meta;
  for (std::size_t r = 0; r < p; ++r) meta.push_back({"r" + std::to_string(r), label, "fixture", 0, {}});
  std::vector<float> tensor(p * per_layer.size() * d);
  for (std::size_t r = 0; r < p; ++r) {
    for (std::size_t l = 0; l < per_layer.size(); ++l) {
      for (std::size_t c = 0; c < d; ++c) {
        tensor[(r * per_layer.size() + l) * d + c] = static_cast<float>(per_layer[l](r, c));
      }
    }
  }
  return ActivationDump(std::move(layers), d, std::move(meta), std::move(tensor));
}

LayerConceptSpace identity_layer(int layer, std::size_t d, Matrix centroids, std::vector<FeatureRange> ranges) {
  LayerConceptSpace s;
  s.layer = layer;
  s.mean.assign(d, 0.0);
  s.components = Matrix(d, d);
  for (std::size_t i = 0; i < d; ++i) s.components(i, i) = 1.0;
  s.explained_variance.assign(d, 1.0);
  s.feature_ranges = std::move(ranges);
  s.centroids = std::move(centroids);
  return s;
}

TestSuite suite_of(const std::vector<std::size_t>& rows, const char* name) {
  TestSuite s{name, {}, false};
  for (std::size_t r : rows) s.members.push_back("r" + std::to_string(r));
  return s;
}

TestSuite suite_of(std::initializer_list<std::size_t> rows, const char* name) {
  return suite_of(std::vector<std::size_t>(rows), name);
}

}  // namespace fixtures
