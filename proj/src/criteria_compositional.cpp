#include "raca/criteria_compositional.hpp"

#include <algorithm>

#include "raca/error.hpp"
#include "raca/parallel.hpp"

namespace raca {

void CompositionalConfig::validate() const {
  if (!(epsilon_pcc > 0.0)) throw ValidationError("epsilon_pcc must be positive");
  if (!(delta > 0.0)) throw ValidationError("delta must be positive");
}

double scc(const Matrix& projected, const Matrix& centroids) {
  if (projected.empty()) return 0.0;
  std::vector<bool> visited(centroids.rows(), false);
  for (std::size_t r = 0; r < projected.rows(); ++r) {
    visited[nearest_centroid(centroids, projected.row(r)).index] = true;
  }
  return static_cast<double>(std::count(visited.begin(), visited.end(), true)) /
         static_cast<double>(centroids.rows());
}

double pcc(const Matrix& projected, double epsilon) {
  const std::size_t n = projected.cols();
  if (n < 2) throw ValidationError("pcc: at least two features required");
  if (projected.empty()) return 0.0;
  const std::size_t pairs = n * (n - 1) / 2;
  std::vector<bool> covered(pairs, false);
  std::vector<std::size_t> active;
  for (std::size_t r = 0; r < projected.rows(); ++r) {
    auto row = projected.row(r);
    active.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (row[j] > epsilon) active.push_back(j);
    }
    for (std::size_t a = 0; a < active.size(); ++a) {
      for (std::size_t b = a + 1; b < active.size(); ++b) covered[pair_index(active[a], active[b], n)] = true;
    }
  }
  return static_cast<double>(std::count(covered.begin(), covered.end(), true)) / static_cast<double>(pairs);
}

double cbc(const Matrix& projected, const Matrix& centroids, double delta) {
  if (projected.empty()) return 0.0;
  std::size_t boundary = 0;
  for (std::size_t r = 0; r < projected.rows(); ++r) {
    if (nearest_centroid(centroids, projected.row(r)).distance > delta) ++boundary;
  }
  return static_cast<double>(boundary) / static_cast<double>(projected.rows());
}

CompositionalScores compositional_scores(const LayerConceptSpace& layer, const Matrix& projected,
                                         const CompositionalConfig& cfg) {
  cfg.validate();
  return {scc(projected, layer.centroids), pcc(projected, cfg.epsilon_pcc),
          cbc(projected, layer.centroids, cfg.delta), projected.empty()};
}

CompositionalScores compositional_scores(const ConceptSpace& space, const ActivationDump& dump,
                                         const TestSuite& suite, const CompositionalConfig& cfg) {
  const std::vector<std::size_t> rows = resolve_suite(dump, suite);
  const auto& layers = space.layers();
  std::vector<CompositionalScores> per_layer(layers.size());
  parallel_for(layers.size(), [&](std::size_t i) {
    per_layer[i] = compositional_scores(layers[i], project_rows(layers[i], dump, rows), cfg);
  });
  CompositionalScores mean;
  for (const auto& s : per_layer) {
    mean.scc += s.scc;
    mean.pcc += s.pcc;
    mean.cbc += s.cbc;
  }
  const auto count = static_cast<double>(per_layer.size());
  mean.scc /= count;
  mean.pcc /= count;
  mean.cbc /= count;
  mean.cbc_undefined = rows.empty();
  return mean;
}

}  // namespace raca
