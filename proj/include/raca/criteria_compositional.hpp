#pragma once

#include <cstddef>

#include "raca/activation_store.hpp"
#include "raca/concept_space.hpp"
#include "raca/matrix.hpp"

namespace raca {

struct CompositionalConfig {
  double epsilon_pcc = 2.5;
  double delta = 8.0;

  void validate() const;
  friend bool operator==(const CompositionalConfig&, const CompositionalConfig&) = default;
};

/// Fraction of centroids that are the nearest centroid of some row.
double scc(const Matrix& projected, const Matrix& centroids);

/// Position of the unordered pair (i, j), i < j, in row-major upper-triangle order.
constexpr std::size_t pair_index(std::size_t i, std::size_t j, std::size_t n) noexcept {
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

/// Fraction of the n(n-1)/2 feature pairs co-activated above epsilon within a single row.
/// ValidationError when n < 2.
double pcc(const Matrix& projected, double epsilon);

/// Fraction of rows whose nearest centroid lies farther than delta.
/// An empty suite is undefined and reported as 0.
double cbc(const Matrix& projected, const Matrix& centroids, double delta);

struct CompositionalScores {
  double scc = 0.0;
  double pcc = 0.0;
  double cbc = 0.0;
  bool cbc_undefined = false;  // empty suite
};

CompositionalScores compositional_scores(const LayerConceptSpace& layer, const Matrix& projected,
                                         const CompositionalConfig& cfg);

CompositionalScores compositional_scores(const ConceptSpace& space, const ActivationDump& dump,
                                         const TestSuite& suite, const CompositionalConfig& cfg);

}  // namespace raca
