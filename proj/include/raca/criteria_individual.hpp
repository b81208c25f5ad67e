#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "raca/activation_store.hpp"
#include "raca/concept_space.hpp"
#include "raca/matrix.hpp"

namespace raca {

struct IndividualConfig {
  double epsilon_sfc = 5.0;
  std::size_t topk = 2;
  std::size_t bins = 10;

  /// ValidationError unless epsilon_sfc > 0, 1 <= topk <= n and bins >= 1.
  void validate(std::size_t n) const;
  friend bool operator==(const IndividualConfig&, const IndividualConfig&) = default;
};

// Each criterion takes the T x n matrix of concept activations of one layer.
// An empty suite scores 0.

/// Fraction of features with f_j(x) > epsilon for some row (signed comparison).
double sfc(const Matrix& projected, double epsilon);

/// Indices of the k largest |v_j|, ties broken towards the lower index. Result is sorted ascending.
std::vector<std::size_t> top_k_features(std::span<const double> v, std::size_t k);

/// Fraction of features that appear in some row's top-k by magnitude.
double tkfc(const Matrix& projected, std::size_t k);

/// Bin of a value after clamping into [range.min, range.max]; max lands in bin K-1,
/// a degenerate range maps everything to bin 0.
std::size_t intensity_bin(double value, const FeatureRange& range, std::size_t bins);

/// Mean over features of (covered intensity bins / K).
double fic(const Matrix& projected, std::span<const FeatureRange> ranges, std::size_t bins);

struct IndividualScores {
  double sfc = 0.0;
  double tkfc = 0.0;
  double fic = 0.0;
};

IndividualScores individual_scores(const LayerConceptSpace& layer, const Matrix& projected,
                                   const IndividualConfig& cfg);

/// Per-layer scores averaged arithmetically over the space's layers.
IndividualScores individual_scores(const ConceptSpace& space, const ActivationDump& dump,
                                   const TestSuite& suite, const IndividualConfig& cfg);

}  // namespace raca
