#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "raca/activation_store.hpp"
#include "raca/concept_space.hpp"
#include "raca/config.hpp"
#include "raca/report.hpp"

namespace raca {

/// All eleven criteria for one suite: RACA over the space's layers, baselines over the traced layers.
CriterionValues evaluate_suite(const ConceptSpace& space, const ActivationDump& dump, const TestSuite& suite,
                               const CoverageConfig& cfg, bool* cbc_undefined = nullptr);

/// evaluate_suite wrapped into a report. The timestamp is left empty.
CoverageReport cover(const ConceptSpace& space, const ActivationDump& dump, const TestSuite& suite,
                     const CoverageConfig& cfg);

/// Suite coverage that grows one prompt at a time.
///
/// Keeps the set-valued RACA accumulators (feature, bin, centroid and pair
/// bitmaps plus the CBC boundary count) for every layer next to the baseline
/// states, so the effect of appending a single candidate costs one projection
/// instead of a full re-evaluation. Values match evaluate_suite on the same
/// ordered rows.
class IncrementalCoverage {
 public:
  IncrementalCoverage(const ConceptSpace& space, const ActivationDump& dump, const CoverageConfig& cfg);
  ~IncrementalCoverage();
  IncrementalCoverage(IncrementalCoverage&&) noexcept;
  IncrementalCoverage& operator=(IncrementalCoverage&&) noexcept;

  void add(std::size_t row);
  std::size_t size() const noexcept;
  CriterionValues values() const;
  /// Values after a hypothetical add(row); the state is unchanged.
  CriterionValues values_with(std::size_t row) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace raca
