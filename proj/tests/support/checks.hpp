#pragma once

// Randomised comparison runs shared by the unit tests and the acceptance binary.

#include <cstddef>
#include <cstdint>
#include <string>

namespace checks {

struct Outcome {
  std::size_t cases = 0;
  std::size_t failures = 0;
  std::string first_failure;

  bool ok() const { return cases > 0 && failures == 0; }
  void fail(const std::string& what) {
    if (failures++ == 0) first_failure = what;
  }
};

/// Six RACA kernels plus nearest_centroid against the brute-force oracles on small random instances.
Outcome oracle_equivalence(std::size_t instances, std::uint64_t seed);

/// principal_components against Jacobi on random rows x cols matrices: explained variance
/// and rank-r reconstruction error, both to rel_tol.
Outcome pca_against_jacobi(std::size_t matrices, std::size_t rows, std::size_t cols, double rel_tol,
                           std::uint64_t seed);

/// Suite-inclusion monotonicity, duplication invariance and the CBC append laws.
/// One case draws a fresh instance and checks every law on it.
Outcome suite_laws(std::size_t cases, std::uint64_t seed);

}  // namespace checks
