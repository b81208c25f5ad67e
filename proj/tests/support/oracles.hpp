#pragma once

// Brute-force reference implementations. Deliberately naive: plain loops,
// full sorts and std::set, no shared code with the library kernels.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "raca/concept_space.hpp"
#include "raca/matrix.hpp"
#include "raca/rng.hpp"

namespace oracle {

using Rows = std::vector<std::vector<double>>;

Rows to_rows(const raca::Matrix& m);

double sfc(const Rows& f, double eps);
double tkfc(const Rows& f, std::size_t k);
double fic(const Rows& f, const std::vector<raca::FeatureRange>& ranges, std::size_t bins);
/// Linear scan with strict improvement, so the first minimum wins.
std::size_t nearest(const Rows& centroids, const std::vector<double>& v, double* distance = nullptr);
double scc(const Rows& f, const Rows& centroids);
double pcc(const Rows& f, double eps);
double cbc(const Rows& f, const Rows& centroids, double delta);

double nc(const Rows& acts, double threshold);
double tknc(const Rows& acts, std::size_t k);
double tknp(const Rows& acts, std::size_t k);
double tfc(const Rows& acts, double threshold);
/// Frobenius norm of the 1/(m-1) batch covariance; 0 below two rows.
double nlc(const Rows& acts);

struct Eigen {
  std::vector<double> values;  // descending
  Rows vectors;                // vectors[i] pairs with values[i]
};

/// Cyclic Jacobi rotations on a dense symmetric matrix.
Eigen jacobi_eigen(Rows a, double tol = 1e-14, int max_sweeps = 100);

/// 1/(m-1) covariance of the column-centered rows.
Rows covariance(const Rows& x);

raca::Matrix random_matrix(raca::Rng& rng, std::size_t rows, std::size_t cols, double scale);

}  // namespace oracle
