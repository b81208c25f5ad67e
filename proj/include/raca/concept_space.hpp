#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "raca/activation_store.hpp"
#include "raca/matrix.hpp"

namespace raca {

struct FitParams {
  std::size_t n = 64;         // principal directions kept per layer
  std::size_t clusters = 32;  // K-Means centroids M
  std::uint64_t seed = 0;
  std::size_t kmeans_max_iters = 100;
  double kmeans_tol = 1e-6;

  friend bool operator==(const FitParams&, const FitParams&) = default;
};

struct FeatureRange {
  double min = 0.0;
  double max = 0.0;

  friend bool operator==(const FeatureRange&, const FeatureRange&) = default;
};

/// Fitted concept space for one layer.
///
/// components holds n orthonormal rows (d_model columns) ordered by
/// non-increasing explained variance. feature_ranges and centroids live in
/// projection units (n columns).
struct LayerConceptSpace {
  int layer = 0;
  std::vector<double> mean;
  Matrix components;
  std::vector<double> explained_variance;
  std::vector<FeatureRange> feature_ranges;
  Matrix centroids;

  std::size_t n() const noexcept { return components.rows(); }
  std::size_t d_model() const noexcept { return mean.size(); }

  friend bool operator==(const LayerConceptSpace&, const LayerConceptSpace&) = default;
};

class ConceptSpace {
 public:
  ConceptSpace(FitParams params, std::size_t d_model, std::vector<LayerConceptSpace> layers);

  const FitParams& params() const noexcept { return params_; }
  std::size_t d_model() const noexcept { return d_model_; }
  std::size_t n() const noexcept { return params_.n; }
  std::size_t clusters() const noexcept { return params_.clusters; }
  const std::vector<LayerConceptSpace>& layers() const noexcept { return layers_; }
  std::vector<int> layer_indices() const;
  /// ValidationError when the layer was not fitted.
  const LayerConceptSpace& layer(int index) const;

  friend bool operator==(const ConceptSpace&, const ConceptSpace&) = default;

 private:
  FitParams params_;
  std::size_t d_model_;
  std::vector<LayerConceptSpace> layers_;
};

struct PcaResult {
  Matrix components;  // n x d, orthonormal rows
  std::vector<double> explained_variance;
};

/// Top-n principal directions of an already-centered m x d matrix.
///
/// Eigendecomposition of the 1/(m-1) sample covariance in double precision;
/// the m x m Gram matrix is decomposed instead when m < d. Each direction is
/// signed so its largest-magnitude entry is positive. Throws RankError when
/// fewer than n directions carry non-negligible variance.
PcaResult principal_components(const Matrix& centered, std::size_t n);

/// Fits one LayerConceptSpace per dump layer from the rows labelled calibration.
ConceptSpace fit_concept_space(const ActivationDump& calib, const FitParams& params);

/// Concept activations f_j(h) = v_j . (h - mean) for j = 1..n.
std::vector<double> project(const LayerConceptSpace& space, std::span<const double> h);
std::vector<double> project(const LayerConceptSpace& space, std::span<const float> h);
std::vector<double> project(const ConceptSpace& space, int layer, std::span<const float> h);

/// Projects the given dump rows at the space's layer into a rows.size() x n matrix.
Matrix project_rows(const LayerConceptSpace& space, const ActivationDump& dump,
                    std::span<const std::size_t> rows);

struct NearestCentroid {
  std::size_t index = 0;
  double distance = 0.0;
};

/// Euclidean argmin over centroid rows; ties go to the lowest index.
NearestCentroid nearest_centroid(const Matrix& centroids, std::span<const double> v);
NearestCentroid nearest_centroid(const ConceptSpace& space, int layer, std::span<const double> v);

struct KMeansResult {
  Matrix centroids;
  std::vector<std::size_t> assignment;
  /// Within-cluster sum of squares after each assignment step.
  std::vector<double> inertia_history;
  std::size_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. Stops once every centroid moves
/// less than tol or after max_iters assignment steps. Empty clusters keep their
/// previous centroid.
KMeansResult run_kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
                        std::size_t max_iters, double tol);
Matrix kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iters,
              double tol);

void save_space(const ConceptSpace& space, const std::filesystem::path& dir);
ConceptSpace load_space(const std::filesystem::path& dir);

}  // namespace raca
