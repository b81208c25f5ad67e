#include "raca/concept_space.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>
#include <json.hpp>

#include "raca/error.hpp"
#include "raca/io_util.hpp"
#include "raca/parallel.hpp"
#include "raca/rng.hpp"

namespace raca {

using nlohmann::json;

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> as_eigen(const Matrix& m) {
  return {m.data().data(), static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols())};
}

void fix_sign(std::span<double> direction) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < direction.size(); ++i) {
    if (std::abs(direction[i]) > std::abs(direction[best])) best = i;
  }
  if (direction[best] < 0.0) {
    for (double& x : direction) x = -x;
  }
}

// Relative cutoff below which an eigenvalue counts as numerical zero.
constexpr double kRankTolerance = 1e-10;

}  // namespace

ConceptSpace::ConceptSpace(FitParams params, std::size_t d_model, std::vector<LayerConceptSpace> layers)
    : params_(params), d_model_(d_model), layers_(std::move(layers)) {
  for (const auto& l : layers_) {
    if (l.n() != params_.n || l.components.cols() != d_model_ || l.mean.size() != d_model_ ||
        l.explained_variance.size() != params_.n || l.feature_ranges.size() != params_.n ||
        l.centroids.rows() != params_.clusters || l.centroids.cols() != params_.n) {
      throw ValidationError("concept space: layer " + std::to_string(l.layer) +
                            " does not match the declared n, M and d_model");
    }
  }
}

std::vector<int> ConceptSpace::layer_indices() const {
  std::vector<int> out;
  for (const auto& l : layers_) out.push_back(l.layer);
  return out;
}

const LayerConceptSpace& ConceptSpace::layer(int index) const {
  for (const auto& l : layers_) {
    if (l.layer == index) return l;
  }
  throw ValidationError("concept space has no layer " + std::to_string(index));
}

PcaResult principal_components(const Matrix& centered, std::size_t n) {
  const std::size_t m = centered.rows();
  const std::size_t d = centered.cols();
  if (m < 2) throw ValidationError("PCA needs at least two rows");
  if (n == 0 || n > d) throw ValidationError("PCA: n must be in [1, d_model]");

  const auto h = as_eigen(centered);
  const double scale = 1.0 / static_cast<double>(m - 1);
  const bool use_gram = m < d;

  Eigen::MatrixXd gram = use_gram ? Eigen::MatrixXd(h * h.transpose() * scale)
                                  : Eigen::MatrixXd(h.transpose() * h * scale);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success) throw ValidationError("PCA: eigendecomposition failed");

  const Eigen::VectorXd& values = solver.eigenvalues();  // ascending
  const Eigen::Index size = values.size();
  const double largest = std::max(values(size - 1), 0.0);
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < size; ++i) {
    if (values(i) > kRankTolerance * largest && values(i) > 0.0) ++rank;
  }
  if (rank < n) {
    throw RankError("PCA: requested " + std::to_string(n) + " components but the centered data has rank " +
                        std::to_string(rank),
                    rank);
  }

  PcaResult out{Matrix(n, d), std::vector<double>(n)};
  for (std::size_t j = 0; j < n; ++j) {
    const Eigen::Index col = size - 1 - static_cast<Eigen::Index>(j);
    out.explained_variance[j] = values(col);
    auto dst = out.components.row(j);
    if (use_gram) {
      Eigen::VectorXd v = h.transpose() * solver.eigenvectors().col(col);
      v.normalize();
      for (std::size_t i = 0; i < d; ++i) dst[i] = v(static_cast<Eigen::Index>(i));
    } else {
      for (std::size_t i = 0; i < d; ++i) {
        dst[i] = solver.eigenvectors()(static_cast<Eigen::Index>(i), col);
      }
    }
    fix_sign(dst);
  }
  return out;
}

ConceptSpace fit_concept_space(const ActivationDump& calib, const FitParams& params) {
  const std::vector<std::size_t> rows = calib.rows_with_label(PromptLabel::calibration);
  const std::size_t m = rows.size();
  if (params.n == 0 || params.clusters == 0) {
    throw ValidationError("fit: n and clusters must be positive");
  }
  if (params.n > std::min(m, calib.d_model())) {
    throw ValidationError("fit: n = " + std::to_string(params.n) + " exceeds the attainable rank min(" +
                          std::to_string(m) + " calibration prompts, d_model " + std::to_string(calib.d_model()) +
                          ")");
  }
  if (m < params.clusters) {
    throw ValidationError("fit: " + std::to_string(m) + " calibration prompts for " +
                          std::to_string(params.clusters) + " clusters");
  }

  std::vector<LayerConceptSpace> layers(calib.num_layers());
  parallel_for(calib.num_layers(), [&](std::size_t pos) {
    const int layer = calib.layers()[pos];
    Matrix x = select_layer_view(calib, layer).gather(rows);
    const std::size_t d = x.cols();

    std::vector<double> mean(d, 0.0);
    for (std::size_t r = 0; r < m; ++r) {
      auto row = x.row(r);
      for (std::size_t c = 0; c < d; ++c) mean[c] += row[c];
    }
    for (double& v : mean) v /= static_cast<double>(m);
    for (std::size_t r = 0; r < m; ++r) {
      auto row = x.row(r);
      for (std::size_t c = 0; c < d; ++c) row[c] -= mean[c];
    }

    PcaResult pca = principal_components(x, params.n);

    LayerConceptSpace space;
    space.layer = layer;
    space.mean = std::move(mean);
    space.components = std::move(pca.components);
    space.explained_variance = std::move(pca.explained_variance);

    Matrix projected(m, params.n);
    for (std::size_t r = 0; r < m; ++r) {
      auto src = x.row(r);
      auto dst = projected.row(r);
      for (std::size_t j = 0; j < params.n; ++j) {
        auto v = space.components.row(j);
        double s = 0.0;
        for (std::size_t c = 0; c < d; ++c) s += v[c] * src[c];
        dst[j] = s;
      }
    }

    space.feature_ranges.assign(params.n, FeatureRange{std::numeric_limits<double>::infinity(),
                                                       -std::numeric_limits<double>::infinity()});
    for (std::size_t r = 0; r < m; ++r) {
      for (std::size_t j = 0; j < params.n; ++j) {
        auto& range = space.feature_ranges[j];
        range.min = std::min(range.min, projected(r, j));
        range.max = std::max(range.max, projected(r, j));
      }
    }
    space.centroids =
        kmeans(projected, params.clusters, params.seed, params.kmeans_max_iters, params.kmeans_tol);
    layers[pos] = std::move(space);
  });

  return ConceptSpace(params, calib.d_model(), std::move(layers));
}

std::vector<double> project(const LayerConceptSpace& space, std::span<const double> h) {
  if (h.size() != space.d_model()) {
    throw ValidationError("project: activation width " + std::to_string(h.size()) +
                          " does not match d_model " + std::to_string(space.d_model()));
  }
  std::vector<double> out(space.n(), 0.0);
  for (std::size_t j = 0; j < space.n(); ++j) {
    auto v = space.components.row(j);
    double s = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) s += v[i] * (h[i] - space.mean[i]);
    out[j] = s;
  }
  return out;
}

std::vector<double> project(const LayerConceptSpace& space, std::span<const float> h) {
  std::vector<double> wide(h.begin(), h.end());
  return project(space, std::span<const double>(wide));
}

std::vector<double> project(const ConceptSpace& space, int layer, std::span<const float> h) {
  return project(space.layer(layer), h);
}

Matrix project_rows(const LayerConceptSpace& space, const ActivationDump& dump,
                    std::span<const std::size_t> rows) {
  if (dump.d_model() != space.d_model()) {
    throw ValidationError("project: dump d_model " + std::to_string(dump.d_model()) +
                          " does not match concept space d_model " + std::to_string(space.d_model()));
  }
  const std::size_t pos = dump.layer_position(space.layer);
  const std::size_t d = dump.d_model();
  Matrix out(rows.size(), space.n());
  std::vector<double> centered(d);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto h = dump.activation(rows[r], pos);
    for (std::size_t i = 0; i < d; ++i) centered[i] = static_cast<double>(h[i]) - space.mean[i];
    auto dst = out.row(r);
    for (std::size_t j = 0; j < space.n(); ++j) {
      auto v = space.components.row(j);
      double s = 0.0;
      for (std::size_t i = 0; i < d; ++i) s += v[i] * centered[i];
      dst[j] = s;
    }
  }
  return out;
}

NearestCentroid nearest_centroid(const Matrix& centroids, std::span<const double> v) {
  if (centroids.rows() == 0 || centroids.cols() != v.size()) {
    throw ValidationError("nearest_centroid: shape mismatch");
  }
  NearestCentroid best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t k = 0; k < centroids.rows(); ++k) {
    const double d2 = squared_distance(centroids.row(k), v);
    if (d2 < best.distance) best = {k, d2};
  }
  best.distance = std::sqrt(best.distance);
  return best;
}

NearestCentroid nearest_centroid(const ConceptSpace& space, int layer, std::span<const double> v) {
  return nearest_centroid(space.layer(layer).centroids, v);
}

KMeansResult run_kmeans(const Matrix& points, std::size_t k, std::uint64_t seed,
                        std::size_t max_iters, double tol) {
  const std::size_t count = points.rows();
  const std::size_t dim = points.cols();
  if (k == 0) throw ValidationError("kmeans: k must be positive");
  if (count < k) {
    throw ValidationError("kmeans: " + std::to_string(count) + " points cannot form " +
                          std::to_string(k) + " clusters");
  }

  KMeansResult result;
  result.centroids = Matrix(k, dim);
  Rng rng(seed);

  // k-means++ seeding
  std::size_t first = static_cast<std::size_t>(rng.index(count));
  std::copy(points.row(first).begin(), points.row(first).end(), result.centroids.row(0).begin());
  std::vector<double> closest(count);
  for (std::size_t i = 0; i < count; ++i) {
    closest[i] = squared_distance(points.row(i), result.centroids.row(0));
  }
  for (std::size_t c = 1; c < k; ++c) {
    double total = 0.0;
    for (double d2 : closest) total += d2;
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double cumulative = 0.0;
      pick = count - 1;
      for (std::size_t i = 0; i < count; ++i) {
        cumulative += closest[i];
        if (cumulative > target && closest[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
    std::copy(points.row(pick).begin(), points.row(pick).end(), result.centroids.row(c).begin());
    for (std::size_t i = 0; i < count; ++i) {
      closest[i] = std::min(closest[i], squared_distance(points.row(i), result.centroids.row(c)));
    }
  }

  result.assignment.assign(count, 0);
  Matrix sums(k, dim);
  std::vector<std::size_t> sizes(k);
  for (std::size_t iter = 0; iter < max_iters; ++iter) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const auto nearest = nearest_centroid(result.centroids, points.row(i));
      result.assignment[i] = nearest.index;
      inertia += nearest.distance * nearest.distance;
    }
    result.inertia_history.push_back(inertia);
    ++result.iterations;

    std::fill(sums.data().begin(), sums.data().end(), 0.0);
    std::fill(sizes.begin(), sizes.end(), 0);
    for (std::size_t i = 0; i < count; ++i) {
      auto dst = sums.row(result.assignment[i]);
      auto src = points.row(i);
      for (std::size_t c = 0; c < dim; ++c) dst[c] += src[c];
      ++sizes[result.assignment[i]];
    }
    double max_shift = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
      if (sizes[c] == 0) continue;
      auto centroid = result.centroids.row(c);
      auto sum = sums.row(c);
      double shift = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double updated = sum[j] / static_cast<double>(sizes[c]);
        shift += (updated - centroid[j]) * (updated - centroid[j]);
        centroid[j] = updated;
      }
      max_shift = std::max(max_shift, std::sqrt(shift));
    }
    if (max_shift < tol) break;
  }
  return result;
}

Matrix kmeans(const Matrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iters, double tol) {
  return run_kmeans(points, k, seed, max_iters, tol).centroids;
}

void save_space(const ConceptSpace& space, const std::filesystem::path& dir) {
  const auto& p = space.params();
  json layers = json::array();
  std::vector<double> components;
  std::vector<double> centroids;
  for (const auto& l : space.layers()) {
    json ranges = json::array();
    for (const auto& r : l.feature_ranges) ranges.push_back({r.min, r.max});
    layers.push_back({{"layer", l.layer},
                      {"mean", l.mean},
                      {"explained_variance", l.explained_variance},
                      {"feature_ranges", std::move(ranges)}});
    components.insert(components.end(), l.components.data().begin(), l.components.data().end());
    centroids.insert(centroids.end(), l.centroids.data().begin(), l.centroids.data().end());
  }
  const json doc = {{"version", 1},
                    {"d_model", space.d_model()},
                    {"params",
                     {{"n", p.n},
                      {"clusters", p.clusters},
                      {"seed", p.seed},
                      {"kmeans_max_iters", p.kmeans_max_iters},
                      {"kmeans_tol", p.kmeans_tol}}},
                    {"layers", std::move(layers)}};

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text_file(dir / "space.json", doc.dump(2) + "\n");
  write_f64_le(dir / "components.bin", components);
  write_f64_le(dir / "centroids.bin", centroids);
}

ConceptSpace load_space(const std::filesystem::path& dir) {
  const json doc = parse_json_file(dir / "space.json");
  FitParams params;
  std::size_t d_model = 0;
  std::vector<LayerConceptSpace> layers;
  try {
    if (doc.at("version").get<int>() != 1) throw ValidationError("space.json: unsupported version");
    d_model = doc.at("d_model").get<std::size_t>();
    const auto& p = doc.at("params");
    params.n = p.at("n").get<std::size_t>();
    params.clusters = p.at("clusters").get<std::size_t>();
    params.seed = p.at("seed").get<std::uint64_t>();
    params.kmeans_max_iters = p.at("kmeans_max_iters").get<std::size_t>();
    params.kmeans_tol = p.at("kmeans_tol").get<double>();
    for (const auto& entry : doc.at("layers")) {
      LayerConceptSpace l;
      l.layer = entry.at("layer").get<int>();
      l.mean = entry.at("mean").get<std::vector<double>>();
      l.explained_variance = entry.at("explained_variance").get<std::vector<double>>();
      for (const auto& r : entry.at("feature_ranges")) {
        l.feature_ranges.push_back({r.at(0).get<double>(), r.at(1).get<double>()});
      }
      layers.push_back(std::move(l));
    }
  } catch (const json::exception& e) {
    throw ValidationError("space.json: " + std::string(e.what()));
  }

  const std::vector<double> components = read_f64_le(dir / "components.bin");
  const std::vector<double> centroids = read_f64_le(dir / "centroids.bin");
  const std::size_t comp_block = params.n * d_model;
  const std::size_t cent_block = params.clusters * params.n;
  if (components.size() != comp_block * layers.size() || centroids.size() != cent_block * layers.size()) {
    throw ValidationError("concept space binaries do not match space.json shape");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].components = Matrix(params.n, d_model);
    std::copy_n(components.begin() + static_cast<std::ptrdiff_t>(i * comp_block), comp_block,
                layers[i].components.data().begin());
    layers[i].centroids = Matrix(params.clusters, params.n);
    std::copy_n(centroids.begin() + static_cast<std::ptrdiff_t>(i * cent_block), cent_block,
                layers[i].centroids.data().begin());
  }
  return ConceptSpace(params, d_model, std::move(layers));
}

}  // namespace raca
