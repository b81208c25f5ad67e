#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "raca/concept_space.hpp"
#include "raca/error.hpp"
#include "raca/io_util.hpp"
#include "raca/rng.hpp"
#include "support/checks.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace raca;

namespace {

Matrix centered(Matrix x) {
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) mean += x(r, c);
    mean /= static_cast<double>(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) x(r, c) -= mean;
  }
  return x;
}

ConceptSpace fitted(std::size_t rows, std::size_t d, std::size_t n, std::size_t m, std::uint64_t seed,
                    std::size_t layers = 2) {
  Rng rng(seed);
  std::vector<Matrix> per_layer;
  for (std::size_t l = 0; l < layers; ++l) per_layer.push_back(oracle::random_matrix(rng, rows, d, 3.0));
  const auto dump = fixtures::dump_from_layers(per_layer);
  FitParams p;
  p.n = n;
  p.clusters = m;
  p.seed = seed;
  return fit_concept_space(dump, p);
}

}  // namespace

TEST_CASE("rank-one data yields its direction and nothing more") {
  const std::vector<double> u{0.5, -0.5, 0.5, 0.5};
  Matrix x(6, 4);
  for (std::size_t r = 0; r < 6; ++r) {
    for (std::size_t c = 0; c < 4; ++c) x(r, c) = (static_cast<double>(r) - 2.5) * u[c];
  }
  const auto pca = principal_components(x, 1);
  REQUIRE(pca.explained_variance.size() == 1);
  double dot = 0.0;
  for (std::size_t c = 0; c < 4; ++c) dot += pca.components(0, c) * u[c];
  CHECK(std::abs(std::abs(dot) - 1.0) < 1e-12);

  try {
    principal_components(x, 2);
    FAIL("expected RankError");
  } catch (const RankError& e) {
    CHECK(e.achieved_rank() == 1);
  }
}

TEST_CASE("components carry the sign convention: largest-magnitude entry positive") {
  const auto space = fitted(60, 12, 6, 4, 1);
  for (const auto& l : space.layers()) {
    for (std::size_t j = 0; j < l.n(); ++j) {
      auto v = l.components.row(j);
      std::size_t best = 0;
      for (std::size_t i = 1; i < v.size(); ++i) best = std::abs(v[i]) > std::abs(v[best]) ? i : best;
      CHECK(v[best] > 0.0);
    }
  }
}

TEST_CASE("fitted components are orthonormal and variance is non-increasing") {
  const auto space = fitted(80, 20, 10, 5, 2);
  for (const auto& l : space.layers()) {
    for (std::size_t a = 0; a < l.n(); ++a) {
      for (std::size_t b = 0; b < l.n(); ++b) {
        double dot = 0.0;
        for (std::size_t c = 0; c < l.d_model(); ++c) dot += l.components(a, c) * l.components(b, c);
        CHECK(std::abs(dot - (a == b ? 1.0 : 0.0)) < 1e-6);
      }
    }
    for (std::size_t j = 1; j < l.n(); ++j) CHECK(l.explained_variance[j] <= l.explained_variance[j - 1]);
    for (const auto& r : l.feature_ranges) CHECK(r.min <= r.max);
    CHECK(l.centroids.rows() == 5);
  }
}

TEST_CASE("projected calibration vectors have zero mean") {
  Rng rng(3);
  const auto dump = fixtures::dump_from_layers({oracle::random_matrix(rng, 50, 16, 4.0)});
  FitParams p;
  p.n = 8;
  p.clusters = 4;
  const auto space = fit_concept_space(dump, p);
  std::vector<double> sum(8, 0.0);
  for (std::size_t r = 0; r < 50; ++r) {
    const auto f = project(space, 15, dump.activation(r, 0));
    for (std::size_t j = 0; j < 8; ++j) sum[j] += f[j];
  }
  for (double s : sum) CHECK(std::abs(s / 50.0) < 1e-5);
}

TEST_CASE("n=64 explained variance matches a Jacobi eigensolver on 100 x d data") {
  Rng rng(4);
  Matrix x = oracle::random_matrix(rng, 100, 80, 1.0);
  for (std::size_t c = 0; c < 80; ++c) {
    for (std::size_t r = 0; r < 100; ++r) x(r, c) *= 1.0 + 0.05 * static_cast<double>(c);
  }
  const auto dump = fixtures::dump_from_layers({x});
  FitParams p;
  p.n = 64;
  p.clusters = 32;
  const auto space = fit_concept_space(dump, p);
  const auto eig = oracle::jacobi_eigen(oracle::covariance(oracle::to_rows(x)));
  const auto& got = space.layers()[0].explained_variance;
  for (std::size_t j = 0; j < 64; ++j) CHECK(std::abs(got[j] - eig.values[j]) <= 1e-4 * eig.values[j]);
}

TEST_CASE("wide data goes through the Gram matrix and still matches the oracle") {
  Rng rng(5);
  const Matrix x = centered(oracle::random_matrix(rng, 30, 60, 2.0));
  const auto pca = principal_components(x, 10);
  const auto eig = oracle::jacobi_eigen(oracle::covariance(oracle::to_rows(x)));
  for (std::size_t j = 0; j < 10; ++j) {
    CHECK(std::abs(pca.explained_variance[j] - eig.values[j]) <= 1e-8 * eig.values[j]);
    double dot = 0.0;
    for (std::size_t c = 0; c < 60; ++c) dot += pca.components(j, c) * eig.vectors[j][c];
    CHECK(std::abs(std::abs(dot) - 1.0) < 1e-6);
  }
}

TEST_CASE("small PCA instances agree with the eigensolver oracle") {
  const auto o = checks::pca_against_jacobi(10, 40, 8, 1e-6, 6);
  CHECK_MESSAGE(o.ok(), o.first_failure);
}

TEST_CASE("projection") {
  const auto space = fitted(60, 10, 5, 3, 7, 1);
  const auto& l = space.layers()[0];

  CHECK(project(l, std::span<const double>(l.mean)) == std::vector<double>(5, 0.0));

  std::vector<double> h = l.mean;
  for (std::size_t c = 0; c < 10; ++c) h[c] += 2.5 * l.components(0, c);
  const auto f = project(l, std::span<const double>(h));
  CHECK(std::abs(f[0] - 2.5) < 1e-5);
  for (std::size_t j = 1; j < 5; ++j) CHECK(std::abs(f[j]) < 1e-5);

  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(10), b(10), mix(10);
    for (std::size_t c = 0; c < 10; ++c) {
      a[c] = rng.normal(0.0, 5.0);
      b[c] = rng.normal(0.0, 5.0);
    }
    const double w = rng.uniform();
    for (std::size_t c = 0; c < 10; ++c) mix[c] = w * a[c] + (1.0 - w) * b[c];
    const auto fa = project(l, std::span<const double>(a));
    const auto fb = project(l, std::span<const double>(b));
    const auto fm = project(l, std::span<const double>(mix));
    for (std::size_t j = 0; j < 5; ++j) {
      double naive = 0.0;
      for (std::size_t c = 0; c < 10; ++c) naive += l.components(j, c) * (a[c] - l.mean[c]);
      CHECK(std::abs(fa[j] - naive) < 1e-6);
      CHECK(std::abs(fm[j] - (w * fa[j] + (1.0 - w) * fb[j])) < 1e-5);
    }
  }

  CHECK_THROWS_AS(project(l, std::span<const double>(std::vector<double>(9))), ValidationError);
}

TEST_CASE("nearest centroid") {
  const Matrix c = Matrix::from_rows({{0, 0}, {2, 0}, {-2, 0}, {5, 5}});
  auto hit = nearest_centroid(c, std::vector<double>{5, 5});
  CHECK(hit.index == 3);
  CHECK(hit.distance == 0.0);
  hit = nearest_centroid(c, std::vector<double>{1, 0});  // equidistant to 0 and 1
  CHECK(hit.index == 0);
  hit = nearest_centroid(Matrix::from_rows({{9, 9}, {2, 0}, {0, 2}}), std::vector<double>{1, 1});
  CHECK(hit.index == 1);
  CHECK(hit.distance == doctest::Approx(std::sqrt(2.0)));

  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix cents = oracle::random_matrix(rng, 8, 6, 3.0);
    const auto v = oracle::random_matrix(rng, 1, 6, 3.0);
    double d = 0.0;
    const auto want = oracle::nearest(oracle::to_rows(cents), oracle::to_rows(v)[0], &d);
    const auto got = nearest_centroid(cents, v.row(0));
    CHECK(got.index == want);
    CHECK(std::abs(got.distance - d) < 1e-9);
  }
  CHECK_THROWS_AS(nearest_centroid(c, std::vector<double>{1, 2, 3}), ValidationError);
}

TEST_CASE("k-means on two separated blobs finds the blob means") {
  Rng rng(10);
  Matrix pts(200, 2);
  double mean_a[2] = {0, 0}, mean_b[2] = {0, 0};
  for (std::size_t r = 0; r < 200; ++r) {
    const bool a = r < 100;
    pts(r, 0) = (a ? -20.0 : 20.0) + rng.normal(0.0, 1.0);
    pts(r, 1) = (a ? 5.0 : -5.0) + rng.normal(0.0, 1.0);
    double* m = a ? mean_a : mean_b;
    m[0] += pts(r, 0) / 100.0;
    m[1] += pts(r, 1) / 100.0;
  }
  const auto c = kmeans(pts, 2, 1, 100, 1e-6);
  const std::size_t ia = c(0, 0) < 0 ? 0 : 1;
  CHECK(std::hypot(c(ia, 0) - mean_a[0], c(ia, 1) - mean_a[1]) < 0.1);
  CHECK(std::hypot(c(1 - ia, 0) - mean_b[0], c(1 - ia, 1) - mean_b[1]) < 0.1);
}

TEST_CASE("k-means edge cases and invariants") {
  const Matrix same = Matrix::from_rows({{3, 4}, {3, 4}, {3, 4}});
  CHECK(kmeans(same, 1, 0, 100, 1e-6) == Matrix::from_rows({{3, 4}}));
  CHECK_THROWS_AS(kmeans(same, 4, 0, 100, 1e-6), ValidationError);

  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix pts = oracle::random_matrix(rng, 120, 5, 4.0);
    const auto res = run_kmeans(pts, 6, 100 + trial, 100, 1e-6);
    for (std::size_t i = 1; i < res.inertia_history.size(); ++i) {
      CHECK(res.inertia_history[i] <= res.inertia_history[i - 1] * (1.0 + 1e-12));
    }
    CHECK(kmeans(pts, 6, 100 + trial, 100, 1e-6) == res.centroids);
  }
}

TEST_CASE("fit rejects too few calibration prompts and oversized n") {
  Rng rng(12);
  const auto dump = fixtures::dump_from_layers({oracle::random_matrix(rng, 10, 16, 1.0)});
  FitParams p;
  p.n = 4;
  p.clusters = 12;
  CHECK_THROWS_AS(fit_concept_space(dump, p), ValidationError);
  p.clusters = 2;
  p.n = 17;
  CHECK_THROWS_AS(fit_concept_space(dump, p), ValidationError);
  const auto normal_only = fixtures::dump_from_layers({oracle::random_matrix(rng, 10, 4, 1.0)}, PromptLabel::normal);
  p.n = 2;
  CHECK_THROWS_AS(fit_concept_space(normal_only, p), ValidationError);
}

TEST_CASE("fitting is deterministic and the space round-trips through disk") {
  const auto a = fitted(70, 12, 6, 5, 13);
  const auto b = fitted(70, 12, 6, 5, 13);
  CHECK(a == b);

  const auto dir = fs::temp_directory_path() / "raca-space-roundtrip";
  fs::remove_all(dir);
  save_space(a, dir);
  CHECK(load_space(dir) == a);
  CHECK(fs::file_size(dir / "components.bin") == 2 * 6 * 12 * 8);
  CHECK(fs::file_size(dir / "centroids.bin") == 2 * 5 * 6 * 8);
  const auto doc = parse_json_file(dir / "space.json");
  CHECK(doc.contains("params"));
}
