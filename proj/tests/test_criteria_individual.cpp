#include <doctest.h>

#include "raca/criteria_individual.hpp"
#include "raca/error.hpp"
#include "raca/rng.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace raca;

TEST_CASE("sfc") {
  CHECK(sfc(Matrix(0, 4), 5.0) == 0.0);
  CHECK(sfc(Matrix::from_rows({{6, 6, 0, -6}}), 5.0) == 0.5);
  CHECK(sfc(Matrix::from_rows({{5, 5.0001}}), 5.0) == 0.5);  // strictly greater

  Rng rng(1);
  for (int t = 0; t < 30; ++t) {
    const Matrix f = oracle::random_matrix(rng, 20, 8, 6.0);
    CHECK(sfc(f, 5.0) == oracle::sfc(oracle::to_rows(f), 5.0));
    double prev = 1.0;
    for (double eps : {0.0, 1.0, 3.0, 5.0, 8.0, 12.0}) {
      const double v = sfc(f, eps);
      CHECK(v <= prev);
      prev = v;
    }
  }
}

TEST_CASE("tkfc") {
  Rng rng(2);
  const Matrix f = oracle::random_matrix(rng, 3, 5, 1.0);
  CHECK(tkfc(f, 5) == 1.0);
  CHECK(tkfc(Matrix::from_rows({{1, -9, 3, 0}}), 2) == 0.5);
  CHECK(top_k_features(std::vector<double>{1, -9, 3, 0}, 2) == std::vector<std::size_t>{1, 2});
  CHECK(top_k_features(std::vector<double>{2, -2, 2, 1}, 2) == std::vector<std::size_t>{0, 1});  // ties: lower index
  CHECK(tkfc(Matrix(0, 4), 2) == 0.0);

  for (int t = 0; t < 30; ++t) {
    Matrix g = oracle::random_matrix(rng, 30, 16, 4.0);
    if (t % 3 == 0) {
      for (double& v : g.data()) v = std::round(v);
    }
    for (std::size_t k : {1u, 2u, 5u}) CHECK(tkfc(g, k) == oracle::tkfc(oracle::to_rows(g), k));
  }
}

TEST_CASE("fic") {
  const std::vector<FeatureRange> ranges{{0, 10}, {-5, 5}, {2, 3}};
  CHECK(fic(Matrix::from_rows({{4, 0, 2.5}}), ranges, 10) == doctest::Approx(0.1));
  CHECK(fic(Matrix(0, 3), ranges, 10) == 0.0);

  Matrix full(10, 3);
  for (std::size_t b = 0; b < 10; ++b) {
    for (std::size_t j = 0; j < 3; ++j) {
      full(b, j) = ranges[j].min + (ranges[j].max - ranges[j].min) * (static_cast<double>(b) + 0.5) / 10.0;
    }
  }
  CHECK(fic(full, ranges, 10) == 1.0);

  // Degenerate ranges count one bin once anything is tested.
  CHECK(fic(Matrix::from_rows({{7}, {9}}), std::vector<FeatureRange>{{7, 7}}, 4) == 0.25);

  // Clamping into the boundary bins, max in the last bin.
  const FeatureRange r{0, 10};
  CHECK(intensity_bin(-3.0, r, 10) == 0);
  CHECK(intensity_bin(10.0, r, 10) == 9);
  CHECK(intensity_bin(99.0, r, 10) == 9);
  CHECK(intensity_bin(5.0, r, 10) == 5);
  CHECK(intensity_bin(4.999, r, 10) == 4);

  Rng rng(3);
  for (int t = 0; t < 30; ++t) {
    const Matrix f = oracle::random_matrix(rng, 50, 8, 5.0);
    std::vector<FeatureRange> rs(8);
    for (auto& x : rs) {
      const double a = rng.normal(0, 4), b = rng.normal(0, 4);
      x = {std::min(a, b), std::max(a, b)};
    }
    CHECK(fic(f, rs, 10) == oracle::fic(oracle::to_rows(f), rs, 10));
    // Refining bins never raises the covered fraction.
    CHECK(fic(f, rs, 10) <= fic(f, rs, 5));
    CHECK(fic(f, rs, 20) <= fic(f, rs, 10));
  }
}

TEST_CASE("config validation") {
  IndividualConfig cfg;
  CHECK_NOTHROW(cfg.validate(4));
  cfg.topk = 5;
  CHECK_THROWS_AS(cfg.validate(4), ValidationError);
  cfg = {};
  cfg.epsilon_sfc = 0.0;
  CHECK_THROWS_AS(cfg.validate(4), ValidationError);
  cfg = {};
  cfg.bins = 0;
  CHECK_THROWS_AS(cfg.validate(4), ValidationError);
}

TEST_CASE("layer-averaged scores") {
  const std::vector<FeatureRange> ranges(4, FeatureRange{-10, 10});
  const Matrix cents = Matrix::from_rows({{0, 0, 0, 0}});
  const Matrix l15 = Matrix::from_rows({{6, 0, 0, 0}, {0, 0, 7, 0}});
  const Matrix l16 = Matrix::from_rows({{6, 6, 6, 0}, {0, 0, 0, 0}});
  const auto dump = fixtures::dump_from_layers({l15, l16}, PromptLabel::normal);
  FitParams p;
  p.n = 4;
  p.clusters = 1;
  const ConceptSpace space(p, 4, {fixtures::identity_layer(15, 4, cents, ranges),
                                  fixtures::identity_layer(16, 4, cents, ranges)});
  const auto s = individual_scores(space, dump, fixtures::suite_of({0, 1}), IndividualConfig{});
  CHECK(s.sfc == doctest::Approx((0.5 + 0.75) / 2));

  const ConceptSpace twin(p, 4, {fixtures::identity_layer(15, 4, cents, ranges)});
  const auto same = fixtures::dump_from_layers({l15, l15}, PromptLabel::normal);
  const ConceptSpace both(p, 4, {fixtures::identity_layer(15, 4, cents, ranges),
                                 fixtures::identity_layer(16, 4, cents, ranges)});
  const auto one = individual_scores(twin, same, fixtures::suite_of({0, 1}), IndividualConfig{});
  const auto avg = individual_scores(both, same, fixtures::suite_of({0, 1}), IndividualConfig{});
  CHECK(one.sfc == avg.sfc);
  CHECK(one.tkfc == avg.tkfc);
  CHECK(one.fic == avg.fic);

  Rng rng(4);
  const Matrix a = oracle::random_matrix(rng, 12, 4, 6.0), b = oracle::random_matrix(rng, 12, 4, 6.0);
  const auto rand_dump = fixtures::dump_from_layers({a, b}, PromptLabel::normal);
  std::vector<std::size_t> rows{0, 3, 4, 7, 11};
  const auto got = individual_scores(space, rand_dump, fixtures::suite_of(rows), IndividualConfig{});
  // The dump stores float32, so the oracle sees the rounded values too.
  auto stored = [&](const Matrix& m) {
    oracle::Rows out;
    for (std::size_t r : rows) {
      std::vector<double> row;
      for (std::size_t c = 0; c < 4; ++c) row.push_back(static_cast<float>(m(r, c)));
      out.push_back(row);
    }
    return out;
  };
  CHECK(got.sfc == doctest::Approx((oracle::sfc(stored(a), 5.0) + oracle::sfc(stored(b), 5.0)) / 2));
  CHECK(got.tkfc == doctest::Approx((oracle::tkfc(stored(a), 2) + oracle::tkfc(stored(b), 2)) / 2));
  CHECK(got.fic == doctest::Approx((oracle::fic(stored(a), ranges, 10) + oracle::fic(stored(b), ranges, 10)) / 2));

  CHECK_THROWS_AS(individual_scores(space, rand_dump, TestSuite{"x", {"missing"}, false}, IndividualConfig{}),
                  ValidationError);
}
