#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>

#include "raca/error.hpp"
#include "raca/report.hpp"
#include "raca/rng.hpp"

namespace fs = std::filesystem;
using namespace raca;

namespace {

// Compares against tests/golden/<name>; RACA_UPDATE_GOLDEN=1 rewrites the file instead.
void check_golden(const std::string& name, const std::string& actual) {
  const fs::path file = fs::path(RACA_GOLDEN_DIR) / name;
  if (std::getenv("RACA_UPDATE_GOLDEN")) {
    std::ofstream(file, std::ios::binary) << actual;
    return;
  }
  std::ifstream in(file, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing golden file " << file);
  const std::string expected{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  CHECK(actual == expected);
}

CriterionValues sample_values(double scale) {
  CriterionValues v;
  double x = 0.1;
  for (Criterion c : kAllCriteria) {
    v[c] = x * scale;
    x += 0.07;
  }
  v[Criterion::tknp] = 12 * scale;
  v[Criterion::tfc] = 31 * scale;
  v[Criterion::nlc] = 250.5 * scale;
  return v;
}

CoverageReport sample_report(const std::string& name, double scale) {
  CoverageReport r;
  r.suite_name = name;
  r.suite_size = 100;
  r.values = sample_values(scale);
  return r;
}

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("relative gain conventions") {
  const Gain g = relative_gain(0.53, 0.5804);
  CHECK(g.value * 100 == doctest::Approx(9.509).epsilon(1e-3));
  CHECK_FALSE(g.zero_baseline);
  CHECK(format_gain(g) == "+9.51%");
  CHECK(format_gain(relative_gain(0.5, 0.4)) == "-20.00%");
  CHECK(relative_gain(0.0, 0.0) == Gain{0.0, false});
  CHECK(format_gain(relative_gain(0.0, 0.0)) == "+0.00%");
  const Gain flagged = relative_gain(0.0, 0.25);
  CHECK(flagged.zero_baseline);
  CHECK(flagged.value == 0.25);
  CHECK(format_gain(flagged) == "+25.00%(abs)");
  CHECK_THROWS_AS(relative_gain(-1.0, 0.0), ValidationError);
}

TEST_CASE("ensembles are group means") {
  const std::vector<double> gains{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 1, 2, 3, 4, 5};
  const Ensembles e = ensembles(gains);
  CHECK(e.ei == doctest::Approx(0.2));
  CHECK(e.ec == doctest::Approx(0.5));
  CHECK(e.er == doctest::Approx(0.35));
  CHECK(e.en == doctest::Approx(3.0));
  CHECK_THROWS_AS(ensembles(std::vector<double>(10, 0.0)), ValidationError);

  // Permuting inside a group changes nothing.
  Rng rng(1);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> g(11);
    for (double& v : g) v = rng.normal(0, 1);
    const Ensembles before = ensembles(g);
    std::vector<double> ind(g.begin(), g.begin() + 3), comp(g.begin() + 3, g.begin() + 6), neur(g.begin() + 6, g.end());
    rng.shuffle(ind);
    rng.shuffle(comp);
    rng.shuffle(neur);
    std::vector<double> p;
    p.insert(p.end(), ind.begin(), ind.end());
    p.insert(p.end(), comp.begin(), comp.end());
    p.insert(p.end(), neur.begin(), neur.end());
    const Ensembles after = ensembles(p);
    CHECK(after.ei == doctest::Approx(before.ei));
    CHECK(after.ec == doctest::Approx(before.ec));
    CHECK(after.er == doctest::Approx(before.er));
    CHECK(after.en == doctest::Approx(before.en));
  }
}

TEST_CASE("compare_values") {
  const auto base = sample_values(1.0);
  auto target = sample_values(1.1);
  target[Criterion::cbc] = base[Criterion::cbc];
  const GainTable t = compare_values(base, target);
  CHECK(t[Criterion::sfc].value == doctest::Approx(0.1));
  CHECK(t[Criterion::cbc].value == 0.0);
  CHECK(t.ensembles.en == doctest::Approx(0.1));
  CHECK(t.ensembles.ec == doctest::Approx(0.2 / 3));
  CHECK_FALSE(t.zero_baseline());

  auto zero = base;
  zero[Criterion::pcc] = 0.0;
  CHECK(compare_values(zero, target).zero_baseline());
}

TEST_CASE("names parse back") {
  for (Criterion c : kAllCriteria) CHECK(parse_criterion(name_of(c)) == c);
  for (auto m : {EnsembleMetric::ei, EnsembleMetric::ec, EnsembleMetric::er, EnsembleMetric::en}) {
    CHECK(parse_metric(name_of(m)) == m);
  }
  CHECK_THROWS_AS(parse_criterion("kmnc"), ValidationError);
  CHECK_THROWS_AS(parse_metric("ex"), ValidationError);
  CHECK_THROWS_AS(parse_format("xml"), ValidationError);
}

TEST_CASE("json round trips") {
  auto r = sample_report("S_JA", 1.0);
  CHECK(parse_coverage_report(to_json(r)) == r);

  r.cbc_undefined = true;
  r.timestamp = "2024-01-01T00:00:00Z";
  r.config.individual.topk = 3;
  r.config.baseline.layers = {15, 17};
  r.baseline_suite = "S_P";
  r.gains = compare_values(sample_values(0.9), r.values);
  CHECK(parse_coverage_report(nlohmann::json::parse(emit_report(r, ReportFormat::json))) == r);

  const auto g = make_gain_report(sample_report("S_P", 1.0), sample_report("S_E", 1.2));
  CHECK(g.gains == compare_values(sample_values(1.0), sample_values(1.2)));
  CHECK(parse_gain_report(to_json(g)) == g);
  CHECK_THROWS_AS(parse_gain_report(to_json(r)), ValidationError);
  CHECK_THROWS_AS(parse_coverage_report(to_json(g)), ValidationError);
}

TEST_CASE("csv has eleven criterion rows and four ensemble rows") {
  const auto r = sample_report("S_P", 1.0);
  const std::string plain = emit_report(r, ReportFormat::csv);
  CHECK(plain.starts_with("criterion,value,gain_pct\n"));
  CHECK(count_lines(plain) == 16);
  CHECK(plain.find("\ner,,\n") != std::string::npos);

  const auto g = make_gain_report(sample_report("S_P", 1.0), sample_report("S_E", 1.2));
  const std::string csv = emit_report(g, ReportFormat::csv);
  CHECK(count_lines(csv) == 16);
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  CHECK(line.starts_with("sfc,"));
  const double pct = std::stod(line.substr(line.rfind(',') + 1));
  CHECK(pct == doctest::Approx(20.0));
}

TEST_CASE("comparison table matches the golden layout") {
  const auto base = sample_report("S_P", 1.0);
  std::vector<GainReport> targets;
  targets.push_back(make_gain_report(base, sample_report("S_E", 1.05)));
  targets.push_back(make_gain_report(base, sample_report("S*_JA", 0.8)));
  check_golden("comparison_table.txt", emit_comparison_table(base, targets));
  check_golden("coverage_table.txt", emit_report(base, ReportFormat::table));
}
