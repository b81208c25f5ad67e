#include "raca/report.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "raca/error.hpp"

namespace raca {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, kCriterionCount> kNames{"sfc", "tkfc", "fic", "scc",  "pcc", "cbc",
                                                               "nc",  "tknc", "tknp", "tfc", "nlc"};
constexpr std::array<std::string_view, 4> kMetricNames{"ei", "ec", "er", "en"};

double mean(std::span<const double> values) {
  double s = 0.0;
  for (double v : values) s += v;
  return s / static_cast<double>(values.size());
}

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

std::string number(double v) { return json(v).dump(); }

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

// Counts and the NLC statistic are unbounded; everything else is a ratio.
std::string format_value(Criterion c, double v) {
  switch (c) {
    case Criterion::tknp:
    case Criterion::tfc:
    case Criterion::nlc:
      return fixed(v, 2);
    default:
      return fixed(v, 4);
  }
}

std::string pad_left(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : std::string(width - s.size(), ' ') + s;
}

std::string pad_right(const std::string& s, std::size_t width) {
  return s.size() >= width ? s : s + std::string(width - s.size(), ' ');
}

json values_to_json(const CriterionValues& v) {
  json j = json::object();
  for (Criterion c : kAllCriteria) j[std::string(name_of(c))] = v[c];
  return j;
}

CriterionValues values_from_json(const json& j) {
  CriterionValues v;
  for (Criterion c : kAllCriteria) v[c] = j.at(std::string(name_of(c))).get<double>();
  return v;
}

json ensembles_to_json(const Ensembles& e) { return {{"ei", e.ei}, {"ec", e.ec}, {"er", e.er}, {"en", e.en}}; }

Ensembles ensembles_from_json(const json& j) {
  return {j.at("ei").get<double>(), j.at("ec").get<double>(), j.at("er").get<double>(), j.at("en").get<double>()};
}

json gains_to_json(const GainTable& g) {
  json per = json::object();
  for (Criterion c : kAllCriteria) {
    per[std::string(name_of(c))] = {{"value", g[c].value}, {"zero_baseline", g[c].zero_baseline}};
  }
  return {{"criteria", std::move(per)}, {"ensembles", ensembles_to_json(g.ensembles)}};
}

GainTable gains_from_json(const json& j) {
  GainTable g;
  for (Criterion c : kAllCriteria) {
    const auto& entry = j.at("criteria").at(std::string(name_of(c)));
    g.gains[static_cast<std::size_t>(c)] = {entry.at("value").get<double>(), entry.at("zero_baseline").get<bool>()};
  }
  g.ensembles = ensembles_from_json(j.at("ensembles"));
  return g;
}

std::string csv_rows(const CriterionValues& values, const GainTable* gains) {
  std::ostringstream os;
  os << "criterion,value,gain_pct\n";
  for (Criterion c : kAllCriteria) {
    os << name_of(c) << ',' << number(values[c]) << ',';
    if (gains) os << number((*gains)[c].value * 100.0);
    os << '\n';
  }
  const std::array<double, 4> ens = gains ? std::array<double, 4>{gains->ensembles.ei, gains->ensembles.ec,
                                                                  gains->ensembles.er, gains->ensembles.en}
                                          : std::array<double, 4>{};
  for (std::size_t i = 0; i < 4; ++i) {
    os << kMetricNames[i] << ",,";
    if (gains) os << number(ens[i] * 100.0);
    os << '\n';
  }
  return os.str();
}

std::string vertical_table(const std::string& title, const CriterionValues& values, const GainTable* gains) {
  std::ostringstream os;
  os << title << '\n';
  os << pad_right("criterion", 10) << pad_left("value", 12) << pad_left("gain", 12) << '\n';
  for (Criterion c : kAllCriteria) {
    os << pad_right(upper(name_of(c)), 10) << pad_left(format_value(c, values[c]), 12)
       << pad_left(gains ? format_gain((*gains)[c]) : "-", 12) << '\n';
  }
  const std::array<double, 4> ens = gains ? std::array<double, 4>{gains->ensembles.ei, gains->ensembles.ec,
                                                                  gains->ensembles.er, gains->ensembles.en}
                                          : std::array<double, 4>{};
  for (std::size_t i = 0; i < 4; ++i) {
    os << pad_right(upper(kMetricNames[i]), 10) << pad_left("", 12)
       << pad_left(gains ? format_gain({ens[i], false}) : "-", 12) << '\n';
  }
  return os.str();
}

}  // namespace

std::string_view name_of(Criterion c) { return kNames[static_cast<std::size_t>(c)]; }

Criterion parse_criterion(std::string_view name) {
  for (Criterion c : kAllCriteria) {
    if (name_of(c) == name) return c;
  }
  throw ValidationError("unknown criterion '" + std::string(name) + "'");
}

Gain relative_gain(double base, double target) {
  if (base < 0.0) throw ValidationError("relative_gain: negative baseline");
  if (base > 0.0) return {(target - base) / base, false};
  if (target == base) return {0.0, false};
  return {target - base, true};
}

std::string_view name_of(EnsembleMetric m) { return kMetricNames[static_cast<std::size_t>(m)]; }

EnsembleMetric parse_metric(std::string_view name) {
  for (std::size_t i = 0; i < kMetricNames.size(); ++i) {
    if (kMetricNames[i] == name) return static_cast<EnsembleMetric>(i);
  }
  throw ValidationError("unknown ensemble metric '" + std::string(name) + "'");
}

double pick(const Ensembles& e, EnsembleMetric m) {
  switch (m) {
    case EnsembleMetric::ei:
      return e.ei;
    case EnsembleMetric::ec:
      return e.ec;
    case EnsembleMetric::er:
      return e.er;
    case EnsembleMetric::en:
      return e.en;
  }
  return 0.0;
}

Ensembles ensembles(std::span<const double> gains) {
  if (gains.size() != kCriterionCount) {
    throw ValidationError("ensembles: expected " + std::to_string(kCriterionCount) + " gains, got " +
                          std::to_string(gains.size()));
  }
  Ensembles e;
  e.ei = mean(gains.subspan(0, 3));
  e.ec = mean(gains.subspan(3, 3));
  e.er = (e.ei + e.ec) / 2.0;
  e.en = mean(gains.subspan(6, 5));
  return e;
}

bool GainTable::zero_baseline() const noexcept {
  for (const auto& g : gains) {
    if (g.zero_baseline) return true;
  }
  return false;
}

GainTable compare_values(const CriterionValues& base, const CriterionValues& target) {
  GainTable table;
  std::array<double, kCriterionCount> raw{};
  for (std::size_t i = 0; i < kCriterionCount; ++i) {
    table.gains[i] = relative_gain(base[kAllCriteria[i]], target[kAllCriteria[i]]);
    raw[i] = table.gains[i].value;
  }
  table.ensembles = ensembles(raw);
  return table;
}

GainReport make_gain_report(const CoverageReport& base, const CoverageReport& target) {
  return {base.suite_name, target.suite_name, base.values, target.values,
          compare_values(base.values, target.values)};
}

ReportFormat parse_format(std::string_view name) {
  if (name == "json") return ReportFormat::json;
  if (name == "csv") return ReportFormat::csv;
  if (name == "table") return ReportFormat::table;
  throw ValidationError("unknown report format '" + std::string(name) + "'");
}

std::string format_gain(const Gain& gain) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%+.2f%%", gain.value * 100.0);
  std::string out = buf;
  if (out == "-0.00%") out = "+0.00%";
  if (gain.zero_baseline) out += "(abs)";
  return out;
}

json to_json(const CoverageReport& report) {
  json j = {{"kind", "coverage"},
            {"suite", report.suite_name},
            {"size", report.suite_size},
            {"values", values_to_json(report.values)},
            {"cbc_undefined", report.cbc_undefined},
            {"config", to_json(report.config)},
            {"timestamp", report.timestamp}};
  if (report.baseline_suite) j["baseline_suite"] = *report.baseline_suite;
  if (report.gains) j["gains"] = gains_to_json(*report.gains);
  return j;
}

json to_json(const GainReport& report) {
  return {{"kind", "gain"},
          {"baseline_suite", report.baseline_suite},
          {"target_suite", report.target_suite},
          {"baseline_values", values_to_json(report.baseline_values)},
          {"target_values", values_to_json(report.target_values)},
          {"gains", gains_to_json(report.gains)}};
}

CoverageReport parse_coverage_report(const json& j) {
  try {
    if (j.at("kind").get<std::string>() != "coverage") throw ValidationError("report: not a coverage report");
    CoverageReport r;
    r.suite_name = j.at("suite").get<std::string>();
    r.suite_size = j.at("size").get<std::size_t>();
    r.values = values_from_json(j.at("values"));
    r.cbc_undefined = j.at("cbc_undefined").get<bool>();
    r.config = merge_config(CoverageConfig{}, j.at("config"));
    r.timestamp = j.at("timestamp").get<std::string>();
    if (j.contains("baseline_suite")) r.baseline_suite = j.at("baseline_suite").get<std::string>();
    if (j.contains("gains")) r.gains = gains_from_json(j.at("gains"));
    return r;
  } catch (const json::exception& e) {
    throw ValidationError("report: " + std::string(e.what()));
  }
}

GainReport parse_gain_report(const json& j) {
  try {
    if (j.at("kind").get<std::string>() != "gain") throw ValidationError("report: not a gain report");
    return {j.at("baseline_suite").get<std::string>(), j.at("target_suite").get<std::string>(),
            values_from_json(j.at("baseline_values")), values_from_json(j.at("target_values")),
            gains_from_json(j.at("gains"))};
  } catch (const json::exception& e) {
    throw ValidationError("report: " + std::string(e.what()));
  }
}

std::string emit_report(const CoverageReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::json:
      return to_json(report).dump(2) + "\n";
    case ReportFormat::csv:
      return csv_rows(report.values, report.gains ? &*report.gains : nullptr);
    case ReportFormat::table: {
      std::string title = "suite " + report.suite_name + " (" + std::to_string(report.suite_size) + " prompts)";
      if (report.baseline_suite) title += ", gains vs " + *report.baseline_suite;
      return vertical_table(title, report.values, report.gains ? &*report.gains : nullptr);
    }
  }
  return {};
}

std::string emit_report(const GainReport& report, ReportFormat format) {
  switch (format) {
    case ReportFormat::json:
      return to_json(report).dump(2) + "\n";
    case ReportFormat::csv:
      return csv_rows(report.target_values, &report.gains);
    case ReportFormat::table:
      return vertical_table("suite " + report.target_suite + ", gains vs " + report.baseline_suite,
                            report.target_values, &report.gains);
  }
  return {};
}

std::string emit_comparison_table(const CoverageReport& base, std::span<const GainReport> targets) {
  constexpr std::size_t kSuiteWidth = 12;
  constexpr std::size_t kCellWidth = 10;
  std::size_t suite_width = kSuiteWidth;
  suite_width = std::max(suite_width, base.suite_name.size() + 2);
  for (const auto& t : targets) suite_width = std::max(suite_width, t.target_suite.size() + 2);

  std::ostringstream os;
  os << pad_right("suite", suite_width);
  for (Criterion c : kAllCriteria) os << pad_left(upper(name_of(c)), kCellWidth);
  for (auto m : kMetricNames) os << pad_left(upper(m), kCellWidth);
  os << '\n';

  os << pad_right(base.suite_name, suite_width);
  for (Criterion c : kAllCriteria) os << pad_left(format_value(c, base.values[c]), kCellWidth);
  for (std::size_t i = 0; i < kMetricNames.size(); ++i) os << pad_left("-", kCellWidth);
  os << '\n';

  for (const auto& t : targets) {
    os << pad_right(t.target_suite, suite_width);
    for (Criterion c : kAllCriteria) os << pad_left(format_gain(t.gains[c]), kCellWidth);
    const auto& e = t.gains.ensembles;
    for (double v : {e.ei, e.ec, e.er, e.en}) os << pad_left(format_gain({v, false}), kCellWidth);
    os << '\n';
  }
  return os.str();
}

}  // namespace raca
