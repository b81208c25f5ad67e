#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "raca/config.hpp"

namespace raca {

enum class Criterion : std::size_t { sfc, tkfc, fic, scc, pcc, cbc, nc, tknc, tknp, tfc, nlc };

inline constexpr std::size_t kCriterionCount = 11;
inline constexpr std::array<Criterion, kCriterionCount> kAllCriteria{
    Criterion::sfc, Criterion::tkfc, Criterion::fic,  Criterion::scc,  Criterion::pcc, Criterion::cbc,
    Criterion::nc,  Criterion::tknc, Criterion::tknp, Criterion::tfc, Criterion::nlc};
inline constexpr std::array<Criterion, 6> kRacaCriteria{Criterion::sfc, Criterion::tkfc, Criterion::fic,
                                                        Criterion::scc, Criterion::pcc,  Criterion::cbc};

std::string_view name_of(Criterion c);
/// ValidationError for unknown names.
Criterion parse_criterion(std::string_view name);

/// One value per criterion, indexed by Criterion.
class CriterionValues {
 public:
  double& operator[](Criterion c) noexcept { return values_[static_cast<std::size_t>(c)]; }
  double operator[](Criterion c) const noexcept { return values_[static_cast<std::size_t>(c)]; }

  friend bool operator==(const CriterionValues&, const CriterionValues&) = default;

 private:
  std::array<double, kCriterionCount> values_{};
};

/// Relative change of a criterion between two suites, as a fraction (0.0951 == +9.51%).
struct Gain {
  double value = 0.0;
  /// Baseline was 0 while the target was positive: value holds the absolute difference.
  bool zero_baseline = false;

  friend bool operator==(const Gain&, const Gain&) = default;
};

/// (target - base) / base for base > 0; 0 when both are 0; flagged absolute difference when base = 0 < target.
Gain relative_gain(double base, double target);

struct Ensembles {
  double ei = 0.0;
  double ec = 0.0;
  double er = 0.0;
  double en = 0.0;

  friend bool operator==(const Ensembles&, const Ensembles&) = default;
};

enum class EnsembleMetric { ei, ec, er, en };
std::string_view name_of(EnsembleMetric m);
EnsembleMetric parse_metric(std::string_view name);
double pick(const Ensembles& e, EnsembleMetric m);

/// EI/EC/EN are arithmetic means of the group gains; ER is the mean of EI and EC.
/// Takes one gain per criterion in kAllCriteria order.
Ensembles ensembles(std::span<const double> gains);

struct GainTable {
  std::array<Gain, kCriterionCount> gains{};
  Ensembles ensembles;

  const Gain& operator[](Criterion c) const noexcept { return gains[static_cast<std::size_t>(c)]; }
  bool zero_baseline() const noexcept;
  friend bool operator==(const GainTable&, const GainTable&) = default;
};

GainTable compare_values(const CriterionValues& base, const CriterionValues& target);

struct CoverageReport {
  std::string suite_name;
  std::size_t suite_size = 0;
  CriterionValues values;
  bool cbc_undefined = false;
  /// Present when the suite was scored against a baseline suite.
  std::optional<std::string> baseline_suite;
  std::optional<GainTable> gains;
  CoverageConfig config;
  /// Empty unless the caller stamps the report; kept out of defaults so reruns stay byte-identical.
  std::string timestamp;

  friend bool operator==(const CoverageReport&, const CoverageReport&) = default;
};

struct GainReport {
  std::string baseline_suite;
  std::string target_suite;
  CriterionValues baseline_values;
  CriterionValues target_values;
  GainTable gains;

  friend bool operator==(const GainReport&, const GainReport&) = default;
};

GainReport make_gain_report(const CoverageReport& base, const CoverageReport& target);

enum class ReportFormat { json, csv, table };
ReportFormat parse_format(std::string_view name);

std::string emit_report(const CoverageReport& report, ReportFormat format);
std::string emit_report(const GainReport& report, ReportFormat format);
/// Wide layout: one line of raw baseline values, then one line of gains per target.
std::string emit_comparison_table(const CoverageReport& base, std::span<const GainReport> targets);

nlohmann::json to_json(const CoverageReport& report);
nlohmann::json to_json(const GainReport& report);
CoverageReport parse_coverage_report(const nlohmann::json& j);
GainReport parse_gain_report(const nlohmann::json& j);

/// "+9.51%" style rendering of a fractional gain; flagged gains get a trailing "(abs)".
std::string format_gain(const Gain& gain);

}  // namespace raca
