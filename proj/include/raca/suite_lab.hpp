#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "raca/activation_store.hpp"
#include "raca/concept_space.hpp"
#include "raca/config.hpp"
#include "raca/matrix.hpp"
#include "raca/report.hpp"

namespace raca {

/// Knobs of a synthetic representation world.
///
/// The latent space has d_model coordinates; the first n_true_concepts form the
/// concept span and the rest its complement. Topic means only use the first
/// topic_dims coordinates, so the remaining concept coordinates carry little
/// variance and are where jailbreak boosts land. Every layer rescales the
/// concept coordinates, adds its own concept noise, then applies a fixed random
/// rotation and bias.
struct WorldParams {
  std::uint64_t seed = 3;
  std::size_t d_model = 128;
  std::size_t num_layers = 4;
  int first_layer = 15;
  std::size_t n_true_concepts = 64;
  std::size_t topic_dims = 16;

  /// C x d_model, zero outside the concept span. Generated from the seed when empty.
  Matrix cluster_means;
  std::size_t num_clusters = 30;
  double cluster_scale = 14.0;
  double cluster_spread = 0.6;
  double spread_floor = 0.04;  // spread of the last concept coordinate relative to the topic coordinates
  double zipf_exponent = 1.4;
  double boundary_fraction = 0.2;
  /// Mean number of minor concepts a normal prompt touches on the low-variance coordinates.
  double minor_concept_rate = 0.45;
  double minor_concept_scale = 10.0;

  double synonym_jitter = 0.3;

  /// Orthogonal to the concept span. Generated from the seed when empty.
  std::vector<double> invalid_offset;
  double invalid_offset_norm = 40.0;
  double invalid_spread = 1.5;
  double invalid_concept_scale = 0.3;

  double jailbreak_boost = 20.0;
  std::size_t jailbreak_dims = 2;      // coordinates per attack pattern
  std::size_t jailbreak_patterns = 6;
  std::size_t jailbreak_extra_concepts = 2;  // minor concepts a successful attack adds on top of its pattern
  double template_norm = 30.0;
  double calibration_jailbreak_fraction = 0.12;

  double off_subspace_noise = 0.005;
  double layer_noise = 0.02;         // per-layer noise on the concept coordinates
  double layer_scale_jitter = 0.3;  // log-normal per-layer scaling of each concept coordinate
  double bias_scale = 1.0;

  std::size_t num_calibration = 200;
  std::size_t num_normal = 600;  // each normal prompt also gets one synonym
  std::size_t num_invalid = 100;
  std::size_t num_jailbreak_success = 150;
  std::size_t num_jailbreak_fail = 150;

  /// ValidationError unless 0 <= boundary_fraction <= 1, jitter < cluster_spread and shapes agree.
  void validate() const;
  std::vector<int> layers() const;
};

nlohmann::json to_json(const WorldParams& params);
/// Missing keys keep their defaults.
WorldParams parse_world_params(const nlohmann::json& j);
WorldParams load_world_params(const std::filesystem::path& file);

using Warn = std::function<void(std::string_view)>;

/// Deterministic labelled dump for the given parameters. Synonym prompts record
/// their parent as source "synonym-of:<id>". A supplied invalid_offset with a
/// component inside the concept span is projected out and reported through warn.
ActivationDump generate_world(const WorldParams& params, const Warn& warn = {});

/// Parent id of a synonym prompt, empty for any other prompt.
std::string synonym_parent(const PromptMeta& meta);

enum class SuiteKind { p, e, rs, ri, ja, rs_star, ri_star, ja_star };
inline constexpr std::array<SuiteKind, 8> kAllSuiteKinds{SuiteKind::p,  SuiteKind::e,       SuiteKind::rs,
                                                          SuiteKind::ri, SuiteKind::ja,      SuiteKind::rs_star,
                                                          SuiteKind::ri_star, SuiteKind::ja_star};
/// "S_P", "S_E", "S_RS", ..., "S*_JA".
std::string_view name_of(SuiteKind kind);
SuiteKind parse_suite_kind(std::string_view name);

struct SuiteFamily {
  TestSuite s_p, s_e, s_rs, s_ri, s_ja, s_rs_star, s_ri_star, s_ja_star;
  std::size_t size_base = 0;
  std::size_t n_extra = 0;

  const TestSuite& get(SuiteKind kind) const;
  TestSuite& get(SuiteKind kind);
};

/// s_p samples normal prompts that have a synonym in the dump. Additive variants
/// append n_extra prompts (fresh normals, synonyms of s_p members, invalid,
/// jailbreak successes). Replacement variants drop the same n_extra members of
/// s_p and fill in invalid prompts, jailbreak successes, or synonyms of members
/// that were kept.
SuiteFamily build_suite_family(const ActivationDump& dump, std::size_t size_base, std::size_t n_extra,
                               std::uint64_t seed);

struct TendencyCheck {
  std::string name;  // e.g. "S*_JA>S_P" or "S_RI~S_P"
  bool approx = false;
  double lhs = 0.0;
  double rhs = 0.0;
  bool strict = false;   // lhs > rhs, or the approx clause for approx checks
  bool relaxed = false;  // lhs >= rhs - tol * |s(S_P)|, or the approx clause
};

struct TendencyResult {
  Criterion criterion = Criterion::sfc;
  std::vector<TendencyCheck> checks;

  bool strict_pass() const;
  bool relaxed_pass() const;
};

using FamilyValues = std::map<SuiteKind, CriterionValues>;

/// Evaluates s(S*_JA) > s(S_P) > {s(S*_RI), s(S*_RS)} and
/// s(S_JA) > s(S_E) > {s(S_RI), s(S_RS)} ~ s(S_P). ValidationError when a suite is missing.
TendencyResult check_tendencies(const FamilyValues& values, Criterion criterion, double tol_approx = 0.1);

/// Whole-family verdict: every RACA criterion passes relaxed, at least min_strict pass strictly.
/// Criteria in exempt are ignored.
bool tendencies_hold(std::span<const TendencyResult> results, std::size_t min_strict,
                     std::span<const Criterion> exempt = {});

FamilyValues evaluate_family(const ConceptSpace& space, const ActivationDump& dump, const SuiteFamily& family,
                             const CoverageConfig& cfg);

struct FilterResult {
  std::vector<std::string> accepted;
  std::vector<double> gains;  // metric gain of every pool candidate, in pool order
};

/// Streams the pool in order and accepts a candidate iff the ensemble gain of
/// current + accepted + candidate over current + accepted exceeds tau.
FilterResult prioritize(const ConceptSpace& space, const ActivationDump& dump, const CoverageConfig& cfg,
                        const TestSuite& current, std::span<const std::string> pool, EnsembleMetric metric,
                        double tau);

struct AttackSample {
  FilterResult filter;
  double asr = 0.0;  // accepted jailbreak successes over accepted; 0 when nothing is accepted
};

AttackSample attack_sample(const ConceptSpace& space, const ActivationDump& dump, const CoverageConfig& cfg,
                           const TestSuite& current, std::span<const std::string> pool, EnsembleMetric metric,
                           double tau);

/// Fraction of accepted ids carrying the label.
double label_share(const ActivationDump& dump, std::span<const std::string> ids, PromptLabel label);

struct Rq2Setup {
  TestSuite base;                       // existing normal prompts
  std::vector<std::string> prior_pool;  // normal / synonym-of-base / invalid mix
  std::vector<std::string> attack_pool; // jailbreak success / fail mix
};

/// Base of base_size normal prompts; a prioritization pool of pool_size candidates
/// split 50/40/10 between fresh normals, synonyms of base members and invalid
/// prompts; an attack pool of attack_size candidates split 50/50. Pools are shuffled.
Rq2Setup build_rq2_setup(const ActivationDump& dump, std::size_t base_size, std::size_t pool_size,
                         std::size_t attack_size, std::uint64_t seed);

/// Suite and pool sizes that go with the frozen world.
struct ExperimentSizes {
  std::size_t size_base = 100;
  std::size_t n_extra = 10;
  std::size_t rq2_base = 100;
  std::size_t rq2_pool = 250;
  std::size_t rq2_attack = 100;
};

struct SweepGrid {
  std::vector<double> epsilon_sfc{3.0, 5.0, 8.0};
  std::vector<double> topk{1, 2, 5};
  std::vector<double> bins{5, 10, 20};
  std::vector<double> clusters{16, 32, 64};
  std::vector<double> epsilon_pcc{1.5, 2.5, 4.0};
  std::vector<double> delta{4.0, 8.0, 16.0};
};

SweepGrid parse_sweep_grid(const nlohmann::json& j);

struct SweepPoint {
  std::string param;
  double value = 0.0;
  std::vector<TendencyResult> results;  // RACA criteria
};

/// One-at-a-time sweep from the defaults in fit/cfg. Cluster values refit the concept space.
std::vector<SweepPoint> sensitivity_sweep(const ActivationDump& dump, const SuiteFamily& family,
                                          const FitParams& fit, const CoverageConfig& cfg, const SweepGrid& grid,
                                          double tol_approx = 0.1);

/// CSV with header param,value,criterion,chain,passed. Each check reports its strict
/// outcome; chain "relaxed" and "strict" rows summarise the criterion.
std::string sweep_csv(std::span<const SweepPoint> points);

}  // namespace raca
