// raca: command-line front end for dumps, concept spaces, coverage reports and the suite lab.
//
// stdout carries the requested report only; everything else goes to stderr.
// Exit codes: 0 ok, 1 usage or validation failure, 2 a gain hit a zero baseline.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "raca/activation_store.hpp"
#include "raca/concept_space.hpp"
#include "raca/config.hpp"
#include "raca/coverage.hpp"
#include "raca/error.hpp"
#include "raca/io_util.hpp"
#include "raca/parallel.hpp"
#include "raca/report.hpp"
#include "raca/suite_lab.hpp"

namespace fs = std::filesystem;
using namespace raca;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitZeroBaseline = 2;

// Criterion flags. Each one only overrides the config file when given.
struct CriteriaFlags {
  std::string config_file;
  bool show_config = false;
  double epsilon_sfc = 0, epsilon_pcc = 0, delta = 0, nc_threshold = 0, tfc_threshold = 0;
  std::size_t topk = 0, bins = 0, tknc_k = 0, tknp_k = 0;
  std::map<std::string, CLI::Option*> opts;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "criteria config JSON (flags override it)");
    cmd->add_flag("--show-config", show_config, "print the effective criteria config and exit");
    opts["epsilon_sfc"] = cmd->add_option("--epsilon-sfc", epsilon_sfc, "SFC threshold (5.0)");
    opts["topk"] = cmd->add_option("--topk", topk, "TKFC k (2)");
    opts["bins"] = cmd->add_option("--bins", bins, "FIC bins (10)");
    opts["epsilon_pcc"] = cmd->add_option("--epsilon-pcc", epsilon_pcc, "PCC threshold (2.5)");
    opts["delta"] = cmd->add_option("--delta", delta, "CBC boundary distance (8.0)");
    opts["nc_threshold"] = cmd->add_option("--nc-threshold", nc_threshold, "NC threshold (0.25)");
    opts["tknc_k"] = cmd->add_option("--tknc-k", tknc_k, "TKNC k (10)");
    opts["tknp_k"] = cmd->add_option("--tknp-k", tknp_k, "TKNP k (1)");
    opts["tfc_threshold"] = cmd->add_option("--tfc-threshold", tfc_threshold, "TFC radius (50)");
  }

  bool given(const std::string& key) const { return opts.at(key)->count() > 0; }

  CoverageConfig resolve() const {
    CoverageConfig cfg;
    if (!config_file.empty()) cfg = load_config(config_file);
    if (given("epsilon_sfc")) cfg.individual.epsilon_sfc = epsilon_sfc;
    if (given("topk")) cfg.individual.topk = topk;
    if (given("bins")) cfg.individual.bins = bins;
    if (given("epsilon_pcc")) cfg.compositional.epsilon_pcc = epsilon_pcc;
    if (given("delta")) cfg.compositional.delta = delta;
    if (given("nc_threshold")) cfg.baseline.nc_threshold = nc_threshold;
    if (given("tknc_k")) cfg.baseline.tknc_k = tknc_k;
    if (given("tknp_k")) cfg.baseline.tknp_k = tknp_k;
    if (given("tfc_threshold")) cfg.baseline.tfc_threshold = tfc_threshold;
    return cfg;
  }
};

// Output goes to --out when given, stdout otherwise.
void emit(const std::string& text, const std::string& out) {
  if (out.empty()) {
    std::fwrite(text.data(), 1, text.size(), stdout);
    std::fflush(stdout);
  } else {
    write_text_file(out, text);
  }
}

std::string suite_stem(SuiteKind kind) {
  switch (kind) {
    case SuiteKind::p: return "s_p";
    case SuiteKind::e: return "s_e";
    case SuiteKind::rs: return "s_rs";
    case SuiteKind::ri: return "s_ri";
    case SuiteKind::ja: return "s_ja";
    case SuiteKind::rs_star: return "s_rs_star";
    case SuiteKind::ri_star: return "s_ri_star";
    case SuiteKind::ja_star: return "s_ja_star";
  }
  return {};
}

SuiteFamily read_family(const fs::path& dir) {
  SuiteFamily family;
  for (SuiteKind k : kAllSuiteKinds) family.get(k) = read_suite(dir / (suite_stem(k) + ".json"));
  family.size_base = family.s_p.size();
  family.n_extra = family.s_e.size() - family.s_p.size();
  return family;
}

json label_shares(const ActivationDump& dump, const std::vector<std::string>& ids) {
  json j = json::object();
  for (auto label : {PromptLabel::normal, PromptLabel::synonym, PromptLabel::invalid,
                     PromptLabel::jailbreak_success, PromptLabel::jailbreak_fail, PromptLabel::calibration}) {
    j[std::string(to_string(label))] = label_share(dump, ids, label);
  }
  return j;
}

std::string tendency_table(const std::vector<TendencyResult>& results) {
  std::ostringstream os;
  for (const auto& r : results) {
    os << name_of(r.criterion) << "  strict=" << (r.strict_pass() ? "pass" : "fail")
       << " relaxed=" << (r.relaxed_pass() ? "pass" : "fail") << '\n';
    for (const auto& c : r.checks) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "  %-12s %.6f vs %.6f  %s\n", c.name.c_str(), c.lhs, c.rhs,
                    c.strict ? "ok" : (c.relaxed ? "within tol" : "FAIL"));
      os << buf;
    }
  }
  return os.str();
}

json tendency_json(const std::vector<TendencyResult>& results, bool hold) {
  json j;
  j["hold"] = hold;
  j["criteria"] = json::array();
  for (const auto& r : results) {
    json c;
    c["criterion"] = name_of(r.criterion);
    c["strict"] = r.strict_pass();
    c["relaxed"] = r.relaxed_pass();
    c["checks"] = json::array();
    for (const auto& ch : r.checks) {
      c["checks"].push_back({{"name", ch.name}, {"approx", ch.approx}, {"lhs", ch.lhs}, {"rhs", ch.rhs},
                             {"strict", ch.strict}, {"relaxed", ch.relaxed}});
    }
    j["criteria"].push_back(std::move(c));
  }
  return j;
}

double default_tau(EnsembleMetric m) { return m == EnsembleMetric::en ? 0.0005 : 0.01; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Representation-aware coverage analysis for LLM safety test suites"};
  app.require_subcommand(1);

  std::size_t threads = 0;
  auto* threads_opt = app.add_option("--threads", threads, "worker cap (default: RACA_THREADS or all cores)");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic world, its suite family and prioritization pools");
  std::string synth_world, synth_out;
  std::uint64_t synth_seed = 0;
  ExperimentSizes sizes;
  synth->add_option("--world", synth_world, "world parameter JSON (missing keys keep defaults)");
  synth->add_option("--seed", synth_seed, "world and suite seed")->required();
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--size-base", sizes.size_base, "size of S_P");
  synth->add_option("--n-extra", sizes.n_extra, "prompts added or replaced per variant");
  synth->add_option("--rq2-base", sizes.rq2_base, "existing suite for prioritization");
  synth->add_option("--rq2-pool", sizes.rq2_pool, "prioritization pool size (50/40/10)");
  synth->add_option("--attack-pool", sizes.rq2_attack, "attack pool size (50/50)");

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "fit the concept space on calibration prompts");
  std::string cal_dump, cal_out;
  FitParams fit;
  calibrate->add_option("--dump", cal_dump, "activation dump directory")->required();
  calibrate->add_option("--n", fit.n, "principal directions per layer");
  calibrate->add_option("--clusters", fit.clusters, "K-Means centroids");
  calibrate->add_option("--seed", fit.seed, "K-Means seed")->required();
  calibrate->add_option("--max-iters", fit.kmeans_max_iters, "K-Means iteration cap");
  calibrate->add_option("--tol", fit.kmeans_tol, "K-Means centroid shift tolerance");
  calibrate->add_option("--out", cal_out, "space directory")->required();

  // cover
  auto* cover_cmd = app.add_subcommand("cover", "coverage report for one suite");
  std::string cov_space, cov_dump, cov_suite, cov_base, cov_format = "json", cov_out;
  CriteriaFlags cov_flags;
  cover_cmd->add_option("--space", cov_space, "space directory");
  cover_cmd->add_option("--dump", cov_dump, "activation dump directory");
  cover_cmd->add_option("--suite", cov_suite, "suite JSON");
  cover_cmd->add_option("--base", cov_base, "baseline suite JSON for gains");
  cover_cmd->add_option("--format", cov_format, "json, csv or table");
  cover_cmd->add_option("--out", cov_out, "write the report here instead of stdout");
  cov_flags.attach(cover_cmd);

  // compare
  auto* compare = app.add_subcommand("compare", "gains of target suites over a base suite");
  std::string cmp_space, cmp_dump, cmp_base, cmp_format = "table", cmp_out;
  std::vector<std::string> cmp_targets;
  CriteriaFlags cmp_flags;
  compare->add_option("--space", cmp_space, "space directory");
  compare->add_option("--dump", cmp_dump, "activation dump directory");
  compare->add_option("--base", cmp_base, "baseline suite JSON");
  compare->add_option("--target", cmp_targets, "target suite JSON (repeatable)");
  compare->add_option("--format", cmp_format, "table, json or csv");
  compare->add_option("--out", cmp_out, "write the report here instead of stdout");
  cmp_flags.attach(compare);

  // check
  auto* check = app.add_subcommand("check", "expected-tendency chains over a suite family");
  std::string chk_space, chk_dump, chk_suites, chk_format = "table", chk_out;
  double chk_tol = 0.1;
  std::size_t chk_min_strict = 5;
  CriteriaFlags chk_flags;
  check->add_option("--space", chk_space, "space directory");
  check->add_option("--dump", chk_dump, "activation dump directory");
  check->add_option("--suites", chk_suites, "directory holding s_p.json ... s_ja_star.json");
  check->add_option("--tol", chk_tol, "relative tolerance of the ~ clause");
  check->add_option("--min-strict", chk_min_strict, "criteria that must pass every strict inequality");
  check->add_option("--format", chk_format, "table or json");
  check->add_option("--out", chk_out, "write the report here instead of stdout");
  chk_flags.attach(check);

  // prioritize / attack-sample share their flags
  struct FilterFlags {
    std::string space, dump, current, pool, metric = "er", format = "json", out, accepted_out;
    double tau = 0;
    CLI::Option* tau_opt = nullptr;
    CriteriaFlags criteria;
  };
  FilterFlags prio_flags, atk_flags;
  auto attach_filter = [](CLI::App* cmd, FilterFlags& f) {
    cmd->add_option("--space", f.space, "space directory");
    cmd->add_option("--dump", f.dump, "activation dump directory");
    cmd->add_option("--current", f.current, "suite the candidates are added to");
    cmd->add_option("--pool", f.pool, "candidate pool as a suite JSON, streamed in order");
    cmd->add_option("--metric", f.metric, "ei, ec, er or en");
    f.tau_opt = cmd->add_option("--tau", f.tau, "acceptance threshold (0.01, or 0.0005 for en)");
    cmd->add_option("--format", f.format, "json or table");
    cmd->add_option("--out", f.out, "write the report here instead of stdout");
    cmd->add_option("--accepted-out", f.accepted_out, "write the accepted prompts as a suite JSON");
    f.criteria.attach(cmd);
  };
  auto* prio = app.add_subcommand("prioritize", "threshold filter over a candidate pool");
  attach_filter(prio, prio_flags);
  auto* atk = app.add_subcommand("attack-sample", "threshold filter over jailbreak candidates, with ASR");
  attach_filter(atk, atk_flags);

  // sweep
  auto* sweep = app.add_subcommand("sweep", "one-at-a-time parameter sensitivity of the tendency chains");
  std::string swp_space, swp_dump, swp_suites, swp_grid, swp_out;
  double swp_tol = 0.1;
  CriteriaFlags swp_flags;
  sweep->add_option("--space", swp_space, "space directory (its fit parameters are reused)");
  sweep->add_option("--dump", swp_dump, "activation dump directory with calibration prompts");
  sweep->add_option("--suites", swp_suites, "directory holding s_p.json ... s_ja_star.json");
  sweep->add_option("--grid", swp_grid, "grid JSON (defaults: 3 values per parameter)");
  sweep->add_option("--tol", swp_tol, "relative tolerance of the ~ clause");
  sweep->add_option("--out", swp_out, "CSV file instead of stdout");
  swp_flags.attach(sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  auto need = [](const std::string& value, const char* flag) {
    if (value.empty()) throw ValidationError(std::string("missing required option ") + flag);
  };
  auto show = [](const CriteriaFlags& f) {
    if (!f.show_config) return false;
    std::cout << to_json(f.resolve()).dump(2) << '\n';
    return true;
  };

  try {
    if (threads_opt->count() > 0) {
      set_thread_count(threads);
    } else if (const char* env = std::getenv("RACA_THREADS")) {
      set_thread_count(std::stoul(env));
    }

    if (*synth) {
      WorldParams params = synth_world.empty() ? WorldParams{} : load_world_params(synth_world);
      params.seed = synth_seed;
      auto dump = generate_world(params, [](std::string_view w) { std::cerr << "warning: " << w << '\n'; });
      const fs::path out = synth_out;
      fs::create_directories(out / "suites");
      fs::create_directories(out / "rq2");
      write_dump(dump, out / "dump");
      write_text_file(out / "world.json", to_json(params).dump(2) + "\n");
      const auto family = build_suite_family(dump, sizes.size_base, sizes.n_extra, synth_seed);
      for (SuiteKind k : kAllSuiteKinds) write_suite(family.get(k), out / "suites" / (suite_stem(k) + ".json"));
      const auto rq2 = build_rq2_setup(dump, sizes.rq2_base, sizes.rq2_pool, sizes.rq2_attack, synth_seed);
      write_suite(rq2.base, out / "rq2" / "base.json");
      write_suite(TestSuite{"prior_pool", rq2.prior_pool, false}, out / "rq2" / "prior_pool.json");
      write_suite(TestSuite{"attack_pool", rq2.attack_pool, false}, out / "rq2" / "attack_pool.json");
      std::cerr << "wrote " << dump.num_prompts() << " prompts x " << dump.num_layers() << " layers x "
                << dump.d_model() << " to " << out.string() << '\n';
      return kExitOk;
    }

    if (*calibrate) {
      const auto dump = read_dump(cal_dump);
      const auto space = fit_concept_space(dump, fit);
      save_space(space, cal_out);
      std::ostringstream os;
      os << "layer  n    explained_sum  first          last\n";
      for (const auto& l : space.layers()) {
        double total = 0.0;
        for (double v : l.explained_variance) total += v;
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-5d  %-4zu %-14.6g %-14.6g %.6g\n", l.layer, l.n(), total,
                      l.explained_variance.front(), l.explained_variance.back());
        os << buf;
      }
      emit(os.str(), "");
      return kExitOk;
    }

    if (*cover_cmd) {
      if (show(cov_flags)) return kExitOk;
      need(cov_space, "--space");
      need(cov_dump, "--dump");
      need(cov_suite, "--suite");
      const auto cfg = cov_flags.resolve();
      const auto space = load_space(cov_space);
      const auto dump = read_dump(cov_dump);
      auto report = cover(space, dump, read_suite(cov_suite), cfg);
      if (report.cbc_undefined) std::cerr << "warning: CBC undefined on an empty suite, reported as 0\n";
      if (!cov_base.empty()) {
        const auto base = cover(space, dump, read_suite(cov_base), cfg);
        report.baseline_suite = base.suite_name;
        report.gains = compare_values(base.values, report.values);
      }
      emit(emit_report(report, parse_format(cov_format)), cov_out);
      if (report.gains && report.gains->zero_baseline()) {
        std::cerr << "zero baseline: some gains are absolute differences\n";
        return kExitZeroBaseline;
      }
      return kExitOk;
    }

    if (*compare) {
      if (show(cmp_flags)) return kExitOk;
      need(cmp_space, "--space");
      need(cmp_dump, "--dump");
      need(cmp_base, "--base");
      if (cmp_targets.empty()) throw ValidationError("missing required option --target");
      const auto cfg = cmp_flags.resolve();
      const auto space = load_space(cmp_space);
      const auto dump = read_dump(cmp_dump);
      const auto base = cover(space, dump, read_suite(cmp_base), cfg);
      std::vector<GainReport> gains;
      bool zero = false;
      for (const auto& t : cmp_targets) {
        gains.push_back(make_gain_report(base, cover(space, dump, read_suite(t), cfg)));
        zero = zero || gains.back().gains.zero_baseline();
      }
      const auto format = parse_format(cmp_format);
      std::string text;
      if (format == ReportFormat::table) {
        text = emit_comparison_table(base, gains);
      } else if (format == ReportFormat::json) {
        json j;
        j["base"] = to_json(base);
        j["targets"] = json::array();
        for (const auto& g : gains) j["targets"].push_back(to_json(g));
        text = j.dump(2) + "\n";
      } else {
        for (const auto& g : gains) {
          if (gains.size() > 1) text += "# " + g.target_suite + "\n";
          text += emit_report(g, ReportFormat::csv);
        }
      }
      emit(text, cmp_out);
      if (zero) {
        std::cerr << "zero baseline: some gains are absolute differences\n";
        return kExitZeroBaseline;
      }
      return kExitOk;
    }

    if (*check) {
      if (show(chk_flags)) return kExitOk;
      need(chk_space, "--space");
      need(chk_dump, "--dump");
      need(chk_suites, "--suites");
      const auto cfg = chk_flags.resolve();
      const auto space = load_space(chk_space);
      const auto dump = read_dump(chk_dump);
      const auto values = evaluate_family(space, dump, read_family(chk_suites), cfg);
      std::vector<TendencyResult> results;
      for (Criterion c : kRacaCriteria) results.push_back(check_tendencies(values, c, chk_tol));
      const bool hold = tendencies_hold(results, chk_min_strict);
      if (chk_format == "json") {
        emit(tendency_json(results, hold).dump(2) + "\n", chk_out);
      } else if (chk_format == "table") {
        emit(tendency_table(results) + (hold ? "tendencies hold\n" : "tendencies do not hold\n"), chk_out);
      } else {
        throw ValidationError("check supports --format table or json");
      }
      return hold ? kExitOk : kExitInvalid;
    }

    if (prio->parsed() || atk->parsed()) {
      const bool attack = atk->parsed();
      const FilterFlags& f = attack ? atk_flags : prio_flags;
      if (show(f.criteria)) return kExitOk;
      need(f.space, "--space");
      need(f.dump, "--dump");
      need(f.current, "--current");
      need(f.pool, "--pool");
      const auto cfg = f.criteria.resolve();
      const auto metric = parse_metric(f.metric);
      const double tau = f.tau_opt->count() > 0 ? f.tau : default_tau(metric);
      const auto space = load_space(f.space);
      const auto dump = read_dump(f.dump);
      const auto current = read_suite(f.current);
      const auto pool = read_suite(f.pool);
      FilterResult filter;
      std::optional<double> asr;
      if (attack) {
        auto sample = attack_sample(space, dump, cfg, current, pool.members, metric, tau);
        filter = std::move(sample.filter);
        asr = sample.asr;
      } else {
        filter = prioritize(space, dump, cfg, current, pool.members, metric, tau);
      }
      if (!f.accepted_out.empty()) {
        write_suite(TestSuite{pool.name + "-accepted-" + f.metric, filter.accepted, false}, f.accepted_out);
      }
      json j;
      j["metric"] = name_of(metric);
      j["tau"] = tau;
      j["pool_size"] = pool.size();
      j["accepted_count"] = filter.accepted.size();
      j["accepted"] = filter.accepted;
      j["label_shares"] = label_shares(dump, filter.accepted);
      if (asr) j["asr"] = *asr;
      j["gains"] = filter.gains;
      if (f.format == "json") {
        emit(j.dump(2) + "\n", f.out);
      } else if (f.format == "table") {
        std::ostringstream os;
        os << "metric " << name_of(metric) << "  tau " << tau << "  accepted " << filter.accepted.size() << " of "
           << pool.size() << '\n';
        for (auto& [label, share] : j["label_shares"].items()) {
          char buf[96];
          std::snprintf(buf, sizeof buf, "  %-18s %.4f\n", label.c_str(), share.get<double>());
          os << buf;
        }
        if (asr) {
          char buf[64];
          std::snprintf(buf, sizeof buf, "asr %.4f\n", *asr);
          os << buf;
        }
        emit(os.str(), f.out);
      } else {
        throw ValidationError("filters support --format json or table");
      }
      return kExitOk;
    }

    if (*sweep) {
      if (show(swp_flags)) return kExitOk;
      need(swp_space, "--space");
      need(swp_dump, "--dump");
      need(swp_suites, "--suites");
      const auto cfg = swp_flags.resolve();
      const auto space = load_space(swp_space);
      const auto dump = read_dump(swp_dump);
      const SweepGrid grid = swp_grid.empty() ? SweepGrid{} : parse_sweep_grid(parse_json_file(swp_grid));
      const auto points = sensitivity_sweep(dump, read_family(swp_suites), space.params(), cfg, grid, swp_tol);
      for (const auto& p : points) {
        if (!tendencies_hold(p.results, 5)) std::cerr << "tendencies fail at " << p.param << "=" << p.value << '\n';
      }
      emit(sweep_csv(points), swp_out);
      return kExitOk;
    }
  } catch (const RankError& e) {
    std::cerr << "error: " << e.what() << " (achieved rank " << e.achieved_rank() << ")\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvalid;
  }
  return kExitOk;
}
