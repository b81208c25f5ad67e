#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>

#include "raca/activation_store.hpp"
#include "raca/io_util.hpp"

namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

const fs::path& workdir() {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / ("raca-cli-" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

Run cli(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  const auto stem = workdir() / ("call" + std::to_string(counter++));
  const std::string cmd = env + "'" + std::string(RACA_CLI) + "' " + args + " > '" + stem.string() + ".out' 2> '" +
                          stem.string() + ".err'";
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = slurp(stem.string() + ".out");
  r.err = slurp(stem.string() + ".err");
  return r;
}

void check_golden(const std::string& name, const std::string& actual) {
  const fs::path file = fs::path(RACA_GOLDEN_DIR) / name;
  if (std::getenv("RACA_UPDATE_GOLDEN")) {
    std::ofstream(file, std::ios::binary) << actual;
    return;
  }
  REQUIRE_MESSAGE(fs::exists(file), "missing golden file " << file);
  CHECK(actual == slurp(file));
}

// synth + calibrate on the frozen seed, once per test binary.
const fs::path& world() {
  static const fs::path dir = [] {
    const auto d = workdir() / "world";
    REQUIRE(cli("synth --seed 3 --out " + d.string()).code == 0);
    REQUIRE(cli("calibrate --dump " + d.string() + "/dump --seed 3 --out " + d.string() + "/space").code == 0);
    return d;
  }();
  return dir;
}

std::string common() { return " --space " + world().string() + "/space --dump " + world().string() + "/dump"; }
std::string suite(const std::string& stem) { return world().string() + "/suites/" + stem + ".json"; }

}  // namespace

TEST_CASE("usage errors exit 1 and help exits 0") {
  CHECK(cli("").code == 1);
  CHECK(cli("frobnicate").code == 1);
  CHECK(cli("synth --out x").code == 1);  // --seed is required
  CHECK(cli("cover --topk notanumber").code == 1);
  CHECK(cli("--help").code == 0);
  CHECK(cli("cover --help").code == 0);
}

TEST_CASE("synth is deterministic and writes the frozen world") {
  const auto a = workdir() / "synth-a", b = workdir() / "synth-b";
  REQUIRE(cli("synth --seed 3 --out " + a.string()).code == 0);
  REQUIRE(cli("--threads 2 synth --seed 3 --out " + b.string()).code == 0);
  for (const char* f : {"dump/tensor.bin", "dump/manifest.json", "world.json", "suites/s_p.json",
                        "suites/s_ja_star.json", "rq2/base.json", "rq2/prior_pool.json", "rq2/attack_pool.json"}) {
    INFO(f);
    REQUIRE(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  const auto frozen = raca::parse_json_file(fs::path(RACA_DATA_DIR) / "frozen_world.json");
  CHECK(raca::parse_json_file(a / "world.json") == frozen);
  CHECK(raca::read_suite(a / "rq2/prior_pool.json").members.size() == 250);
}

TEST_CASE("calibrate") {
  const auto w = world();
  const auto again = workdir() / "space-again";
  const auto r = cli("calibrate --dump " + w.string() + "/dump --seed 3 --out " + again.string());
  CHECK(r.code == 0);
  CHECK(r.out.starts_with("layer"));
  for (const char* f : {"space.json", "components.bin", "centroids.bin"}) {
    CHECK(slurp(w / "space" / f) == slurp(again / f));
  }
  const auto too_many = cli("calibrate --dump " + w.string() + "/dump --seed 3 --n 500 --out " +
                             (workdir() / "bad-space").string());
  CHECK(too_many.code == 1);
  CHECK(too_many.err.find("rank") != std::string::npos);
  CHECK(cli("calibrate --dump " + (workdir() / "nowhere").string() + " --seed 3 --out x").code == 1);
}

TEST_CASE("cover") {
  const auto r = cli("cover" + common() + " --suite " + suite("s_ja") + " --base " + suite("s_p"));
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("kind") == "coverage");
  CHECK(j.at("suite") == "S_JA");
  CHECK(j.at("size") == 110);
  CHECK(j.at("baseline_suite") == "S_P");
  CHECK(j.at("values").size() == 11);
  CHECK(j.at("gains").at("ensembles").contains("er"));
  CHECK(j.at("timestamp") == "");

  check_golden("cover_s_ja.csv", cli("cover" + common() + " --suite " + suite("s_ja") + " --base " + suite("s_p") +
                                      " --format csv")
                                     .out);

  const auto empty = workdir() / "empty.json";
  raca::write_suite(raca::TestSuite{"empty", {}, false}, empty);
  const auto e = cli("cover" + common() + " --suite " + empty.string());
  CHECK(e.code == 0);
  CHECK(e.err.find("CBC undefined") != std::string::npos);
  CHECK(nlohmann::json::parse(e.out).at("cbc_undefined") == true);

  const auto unknown = workdir() / "unknown.json";
  raca::write_suite(raca::TestSuite{"u", {"no-such-prompt"}, false}, unknown);
  CHECK(cli("cover" + common() + " --suite " + unknown.string()).code == 1);

  // Scoring anything against an empty base flags absolute gains.
  CHECK(cli("cover" + common() + " --suite " + suite("s_p") + " --base " + empty.string()).code == 2);
  CHECK(cli("compare" + common() + " --base " + empty.string() + " --target " + suite("s_p")).code == 2);
}

TEST_CASE("compare") {
  std::string targets;
  for (const char* s : {"s_e", "s_rs", "s_ri", "s_ja", "s_rs_star", "s_ri_star", "s_ja_star"}) {
    targets += " --target " + suite(s);
  }
  const auto table = cli("compare" + common() + " --base " + suite("s_p") + targets);
  REQUIRE(table.code == 0);
  check_golden("compare_family.txt", table.out);

  const auto j = cli("compare" + common() + " --base " + suite("s_p") + targets + " --format json");
  REQUIRE(j.code == 0);
  const auto doc = nlohmann::json::parse(j.out);
  CHECK(doc.at("base").at("suite") == "S_P");
  CHECK(doc.at("targets").size() == 7);

  const auto csv = cli("compare" + common() + " --base " + suite("s_p") + " --target " + suite("s_e") +
                        " --target " + suite("s_ja") + " --format csv");
  CHECK(csv.out.starts_with("# S_E\ncriterion,value,gain_pct\n"));
  CHECK(cli("compare" + common() + " --base " + suite("s_p")).code == 1);
}

TEST_CASE("check holds on the frozen family") {
  const auto r = cli("check" + common() + " --suites " + world().string() + "/suites");
  CHECK(r.code == 0);
  CHECK(r.out.find("tendencies hold") != std::string::npos);
  const auto j = cli("check" + common() + " --suites " + world().string() + "/suites --format json");
  CHECK(j.code == 0);
  CHECK(nlohmann::json::parse(j.out).at("hold") == true);
  // With no tolerance the ~ clauses cannot hold.
  CHECK(cli("check" + common() + " --suites " + world().string() + "/suites --min-strict 7 --tol 0").code == 1);
}

TEST_CASE("prioritize and attack-sample") {
  const std::string pools = " --current " + world().string() + "/rq2/base.json --pool ";
  const auto r = cli("prioritize" + common() + pools + world().string() + "/rq2/prior_pool.json");
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("metric") == "er");
  CHECK(j.at("tau") == 0.01);
  CHECK(j.at("pool_size") == 250);
  CHECK(j.at("gains").size() == 250);
  CHECK(j.at("accepted_count") == j.at("accepted").size());
  CHECK(j.at("label_shares").size() == 6);

  const auto en = nlohmann::json::parse(
      cli("prioritize" + common() + pools + world().string() + "/rq2/prior_pool.json --metric en").out);
  CHECK(en.at("tau") == 0.0005);

  const auto none = cli("prioritize" + common() + pools + world().string() + "/rq2/prior_pool.json --tau 1e9");
  CHECK(nlohmann::json::parse(none.out).at("accepted_count") == 0);

  const auto accepted = workdir() / "accepted.json";
  const auto atk = cli("attack-sample" + common() + pools + world().string() + "/rq2/attack_pool.json --accepted-out " +
                        accepted.string());
  REQUIRE(atk.code == 0);
  const auto a = nlohmann::json::parse(atk.out);
  CHECK(a.contains("asr"));
  CHECK(raca::read_suite(accepted).members == a.at("accepted").get<std::vector<std::string>>());
  CHECK(cli("prioritize" + common() + pools + world().string() + "/rq2/prior_pool.json --metric xx").code == 1);
}

TEST_CASE("sweep writes a csv") {
  const auto grid = workdir() / "grid.json";
  std::ofstream(grid) << R"({"epsilon_sfc":[5],"topk":[2],"bins":[10],"clusters":[32],"epsilon_pcc":[2.5],"delta":[8]})";
  const auto r = cli("sweep" + common() + " --suites " + world().string() + "/suites --grid " + grid.string());
  CHECK(r.code == 0);
  CHECK(r.out.starts_with("param,value,criterion,chain,passed\n"));
}

TEST_CASE("criteria flags override the config file which overrides defaults") {
  const auto cfg = workdir() / "cfg.json";
  std::ofstream(cfg) << R"({"individual":{"topk":3,"bins":12},"compositional":{"delta":6.0}})";
  const auto r = cli("cover --config " + cfg.string() + " --bins 7 --show-config");
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("individual").at("topk") == 3);
  CHECK(j.at("individual").at("bins") == 7);
  CHECK(j.at("individual").at("epsilon_sfc") == 5.0);
  CHECK(j.at("compositional").at("delta") == 6.0);
  CHECK(j.at("compositional").at("epsilon_pcc") == 2.5);
  CHECK(j.at("baseline").at("tknc_k") == 10);

  const auto defaults = nlohmann::json::parse(cli("compare --show-config").out);
  CHECK(defaults.at("individual").at("topk") == 2);
  CHECK(cli("cover --config " + (workdir() / "missing.json").string() + " --show-config").code == 1);
}

TEST_CASE("thread count does not change results") {
  const std::string args = "cover" + common() + " --suite " + suite("s_ri_star") + " --base " + suite("s_p");
  const auto one = cli("--threads 1 " + args);
  const auto many = cli("--threads 4 " + args);
  const auto env = cli(args, "RACA_THREADS=3 ");
  CHECK(one.code == 0);
  CHECK(one.out == many.out);
  CHECK(one.out == env.out);
}
