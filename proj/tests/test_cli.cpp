#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "stam/cli.hpp"
#include "stam/dataset.hpp"
#include "stam/search.hpp"

using namespace stam;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("stam_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("simulate writes files that round-trip, deterministically") {
  const fs::path dir = scratch("sim");
  const Run r = run({"simulate", "--out-dir", (dir / "a").string(), "--seed", "4"});
  REQUIRE(r.code == kExitOk);
  const std::string data = slurp(dir / "a" / "data.csv");
  CHECK(lines(data) == 11201);  // 10x10 areas, 7 periods, 16 strata, header
  CHECK(format_dataset_csv(parse_dataset_csv(data)) == data);
  CHECK(fs::exists(dir / "a" / "truth.json"));
  CHECK(fs::exists(dir / "a" / "adjacency.txt"));

  REQUIRE(run({"simulate", "--out-dir", (dir / "b").string(), "--seed", "4"}).code == kExitOk);
  CHECK(slurp(dir / "b" / "data.csv") == data);
  CHECK(slurp(dir / "b" / "truth.json") == slurp(dir / "a" / "truth.json"));
}

TEST_CASE("input errors exit 1") {
  const fs::path dir = scratch("bad");
  CHECK(run({}).code == kExitInputError);
  CHECK(run({"fit", "--data", "x.csv"}).code == kExitInputError);
  CHECK(run({"simulate", "--grid", "3by3", "--out-dir", dir.string()}).code == kExitInputError);
  CHECK(run({"--help"}).code == kExitOk);

  spit(dir / "bad.csv", "area_id,period,observed,population\nA,1,0,1\n");
  const Run r = run({"check", "--data", (dir / "bad.csv").string(), "--out-dir", dir.string()});
  CHECK(r.code == kExitInputError);
  CHECK(r.err.find("line 1") != std::string::npos);
}

TEST_CASE("check: proportional data exits 0, violated data exits 2") {
  const fs::path dir = scratch("check");
  REQUIRE(run({"simulate", "--grid", "4x4", "--periods", "3", "--ages", "8", "--per-cell", "1e6", "--sigma-phi",
               "0.01", "--sigma-delta", "0.01", "--sigma-gamma", "0.01", "--sigma-z1", "0.01", "--sigma-z2", "0.01",
               "--out-dir", (dir / "ok").string()})
              .code == kExitOk);
  const Run ok = run({"check", "--data", (dir / "ok" / "data.csv").string(), "--adjacency",
                      (dir / "ok" / "adjacency.txt").string(), "--out-dir", (dir / "ok").string()});
  CHECK(ok.code == kExitOk);
  CHECK(ok.out.find("flagged 0") != std::string::npos);
  const std::string report = slurp(dir / "ok" / "proportionality_report.csv");
  CHECK(lines(report) == 1 + 16 * 3);
  CHECK(report.find(",1,1\n") == std::string::npos);  // no row is flagged

  REQUIRE(run({"simulate", "--grid", "4x4", "--periods", "3", "--ages", "8", "--violation", "2", "--out-dir",
               (dir / "bad").string()})
              .code == kExitOk);
  const Run bad = run({"check", "--data", (dir / "bad" / "data.csv").string(), "--out-dir", (dir / "bad").string()});
  CHECK(bad.code == kExitViolations);
  CHECK(slurp(dir / "bad" / "proportionality_report.csv").find(",1,1\n") != std::string::npos);
}

TEST_CASE("fit: rejected spec, byte-identical JSON, config precedence") {
  const fs::path dir = scratch("fit");
  REQUIRE(run({"simulate", "--grid", "3x3", "--periods", "3", "--ages", "3", "--out-dir", dir.string()}).code ==
          kExitOk);
  const std::string data = (dir / "data.csv").string(), adj = (dir / "adjacency.txt").string();

  const Run rejected = run({"fit", "--data", data, "--adjacency", adj, "--spec", "delta=-;gamma=-;z1=I;z2=-;z3=-",
                            "--out-dir", dir.string()});
  CHECK(rejected.code == kExitInputError);
  CHECK(rejected.err.find("requires") != std::string::npos);

  const std::vector<std::string> args = {"fit",    "--data",   data,  "--adjacency", adj,       "--spec",
                                         "delta=rw1;gamma=rw1;z1=II;z2=II;z3=-", "--seed", "5",
                                         "--draws", "300", "--out-dir"};
  auto with_dir = [&](const fs::path& out) {
    auto a = args;
    a.push_back(out.string());
    return a;
  };
  REQUIRE(run(with_dir(dir / "one")).code == kExitOk);
  REQUIRE(run(with_dir(dir / "two")).code == kExitOk);
  const std::string json = slurp(dir / "one" / "fit.json");
  CHECK(json == slurp(dir / "two" / "fit.json"));
  CHECK(slurp(dir / "one" / "effects_phi.csv") == slurp(dir / "two" / "effects_phi.csv"));
  const auto doc = nlohmann::json::parse(json);
  CHECK(doc["spec"] == "delta=rw1;gamma=rw1;z1=II;z2=II;z3=-");

  // config supplies the seed; a flag overrides it
  spit(dir / "cfg.json", R"({"fit": {"seed": 9, "draws": 300}})");
  const std::vector<std::string> base = {"fit", "--data", data, "--adjacency", adj, "--spec",
                                         "delta=rw1;gamma=rw1;z1=II;z2=II;z3=-", "--config",
                                         (dir / "cfg.json").string(), "--out-dir"};
  auto a9 = base;
  a9.push_back((dir / "cfg9").string());
  auto a5 = base;
  a5.push_back((dir / "cfg5").string());
  a5.push_back("--seed");
  a5.push_back("5");
  REQUIRE(run(a9).code == kExitOk);
  REQUIRE(run(a5).code == kExitOk);
  CHECK(slurp(dir / "cfg5" / "fit.json") == json);
  CHECK(slurp(dir / "cfg9" / "fit.json") != json);
}

TEST_CASE("search: specs file, resume, determinism") {
  const fs::path dir = scratch("search");
  REQUIRE(run({"simulate", "--grid", "3x3", "--periods", "3", "--ages", "3", "--out-dir", dir.string()}).code ==
          kExitOk);
  spit(dir / "specs.txt", "# three models\ndelta=rw1\ndelta=rw1;gamma=rw1\n\ndelta=iid;gamma=iid;z1=-;z2=I\n");
  const std::vector<std::string> args = {"search", "--data", (dir / "data.csv").string(), "--adjacency",
                                         (dir / "adjacency.txt").string(), "--specs-file",
                                         (dir / "specs.txt").string(), "--draws", "200", "--seed", "3", "--out-dir"};
  auto in = [&](const fs::path& out) {
    auto a = args;
    a.push_back(out.string());
    return a;
  };
  REQUIRE(run(in(dir / "one")).code == kExitOk);
  REQUIRE(run(in(dir / "two")).code == kExitOk);
  const auto one = parse_results_csv(slurp(dir / "one" / "search_results.csv"));
  const auto two = parse_results_csv(slurp(dir / "two" / "search_results.csv"));
  REQUIRE(one.size() == 3u);
  for (std::size_t i = 0; i < 3; ++i) CHECK(one[i].waic == two[i].waic);
  CHECK(lines(slurp(dir / "one" / "search_summary.csv")) == 9);

  // interrupted after one row: resume refits the other two only
  spit(dir / "two" / "search_results.csv", format_results_csv({one[1]}));
  auto a = in(dir / "two");
  a.push_back("--resume");
  const Run resumed = run(a);
  REQUIRE(resumed.code == kExitOk);
  CHECK(resumed.out.find("] " + one[1].spec) == std::string::npos);
  const auto after = parse_results_csv(slurp(dir / "two" / "search_results.csv"));
  REQUIRE(after.size() == 3u);
  CHECK(after[1] == one[1]);  // seconds included: the row was reused
  CHECK(after[0].waic == one[0].waic);

  auto both = in(dir / "three");
  both.push_back("--full");
  CHECK(run(both).code == kExitInputError);
}

TEST_CASE("search --full on a tiny dataset") {
  const fs::path dir = scratch("full");
  REQUIRE(run({"simulate", "--grid", "2x2", "--periods", "2", "--ages", "2", "--per-cell", "1e5", "--out-dir",
               dir.string()})
              .code == kExitOk);
  const Run r = run({"search", "--data", (dir / "data.csv").string(), "--adjacency", (dir / "adjacency.txt").string(),
                     "--full", "--draws", "100", "--out-dir", dir.string()});
  CHECK(r.code == kExitOk);
  CHECK(parse_results_csv(slurp(dir / "search_results.csv")).size() == 520u);
  CHECK(lines(slurp(dir / "search_summary.csv")) == 9);
}

TEST_CASE("structure prints triplets") {
  const Run r = run({"structure", "rw1", "--n", "3"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("0 0 1\n") != std::string::npos);
  CHECK(r.out.find("1 1 2\n") != std::string::npos);
  CHECK(r.out.find("0 1 -1\n") != std::string::npos);
  CHECK(run({"structure", "spline"}).code == kExitInputError);
}
