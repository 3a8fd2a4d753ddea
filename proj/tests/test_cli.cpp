#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <sstream>

#include "derivkit/cli.hpp"
#include "derivkit/error.hpp"
#include "derivkit/spec_io.hpp"

using namespace derivkit;

namespace {

const std::string kFixtures = DERIVKIT_FIXTURES;
const std::string kTool = DERIVKIT_TOOL;

std::string fixture(const std::string& name) { return kFixtures + "/" + name + ".json"; }

std::string scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "derivkit_test_cli";
  std::filesystem::create_directories(dir);
  return (dir / name).string();
}

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

// Exit status of the real executable.
int shell(const std::string& args) {
  const int status = std::system((kTool + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("fnv digest reference values") {
  CHECK(fnv1a_digest("") == "cbf29ce484222325");
  CHECK(fnv1a_digest("a") == "af63dc4c8601ec8c");
}

TEST_CASE("point, matrix and count arguments") {
  const Chart chart({"r", "theta"}, {{1.0, 2.0}, {0.0, 1.0}});
  CHECK(parse_point("theta=0.5,r=1", chart) == Point{1.0, 0.5});
  CHECK(parse_point("1.5, 0.25", chart) == Point{1.5, 0.25});
  CHECK_THROWS_AS(parse_point("r=1,phi=2", chart), InputError);
  CHECK_THROWS_AS(parse_point("r=1,r=2", chart), InputError);
  CHECK_THROWS_AS(parse_point("1", chart), InputError);
  const Matrix m = parse_matrix("1,2;3,4", 2);
  CHECK(m(1, 0) == 3.0);
  CHECK_THROWS_AS(parse_matrix("1,2;3", 2), InputError);
  CHECK(parse_counts("21,11") == std::vector<std::size_t>{21, 11});
  CHECK_THROWS_AS(parse_counts("2.5"), InputError);
}

TEST_CASE("spec loading errors name the offending key") {
  try {
    load_spec(fixture("malformed"));
    FAIL("expected an input error");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("connection[\"1,2,2\"]") != std::string::npos);
    CHECK(msg.find("position 4") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_spec(R"({"dimension": 1, "coordinates": ["x"], "domain": [[0, 1]],
                                 "derivation": {"connection": {"1,1,2": "x"}}})"),
                  InputError);
  CHECK_THROWS_AS(parse_spec(R"({"dimension": 1, "coordinates": ["x"], "domain": [[0, 1]],
                                 "derivation": {"lie": {}, "connection": {}}})"),
                  InputError);
  CHECK_THROWS_AS(parse_spec("{"), InputError);
}

TEST_CASE("analyze reports verdicts and is deterministic") {
  const Run polar = run({"analyze", fixture("polar"), "--at", "r=1,theta=0.5"});
  REQUIRE(polar.code == kExitOk);
  const Json report = Json::parse(polar.out);
  CHECK(report["verdicts"]["flat"]["holds"] == true);
  CHECK(report["verdicts"]["flat"]["residual"].get<double>() <= 1e-10);
  CHECK(report["verdicts"]["torsion_free"]["holds"] == true);
  CHECK(run({"analyze", fixture("polar"), "--at", "r=1,theta=0.5"}).out == polar.out);

  const Run sphere = run({"analyze", fixture("sphere"), "--at", "theta=0.785398,phi=0"});
  const Json s = Json::parse(sphere.out);
  CHECK(s["verdicts"]["flat"]["holds"] == false);
  CHECK(s["curvature"][0]["matrix"][0][1].get<double>() == doctest::Approx(0.5).epsilon(1e-5));

  const Run lie = run({"analyze", fixture("lie"), "--at", "0.1,0.2"});
  CHECK(Json::parse(lie.out)["verdicts"]["linear_at_point"]["holds"] == false);

  CHECK(run({"analyze", fixture("malformed"), "--at", "1,0"}).code == kExitInput);
  CHECK(run({"analyze", fixture("polar"), "--at", "r=3,theta=0"}).code == kExitDomain);
  CHECK(run({"analyze"}).code == kExitInput);
}

TEST_CASE("frame files verify and corruption is detected") {
  const std::string point = scratch("polar_point.json");
  REQUIRE(run({"frame", fixture("polar"), "point", "--at", "r=1,theta=0", "--out", point}).code == kExitOk);
  CHECK(run({"verify", fixture("polar"), point, "--tol", "1e-10"}).code == kExitOk);

  const std::string grid = scratch("polar_grid.json");
  REQUIRE(run({"frame", fixture("polar"), "flat", "--nodes", "11,11", "--out", grid}).code == kExitOk);
  CHECK(run({"verify", fixture("polar"), grid}).code == kExitOk);

  Json doc = Json::parse(read_file(grid));
  doc["data"]["matrices"][40][0][1] = doc["data"]["matrices"][40][0][1].get<double>() + 0.1;
  // Verify ignores the embedded verifier, so leaving it untouched must not help.
  const std::string corrupted = scratch("polar_grid_corrupted.json");
  write_file(corrupted, doc.dump());
  const Run bad = run({"verify", fixture("polar"), corrupted});
  CHECK(bad.code == kExitVerifyFailed);
  CHECK(bad.out.find("node [3,") != std::string::npos);

  // A frame for a 2-d spec checked against the 1-d spec.
  CHECK(run({"verify", fixture("line"), grid}).code == kExitInput);
}

TEST_CASE("identity frame against the zero connection") {
  const std::string grid = scratch("zero_grid.json");
  REQUIRE(run({"frame", fixture("zero"), "flat", "--nodes", "5,5", "--out", grid}).code == kExitOk);
  const Json doc = Json::parse(read_file(grid));
  for (const auto& m : doc["data"]["matrices"]) CHECK(m == Json::parse("[[1.0,0.0],[0.0,1.0]]"));
  CHECK(run({"verify", fixture("zero"), grid, "--tol", "1e-12"}).code == kExitOk);
}

TEST_CASE("executable exit codes") {
  const std::string out = scratch("exit_codes.json");
  CHECK(shell("analyze " + fixture("torsion") + " --at 0,0") == 0);
  CHECK(shell("frame " + fixture("sphere") + " flat --out " + out) == 5);
  CHECK(shell("frame " + fixture("lie") + " flat --out " + out) == 4);
  CHECK(shell("frame " + fixture("lie") + " point --at 0.2,0.1 --field along_x1 --out " + out) == 0);
  CHECK(shell("analyze " + fixture("malformed") + " --at 1,0") == 2);
  CHECK(shell("analyze " + fixture("polar") + " --at r=5,theta=0") == 3);
  CHECK(shell("--help") == 0);
}
