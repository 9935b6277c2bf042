#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "json.hpp"
#include "lyaplearn/cli.hpp"
#include "lyaplearn/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = lyl::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lyaplearn_cli_test_" + name);
  fs::remove_all(p);
  return p;
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("gen writes n rows per regime plus header and a sidecar") {
  const fs::path dir = scratch_dir("gen");
  const auto r = run({"gen", "--n", "100", "--out", dir.string()});
  REQUIRE(r.code == lyl::cli::kExitOk);
  CHECK(line_count(dir / "trajectory.csv") == 201);
  const json side = json::parse(lyl::read_text_file(dir / "trajectory.json"));
  CHECK(side["shift_index"] == 100);
  CHECK(side["dt"] == 0.01);
  const json manifest = json::parse(lyl::read_text_file(dir / "manifest.json"));
  CHECK(manifest["command"] == "gen");
  CHECK(manifest["resolved_config"]["n"] == 100);
  CHECK(manifest.contains("tool_version"));
  CHECK(manifest.contains("wall_time"));
}

TEST_CASE("invalid values exit 2, list every bad field and write nothing") {
  const fs::path dir = scratch_dir("bad");
  const auto r = run({"gen", "--n", "abc", "--scale", "-1", "--out", dir.string()});
  CHECK(r.code == lyl::cli::kExitConfig);
  CHECK(r.err.find("n:") != std::string::npos);
  CHECK(r.err.find("scale") != std::string::npos);
  CHECK(r.err.rfind("error: config:", 0) == 0);
  CHECK_FALSE(fs::exists(dir));

  const fs::path dir2 = scratch_dir("bad_train");
  const auto t = run({"train", "--lr", "-1", "--regularizer", "lasso", "--out", dir2.string()});
  CHECK(t.code == lyl::cli::kExitConfig);
  CHECK(t.err.find("regularizer") != std::string::npos);
  CHECK(t.err.find("learning_rate") != std::string::npos);
  CHECK_FALSE(fs::exists(dir2));
}

TEST_CASE("unknown config keys and bad JSON are config errors") {
  const fs::path dir = scratch_dir("cfg");
  fs::create_directories(dir);
  lyl::write_text_file(dir / "c.json", R"({"n": 10, "bogus": 1, "dt": "x"})");
  const auto r = run({"gen", "--config", (dir / "c.json").string(), "--out", (dir / "o").string()});
  CHECK(r.code == lyl::cli::kExitConfig);
  CHECK(r.err.find("bogus") != std::string::npos);
  CHECK(r.err.find("dt") != std::string::npos);

  lyl::write_text_file(dir / "broken.json", "{n: ");
  CHECK(run({"gen", "--config", (dir / "broken.json").string()}).code == lyl::cli::kExitConfig);
  CHECK(run({"gen", "--no-such-flag", "1"}).code == lyl::cli::kExitConfig);
  CHECK(run({}).code == lyl::cli::kExitConfig);
}

TEST_CASE("missing files exit 4") {
  const fs::path dir = scratch_dir("io");
  const auto r = run({"gen", "--config", (dir / "missing.json").string()});
  CHECK(r.code == lyl::cli::kExitIo);
  const auto t = run({"train", "--data", (dir / "missing.csv").string(), "--out", (dir / "o").string()});
  CHECK(t.code == lyl::cli::kExitIo);
  CHECK(run({"lyap", "--network", (dir / "missing.txt").string()}).code == lyl::cli::kExitIo);
}

TEST_CASE("flags override the config file, which overrides defaults") {
  const fs::path dir = scratch_dir("prec");
  fs::create_directories(dir);
  lyl::write_text_file(dir / "c.json", R"({"n": 50, "jitter": 0.0})");
  REQUIRE(run({"gen", "--config", (dir / "c.json").string(), "--n", "60", "--out", (dir / "a").string()}).code == 0);
  CHECK(line_count(dir / "a" / "trajectory.csv") == 121);
  const json cfg = json::parse(lyl::read_text_file(dir / "a" / "manifest.json"))["resolved_config"];
  CHECK(cfg["n"] == 60);
  CHECK(cfg["jitter"] == 0.0);
  CHECK(cfg["dt"] == 0.01);
}

TEST_CASE("replaying a manifest reproduces the outputs bit for bit") {
  const fs::path dir = scratch_dir("replay");
  REQUIRE(run({"train", "--n", "60", "--layers", "3,6,3", "--regularizer", "lyapunov", "--alpha", "0.1",
               "--horizon", "5", "--eval-steps", "50", "--seed", "3", "--out", (dir / "a").string()})
              .code == 0);
  REQUIRE(run({"train", "--config", (dir / "a" / "manifest.json").string(), "--out", (dir / "b").string()}).code == 0);
  for (const char* f : {"run.json", "series.csv", "network.txt"})
    CHECK(lyl::read_text_file(dir / "a" / f) == lyl::read_text_file(dir / "b" / f));
  // a manifest from another command is refused
  CHECK(run({"gen", "--config", (dir / "a" / "manifest.json").string()}).code == lyl::cli::kExitConfig);
}

TEST_CASE("train accepts a generated trajectory file") {
  const fs::path dir = scratch_dir("data");
  REQUIRE(run({"gen", "--n", "40", "--seed", "2", "--out", (dir / "g").string()}).code == 0);
  REQUIRE(run({"train", "--data", (dir / "g" / "trajectory.csv").string(), "--layers", "3,5,3", "--eval-steps", "20",
               "--seed", "2", "--out", (dir / "file").string()})
              .code == 0);
  REQUIRE(run({"train", "--n", "40", "--layers", "3,5,3", "--eval-steps", "20", "--seed", "2", "--out",
               (dir / "gen").string()})
              .code == 0);
  CHECK(lyl::read_text_file(dir / "file" / "series.csv") == lyl::read_text_file(dir / "gen" / "series.csv"));
  CHECK(run({"train", "--data", (dir / "g" / "trajectory.csv").string(), "--layers", "2,5,2", "--out",
             (dir / "x").string()})
            .code == lyl::cli::kExitConfig);
}

TEST_CASE("lyap reports the logistic exponent and the Lorenz rate") {
  const auto r = run({"lyap", "--map", "logistic", "--steps", "100000"});
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["lambda_max"].get<double>() == doctest::Approx(std::log(2.0)).epsilon(5e-3));
  CHECK(run({"lyap", "--map", "henon"}).code == lyl::cli::kExitConfig);
  const auto lin = run({"lyap", "--map", "linear", "--steps", "10", "--transient", "0"});
  REQUIRE(lin.code == 0);
  CHECK(json::parse(lin.out)["lambda_max"].get<double>() == doctest::Approx(std::log(0.5)));
}

TEST_CASE("lyap on a diverging network exits 3") {
  const fs::path dir = scratch_dir("diverge");
  fs::create_directories(dir);
  // x -> 2x overflows after about a thousand steps
  lyl::write_text_file(dir / "net.txt", "lyaplearn-network 1\nactivation identity\nsizes 1 1\n2\n0\n");
  const auto r = run({"lyap", "--network", (dir / "net.txt").string(), "--steps", "5000", "--transient", "0"});
  CHECK(r.code == lyl::cli::kExitNumerical);
  CHECK(r.err.rfind("error: numerical:", 0) == 0);
}

TEST_CASE("help lists every subcommand and exits 0") {
  const auto r = run({"--help"});
  CHECK(r.code == 0);
  for (const char* c : {"gen", "train", "bench", "sweep", "synth", "lyap"}) CHECK(r.out.find(c) != std::string::npos);
  const auto g = run({"train", "--help"});
  CHECK(g.code == 0);
  CHECK(g.out.find("--regularizer") != std::string::npos);
  CHECK(g.out.find("[none]") != std::string::npos);
}
