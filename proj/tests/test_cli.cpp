#include <doctest.h>

#include <json.hpp>
#include <sstream>

#include "../tools/cli.hpp"
#include "helpers.hpp"
#include "ndnet/trace_io.hpp"

using namespace ndnet;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  std::ostringstream o, e;
  const int code = run_cli(args, o, e);
  return {code, o.str(), e.str()};
}

std::vector<std::string> gen_args(const fs::path& dir, int jobs = 1) {
  return {"gen", "--scenario", "3", "--configs", "2", "--patterns", "2", "--duration", "2", "--bw-min", "1",
          "--bw-max", "2", "--buffer-scale", "0.2", "--seed", "4", "--jobs", std::to_string(jobs), "--out",
          dir.string()};
}

}  // namespace

TEST_CASE("help and version") {
  const Run h = cli({"--help"});
  CHECK(h.code == 0);
  for (const char* s : {"gen", "train", "simulate", "eval", "gradcheck", "--config"}) CHECK(h.out.find(s) != std::string::npos);
  const Run th = cli({"train", "--help"});
  for (const char* s : {"--lr-window", "--lambda", "--multipath", "--jobs"}) CHECK(th.out.find(s) != std::string::npos);
  CHECK(cli({"--version"}).out.find("0.1.0") != std::string::npos);
}

TEST_CASE("exit codes for bad input") {
  CHECK(cli({}).code == kExitValidation);
  CHECK(cli({"gen", "--out"}).code == kExitValidation);
  const auto dir = test::temp_dir("cli-bad");
  CHECK(cli({"gen", "--scenario", "7", "--out", dir.string()}).code == kExitValidation);
  const Run p = cli({"gen", "--protocol", "bbr", "--duration", "1", "--out", (dir / "p").string()});
  CHECK(p.code == kExitValidation);
  CHECK(p.err.find("bbr") != std::string::npos);
  const Run missing = cli({"eval", "--real", (dir / "none.jsonl").string(), "--synth", (dir / "none.jsonl").string(),
                           "--out", (dir / "e").string()});
  CHECK(missing.code == kExitError);
}

TEST_CASE("gen writes a dataset and a manifest and refuses to overwrite") {
  const auto dir = test::temp_dir("cli-gen");
  const Run r = cli(gen_args(dir / "g"));
  REQUIRE(r.code == 0);
  const Dataset d = read_dataset(dir / "g" / "traces.ndnet.jsonl");
  CHECK(d.traces.size() == 4);
  CHECK(fs::exists(dir / "g" / "ranges.json"));
  const auto m = nlohmann::json::parse(test::slurp(dir / "g" / "manifest.json"));
  CHECK(m["command"] == "gen");
  CHECK(m["seed"] == 4);
  CHECK(m["tool_version"] == "0.1.0");
  CHECK(m["config"].get<std::string>().find("patterns") != std::string::npos);

  const Run again = cli(gen_args(dir / "g"));
  CHECK(again.code == kExitValidation);
  CHECK(again.err.find("--force") != std::string::npos);
  auto forced = gen_args(dir / "g");
  forced.push_back("--force");
  CHECK(cli(forced).code == 0);
}

TEST_CASE("config file supplies defaults and flags win") {
  const auto dir = test::temp_dir("cli-config");
  {
    std::ofstream f(dir / "run.toml");
    f << "[gen]\npatterns = 3\nconfigs = 1\nscenario = [3]\nduration = 1.5\nbw-max = 2\nbw-min = 1\n";
  }
  const Run r = cli({"--config", (dir / "run.toml").string(), "gen", "--patterns", "2", "--out", (dir / "o").string()});
  REQUIRE(r.code == 0);
  CHECK(read_dataset(dir / "o" / "traces.ndnet.jsonl").traces.size() == 2);
}

TEST_CASE("pipeline outputs do not depend on worker count") {
  const auto dir = test::temp_dir("cli-pipe");
  for (int jobs : {1, 3}) {
    const std::string j = std::to_string(jobs);
    const fs::path base = dir / ("j" + j);
    REQUIRE(cli(gen_args(base / "gen", jobs)).code == 0);
    REQUIRE(cli({"train", "--data", (base / "gen").string(), "--hidden", "8", "--epochs", "1", "--batch", "2", "--seed",
                 "1", "--jobs", j, "--out", (base / "train").string()})
                .code == 0);
    REQUIRE(cli({"simulate", "--model", (base / "train").string(), "--runs", "3", "--duration", "2", "--seed", "2",
                 "--jobs", j, "--out", (base / "sim").string()})
                .code == 0);
    REQUIRE(cli({"eval", "--real", (base / "gen").string(), "--synth", (base / "sim").string(), "--jobs", j, "--out",
                 (base / "eval").string()})
                .code == 0);
  }
  for (const char* f : {"gen/traces.ndnet.jsonl", "gen/ranges.json", "train/checkpoint.json", "sim/traces.ndnet.jsonl",
                        "eval/report.json", "eval/report.csv"}) {
    CAPTURE(f);
    CHECK(test::slurp(dir / "j1" / f) == test::slurp(dir / "j3" / f));
  }
  const std::string loss = test::slurp(dir / "j1" / "train" / "loss.csv");
  CHECK(loss.rfind("epoch,j_pkt,j_win,wall_seconds\n", 0) == 0);

  const Run self = cli({"eval", "--real", (dir / "j1" / "gen").string(), "--synth", (dir / "j1" / "gen").string(),
                        "--out", (dir / "self").string()});
  REQUIRE(self.code == 0);
  const auto rep = nlohmann::json::parse(test::slurp(dir / "self" / "report.json"));
  CHECK(rep["wd1_mean_delay"].get<double>() == 0.0);
  CHECK(rep["wd2_tput_mean_delay"].get<double>() < 1e-12);
}

TEST_CASE("gradcheck command") {
  const Run r = cli({"gradcheck", "--runs", "1"});
  CHECK(r.code == 0);
  CHECK(r.out.find("objective") != std::string::npos);
  CHECK(cli({"gradcheck", "--runs", "1", "--tol", "1e-30"}).code == kExitGate);
}
