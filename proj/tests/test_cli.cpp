#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "leosched/cli.hpp"

using namespace leosched;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "leosched-cli-tests" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE(static_cast<bool>(f));
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::vector<std::string> with(std::vector<std::string> base, const std::vector<std::string>& extra) {
  base.insert(base.end(), extra.begin(), extra.end());
  return base;
}

/// Two devices, one LEO and one BS, T = 3: G = 7 and 7^3 schedules.
const std::vector<std::string> kTiny{"--devices", "2", "--leo", "1", "--bs", "1", "--tst", "0", "--horizon", "3",
                                     "--cap", "2", "--levels", "4", "--fsmc_samples", "2000"};

/// Small enough to train and bench in a few seconds.
const std::vector<std::string> kSmallRun{
    "--devices", "4", "--leo", "1", "--bs", "1", "--tst", "0", "--horizon", "4", "--cap", "2", "--levels", "4",
    "--fsmc_samples", "2000", "--episodes", "3", "--batch", "8", "--tasks_per_episode", "2", "--pool_per_family",
    "1", "--net_conv", "4", "--net_lstm", "3", "--net_head", "5", "--actor_conv", "3", "--actor_hidden", "4",
    "--wolpertinger_m", "3", "--memory", "200", "--slots", "32", "--update_interval", "8", "--recovery_window",
    "4", "--min_devices", "2", "--max_devices", "6", "--abnormal_batch", "2"};

}  // namespace

TEST_CASE("config precedence is flag over file over default") {
  cli::RunConfig c;
  CHECK(c.get_int("devices") == 8);
  c.merge_text("devices = 5  # comment\n\nlr=1e-3\n");
  CHECK(c.get_int("devices") == 5);
  c.set("devices", "6");
  CHECK(c.get_int("devices") == 6);

  const auto dir = scratch("precedence");
  std::ofstream(dir / "run.cfg") << "devices = 5\nleo = 1\n";
  auto r = invoke({"gen", "--config", (dir / "run.cfg").string(), "--out", dir.string()});
  CHECK(r.code == 0);
  CHECK(r.out.rfind("K=5 ", 0) == 0);
  r = invoke({"gen", "--config", (dir / "run.cfg").string(), "--devices", "6", "--out", dir.string()});
  CHECK(r.out.rfind("K=6 ", 0) == 0);
}

TEST_CASE("config rejects unknown keys and malformed values") {
  cli::RunConfig c;
  CHECK_THROWS_AS(c.merge_text("colour = red\n"), ValidationError);
  CHECK_THROWS_AS(c.merge_text("devices\n"), ValidationError);
  CHECK_THROWS_AS(c.set("devices", "eight"), ValidationError);
  CHECK_THROWS_AS(c.set("lr", "0.1x"), ValidationError);
  CHECK_THROWS_AS(c.set("atmosphere_as_loss", "maybe"), ValidationError);

  const auto dir = scratch("reject");
  std::ofstream(dir / "bad.cfg") << "devices = 5\ncolour = red\n";
  auto r = invoke({"gen", "--config", (dir / "bad.cfg").string(), "--out", dir.string()});
  CHECK(r.code == cli::kExitValidation);
  CHECK(r.err.find("colour") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "instance.json"));
  CHECK(invoke({"gen", "--colour", "red"}).code == cli::kExitValidation);
  CHECK(invoke({"gen", "--devices", "0", "--out", dir.string()}).code == cli::kExitValidation);
  CHECK(invoke({"solve", "--solver", "simplex", "--out", dir.string()}).code == cli::kExitValidation);
  CHECK(invoke({}).code == cli::kExitValidation);
}

TEST_CASE("config hash ignores formatting and paths") {
  cli::RunConfig a, b;
  a.set("lr", "1e-3");
  b.set("lr", "0.001");
  b.set("out", "elsewhere");
  b.set("workers", "4");
  CHECK(a.hash() == b.hash());
  b.set("seed", "2");
  CHECK(a.hash() != b.hash());
  CHECK(a.hash().size() == 16);
}

TEST_CASE("gen reports sizes and writes byte-identical files") {
  const auto d1 = scratch("gen1"), d2 = scratch("gen2");
  auto r = invoke(with({"gen", "--out", d1.string()}, kTiny));
  REQUIRE(r.code == 0);
  // idle, four single links, two full matchings
  CHECK(r.out.rfind("K=2 N=2 G=7 T=3\n", 0) == 0);
  REQUIRE(invoke(with({"gen", "--out", d2.string()}, kTiny)).code == 0);
  for (const char* f : {"instance.json", "catalog.json", "fsmc.json"}) {
    CHECK(slurp(d1 / f) == slurp(d2 / f));
    CHECK(slurp(d1 / f).find("\"config_hash\"") != std::string::npos);
  }
  r = invoke(with({"gen", "--out", d2.string(), "--seed", "2"}, kTiny));
  CHECK(slurp(d1 / "instance.json") != slurp(d2 / "instance.json"));
}

TEST_CASE("gen default instance") {
  const auto dir = scratch("gen-default");
  const auto r = invoke({"gen", "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("N=4") != std::string::npos);
  CHECK(r.out.find("T=10") != std::string::npos);
}

TEST_CASE("solve cross-checks and determinism") {
  const auto dir = scratch("solve");
  REQUIRE(invoke(with({"gen", "--out", dir.string()}, kTiny)).code == 0);
  auto value = [&](const std::string& solver) {
    const auto r = invoke(with({"solve", "--solver", solver, "--out", dir.string()}, kTiny));
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(slurp(dir / ("solve_" + solver + ".json")));
    CHECK(j.contains("config_hash"));
    return j["result"]["objective"].get<double>();
  };
  const double bnb = value("bnb");
  const double oracle = value("oracle");
  CHECK(bnb == oracle);
  CHECK(value("relax") <= bnb + 1e-9);
  CHECK(value("greedy") >= oracle);
  CHECK(value("admm") >= oracle);

  const std::string first = slurp(dir / "solve_bnb.json");
  value("bnb");
  CHECK(slurp(dir / "solve_bnb.json") == first);
  CHECK(first.find("wall_time") == std::string::npos);
}

TEST_CASE("greedy equals the oracle with one slot") {
  const auto dir = scratch("one-slot");
  auto args = kTiny;
  args[9] = "1";  // horizon
  REQUIRE(invoke(with({"gen", "--out", dir.string()}, args)).code == 0);
  REQUIRE(invoke(with({"solve", "--solver", "greedy", "--out", dir.string()}, args)).code == 0);
  REQUIRE(invoke(with({"solve", "--solver", "oracle", "--out", dir.string()}, args)).code == 0);
  const auto g = nlohmann::json::parse(slurp(dir / "solve_greedy.json"))["result"]["objective"];
  const auto o = nlohmann::json::parse(slurp(dir / "solve_oracle.json"))["result"]["objective"];
  CHECK(g == o);
}

TEST_CASE("solve errors are explicit") {
  const auto dir = scratch("solve-errors");
  auto r = invoke({"solve", "--out", dir.string()});
  CHECK(r.code == cli::kExitValidation);
  CHECK(r.err.find("instance.json") != std::string::npos);
  REQUIRE(invoke({"gen", "--out", dir.string()}).code == 0);
  r = invoke({"solve", "--solver", "oracle", "--out", dir.string()});
  CHECK(r.code == cli::kExitRuntime);
  CHECK(r.err.find("limit") != std::string::npos);
}

TEST_CASE("train, bench and report round trip") {
  const auto dir = scratch("pipeline");
  const auto critic = (dir / "critic").string();

  auto r = invoke(with({"bench", "--agents", "emcl,ac", "--seeds", "2", "--out", dir.string()}, kSmallRun));
  CHECK(r.code == cli::kExitValidation);
  CHECK(r.err.find("critic") != std::string::npos);

  REQUIRE(invoke(with({"train", "--out", dir.string()}, kSmallRun)).code == 0);
  CHECK(fs::exists(dir / "critic.bin"));
  CHECK(slurp(dir / "train_trace.csv").rfind("# config_hash=", 0) == 0);
  const std::string bin = slurp(dir / "critic.bin");
  REQUIRE(invoke(with({"train", "--out", dir.string()}, kSmallRun)).code == 0);
  CHECK(slurp(dir / "critic.bin") == bin);

  const auto b1 = scratch("bench1"), b2 = scratch("bench2");
  r = invoke(with({"bench", "--scenario", "channel-shock", "--agents", "emcl,ac", "--seeds", "3", "--critic", critic,
                "--out", b1.string()},
               kSmallRun));
  REQUIRE(r.code == 0);
  int traces = 0, summaries = 0;
  for (const auto& e : fs::directory_iterator(b1)) {
    const auto name = e.path().filename().string();
    traces += name.rfind("trace_channel-shock_", 0) == 0;
    summaries += name == "summary_channel-shock.json";
  }
  CHECK(traces == 6);
  CHECK(summaries == 1);
  const auto summary = nlohmann::json::parse(slurp(b1 / "summary_channel-shock.json"));
  CHECK(summary["runs"].size() == 6);
  for (const auto& run : summary["runs"]) CHECK(run["events"].size() == 3);
  CHECK(summary["aggregate"].contains("emcl"));
  CHECK(summary["aggregate"].contains("ac"));

  // a worker pool writes the same files
  r = invoke(with({"bench", "--scenario", "channel-shock", "--agents", "emcl,ac", "--seeds", "3", "--critic", critic,
                "--workers", "3", "--out", b2.string()},
               kSmallRun));
  REQUIRE(r.code == 0);
  for (const auto& e : fs::directory_iterator(b1)) CHECK(slurp(e.path()) == slurp(b2 / e.path().filename()));

  REQUIRE(invoke(with({"report", "--input", b1.string(), "--out", b1.string()}, kSmallRun)).code == 0);
  const std::string report = slurp(b1 / "report.csv");
  CHECK(report.find("scenario,agent,runs,events,median_recovery_slots") != std::string::npos);
  CHECK(report.find("channel-shock,emcl,3,9,") != std::string::npos);
  REQUIRE(invoke(with({"report", "--input", b1.string(), "--out", b1.string()}, kSmallRun)).code == 0);
  CHECK(slurp(b1 / "report.csv") == report);

  r = invoke({"report", "--input", dir.string(), "--out", dir.string()});
  CHECK(r.code == cli::kExitValidation);
}

TEST_CASE("bench rejects a critic trained for another transmitter count") {
  const auto dir = scratch("mismatch");
  REQUIRE(invoke(with({"train", "--out", dir.string()}, kSmallRun)).code == 0);
  auto args = kSmallRun;
  args[7] = "1";  // one TST as well
  const auto r = invoke(with({"bench", "--agents", "emcl", "--seeds", "1", "--critic", (dir / "critic").string(),
                           "--out", dir.string()},
                          args));
  CHECK(r.code == cli::kExitValidation);
  CHECK(r.err.find("transmitter") != std::string::npos);
}
