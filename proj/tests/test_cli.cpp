#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

fs::path scratch() {
  static fs::path p = [] {
    fs::path d = fs::temp_directory_path() / ("nsgp_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return p;
}

int run(const std::string& args) {
  std::string cmd = std::string(NSGP_CLI_PATH) + " " + args + " 2>" + (scratch() / "stderr.txt").string();
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

nlohmann::json load(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

std::string out(const std::string& name) { return "--out " + (scratch() / name).string(); }

}  // namespace

TEST_CASE("bad input exits with 2") {
  CHECK(run("") == 2);
  CHECK(run("no-such-command") == 2);
  CHECK(run("bridge --target 0.5,0.5,0.5 --m-max 60 " + out("bad1")) == 2);
  CHECK(run("bridge --eps0 2 --m-max 60 " + out("bad2")) == 2);
  CHECK(run("bridge --seed-policy random --m-max 60 " + out("bad3")) == 2);
  CHECK(run("vdim " + out("bad4")) == 2);
  CHECK(run("verify --certificate /nonexistent.json " + out("bad5")) == 2);
}

TEST_CASE("vdim and config files") {
  REQUIRE(run("vdim --lengths 0.5,0.5 " + out("vdim")) == 0);
  CHECK(load(scratch() / "vdim" / "vdim.json")["vdim"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
  std::ofstream(scratch() / "cfg.json") << R"({"vdim": {"lengths": "0.5,0.3333333333333333", "out": ")"
                                        << (scratch() / "vdim_cfg").string() << R"("}})";
  REQUIRE(run("--config " + (scratch() / "cfg.json").string() + " vdim") == 0);
  CHECK(load(scratch() / "vdim_cfg" / "vdim.json")["vdim"].get<double>() == doctest::Approx(0.7878).epsilon(1e-3));
}

TEST_CASE("map, scheme, tails and cylinders") {
  REQUIRE(run("describe-map " + out("map")) == 0);
  CHECK(load(scratch() / "map" / "map.json")["assumptions"]["pass"] == true);
  REQUIRE(run("induce --m-max 50 " + out("induce")) == 0);
  auto sc = load(scratch() / "induce" / "scheme.json");
  CHECK(sc["components"].size() == 4);
  CHECK(fs::exists(scratch() / "induce" / "symbols.csv"));
  REQUIRE(run("tail --m-max 2000 " + out("tail")) == 0);
  for (const auto& a : load(scratch() / "tail" / "tail.json")["alpha_hat"]) CHECK(std::abs(a.get<double>() - 0.5) < 0.05);
  REQUIRE(run("cylinders --depth 2 --m-max 10 " + out("cyl")) == 0);
  CHECK(load(scratch() / "cyl" / "cylinders.json")["pair_failures"] == 0);
}

TEST_CASE("bridge, verify and tampering") {
  const std::string args = "bridge --m-max 60 --levels 3 --eps0 2/5 ";
  REQUIRE(run(args + out("br1")) == 0);
  REQUIRE(run(args + "--threads 2 " + out("br2")) == 0);
  for (auto f : {"schedule.json", "point.json", "certificate.json", "itinerary.txt"}) {
    CHECK(fs::exists(scratch() / "br1" / f));
    CHECK(slurp(scratch() / "br1" / f) == slurp(scratch() / "br2" / f));
  }
  auto sched = load(scratch() / "br1" / "schedule.json");
  CHECK(sched["levels"].size() == 3);
  CHECK(sched["levels"][0]["eps"]["num"] == "2");
  CHECK(sched["levels"][0]["eps"]["den"] == "5");
  const auto cert = (scratch() / "br1" / "certificate.json").string();
  CHECK(run("verify --certificate " + cert + " " + out("v1")) == 0);
  // One repetition fewer on level 1.
  auto b = load(cert);
  auto& seg = b["point"]["levels"][1].back();
  seg["reps"] = seg["reps"].get<std::int64_t>() - 1;
  std::ofstream(scratch() / "tampered.json") << b.dump();
  CHECK(run("verify --certificate " + (scratch() / "tampered.json").string() + " " + out("v2")) == 1);
  auto w = load(scratch() / "v2" / "witness.json");
  CHECK(w["witness"]["pass"] == false);
  CHECK(w["witness"].contains("witness"));
  // Out-of-range symbol id.
  auto c = load(cert);
  c["point"]["levels"][0][0]["word"][0] = 1u << 30;
  std::ofstream(scratch() / "garbled.json") << c.dump();
  CHECK(run("verify --certificate " + (scratch() / "garbled.json").string() + " " + out("v3")) == 2);
  CHECK(slurp(scratch() / "stderr.txt").rfind("level=error", 0) == 0);
}

TEST_CASE("simulate") {
  REQUIRE(run("simulate --n 20000 --seed 4 " + out("sim")) == 0);
  auto j = load(scratch() / "sim" / "simulate.json");
  REQUIRE(j["traces"].size() == 1);
  std::int64_t total = 0;
  for (const auto& c : j["traces"][0]["occupancy"]) total += c.get<std::int64_t>();
  CHECK(total == 20000);
  REQUIRE(run("simulate --seeds 1,2 --n 20000 --threads 2 " + out("ens")) == 0);
  CHECK(slurp(scratch() / "ens" / "ensemble.csv").rfind("seed,k,tau_k,tau1_k,tau2_k,tau3_k\n", 0) == 0);
}
