#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "weakrec/harness.hpp"

using namespace weakrec;
using namespace weakrec::harness;
namespace fs = std::filesystem;

namespace {
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "weakrec_harness_test";
  fs::create_directories(dir);
  return dir / name;
}

int cli(const std::string& args, std::string* out = nullptr) {
  const char* exe = std::getenv("WEAKREC_CLI");
  REQUIRE(exe != nullptr);
  const fs::path capture = scratch("stdout.txt");
  const std::string cmd = std::string(exe) + " " + args + " > " + capture.string() + " 2>&1";
  const int rc = std::system(cmd.c_str());
  if (out) *out = slurp(capture);
  return WEXITSTATUS(rc);
}
}  // namespace

TEST_CASE("delta grids") {
  const auto g = parse_delta_grid("0.8:6:0.2");
  CHECK(g.size() == 27);
  CHECK(g.front() == 0.8);
  CHECK(g.back() == 6.0);
  CHECK(g[1] == 1.0);
  CHECK(parse_delta_grid("1.1,1.5,2") == std::vector<double>{1.1, 1.5, 2.0});
  CHECK(parse_delta_grid("2") == std::vector<double>{2.0});
  CHECK_THROWS_AS(parse_delta_grid("2,1"), Error);
  CHECK_THROWS_AS(parse_delta_grid("1:2:0"), Error);
  CHECK_THROWS_AS(parse_delta_grid("a,b"), Error);
}

TEST_CASE("config round trip, validation and hash") {
  ExperimentConfig c;
  c.deltas = {1.5, 2.0};
  c.preprocess = {"optimal-pr", "trimming:5.25"};
  const ExperimentConfig d = ExperimentConfig::from_json(c.to_json());
  CHECK(d.to_json() == c.to_json());
  CHECK(d.hash() == c.hash());
  ExperimentConfig e = c;
  e.seed = 8;
  CHECK(e.hash() != c.hash());
  ExperimentConfig o = c;
  o.output = "elsewhere";
  CHECK(o.hash() == c.hash());

  CHECK_THROWS_WITH_AS(ExperimentConfig::from_json(nlohmann::json{{"bogus", 1}}), doctest::Contains("bogus"), Error);
  ExperimentConfig bad = c;
  bad.trials = 0;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("trials"), Error);
  bad = c;
  bad.deltas = {2.0, 1.0};
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("deltas"), Error);
  bad = c;
  bad.solver = "magic";
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("solver"), Error);
  bad = c;
  bad.task = Task::CdpDemo;
  bad.views = 13;
  CHECK_THROWS_WITH_AS(bad.validate(), doctest::Contains("views"), Error);
  const auto j = nlohmann::json::parse(R"({"deltas": "1:2:0.5", "preprocess": "subset:2,optimal-pr", "d": 64})");
  const ExperimentConfig p = ExperimentConfig::from_json(j);
  CHECK(p.deltas == std::vector<double>{1.0, 1.5, 2.0});
  CHECK(p.preprocess.size() == 2);
}

TEST_CASE("predictions") {
  ExperimentConfig c;
  c.task = Task::Predict;
  c.deltas = {0.8, 2.0};
  c.preprocess = {"optimal-pr", "optimal-delta"};
  const auto rows = predict(c);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].pred.rho2 == 0.0);
  CHECK_FALSE(rows[1].ok);  // optimal-delta below delta_u
  CHECK(rows[2].pred.rho2 == doctest::Approx(0.3381).epsilon(2e-3));
  CHECK(rows[3].pred.informative);
}

std::string drop_column(const std::string& csv, int col) {
  std::istringstream in(csv);
  std::string line, out;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string cell;
    for (int k = 0; std::getline(ls, cell, ','); ++k)
      if (k != col) out += cell + ',';
    out += '\n';
  }
  return out;
}

TEST_CASE("simulation is deterministic and writes seed and hash on every row") {
  ExperimentConfig c;
  c.task = Task::Simulate;
  c.deltas = {2.0, 4.0};
  c.d = 128;
  c.trials = 3;
  c.seed = 5;
  c.preprocess = {"optimal-pr", "subset:2"};
  c.solver = "lanczos";
  c.output = scratch("sim_a").string();
  run(c);
  ExperimentConfig c2 = c;
  c2.output = scratch("sim_b").string();
  run(c2);
  const std::string a = slurp(c.output + ".csv"), b = slurp(c2.output + ".csv");
  CHECK(drop_column(a, 13) == drop_column(b, 13));  // runtime_ms
  std::istringstream in(a);
  std::string line;
  std::getline(in, line);
  CHECK(line.find("seed,config_hash") != std::string::npos);
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(line.find("," + std::to_string(c.seed) + "," + c.hash() + ",") != std::string::npos);
  }
  CHECK(rows == 2 * 2 * 3);
  const auto summary = nlohmann::json::parse(slurp(c.output + ".json"));
  CHECK(summary["schema_version"] == kSchemaVersion);
  CHECK(summary["summary"].size() == 4);
  for (const auto& r : simulate(c).records) {
    CHECK(r.overlap2 >= 0.0);
    CHECK(r.overlap2 <= 1.0);
  }
}

TEST_CASE("solvers agree inside the sweep") {
  ExperimentConfig c;
  c.task = Task::Simulate;
  c.deltas = {3.0};
  c.d = 96;
  c.preprocess = {"optimal-pr"};
  c.tol = 1e-10;
  c.max_iter = 200000;
  c.solver = "dense";
  const auto a = simulate(c);
  c.solver = "lanczos";
  const auto b = simulate(c);
  c.solver = "power";
  c.tol = 1e-14;
  const auto p = simulate(c);
  CHECK(a.records[0].eig1 == doctest::Approx(b.records[0].eig1).epsilon(1e-8));
  CHECK(a.records[0].overlap2 == doctest::Approx(b.records[0].overlap2).epsilon(1e-6));
  CHECK(a.records[0].overlap2 == doctest::Approx(p.records[0].overlap2).epsilon(1e-4));
}

TEST_CASE("budget cut reports an incomplete sweep") {
  ExperimentConfig c;
  c.task = Task::Simulate;
  c.deltas = {2.0, 3.0};
  c.d = 64;
  c.trials = 5;
  c.solver = "dense";
  const auto r = simulate(c, 0.0);
  CHECK_FALSE(r.complete);
  CHECK(r.trials_done == 0);
}

TEST_CASE("cdp demo: same seed, same bytes") {
  ExperimentConfig c;
  c.task = Task::CdpDemo;
  c.width = c.height = 16;
  c.views = 4;
  c.preprocess = {"optimal-clamped"};
  c.output = scratch("cdp_a").string();
  run(c);
  ExperimentConfig c2 = c;
  c2.output = scratch("cdp_b").string();
  run(c2);
  CHECK(slurp(c.output + ".pgm") == slurp(c2.output + ".pgm"));
  CHECK(slurp(c.output + ".pgm").size() > 256);
}

TEST_CASE("spike check") {
  ExperimentConfig c;
  c.task = Task::SpikeCheck;
  c.deltas = {2.0};
  c.alpha = 3.0;
  c.n = 400;
  c.trials = 2;
  const auto r = spike_check(c);
  CHECK(r.lambda1.size() == 2);
  CHECK(r.psi_prime > 0);
  CHECK(std::abs(r.mean - r.prediction) < 0.15);
  CHECK(parse_spectral_law("two-atom:2,-1,0.3", 2.5, 2.0).h.w[0] == 0.3);
}

TEST_CASE("command line") {
  std::string out;
  CHECK(cli("thresholds --field complex --sigma2 0", &out) == 0);
  const auto j = nlohmann::json::parse(out);
  CHECK(j["delta_l"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(j["delta_u"].get<double>() == 1.0);
  CHECK(j.contains("seed"));
  CHECK(j.contains("config_hash"));

  CHECK(cli("simulate --delta 2,1 --d 16", &out) == 2);
  CHECK(out.find("delta") != std::string::npos);
  CHECK(cli("simulate --delta 2 --d 16 --trials 0", &out) == 2);
  CHECK(out.find("trials") != std::string::npos);

  const fs::path cfg = scratch("cfg.json");
  std::ofstream(cfg) << R"({"deltas": "2:3:1", "d": 32, "trials": 1, "seed": 3, "solver": "dense"})";
  CHECK(cli("simulate --config " + cfg.string() + " --seed 4", &out) == 0);
  const auto s = nlohmann::json::parse(out);
  CHECK(s["seed"] == 4);
  CHECK(s["config"]["d"] == 32);

  CHECK(setenv("WEAKREC_SEED", "17", 1) == 0);
  CHECK(cli("predict --delta 2", &out) == 0);
  CHECK(nlohmann::json::parse(out)["seed"] == 17);
  unsetenv("WEAKREC_SEED");
}
