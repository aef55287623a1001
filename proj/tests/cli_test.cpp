#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "achord/propagation.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("achord_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  Result achord(const std::string& args) {
    const std::string cmd = std::string("\"") + ACHORD_CLI_PATH + "\" " + args + " >\"" +
                            (dir_ / "stdout").string() + "\" 2>\"" + (dir_ / "stderr").string() + "\"";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(dir_ / "stdout");
    r.err = slurp(dir_ / "stderr");
    return r;
  }

  fs::path write(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p;
  }

  static std::string scenario(const std::string& name) {
    return std::string(ACHORD_SOURCE_DIR) + "/scenarios/" + name;
  }

  fs::path dir_;
};

void expect_clean_error(const Result& r) {
  EXPECT_NE(r.err.find("error"), std::string::npos) << r.err;
  EXPECT_EQ(r.err.find("terminate"), std::string::npos) << r.err;
  EXPECT_EQ(r.err.find("what()"), std::string::npos) << r.err;
}

std::vector<std::vector<double>> read_grid(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST_F(Cli, RunWritesOutputs) {
  const auto r = achord("run --scenario \"" + scenario("outage_120s.json") + "\" --out \"" +
                        (dir_ / "o").string() + "\" --svg");
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f : {"metrics.json", "events.jsonl", "buffers.csv", "topology.jsonl", "irm.json",
                        "connectivity.csv", "connectivity.svg"})
    EXPECT_TRUE(fs::exists(dir_ / "o" / f)) << f;
  const json m = json::parse(slurp(dir_ / "o" / "metrics.json"));
  EXPECT_EQ(json::parse(r.out), m);
  EXPECT_NEAR(m["max_delay_s"].get<double>(), 120.0, 0.2);
  EXPECT_EQ(slurp(dir_ / "o" / "buffers.csv").rfind("t,robot,topic,queued_bytes", 0), 0u);
}

TEST_F(Cli, SeedOverrideChangesLog) {
  const std::string base = "run --scenario \"" + scenario("corridor_smoke.json") + "\" --out \"";
  ASSERT_EQ(achord(base + (dir_ / "a").string() + "\"").code, 0);
  ASSERT_EQ(achord(base + (dir_ / "b").string() + "\"").code, 0);
  ASSERT_EQ(achord(base + (dir_ / "c").string() + "\" --seed 99").code, 0);
  EXPECT_EQ(slurp(dir_ / "a" / "events.jsonl"), slurp(dir_ / "b" / "events.jsonl"));
  EXPECT_NE(slurp(dir_ / "a" / "events.jsonl"), slurp(dir_ / "c" / "events.jsonl"));
}

TEST_F(Cli, MissingScenarioIsIoError) {
  const auto r = achord("run --scenario \"" + (dir_ / "nope.json").string() + "\" --out \"" +
                        (dir_ / "o").string() + "\"");
  EXPECT_EQ(r.code, 3);
  expect_clean_error(r);
}

TEST_F(Cli, InvalidScenarioIsValidationError) {
  json doc = json::parse(slurp(scenario("outage_120s.json")));
  doc["tick"] = 0;
  doc["robots"][0]["start"] = "nowhere";
  const auto p = write("bad.json", doc.dump());
  const auto r = achord("run --scenario \"" + p.string() + "\" --out \"" + (dir_ / "o").string() + "\"");
  EXPECT_EQ(r.code, 2);
  expect_clean_error(r);
  EXPECT_NE(r.err.find("tick"), std::string::npos);
  EXPECT_NE(r.err.find("start"), std::string::npos);

  const auto garbage = write("garbage.json", "{not json");
  EXPECT_EQ(achord("run --scenario \"" + garbage.string() + "\" --out \"" + (dir_ / "o").string() + "\"").code, 2);
}

TEST_F(Cli, FitRecoversModel) {
  std::string csv = "distance_m,path_loss_db\n";
  for (double d = 1.0; d <= 80.0; d *= 1.3) {
    char line[64];
    std::snprintf(line, sizeof line, "%.17g,%.17g\n", d, 34.0 + 38.3 * std::log10(d));
    csv += line;
  }
  const auto r = achord("fit --csv \"" + write("s.csv", csv).string() + "\"");
  ASSERT_EQ(r.code, 0) << r.err;
  const json j = json::parse(r.out);
  EXPECT_NEAR(j["eta"].get<double>(), 3.83, 1e-9);
  EXPECT_NEAR(j["pl_d0"].get<double>(), 34.0, 1e-9);
  EXPECT_NEAR(j["residual_rms"].get<double>(), 0.0, 1e-9);
  EXPECT_EQ(j["d0"].get<double>(), 1.0);
}

TEST_F(Cli, FitDegenerateInputs) {
  for (const std::string& text : {std::string(""), std::string("distance_m,path_loss_db\n"),
                                  std::string("distance_m,path_loss_db\n5,60\n5,61\n")}) {
    const auto r = achord("fit --csv \"" + write("s.csv", text).string() + "\"");
    EXPECT_EQ(r.code, 2) << text;
    expect_clean_error(r);
  }
  EXPECT_EQ(achord("fit --csv \"" + (dir_ / "missing.csv").string() + "\"").code, 3);
}

TEST_F(Cli, MapSingleRadioIsRadial) {
  const auto radios = write("r.json", R"([{"id": "base", "x": 0, "y": 0, "tx_power_dbm": 10}])");
  const auto r = achord("map --radios \"" + radios.string() + "\" --res 1 --extent 10 --out \"" +
                        (dir_ / "m").string() + "\"");
  ASSERT_EQ(r.code, 0) << r.err;
  const auto grid = read_grid(dir_ / "m" / "connectivity.csv");
  ASSERT_EQ(grid.size(), 20u);
  ASSERT_EQ(grid[0].size(), 20u);
  // Cells mirrored through the radio see the same SNR.
  for (std::size_t y = 0; y < 20; ++y)
    for (std::size_t x = 0; x < 20; ++x) {
      EXPECT_DOUBLE_EQ(grid[y][x], grid[y][19 - x]);
      EXPECT_DOUBLE_EQ(grid[y][x], grid[19 - y][x]);
      EXPECT_GE(grid[y][x], 0.0);
    }
  EXPECT_GT(grid[9][9], grid[0][0]);
  EXPECT_TRUE(fs::exists(dir_ / "m" / "connectivity.svg"));
}

TEST_F(Cli, MapDuplicateRadioChangesNothing) {
  const std::string one = R"({"id": "a", "x": 3, "y": 4, "tx_power_dbm": 10})";
  const std::string twin = R"({"id": "b", "x": 3, "y": 4, "tx_power_dbm": 10})";
  ASSERT_EQ(achord("map --radios \"" + write("one.json", "[" + one + "]").string() +
                   "\" --out \"" + (dir_ / "one").string() + "\"").code, 0);
  ASSERT_EQ(achord("map --radios \"" + write("two.json", "[" + one + "," + twin + "]").string() +
                   "\" --out \"" + (dir_ / "two").string() + "\"").code, 0);
  EXPECT_EQ(slurp(dir_ / "one" / "connectivity.csv"), slurp(dir_ / "two" / "connectivity.csv"));
}

TEST_F(Cli, MapErrors) {
  auto r = achord("map --radios \"" + write("e.json", "[]").string() + "\" --out \"" + dir_.string() + "\"");
  EXPECT_EQ(r.code, 2);
  expect_clean_error(r);
  r = achord("map --radios \"" + write("o.json", "{}").string() + "\"");
  EXPECT_EQ(r.code, 2);
  r = achord("map --radios \"" + write("x.json", R"([{"id": "a", "y": 1}])").string() + "\"");
  EXPECT_EQ(r.code, 2);
  r = achord("map --radios \"" + write("ok.json", R"([{"id": "a", "x": 0, "y": 0}])").string() +
             "\" --res 0");
  EXPECT_EQ(r.code, 2);
  r = achord("map --radios \"" + write("ok2.json", R"([{"id": "a", "x": 0, "y": 0}])").string() +
             "\" --eta -1 --out \"" + (dir_ / "m").string() + "\"");
  EXPECT_EQ(r.code, 2);
  expect_clean_error(r);
}

TEST_F(Cli, UsageErrors) {
  EXPECT_NE(achord("").code, 0);
  EXPECT_NE(achord("frobnicate").code, 0);
  EXPECT_NE(achord("run --out x").code, 0);
  EXPECT_EQ(achord("--help").code, 0);
}
