#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mosaic/cli.hpp"

namespace fs = std::filesystem;
using mosaic::cli::run;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result call(std::vector<std::string> args) {
  std::ostringstream out, err;
  Result r;
  r.code = run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("mosaic_cli_" + std::to_string(::getpid()) + "_" +
                                        ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(dir_);
    returns_ = (dir_ / "returns.csv").string();
    exposures_ = (dir_ / "exposures.csv").string();
    const Result r = call({"simulate", "--T", "40", "--p", "20", "--k", "2", "--seed", "3", "--emit-returns", returns_,
                           "--emit-exposures", exposures_});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  fs::path dir_;
  std::string returns_;
  std::string exposures_;
};

}  // namespace

TEST_F(CliTest, TestSubcommandWritesJsonReport) {
  const Result r = call({"test", "--returns", returns_, "--exposures", exposures_, "--R", "49", "--seed", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = nlohmann::json::parse(r.out);
  for (const char* key : {"observed", "p_value", "z_exact", "z_approx", "threshold", "R", "seed"}) {
    EXPECT_TRUE(j.contains(key)) << key;
  }
  EXPECT_EQ(j["R"].get<int>(), 49);
}

TEST_F(CliTest, MissingFileIsAnInputError) {
  const Result r = call({"test", "--returns", path("absent.csv"), "--exposures", exposures_, "--R", "9"});
  EXPECT_EQ(r.code, 2);
  EXPECT_TRUE(r.out.empty());
  EXPECT_FALSE(r.err.empty());
  EXPECT_EQ(call({"test", "--bogus"}).code, 2);
  EXPECT_EQ(call({}).code, 2);
}

TEST_F(CliTest, OutputFileIsOnlyWrittenOnSuccess) {
  const std::string out = path("report.json");
  ASSERT_EQ(call({"test", "--returns", returns_, "--exposures", exposures_, "--R", "19", "-o", out}).code, 0);
  EXPECT_TRUE(fs::exists(out));
  const std::string bad = path("bad.json");
  EXPECT_EQ(call({"test", "--returns", returns_, "--exposures", exposures_, "--R", "0", "-o", bad}).code, 2);
  EXPECT_FALSE(fs::exists(bad));
}

TEST_F(CliTest, ThreadCountDoesNotChangeOutput) {
  const std::vector<std::string> base{"test", "--returns", returns_, "--exposures", exposures_,
                                      "--R", "99", "--seed", "7", "--statistic", "adaptive_qmc", "--K", "50"};
  auto one = base;
  one.insert(one.end(), {"--threads", "1"});
  auto eight = base;
  eight.insert(eight.end(), {"--threads", "8"});
  const Result a = call(one);
  const Result b = call(eight);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
}

TEST_F(CliTest, FlagsOverrideConfigFile) {
  const std::string config = path("config.json");
  std::ofstream(config) << R"({"R": 19, "seed": 5, "alpha": 0.1, "statistic": {"type": "qmc", "params": {"gamma": 0.9}}})";
  const Result from_config = call({"test", "--config", config, "--returns", returns_, "--exposures", exposures_});
  ASSERT_EQ(from_config.code, 0) << from_config.err;
  const auto j = nlohmann::json::parse(from_config.out);
  EXPECT_EQ(j["R"].get<int>(), 19);
  EXPECT_EQ(j["seed"].get<int>(), 5);
  const Result overridden =
      call({"test", "--config", config, "--returns", returns_, "--exposures", exposures_, "--R", "29"});
  ASSERT_EQ(overridden.code, 0) << overridden.err;
  const auto k = nlohmann::json::parse(overridden.out);
  EXPECT_EQ(k["R"].get<int>(), 29);
  EXPECT_EQ(k["seed"].get<int>(), 5);
}

TEST_F(CliTest, SeedDefaultsToEnvironment) {
  ::setenv("MOSAIC_SEED", "17", 1);
  const Result r = call({"test", "--returns", returns_, "--exposures", exposures_, "--R", "9"});
  ::unsetenv("MOSAIC_SEED");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out)["seed"].get<int>(), 17);
  const Result flag = call({"test", "--returns", returns_, "--exposures", exposures_, "--R", "9", "--seed", "4"});
  EXPECT_EQ(nlohmann::json::parse(flag.out)["seed"].get<int>(), 4);
}

TEST_F(CliTest, RollingEmitsOneRowPerWindow) {
  const Result r = call({"rolling", "--returns", returns_, "--exposures", exposures_, "--R", "19", "--window", "20",
                         "--stride", "10"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.substr(0, r.out.find('\n')), "window_end,observed,threshold,p_value,z_exact,z_approx");
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 4);
  const Result single = call({"rolling", "--returns", returns_, "--exposures", exposures_, "--R", "19", "--window",
                              "40", "--stride", "40"});
  EXPECT_EQ(std::count(single.out.begin(), single.out.end(), '\n'), 2);
  EXPECT_EQ(call({"rolling", "--returns", returns_, "--exposures", exposures_, "--window", "41"}).code, 2);
}

TEST_F(CliTest, ValidateTilingRoundTrip) {
  const std::string tiling = path("tiling.json");
  ASSERT_EQ(call({"test", "--returns", returns_, "--exposures", exposures_, "--R", "9", "--tiling-out", tiling}).code,
            0);
  const Result ok = call({"validate-tiling", "--returns", returns_, "--exposures", exposures_, "--tiling-file", tiling});
  EXPECT_EQ(ok.code, 0) << ok.err;
  auto j = nlohmann::json::parse(slurp(tiling));
  j["tiles"][0]["group"] = j["tiles"][1]["group"];
  std::ofstream(tiling) << j.dump();
  const Result bad = call({"validate-tiling", "--returns", returns_, "--exposures", exposures_, "--tiling-file", tiling});
  EXPECT_NE(bad.code, 0);
}

TEST_F(CliTest, ImproveReportsBcv) {
  const Result r = call({"improve", "--returns", returns_, "--exposures", exposures_, "--R", "19", "--split-index",
                         "20", "--sparsities", "5", "10"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("p_value"), std::string::npos);
  EXPECT_EQ(call({"improve", "--returns", returns_, "--exposures", exposures_, "--split-index", "40"}).code, 2);
}

TEST_F(CliTest, SimulateAndPowerWriteStudies) {
  const Result fpr = call({"simulate", "--T", "20", "--p", "10", "--k", "1", "--reps", "5", "--R", "9", "--B", "5"});
  ASSERT_EQ(fpr.code, 0) << fpr.err;
  EXPECT_EQ(fpr.out.substr(0, fpr.out.find('\n')), "config_hash,method,rho,s0,reps,rejection_rate,stderr");
  const Result power = call({"power", "--T", "20", "--p", "10", "--k", "1", "--reps", "3", "--R", "9", "--K", "10",
                             "--null-reps", "5", "--rhos", "0", "1", "--s0s", "0.5"});
  ASSERT_EQ(power.code, 0) << power.err;
  EXPECT_NE(power.out.find("mosaic_adaptive_qmc"), std::string::npos);
}

TEST_F(CliTest, RepeatedRunsAreByteIdentical) {
  const std::vector<std::string> args = {"test", "--returns", returns_, "--exposures", exposures_,
                                         "--R", "49", "--seed", "8", "--statistic", "qmc"};
  const Result a = call(args);
  const Result b = call(args);
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_EQ(a.out, b.out);
}

TEST_F(CliTest, NullDataNeverGivesTinyPValues) {
  for (int seed = 0; seed < 20; ++seed) {
    const std::string ret = path("null_r.csv");
    const std::string exp = path("null_e.csv");
    ASSERT_EQ(call({"simulate", "--T", "60", "--p", "30", "--k", "2", "--seed", std::to_string(100 + seed),
                    "--emit-returns", ret, "--emit-exposures", exp})
                  .code,
              0);
    const Result r = call({"test", "--returns", ret, "--exposures", exp, "--R", "1999", "--seed", std::to_string(seed)});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_GE(nlohmann::json::parse(r.out)["p_value"].get<double>(), 0.001);
  }
}

TEST_F(CliTest, PlantedSignalIsDetected) {
  const std::string ret = path("sig_r.csv");
  const std::string exp = path("sig_e.csv");
  ASSERT_EQ(call({"simulate", "--T", "200", "--p", "60", "--k", "2", "--rho", "6", "--s0", "0.5", "--seed", "4",
                  "--emit-returns", ret, "--emit-exposures", exp})
                .code,
            0);
  const Result r = call({"test", "--returns", ret, "--exposures", exp, "--R", "199", "--seed", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_LE(nlohmann::json::parse(r.out)["p_value"].get<double>(), 0.01);
}
